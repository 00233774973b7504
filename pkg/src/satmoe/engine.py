"""Discrete-event simulation of distributed expert inference over a constellation.

One single-threaded event loop processes requests token by token. Per token
and layer: gate, select, ship hidden states to remote expert hosts (forward
and return), execute, aggregate. Expert branches within a layer run in
parallel, so layer latency is the non-expert compute plus the slowest branch.
Topology, illumination, thermal budgets, and battery state advance at a fixed
snapshot interval; thermal admissions reset at each boundary. Everything is
deterministic given the scenario seed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import moe, power, routing, selection, thermal
from .constellation import (
    IslPolicy,
    SatelliteId,
    TopologySnapshot,
    WalkerShell,
    build_topology,
    ground_visibility,
)
from .errors import (
    BrownoutError,
    ComparisonError,
    ConfigError,
    MemoryInfeasibleError,
    NoRouteError,
    ThermalInfeasibleError,
)
from .moe import GatingSampler, MoEModelSpec, SkewSpec, hidden_state_bytes
from .placement import (
    PlacementMap,
    place_coactivation,
    place_mobility_aware,
    place_static,
    replicate_hot,
    validate_placement,
)
from .routing import CompressionModel, Route
from .selection import ExpertAccess, SelectionPolicy

RECOVERY_SOC = 0.05   # browned-out satellites rejoin above this charge


@dataclass(frozen=True)
class WorkloadSpec:
    """Request arrival process and token volume."""

    seed: int
    arrival: str = "uniform"
    arrival_rate_per_s: float = 2.0
    tokens_per_request: int = 10
    duration_s: float = 250.0

    def __post_init__(self):
        if self.arrival not in ("uniform", "poisson"):
            raise ConfigError(f"unknown arrival process {self.arrival!r}")
        if self.arrival_rate_per_s <= 0 or self.duration_s <= 0:
            raise ConfigError("arrival_rate_per_s and duration_s must be > 0")
        if self.tokens_per_request < 1:
            raise ConfigError("tokens_per_request must be >= 1")

    def arrival_times(self, rng: np.random.Generator) -> list[float]:
        times: list[float] = []
        if self.arrival == "uniform":
            i = 0
            while i / self.arrival_rate_per_s < self.duration_s - 1e-12:
                times.append(i / self.arrival_rate_per_s)
                i += 1
        else:
            t = 0.0
            while True:
                t += rng.exponential(1.0 / self.arrival_rate_per_s)
                if t >= self.duration_s:
                    break
                times.append(t)
        return times


@dataclass(frozen=True)
class SourceSpec:
    """Where requests enter the constellation."""

    mode: str = "fixed"
    satellite: SatelliteId | None = None
    ground_lat_deg: float = 0.0
    ground_lon_deg: float = 0.0
    min_elevation_deg: float = 10.0

    def __post_init__(self):
        if self.mode not in ("fixed", "ground"):
            raise ConfigError(f"unknown source mode {self.mode!r}")
        if self.mode == "fixed" and self.satellite is None:
            raise ConfigError("fixed source mode requires a satellite id")


@dataclass(frozen=True)
class Scenario:
    """Everything one run needs; built from a ScenarioConfig."""

    label: str
    shells: tuple[WalkerShell, ...]
    isl: IslPolicy
    sun_direction: tuple[float, float, float]
    snapshot_interval_s: float
    model: MoEModelSpec
    skew: SkewSpec
    similarity_tau: float
    power_profile: power.PowerProfile
    battery_template: power.BatteryState
    thermal_spec: thermal.ThermalSpec
    placement_strategy: str
    satellite_capacity_bytes: float
    source_capacity_bytes: float | None
    replica_budget_bytes: float
    profile_path: str | None
    profile_tokens: int
    planning_snapshots: int
    partition: tuple[tuple[int, int, SatelliteId], ...] | None
    selection_policy: SelectionPolicy
    routing_policy: str
    latency_sensitive: bool
    compression: CompressionModel
    workload: WorkloadSpec
    source: SourceSpec
    config_sha256: str = ""
    verbose: bool = False

    def __post_init__(self):
        if self.routing_policy not in ("shortest", "thermal_aware"):
            raise ConfigError(f"unknown routing policy {self.routing_policy!r}")
        if self.placement_strategy not in (
            "static", "mobility", "coactivation", "all_on_source", "centralized", "split"
        ):
            raise ConfigError(f"unknown placement strategy {self.placement_strategy!r}")
        if self.snapshot_interval_s <= 0:
            raise ConfigError("snapshot_interval_s must be > 0")

    @property
    def seed(self) -> int:
        return self.workload.seed


class TopologyProvider:
    """Lazily builds and caches topology snapshots on the interval grid."""

    def __init__(self, scenario: Scenario):
        self.shells = list(scenario.shells)
        self.isl = scenario.isl
        self.sun = np.asarray(scenario.sun_direction, dtype=float)
        self.interval = scenario.snapshot_interval_s
        self._cache: dict[int, TopologySnapshot] = {}

    def index_of(self, t: float) -> int:
        return max(int(t // self.interval), 0)

    def at_index(self, k: int) -> TopologySnapshot:
        if k not in self._cache:
            self._cache[k] = build_topology(
                self.shells, k * self.interval, self.isl, self.sun
            )
        return self._cache[k]

    def get(self, t: float) -> TopologySnapshot:
        return self.at_index(self.index_of(t))

    def planning_series(self, count: int, horizon_s: float | None = None) -> list[TopologySnapshot]:
        """Evenly spaced snapshots over one orbital period (by default)."""
        horizon = horizon_s if horizon_s is not None else self.shells[0].period_s
        count = max(count, 1)
        return [
            build_topology(self.shells, i * horizon / count, self.isl, self.sun)
            for i in range(count)
        ]


@dataclass
class EnergyRow:
    t: float
    sat: SatelliteId
    soc: float
    health: float
    harvest_w: float
    discharge_w: float
    load_w: float
    dt_s: float


@dataclass
class TransmissionRecord:
    t: float
    src: SatelliteId
    dst: SatelliteId
    hops: int
    bytes_on_wire: int
    compression_ratio: float
    thermal_fallback: bool


@dataclass
class RunMetrics:
    """Aggregate outcome of one run; the comparison currency across designs."""

    label: str
    architecture: str
    seed: int
    config_sha256: str
    num_requests: int
    num_tokens: int
    sim_duration_s: float
    avg_token_latency_s: float
    p50_token_latency_s: float
    p95_token_latency_s: float
    layer_compute_s: list[float]
    layer_comm_s: list[float]
    total_energy_wh: float
    total_harvest_wh: float
    fleet_cumulative_degradation: float
    mean_utility: float
    mean_effective_utility: float
    thermal_violations: int
    brownouts: int
    no_route_events: int
    bytes_moved: int
    remote_fraction: float

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "architecture": self.architecture,
            "seed": self.seed,
            "config_sha256": self.config_sha256,
            "num_requests": self.num_requests,
            "num_tokens": self.num_tokens,
            "sim_duration_s": self.sim_duration_s,
            "avg_token_latency_s": self.avg_token_latency_s,
            "p50_token_latency_s": self.p50_token_latency_s,
            "p95_token_latency_s": self.p95_token_latency_s,
            "layer_compute_s": list(self.layer_compute_s),
            "layer_comm_s": list(self.layer_comm_s),
            "total_energy_wh": self.total_energy_wh,
            "total_harvest_wh": self.total_harvest_wh,
            "fleet_cumulative_degradation": self.fleet_cumulative_degradation,
            "mean_utility": self.mean_utility,
            "mean_effective_utility": self.mean_effective_utility,
            "thermal_violations": self.thermal_violations,
            "brownouts": self.brownouts,
            "no_route_events": self.no_route_events,
            "bytes_moved": self.bytes_moved,
            "remote_fraction": self.remote_fraction,
        }

    csv_columns = (
        "label,architecture,seed,num_requests,num_tokens,sim_duration_s,"
        "avg_token_latency_s,p50_token_latency_s,p95_token_latency_s,"
        "total_energy_wh,total_harvest_wh,fleet_cumulative_degradation,"
        "mean_utility,mean_effective_utility,thermal_violations,brownouts,"
        "no_route_events,bytes_moved,remote_fraction"
    )

    def to_csv_row(self) -> str:
        vals = [
            self.label, self.architecture, self.seed, self.num_requests,
            self.num_tokens, self.sim_duration_s, self.avg_token_latency_s,
            self.p50_token_latency_s, self.p95_token_latency_s,
            self.total_energy_wh, self.total_harvest_wh,
            self.fleet_cumulative_degradation, self.mean_utility,
            self.mean_effective_utility, self.thermal_violations,
            self.brownouts, self.no_route_events, self.bytes_moved,
            self.remote_fraction,
        ]
        return ",".join(repr(v) if isinstance(v, float) else str(v) for v in vals)


@dataclass
class RunResult:
    metrics: RunMetrics
    placement: PlacementMap | None
    energy_rows: list[EnergyRow]
    transmissions: list[TransmissionRecord]
    selection_log: list[dict]


class _Fleet:
    """Mutable per-satellite resource state owned by the event loop."""

    def __init__(self, scenario: Scenario, provider: TopologyProvider):
        self.scenario = scenario
        self.provider = provider
        snapshot = provider.at_index(0)
        self.sats = list(snapshot.nodes)
        self.batteries: dict[SatelliteId, power.BatteryState] = {
            s: scenario.battery_template for s in self.sats
        }
        self.active_wh: dict[SatelliteId, float] = {}
        self.browned: set[SatelliteId] = set()
        self.energy_rows: list[EnergyRow] = []
        self.total_energy_wh = 0.0
        self.total_harvest_wh = 0.0
        self.brownouts = 0
        self.thermal_violations = 0
        self.snapshot_index = 0
        self.thermal_states: dict[SatelliteId, thermal.ThermalState] = {}
        self.admitted: set[tuple[SatelliteId, str]] = set()
        self._rebuild_thermal(snapshot)

    def _rebuild_thermal(self, snapshot: TopologySnapshot) -> None:
        spec = self.scenario.thermal_spec
        self.thermal_states = {
            s: thermal.thermal_budget(spec, snapshot.sunlit[s], snapshot.view_factor(s))
            for s in self.sats
        }
        self.admitted = set()

    def add_energy(self, sat: SatelliteId, wh: float) -> None:
        self.active_wh[sat] = self.active_wh.get(sat, 0.0) + wh

    def admit_class(self, sat: SatelliteId, kind: str, power_w: float) -> bool:
        """Admit a power class (compute/tx) once per satellite per snapshot."""
        key = (sat, kind)
        if key in self.admitted:
            return True
        if thermal.admit(self.thermal_states[sat], power_w):
            self.admitted.add(key)
            return True
        self.thermal_violations += 1
        return False

    def can_admit_class(self, sat: SatelliteId, kind: str, power_w: float) -> bool:
        if (sat, kind) in self.admitted:
            return True
        return self.thermal_states[sat].can_admit(power_w)

    def _step_interval(self, k: int, dt: float) -> None:
        """Advance all batteries over [k*interval, k*interval + dt)."""
        snapshot = self.provider.at_index(k)
        t0 = k * self.provider.interval
        profile = self.scenario.power_profile
        for sat in self.sats:
            load_w = self.active_wh.get(sat, 0.0) * 3600.0 / dt
            battery = self.batteries[sat]
            try:
                battery, ledger = power.step_energy(
                    battery, profile, snapshot.sunlit[sat], load_w, dt, sat_id=sat, t=t0
                )
            except BrownoutError:
                self.brownouts += 1
                self.browned.add(sat)
                battery, ledger = _drain_to_empty(
                    battery, profile, snapshot.sunlit[sat], load_w, dt
                )
            self.batteries[sat] = battery
            self.total_energy_wh += ledger.load_w * dt / 3600.0
            self.total_harvest_wh += ledger.harvest_w * dt / 3600.0
            self.energy_rows.append(
                EnergyRow(
                    t=t0, sat=sat, soc=battery.soc, health=battery.health,
                    harvest_w=ledger.harvest_w, discharge_w=ledger.discharge_w,
                    load_w=ledger.load_w, dt_s=dt,
                )
            )
            if sat in self.browned and battery.soc >= RECOVERY_SOC:
                self.browned.discard(sat)
        self.active_wh = {}

    def advance_to(self, t: float) -> None:
        """Flush complete snapshot intervals between the last step and t."""
        target_index = self.provider.index_of(t)
        while self.snapshot_index < target_index:
            self._step_interval(self.snapshot_index, self.provider.interval)
            self.snapshot_index += 1
            self._rebuild_thermal(self.provider.at_index(self.snapshot_index))

    def finish(self, t_end: float) -> None:
        """Step the trailing partial interval at the end of the run."""
        self.advance_to(t_end)
        dt = t_end - self.snapshot_index * self.provider.interval
        if dt > 1e-12:
            self._step_interval(self.snapshot_index, dt)

    def fleet_degradation(self) -> float:
        return sum(b.cumulative_degradation for b in self.batteries.values())


def _drain_to_empty(
    battery: power.BatteryState,
    profile: power.PowerProfile,
    is_sunlit: bool,
    load_w: float,
    dt: float,
) -> tuple[power.BatteryState, power.EnergyLedger]:
    """Brownout handling: discharge whatever charge remains, then clamp at zero."""
    harvest = profile.solar_panel_w if is_sunlit else 0.0
    total_load = profile.idle_load_w + load_w
    discharge_w = total_load - harvest
    usable_wh = battery.capacity_wh * battery.health
    discharge_wh = battery.soc * usable_wh
    dod = min(max(battery.charge_mark, 0.0), 1.0)
    c_rate = discharge_w / usable_wh
    increment = power.degradation_increment(battery, discharge_wh, dod, c_rate)
    drained = replace(
        battery, soc=0.0, cumulative_degradation=battery.cumulative_degradation + increment
    )
    ledger = power.EnergyLedger(
        harvest_w=harvest, load_w=total_load, discharge_w=discharge_w,
        discharge_wh=discharge_wh, dod=dod, c_rate=c_rate,
        degradation_increment=increment,
    )
    return drained, ledger


def resolve_source(scenario: Scenario, provider: TopologyProvider) -> SatelliteId:
    """Fixed source satellite, or the best ground-visible satellite at epoch."""
    if scenario.source.mode == "fixed":
        sat = scenario.source.satellite
        snapshot = provider.at_index(0)
        if sat not in snapshot.adjacency:
            raise ConfigError(f"source satellite {sat} not in the constellation")
        return sat
    snapshot = provider.at_index(0)
    visible = [
        s
        for s in snapshot.nodes
        if ground_visibility(
            snapshot.positions[s],
            scenario.source.ground_lat_deg,
            scenario.source.ground_lon_deg,
            scenario.source.min_elevation_deg,
        )
    ]
    if not visible:
        raise ConfigError("no satellite visible from the ground user at epoch")
    station = scenario.source
    lat, lon = math.radians(station.ground_lat_deg), math.radians(station.ground_lon_deg)
    up = np.array([math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)])

    def elevation(s: SatelliteId) -> float:
        line = snapshot.positions[s].as_array() - 6371.0 * up
        return float(line @ up / np.linalg.norm(line))

    return min(visible, key=lambda s: (-elevation(s), s))


def build_capacities(scenario: Scenario, sats: list[SatelliteId], source: SatelliteId) -> dict:
    caps = {s: scenario.satellite_capacity_bytes for s in sats}
    if scenario.source_capacity_bytes is not None:
        caps[source] = scenario.source_capacity_bytes
    return caps


def profile_activations(scenario: Scenario, sampler: GatingSampler) -> moe.ActivationStats:
    """Offline activation profile: replay gating for profile_tokens tokens."""
    rng = np.random.default_rng([scenario.seed, 1])
    stats = moe.ActivationStats(
        num_layers=scenario.model.num_layers, num_experts=scenario.model.experts_per_layer
    )
    for _ in range(scenario.profile_tokens):
        for layer in range(scenario.model.num_layers):
            scores = sampler.sample(rng, layer)
            chosen = {e for e, _ in moe.gate_topk(scores, scenario.model.top_k)}
            moe.record_activation(stats, layer, chosen)
    return stats


def _load_or_profile_stats(scenario: Scenario, sampler: GatingSampler) -> moe.ActivationStats:
    if scenario.profile_path:
        from pathlib import Path

        return moe.ActivationStats.from_json(Path(scenario.profile_path).read_text())
    return profile_activations(scenario, sampler)


def build_placement(
    scenario: Scenario,
    provider: TopologyProvider,
    sampler: GatingSampler,
    source: SatelliteId,
    stats: moe.ActivationStats | None = None,
) -> PlacementMap:
    """Construct the scenario's placement and check its invariants."""
    snapshot = provider.at_index(0)
    sats = list(snapshot.nodes)
    caps = build_capacities(scenario, sats, source)
    strategy = scenario.placement_strategy

    if strategy in ("all_on_source", "centralized"):
        placement = PlacementMap(hosts={}, memory_used={})
        for layer in range(scenario.model.num_layers):
            for expert in range(scenario.model.experts_per_layer):
                placement.add_replica((layer, expert), source, scenario.model.expert_memory_bytes)
        return placement

    if strategy == "static":
        placement = place_static(scenario.model, sats, caps)
    else:
        if stats is None:
            stats = _load_or_profile_stats(scenario, sampler)
        series = provider.planning_series(scenario.planning_snapshots)
        if strategy == "mobility":
            placement = place_mobility_aware(scenario.model, stats, series, source, caps)
        else:
            placement = place_coactivation(scenario.model, stats, series, source, caps)
    if scenario.replica_budget_bytes > 0:
        if stats is None:
            stats = _load_or_profile_stats(scenario, sampler)
        series = provider.planning_series(scenario.planning_snapshots)
        placement = replicate_hot(
            placement, scenario.model, stats, series, source, caps,
            scenario.replica_budget_bytes,
        )
    validate_placement(placement, scenario.model, caps)
    return placement


class _Percentiles:
    @staticmethod
    def nearest_rank(sorted_vals: list[float], q: float) -> float:
        if not sorted_vals:
            return 0.0
        n = len(sorted_vals)
        return sorted_vals[min(max(math.ceil(q * n) - 1, 0), n - 1)]


class _Run:
    """State shared across the token pipeline of one simulation run."""

    def __init__(self, scenario: Scenario, architecture: str):
        self.scenario = scenario
        self.architecture = architecture
        self.provider = TopologyProvider(scenario)
        self.fleet = _Fleet(scenario, self.provider)
        self.source = resolve_source(scenario, self.provider)
        self.sampler = GatingSampler(
            scenario.model.num_layers,
            scenario.model.experts_per_layer,
            scenario.skew,
            scenario.seed,
        )
        self.similarity = moe.build_similarity(
            scenario.model.num_layers,
            scenario.model.experts_per_layer,
            scenario.similarity_tau,
            scenario.seed,
        )
        self.rng_run = np.random.default_rng([scenario.seed, 2])
        self.rng_arrivals = np.random.default_rng([scenario.seed, 3])
        self.compression = scenario.compression
        self.state_bytes = hidden_state_bytes(scenario.model)
        profile = scenario.power_profile
        self.non_expert_s = scenario.model.non_expert_flops / profile.compute_flops_per_s
        self.expert_s = scenario.model.expert_flops / profile.compute_flops_per_s
        self.expert_energy_wh = profile.compute_energy_wh(scenario.model.expert_flops)
        self.non_expert_energy_wh = profile.compute_energy_wh(scenario.model.non_expert_flops)
        self.compute_power_w = profile.compute_power_w
        self.tx_power_w = profile.tx_power_w(scenario.isl.isl_rate_bps)

        self.t = 0.0
        self._route_cache_index = -1
        self._routes_from: dict[SatelliteId, dict[SatelliteId, Route]] = {}
        self.token_latencies: list[float] = []
        self.layer_compute_totals = [0.0] * scenario.model.num_layers
        self.layer_comm_totals = [0.0] * scenario.model.num_layers
        self.utilities: list[float] = []
        self.effective_utilities: list[float] = []
        self.bytes_moved = 0
        self.remote_calls = 0
        self.total_calls = 0
        self.no_route_events = 0
        self.num_requests = 0
        self.transmissions: list[TransmissionRecord] = []
        self.selection_log: list[dict] = []

    # -- snapshot-scoped helpers -------------------------------------------

    def advance_time(self, t: float) -> TopologySnapshot:
        self.fleet.advance_to(t)
        k = self.fleet.snapshot_index
        if k != self._route_cache_index:
            self._route_cache_index = k
            self._routes_from = {}
        return self.provider.at_index(k)

    def routes_from(self, snapshot: TopologySnapshot, origin: SatelliteId) -> dict:
        if origin not in self._routes_from:
            self._routes_from[origin] = routing.single_source_routes(snapshot, origin)
        return self._routes_from[origin]

    def marginal_cost_fn(self, snapshot: TopologySnapshot):
        scenario = self.scenario
        fleet = self.fleet

        def cost(sat: SatelliteId) -> float:
            return power.marginal_degradation_cost(
                fleet.batteries[sat],
                scenario.power_profile,
                snapshot.sunlit[sat],
                self.expert_energy_wh,
                scenario.snapshot_interval_s,
            )

        return cost

    # -- event primitives ---------------------------------------------------

    def compute_event(self, sat: SatelliteId, flops: float, admission: bool) -> float:
        """Charge compute energy, admit compute power, return the duration."""
        seconds = flops / self.scenario.power_profile.compute_flops_per_s
        self.fleet.add_energy(sat, self.scenario.power_profile.compute_energy_wh(flops))
        if admission:
            self.fleet.admit_class(sat, "compute", self.compute_power_w)
        return seconds

    def transmit_event(
        self,
        snapshot: TopologySnapshot,
        route: Route,
        n_bytes: int,
        compression_ratio: float,
        thermal_fallback: bool,
        round_trip: bool,
    ) -> float:
        """Account one hidden-state delivery; returns its latency."""
        ser = n_bytes * 8.0 / route.bottleneck_rate_bps if route.num_links else 0.0
        legs = 2 if round_trip else 1
        profile = self.scenario.power_profile
        for sender in route.hops[:-1]:
            self.fleet.add_energy(sender, profile.tx_energy_wh(n_bytes))
        if round_trip:
            for sender in route.hops[1:]:
                self.fleet.add_energy(sender, profile.tx_energy_wh(n_bytes))
        for relay in route.hops[1:]:
            self.fleet.admit_class(relay, "tx", self.tx_power_w)
        self.bytes_moved += legs * n_bytes
        self.transmissions.append(
            TransmissionRecord(
                t=self.t, src=route.src, dst=route.dst, hops=route.num_links,
                bytes_on_wire=legs * n_bytes, compression_ratio=compression_ratio,
                thermal_fallback=thermal_fallback,
            )
        )
        return legs * (route.total_delay_s + ser)

    def pick_route(
        self, snapshot: TopologySnapshot, src: SatelliteId, dst: SatelliteId
    ) -> tuple[Route, bool]:
        """Route src->dst per the routing policy; True flags a thermal fallback."""
        candidates = self.route_candidates(snapshot, src, dst)
        if self.scenario.routing_policy == "thermal_aware":
            def admits(sat: SatelliteId) -> bool:
                return (
                    sat not in self.fleet.browned
                    and self.fleet.can_admit_class(sat, "tx", self.tx_power_w)
                )

            try:
                route = routing.thermal_aware_path(snapshot, admits, src, dst)
                return route, False
            except ThermalInfeasibleError:
                self.fleet.thermal_violations += 1
                return candidates[0], True
        return candidates[0], False

    def route_candidates(
        self, snapshot: TopologySnapshot, src: SatelliteId, dst: SatelliteId
    ) -> list[Route]:
        """Per-shell route preference: intra-shell and unrestricted candidates."""
        routes = self.routes_from(snapshot, src)
        if dst not in routes:
            raise NoRouteError(f"{dst} unreachable from {src} at t={snapshot.t}")
        best = routes[dst]
        candidates = [best]
        if len(self.scenario.shells) > 1 and best.crosses_shell and src.shell == dst.shell:
            try:
                intra = routing.shortest_path(
                    snapshot, src, dst, allowed=lambda s: s.shell == src.shell
                )
                candidates.append(intra)
            except NoRouteError:
                pass
        return routing.layer_preference(candidates, self.scenario.latency_sensitive)

    # -- token pipeline -----------------------------------------------------

    def expert_branch(
        self,
        snapshot: TopologySnapshot,
        executed: selection.ExecutedExpert,
        contribution: float,
    ) -> tuple[float, float, float]:
        """Run one expert branch; returns (comm_s, compute_s, effective_contribution)."""
        self.total_calls += 1
        host = executed.host
        if host == self.source:
            compute_s = self.compute_event(host, self.scenario.model.expert_flops, True)
            return 0.0, compute_s, contribution
        self.remote_calls += 1
        route, fallback = self.pick_route(snapshot, self.source, host)
        plan = routing.plan_transmission(
            executed.weight,
            [route],
            self.scenario.model,
            self.compression,
        )
        comm_s = self.transmit_event(
            snapshot, plan.route, plan.bytes_on_wire, plan.compression_ratio,
            fallback, round_trip=True,
        )
        compute_s = self.compute_event(host, self.scenario.model.expert_flops, True)
        return comm_s, compute_s, contribution * (1.0 - plan.distortion)

    def process_token(self, token_index: int, placement: PlacementMap) -> float:
        """Gate, select, route, and execute one token through all layers."""
        scenario = self.scenario
        token_latency = 0.0
        token_utility = 0.0
        token_effective = 0.0
        for layer in range(scenario.model.num_layers):
            snapshot = self.advance_time(self.t)
            routes = self.routes_from(snapshot, self.source)
            access = ExpertAccess(
                placement=placement,
                routes=routes,
                source=self.source,
                unavailable=set(self.fleet.browned),
            )
            scores = self.sampler.sample(self.rng_run, layer)
            outcome = selection.select(
                scenario.selection_policy,
                scores,
                scenario.model,
                access,
                sim=self.similarity,
                marginal_cost=self.marginal_cost_fn(snapshot),
            )
            non_expert_s = self.compute_event(
                self.source, scenario.model.non_expert_flops, False
            )
            slowest = (0.0, 0.0)   # (comm_s, compute_s) of the slowest branch
            for executed, contribution in zip(outcome.executed, outcome.contributions):
                comm_s, compute_s, effective = self.expert_branch(
                    snapshot, executed, contribution
                )
                token_effective += effective
                if comm_s + compute_s > sum(slowest):
                    slowest = (comm_s, compute_s)
            layer_latency = non_expert_s + slowest[0] + slowest[1]
            self.layer_comm_totals[layer] += slowest[0]
            self.layer_compute_totals[layer] += non_expert_s + slowest[1]
            token_latency += layer_latency
            token_utility += outcome.utility
            self.t += layer_latency
            if scenario.verbose:
                self.selection_log.append(
                    {
                        "t": self.t,
                        "token": token_index,
                        "layer": layer,
                        "gated": [e for e, _ in moe.gate_topk(scores, scenario.model.top_k)],
                        "executed": [e.expert for e in outcome.executed],
                        "hosts": [str(e.host) for e in outcome.executed],
                        "utility": outcome.utility,
                    }
                )
        self.token_latencies.append(token_latency)
        self.utilities.append(token_utility / scenario.model.num_layers)
        self.effective_utilities.append(token_effective / scenario.model.num_layers)
        return token_latency

    def finalize(self) -> RunMetrics:
        self.fleet.finish(self.t)
        latencies = sorted(self.token_latencies)
        n_tokens = len(latencies)
        n = max(n_tokens, 1)
        return RunMetrics(
            label=self.scenario.label,
            architecture=self.architecture,
            seed=self.scenario.seed,
            config_sha256=self.scenario.config_sha256,
            num_requests=self.num_requests,
            num_tokens=n_tokens,
            sim_duration_s=self.t,
            avg_token_latency_s=sum(self.token_latencies) / n,
            p50_token_latency_s=_Percentiles.nearest_rank(latencies, 0.50),
            p95_token_latency_s=_Percentiles.nearest_rank(latencies, 0.95),
            layer_compute_s=[v / n for v in self.layer_compute_totals],
            layer_comm_s=[v / n for v in self.layer_comm_totals],
            total_energy_wh=self.fleet.total_energy_wh,
            total_harvest_wh=self.fleet.total_harvest_wh,
            fleet_cumulative_degradation=self.fleet.fleet_degradation(),
            mean_utility=sum(self.utilities) / n,
            mean_effective_utility=sum(self.effective_utilities) / n,
            thermal_violations=self.fleet.thermal_violations,
            brownouts=self.fleet.brownouts,
            no_route_events=self.no_route_events,
            bytes_moved=self.bytes_moved,
            remote_fraction=self.remote_calls / self.total_calls if self.total_calls else 0.0,
        )


def run(scenario: Scenario, architecture: str = "expert_distributed") -> RunResult:
    """Simulate the expert-distributed architecture end to end."""
    state = _Run(scenario, architecture)
    placement = build_placement(scenario, state.provider, state.sampler, state.source)
    arrivals = scenario.workload.arrival_times(state.rng_arrivals)
    state.num_requests = len(arrivals)
    token = 0
    for arrival in arrivals:
        state.t = max(state.t, arrival)
        for _ in range(scenario.workload.tokens_per_request):
            state.process_token(token, placement)
            token += 1
    metrics = state.finalize()
    return RunResult(
        metrics=metrics,
        placement=placement,
        energy_rows=state.fleet.energy_rows,
        transmissions=state.transmissions,
        selection_log=state.selection_log,
    )


def run_baseline_centralized(scenario: Scenario) -> RunResult:
    """All model components on the source satellite; no inter-satellite bytes.

    Raises:
        MemoryInfeasibleError: if the full model exceeds the source capacity.
    """
    provider = TopologyProvider(scenario)
    source = resolve_source(scenario, provider)
    capacity = (
        scenario.source_capacity_bytes
        if scenario.source_capacity_bytes is not None
        else scenario.satellite_capacity_bytes
    )
    total = scenario.model.total_memory_bytes
    if total > capacity + 1e-6:
        raise MemoryInfeasibleError(
            f"model needs {total / 1e9:.1f} GB but source {source} has "
            f"{capacity / 1e9:.1f} GB"
        )
    forced = replace(scenario, placement_strategy="all_on_source")
    result = run(forced, architecture="centralized")
    return result


def run_baseline_split(
    scenario: Scenario,
    partition: list[tuple[int, int, SatelliteId]] | None = None,
) -> RunResult:
    """Layer-wise split inference: contiguous layer groups on single satellites.

    The hidden state hops between group hosts and returns to the source after
    the last group (U-shaped). No intra-layer communication happens; experts
    of a group execute on its host.

    Args:
        partition: (start_layer, end_layer_exclusive, satellite) triples
            covering all layers contiguously and disjointly. Defaults to the
            scenario's configured partition.
    """
    partition = list(partition if partition is not None else (scenario.partition or ()))
    L = scenario.model.num_layers
    if not partition:
        raise ConfigError("split baseline requires a partition")
    expected = 0
    for start, end, _sat in partition:
        if start != expected or end <= start:
            raise ConfigError(
                f"partition must be contiguous and disjoint, got group [{start}, {end})"
            )
        expected = end
    if expected != L:
        raise ConfigError(f"partition covers [0, {expected}), model has {L} layers")

    state = _Run(scenario, architecture="split")
    snapshot0 = state.provider.at_index(0)
    for _, _, sat in partition:
        if sat not in snapshot0.adjacency:
            raise ConfigError(f"partition satellite {sat} not in the constellation")

    # every expert of a layer lives on its group's host
    placement = PlacementMap(hosts={}, memory_used={})
    for start, end, sat in partition:
        for layer in range(start, end):
            for expert in range(scenario.model.experts_per_layer):
                placement.add_replica((layer, expert), sat, scenario.model.expert_memory_bytes)

    arrivals = scenario.workload.arrival_times(state.rng_arrivals)
    state.num_requests = len(arrivals)
    token_index = 0
    for arrival in arrivals:
        state.t = max(state.t, arrival)
        for _ in range(scenario.workload.tokens_per_request):
            _process_split_token(state, partition, token_index)
            token_index += 1
    metrics = state.finalize()
    return RunResult(
        metrics=metrics,
        placement=placement,
        energy_rows=state.fleet.energy_rows,
        transmissions=state.transmissions,
        selection_log=state.selection_log,
    )


def _process_split_token(
    state: _Run, partition: list[tuple[int, int, SatelliteId]], token_index: int
) -> None:
    """One token through sequential layer groups with inter-group transfers."""
    scenario = state.scenario
    location = state.source
    token_latency = 0.0
    token_utility = 0.0
    token_effective = 0.0

    def transfer(snapshot, src: SatelliteId, dst: SatelliteId) -> float:
        route, fallback = state.pick_route(snapshot, src, dst)
        return state.transmit_event(
            snapshot, route, state.state_bytes, 1.0, fallback, round_trip=False
        )

    for start, end, group_sat in partition:
        pending_comm = 0.0
        snapshot = state.advance_time(state.t)
        if group_sat != location:
            pending_comm = transfer(snapshot, location, group_sat)
            state.t += pending_comm
            location = group_sat
        for layer in range(start, end):
            snapshot = state.advance_time(state.t)
            scores = state.sampler.sample(state.rng_run, layer)
            gated = moe.gate_topk(scores, scenario.model.top_k)
            probs = moe.softmax(scores.scores)
            non_expert_s = state.compute_event(
                group_sat, scenario.model.non_expert_flops, False
            )
            compute_s = 0.0
            for expert, _weight in gated:
                state.total_calls += 1
                seconds = state.compute_event(group_sat, scenario.model.expert_flops, True)
                compute_s = max(compute_s, seconds)
            layer_latency = non_expert_s + compute_s
            state.layer_compute_totals[layer] += non_expert_s + compute_s
            state.layer_comm_totals[layer] += pending_comm
            utility = float(sum(probs[e] for e, _ in gated))
            token_utility += utility
            token_effective += utility
            token_latency += layer_latency + pending_comm
            state.t += layer_latency
            pending_comm = 0.0
    if location != state.source:
        snapshot = state.advance_time(state.t)
        return_comm = transfer(snapshot, location, state.source)
        state.t += return_comm
        token_latency += return_comm
        state.layer_comm_totals[scenario.model.num_layers - 1] += return_comm
    state.token_latencies.append(token_latency)
    state.utilities.append(token_utility / scenario.model.num_layers)
    state.effective_utilities.append(token_effective / scenario.model.num_layers)


def dispatch(scenario: Scenario) -> RunResult:
    """Run the architecture selected by the scenario's placement strategy."""
    if scenario.placement_strategy == "centralized":
        return run_baseline_centralized(scenario)
    if scenario.placement_strategy == "split":
        return run_baseline_split(scenario)
    return run(scenario)


def compare(scenarios: list[Scenario]) -> list[dict]:
    """Run several scenarios against one workload and tabulate their metrics.

    Raises:
        ComparisonError: unless all scenarios share seed and workload shape.
    """
    if len(scenarios) < 2:
        raise ComparisonError("need at least two scenarios to compare")
    reference = scenarios[0].workload
    for s in scenarios[1:]:
        if s.workload != reference:
            raise ComparisonError(
                f"workloads differ between {scenarios[0].label!r} and {s.label!r}; "
                "comparisons require identical seed and arrival parameters"
            )
    rows = []
    baseline: RunMetrics | None = None
    for s in scenarios:
        metrics = dispatch(s).metrics
        row = metrics.to_dict()
        if baseline is None:
            baseline = metrics
            row["latency_vs_first"] = 0.0
            row["bytes_vs_first"] = 0
        else:
            row["latency_vs_first"] = (
                metrics.avg_token_latency_s - baseline.avg_token_latency_s
            )
            row["bytes_vs_first"] = metrics.bytes_moved - baseline.bytes_moved
        rows.append(row)
    return rows


def thermal_series(
    scenario: Scenario,
    horizon_s: float | None = None,
    satellites: list[SatelliteId] | None = None,
) -> list[tuple[float, SatelliteId, float, float, float]]:
    """Thermal budget time series rows (t, sat, p_rad, p_abs, budget).

    Pure function of the constellation and the thermal spec; spans two
    orbital periods by default so the sunlit/eclipse plateaus repeat.
    """
    provider = TopologyProvider(scenario)
    horizon = horizon_s if horizon_s is not None else 2.0 * scenario.shells[0].period_s
    rows = []
    steps = int(horizon // scenario.snapshot_interval_s) + 1
    for k in range(steps):
        snapshot = provider.at_index(k)
        sats = satellites if satellites is not None else snapshot.nodes
        for sat in sats:
            st = thermal.thermal_budget(
                scenario.thermal_spec, snapshot.sunlit[sat], snapshot.view_factor(sat)
            )
            rows.append((snapshot.t, sat, st.p_rad_w, st.p_abs_w, st.budget_w))
    return rows
