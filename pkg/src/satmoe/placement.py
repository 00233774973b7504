"""Expert-replica placement strategies and the placement evaluator.

Strategies are greedy: the goals (keep hot experts close over time, co-locate
co-activated experts, replicate selectively under a byte budget) admit
reproducible greedy realizations that can be brute-force checked at desk
scale. Access cost is the activation-weighted mean round-trip shortest-path
delay from the request-ingesting source satellite, averaged over a series of
topology snapshots so that placements hold up as the constellation moves.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .constellation import SatelliteId, TopologySnapshot
from .errors import PlacementError
from .moe import ActivationStats, GatingScores, MoEModelSpec, gate_topk, hidden_state_bytes
from .routing import single_source_routes

ExpertKey = tuple[int, int]   # (layer, expert_index)


@dataclass
class PlacementMap:
    """Mapping from (layer, expert) to its hosting satellites."""

    hosts: dict[ExpertKey, list[SatelliteId]]
    memory_used: dict[SatelliteId, float] = field(default_factory=dict)

    def replicas(self, layer: int, expert: int) -> list[SatelliteId]:
        return self.hosts[(layer, expert)]

    def copy(self) -> "PlacementMap":
        return PlacementMap(
            hosts={k: list(v) for k, v in self.hosts.items()},
            memory_used=dict(self.memory_used),
        )

    def add_replica(self, key: ExpertKey, sat: SatelliteId, expert_memory_bytes: float) -> None:
        self.hosts.setdefault(key, [])
        if sat in self.hosts[key]:
            return
        self.hosts[key] = sorted(self.hosts[key] + [sat])
        self.memory_used[sat] = self.memory_used.get(sat, 0.0) + expert_memory_bytes

    def to_json(self) -> str:
        doc = {
            f"{layer}.{expert}": [str(s) for s in sats]
            for (layer, expert), sats in sorted(self.hosts.items())
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str, spec: MoEModelSpec) -> "PlacementMap":
        doc = json.loads(text)
        hosts: dict[ExpertKey, list[SatelliteId]] = {}
        memory: dict[SatelliteId, float] = {}
        for key, sats in doc.items():
            layer, expert = (int(x) for x in key.split("."))
            parsed = sorted(SatelliteId.parse(s) for s in sats)
            hosts[(layer, expert)] = parsed
            for sat in parsed:
                memory[sat] = memory.get(sat, 0.0) + spec.expert_memory_bytes
        return cls(hosts=hosts, memory_used=memory)


def validate_placement(
    placement: PlacementMap, spec: MoEModelSpec, capacities: dict[SatelliteId, float]
) -> None:
    """Check the structural invariants of a placement; raises on violation."""
    expected: dict[SatelliteId, float] = {}
    for layer in range(spec.num_layers):
        for expert in range(spec.experts_per_layer):
            sats = placement.hosts.get((layer, expert))
            if not sats:
                raise PlacementError(f"expert ({layer}, {expert}) has no host")
            for sat in sats:
                expected[sat] = expected.get(sat, 0.0) + spec.expert_memory_bytes
    for sat, used in expected.items():
        if used > capacities.get(sat, 0.0) + 1e-6:
            raise PlacementError(
                f"{sat} over capacity: {used} > {capacities.get(sat, 0.0)}"
            )
        if not math.isclose(used, placement.memory_used.get(sat, 0.0), rel_tol=1e-9):
            raise PlacementError(f"memory accounting mismatch on {sat}")


@dataclass(frozen=True)
class PlacementEval:
    """Replay metrics of one placement on a fixed workload trace."""

    avg_latency_per_token_s: float
    p95_latency_s: float
    remote_fraction: float
    total_bytes_moved: int


def _fits(placement: PlacementMap, sat: SatelliteId, capacities: dict[SatelliteId, float],
          expert_memory_bytes: float) -> bool:
    return placement.memory_used.get(sat, 0.0) + expert_memory_bytes <= capacities[sat] + 1e-6


def mean_rtt_by_satellite(
    topo_series: list[TopologySnapshot], source: SatelliteId
) -> dict[SatelliteId, float]:
    """Mean round-trip shortest-path delay from the source, over all snapshots.

    Satellites unreachable in any snapshot get infinite cost so they are never
    preferred as hosts.
    """
    if not topo_series:
        raise ValueError("topo_series must be non-empty")
    totals: dict[SatelliteId, float] = {}
    for topo in topo_series:
        routes = single_source_routes(topo, source)
        for sat in topo.nodes:
            rtt = 2.0 * routes[sat].total_delay_s if sat in routes else math.inf
            totals[sat] = totals.get(sat, 0.0) + rtt
    return {sat: total / len(topo_series) for sat, total in totals.items()}


def place_static(
    spec: MoEModelSpec,
    sats: list[SatelliteId],
    capacities: dict[SatelliteId, float],
) -> PlacementMap:
    """Topology-blind baseline: one replica per expert, round-robin in id order.

    Satellites without room are skipped; a full sweep with no assignment
    raises, naming the first unplaceable expert.
    """
    order = sorted(sats)
    placement = PlacementMap(hosts={}, memory_used={})
    cursor = 0
    for layer in range(spec.num_layers):
        for expert in range(spec.experts_per_layer):
            placed = False
            for attempt in range(len(order)):
                sat = order[(cursor + attempt) % len(order)]
                if _fits(placement, sat, capacities, spec.expert_memory_bytes):
                    placement.add_replica((layer, expert), sat, spec.expert_memory_bytes)
                    cursor = (cursor + attempt + 1) % len(order)
                    placed = True
                    break
            if not placed:
                raise PlacementError(
                    f"no capacity left for expert ({layer}, {expert})"
                )
    return placement


def _greedy_place(
    items: list[tuple[float, list[ExpertKey]]],
    spec: MoEModelSpec,
    capacities: dict[SatelliteId, float],
    mean_rtt: dict[SatelliteId, float],
) -> PlacementMap:
    """Place weighted expert groups on the feasible satellite of least mean RTT.

    items: (weight, member experts) in the order to place. Groups that no
    longer fit anywhere whole are split into singletons and re-queued.
    """
    placement = PlacementMap(hosts={}, memory_used={})
    by_cost = sorted(mean_rtt.items(), key=lambda kv: (kv[1], kv[0]))
    queue = list(items)
    while queue:
        weight, members = queue.pop(0)
        need = spec.expert_memory_bytes * len(members)
        chosen = None
        for sat, cost in by_cost:
            if math.isinf(cost):
                continue
            if placement.memory_used.get(sat, 0.0) + need <= capacities[sat] + 1e-6:
                chosen = sat
                break
        if chosen is None:
            if len(members) > 1:
                queue = [(weight, [m]) for m in members] + queue
                continue
            raise PlacementError(f"no capacity left for expert {members[0]}")
        for member in members:
            placement.add_replica(member, chosen, spec.expert_memory_bytes)
    return placement


def _activation_weights(stats: ActivationStats) -> dict[ExpertKey, float]:
    weights: dict[ExpertKey, float] = {}
    for layer in range(stats.num_layers):
        freq = stats.frequency(layer)
        for expert in range(stats.num_experts):
            weights[(layer, expert)] = float(freq[expert])
    return weights


def place_mobility_aware(
    spec: MoEModelSpec,
    stats: ActivationStats,
    topo_series: list[TopologySnapshot],
    source: SatelliteId,
    capacities: dict[SatelliteId, float],
) -> PlacementMap:
    """Hot experts first, each on the feasible satellite of least time-averaged
    round-trip delay to the source."""
    if sum(stats.total(layer) for layer in range(stats.num_layers)) == 0:
        raise ValueError("activation stats are empty; profile a workload first")
    weights = _activation_weights(stats)
    order = sorted(
        weights.items(), key=lambda kv: (-kv[1], kv[0][0], kv[0][1])
    )
    items = [(weight, [key]) for key, weight in order]
    mean_rtt = mean_rtt_by_satellite(topo_series, source)
    return _greedy_place(items, spec, capacities, mean_rtt)


def place_coactivation(
    spec: MoEModelSpec,
    stats: ActivationStats,
    topo_series: list[TopologySnapshot],
    source: SatelliteId,
    capacities: dict[SatelliteId, float],
) -> PlacementMap:
    """Mobility-aware placement of co-location groups.

    Per layer, expert pairs are merged in descending co-activation count while
    the merged group still fits on some satellite; groups are then placed by
    summed activation weight. With an all-zero co-activation matrix no merges
    happen and the result equals place_mobility_aware exactly.
    """
    if sum(stats.total(layer) for layer in range(stats.num_layers)) == 0:
        raise ValueError("activation stats are empty; profile a workload first")
    weights = _activation_weights(stats)
    max_capacity = max(capacities.values(), default=0.0)

    groups: dict[ExpertKey, list[ExpertKey]] = {
        key: [key] for key in weights
    }
    leader: dict[ExpertKey, ExpertKey] = {key: key for key in weights}

    for layer in range(stats.num_layers):
        coact = stats.coactivation_count[layer]
        pairs = [
            (int(coact[i, j]), i, j)
            for i in range(stats.num_experts)
            for j in range(i + 1, stats.num_experts)
            if coact[i, j] > 0
        ]
        pairs.sort(key=lambda p: (-p[0], p[1], p[2]))
        for _, i, j in pairs:
            a, b = leader[(layer, i)], leader[(layer, j)]
            if a == b:
                continue
            merged_size = len(groups[a]) + len(groups[b])
            if merged_size * spec.expert_memory_bytes > max_capacity + 1e-6:
                continue
            keep, absorb = sorted((a, b))
            groups[keep] = sorted(groups[keep] + groups[absorb])
            for member in groups[absorb]:
                leader[member] = keep
            del groups[absorb]

    items = [
        (sum(weights[m] for m in members), members)
        for members in groups.values()
    ]
    items.sort(key=lambda it: (-it[0], it[1][0]))
    mean_rtt = mean_rtt_by_satellite(topo_series, source)
    return _greedy_place(items, spec, capacities, mean_rtt)


def _mean_access_delay(
    hosts: list[SatelliteId], delay_maps: list[dict[SatelliteId, float]]
) -> float:
    """Mean over snapshots of the round-trip delay to the nearest replica."""
    total = 0.0
    for delays in delay_maps:
        best = min((delays.get(h, math.inf) for h in hosts), default=math.inf)
        total += 2.0 * best
    return total / len(delay_maps)


def replicate_hot(
    placement: PlacementMap,
    spec: MoEModelSpec,
    stats: ActivationStats,
    topo_series: list[TopologySnapshot],
    source: SatelliteId,
    capacities: dict[SatelliteId, float],
    replica_budget_bytes: float,
) -> PlacementMap:
    """Spend a replica byte budget on the experts that hurt most.

    Greedy: repeatedly replicate the expert with the largest product of
    activation frequency and current mean access delay, onto the feasible
    satellite that most reduces that delay.
    """
    if replica_budget_bytes < 0:
        raise ValueError("replica_budget_bytes must be >= 0")
    result = placement.copy()
    weights = _activation_weights(stats)
    delay_maps = [
        {sat: r.total_delay_s for sat, r in single_source_routes(t, source).items()}
        for t in topo_series
    ]
    budget = replica_budget_bytes
    while budget >= spec.expert_memory_bytes:
        best = None   # (score, key, new_delay, sat)
        for key, weight in sorted(weights.items()):
            hosts = result.hosts[key]
            current = _mean_access_delay(hosts, delay_maps)
            score = weight * current
            if score <= 0.0:
                continue
            for sat in sorted(capacities):
                if sat in hosts:
                    continue
                if not _fits(result, sat, capacities, spec.expert_memory_bytes):
                    continue
                new_delay = _mean_access_delay(hosts + [sat], delay_maps)
                if new_delay >= current:
                    continue
                cand = (-score, key, new_delay, sat)
                if best is None or cand < best:
                    best = cand
        if best is None:
            break
        _, key, _, sat = best
        result.add_replica(key, sat, spec.expert_memory_bytes)
        budget -= spec.expert_memory_bytes
    return result


def eval_placement(
    placement: PlacementMap,
    workload_trace: list[list[GatingScores]],
    topo_series: list[TopologySnapshot],
    spec: MoEModelSpec,
    source: SatelliteId,
    compute_flops_per_s: float = 1e12,
) -> PlacementEval:
    """Replay a gating trace through the latency model, without energy or
    thermal coupling.

    Per layer: non-expert compute at the source plus the slowest expert branch
    (round-trip to the nearest replica plus expert compute). Remote access
    ships the full hidden state both ways.
    """
    if not topo_series:
        raise ValueError("topo_series must be non-empty")
    interval = (
        topo_series[1].t - topo_series[0].t if len(topo_series) > 1 else math.inf
    )
    route_cache: list[dict | None] = [None] * len(topo_series)

    def routes_at(idx: int) -> dict:
        if route_cache[idx] is None:
            route_cache[idx] = single_source_routes(topo_series[idx], source)
        return route_cache[idx]

    state_bytes = hidden_state_bytes(spec)
    non_expert_s = spec.non_expert_flops / compute_flops_per_s
    expert_s = spec.expert_flops / compute_flops_per_s

    t = 0.0
    latencies: list[float] = []
    remote_calls = 0
    total_calls = 0
    bytes_moved = 0
    for token_layers in workload_trace:
        token_latency = 0.0
        for scores in token_layers:
            idx = min(int(t // interval) if math.isfinite(interval) else 0,
                      len(topo_series) - 1)
            routes = routes_at(idx)
            slowest = 0.0
            for expert, _weight in gate_topk(scores, spec.top_k):
                hosts = placement.replicas(scores.layer, expert)
                host = min(
                    hosts,
                    key=lambda h: (
                        routes[h].total_delay_s if h in routes else math.inf, h
                    ),
                )
                route = routes[host]
                total_calls += 1
                comm = 0.0
                if route.num_links > 0:
                    remote_calls += 1
                    bytes_moved += 2 * state_bytes
                    comm = 2.0 * (
                        route.total_delay_s + state_bytes * 8.0 / route.bottleneck_rate_bps
                    )
                branch = comm + expert_s
                slowest = max(slowest, branch)
            layer_latency = non_expert_s + slowest
            token_latency += layer_latency
            t += layer_latency
        latencies.append(token_latency)

    latencies_sorted = sorted(latencies)
    n = len(latencies_sorted)
    p95 = latencies_sorted[min(max(math.ceil(0.95 * n) - 1, 0), n - 1)] if n else 0.0
    return PlacementEval(
        avg_latency_per_token_s=sum(latencies) / n if n else 0.0,
        p95_latency_s=p95,
        remote_fraction=remote_calls / total_calls if total_calls else 0.0,
        total_bytes_moved=bytes_moved,
    )
