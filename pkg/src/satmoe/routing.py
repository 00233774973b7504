"""Hidden-state delivery paths over a topology snapshot.

Path computations are pure over a frozen snapshot. Thermal-aware routing
filters candidate relay/destination nodes by a caller-supplied admission
query; the caller commits power only when the transmission is actually made.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Callable

from .constellation import SatelliteId, TopologySnapshot
from .errors import NoRouteError, ThermalInfeasibleError
from .moe import MoEModelSpec, hidden_state_bytes


@dataclass(frozen=True)
class Route:
    """Ordered hop sequence with aggregate delay and bottleneck rate."""

    hops: tuple[SatelliteId, ...]
    total_delay_s: float
    bottleneck_rate_bps: float
    crosses_shell: bool

    @property
    def src(self) -> SatelliteId:
        return self.hops[0]

    @property
    def dst(self) -> SatelliteId:
        return self.hops[-1]

    @property
    def num_links(self) -> int:
        return len(self.hops) - 1


def _route_from_hops(topo: TopologySnapshot, hops: tuple[SatelliteId, ...]) -> Route:
    delay = 0.0
    rate = math.inf
    crosses = False
    for a, b in zip(hops[:-1], hops[1:]):
        link = topo.adjacency[a][b]
        delay += link.propagation_delay_s
        rate = min(rate, link.data_rate_bps)
        if a.shell != b.shell:
            crosses = True
    return Route(hops=hops, total_delay_s=delay, bottleneck_rate_bps=rate, crosses_shell=crosses)


def shortest_path(
    topo: TopologySnapshot,
    src: SatelliteId,
    dst: SatelliteId,
    allowed: Callable[[SatelliteId], bool] | None = None,
) -> Route:
    """Minimum-propagation-delay route; ties break to the lexicographically
    smallest hop sequence.

    `allowed` optionally restricts intermediate and destination nodes (the
    source is always permitted).

    Raises:
        NoRouteError: if dst is unreachable.
    """
    if src not in topo.adjacency or dst not in topo.adjacency:
        raise NoRouteError(f"{src} or {dst} not in snapshot at t={topo.t}")
    if allowed is not None and src != dst and not allowed(dst):
        raise NoRouteError(f"destination {dst} excluded by node filter")
    if src == dst:
        return Route(hops=(src,), total_delay_s=0.0, bottleneck_rate_bps=math.inf,
                     crosses_shell=False)

    # heap keyed by (delay, hop sequence) so equal-delay paths settle in
    # lexicographic order
    heap: list[tuple[float, tuple[SatelliteId, ...]]] = [(0.0, (src,))]
    settled: set[SatelliteId] = set()
    while heap:
        delay, hops = heapq.heappop(heap)
        node = hops[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return _route_from_hops(topo, hops)
        for nbr, link in sorted(topo.adjacency[node].items()):
            if nbr in settled:
                continue
            if allowed is not None and not allowed(nbr):
                continue
            heapq.heappush(heap, (delay + link.propagation_delay_s, hops + (nbr,)))
    raise NoRouteError(f"no path from {src} to {dst} at t={topo.t}")


def single_source_routes(
    topo: TopologySnapshot, src: SatelliteId
) -> dict[SatelliteId, Route]:
    """Shortest routes from src to every reachable node (one Dijkstra pass)."""
    heap: list[tuple[float, tuple[SatelliteId, ...]]] = [(0.0, (src,))]
    out: dict[SatelliteId, Route] = {}
    while heap:
        delay, hops = heapq.heappop(heap)
        node = hops[-1]
        if node in out:
            continue
        out[node] = (
            Route(hops=(src,), total_delay_s=0.0, bottleneck_rate_bps=math.inf,
                  crosses_shell=False)
            if node == src
            else _route_from_hops(topo, hops)
        )
        for nbr, link in sorted(topo.adjacency[node].items()):
            if nbr not in out:
                heapq.heappush(heap, (delay + link.propagation_delay_s, hops + (nbr,)))
    return out


def thermal_aware_path(
    topo: TopologySnapshot,
    admits: Callable[[SatelliteId], bool],
    src: SatelliteId,
    dst: SatelliteId,
) -> Route:
    """Shortest path over nodes that can thermally admit the forwarding load.

    `admits(sat)` must be a query-only check of the per-satellite thermal
    state for the forwarding power in question; the source is exempt.

    Raises:
        ThermalInfeasibleError: if no admissible path exists.
    """
    try:
        return shortest_path(topo, src, dst, allowed=admits)
    except NoRouteError as exc:
        raise ThermalInfeasibleError(
            f"no thermally admissible path from {src} to {dst} at t={topo.t}"
        ) from exc


@dataclass(frozen=True)
class CompressionModel:
    """Importance-to-compression mapping and its distortion law.

    compression_ratio = r_min + (1 - r_min) * importance;
    distortion = d_max * (1 - compression_ratio)^gamma.
    """

    r_min: float = 0.25
    d_max: float = 0.2
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r_min <= 1.0:
            raise ValueError(f"r_min must be in (0, 1], got {self.r_min}")
        if not 0.0 <= self.d_max < 1.0:
            raise ValueError(f"d_max must be in [0, 1), got {self.d_max}")
        if self.gamma <= 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")

    def ratio(self, importance: float) -> float:
        return self.r_min + (1.0 - self.r_min) * importance

    def distortion(self, ratio: float) -> float:
        return self.d_max * (1.0 - ratio) ** self.gamma


@dataclass(frozen=True)
class TransmitPlan:
    """A chosen route plus the compression applied to the hidden state."""

    route: Route
    compression_ratio: float
    distortion: float
    bytes_on_wire: int

    def serialization_delay_s(self) -> float:
        if self.route.num_links == 0:
            return 0.0
        return self.bytes_on_wire * 8.0 / self.route.bottleneck_rate_bps


def plan_transmission(
    importance: float,
    routes: list[Route],
    spec: MoEModelSpec,
    compression: CompressionModel = CompressionModel(),
) -> TransmitPlan:
    """Pick the lowest-delay candidate route and compress by importance.

    Candidates are expected to be pre-filtered by `layer_preference`; ties on
    delay break by hop count, then lexicographic hop sequence.
    """
    if not routes:
        raise ValueError("at least one candidate route required")
    if not 0.0 <= importance <= 1.0:
        raise ValueError(f"importance must be in [0, 1], got {importance}")
    route = min(routes, key=lambda r: (r.total_delay_s, r.num_links, r.hops))
    ratio = compression.ratio(importance)
    return TransmitPlan(
        route=route,
        compression_ratio=ratio,
        distortion=compression.distortion(ratio),
        bytes_on_wire=math.ceil(hidden_state_bytes(spec) * ratio),
    )


def layer_preference(route_candidates: list[Route], latency_sensitive: bool) -> list[Route]:
    """Constellation-layer route preference.

    Latency-sensitive traffic sticks to intra-shell routes when any exist;
    otherwise all candidates are kept, ranked by (delay, hop count).
    """
    if not route_candidates:
        raise ValueError("route_candidates must be non-empty")
    if latency_sensitive:
        intra = [r for r in route_candidates if not r.crosses_shell]
        if intra:
            return sorted(intra, key=lambda r: (r.total_delay_s, r.num_links, r.hops))
    return sorted(route_candidates, key=lambda r: (r.total_delay_s, r.num_links, r.hops))
