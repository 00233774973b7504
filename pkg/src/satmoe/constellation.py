"""Walker-shell propagation, inter-satellite topology, and illumination geometry.

Circular two-body orbits only: the simulated quantities (topology period,
eclipse timing, link delays) depend on constellation geometry, not on
perturbation fidelity. Earth is treated as non-rotating for ground-station
visibility over scenario horizons of a few orbital periods.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

R_EARTH_KM = 6371.0                 # mean Earth radius
MU_EARTH_KM3_S2 = 398600.4418       # gravitational parameter
SPEED_OF_LIGHT_KM_S = 299792.458


@dataclass(frozen=True, order=True)
class SatelliteId:
    """Identifies one satellite as (shell, plane, slot)."""

    shell: str
    plane: int
    slot: int

    def __str__(self) -> str:
        return f"{self.shell}:{self.plane}:{self.slot}"

    @classmethod
    def parse(cls, text: str) -> "SatelliteId":
        shell, plane, slot = text.split(":")
        return cls(shell, int(plane), int(slot))


@dataclass(frozen=True)
class WalkerShell:
    """One Walker-delta shell of circular orbits."""

    planes: int
    sats_per_plane: int
    altitude_km: float
    inclination_deg: float
    phasing_factor: int = 0
    raan_offset_deg: float = 0.0
    shell_id: str = "A"

    def __post_init__(self):
        if self.planes < 1 or self.sats_per_plane < 1:
            raise ConfigError(f"shell {self.shell_id}: planes and sats_per_plane must be >= 1")
        if self.altitude_km <= 0:
            raise ConfigError(f"shell {self.shell_id}: altitude_km must be > 0")
        if not 0.0 <= self.inclination_deg <= 180.0:
            raise ConfigError(f"shell {self.shell_id}: inclination_deg must be in [0, 180]")
        if not 0 <= self.phasing_factor < self.planes:
            raise ConfigError(f"shell {self.shell_id}: phasing_factor must be in [0, planes)")

    @property
    def semi_major_axis_km(self) -> float:
        return R_EARTH_KM + self.altitude_km

    @property
    def period_s(self) -> float:
        """Orbital period from Kepler's third law."""
        a = self.semi_major_axis_km
        return 2.0 * math.pi * math.sqrt(a**3 / MU_EARTH_KM3_S2)

    def satellites(self) -> list[SatelliteId]:
        return [
            SatelliteId(self.shell_id, p, s)
            for p in range(self.planes)
            for s in range(self.sats_per_plane)
        ]


@dataclass(frozen=True)
class EciPosition:
    """Earth-centered inertial position at time t."""

    x: float
    y: float
    z: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class IslPolicy:
    """Link-building policy for inter-satellite topology.

    plus_grid: 2 intra-plane neighbours (slot +/- 1) plus the phase-nearest
    satellite in each adjacent plane. Cross-shell links (optional) attach each
    lower-shell satellite to its geometrically nearest upper-shell satellite.
    """

    policy: str = "plus_grid"
    isl_rate_bps: float = 10e9
    cross_shell: bool = False
    cross_shell_rate_bps: float | None = None

    def __post_init__(self):
        if self.policy != "plus_grid":
            raise ConfigError(f"unknown ISL policy {self.policy!r}")
        if self.isl_rate_bps <= 0:
            raise ConfigError("isl_rate_bps must be > 0")


@dataclass(frozen=True)
class Link:
    """Undirected inter-satellite link with frozen per-snapshot geometry."""

    a: SatelliteId
    b: SatelliteId
    distance_km: float
    propagation_delay_s: float
    data_rate_bps: float


@dataclass
class TopologySnapshot:
    """Connectivity graph at one instant, with per-link delay and rate."""

    t: float
    nodes: list[SatelliteId]
    links: list[Link]
    sunlit: dict[SatelliteId, bool]
    positions: dict[SatelliteId, EciPosition]
    altitude_km: dict[str, float] = field(default_factory=dict)
    adjacency: dict[SatelliteId, dict[SatelliteId, Link]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.adjacency:
            adj: dict[SatelliteId, dict[SatelliteId, Link]] = {n: {} for n in self.nodes}
            for link in self.links:
                adj[link.a][link.b] = link
                adj[link.b][link.a] = link
            self.adjacency = adj

    def neighbors(self, sat: SatelliteId) -> dict[SatelliteId, Link]:
        return self.adjacency[sat]

    def view_factor(self, sat: SatelliteId) -> float:
        """Flat-plate Earth view factor (R_E / (R_E + h))^2."""
        h = self.altitude_km[sat.shell]
        return (R_EARTH_KM / (R_EARTH_KM + h)) ** 2


def propagate(shell: WalkerShell, t: float) -> dict[SatelliteId, EciPosition]:
    """Place every satellite of a shell on its circular orbit at time t.

    In-plane phase advances by 2*pi*t/T; planes are spread uniformly in RAAN
    and staggered by the Walker phasing factor.
    """
    if t < 0:
        raise ValueError(f"t must be >= 0, got {t}")
    a = shell.semi_major_axis_km
    inc = math.radians(shell.inclination_deg)
    cos_i, sin_i = math.cos(inc), math.sin(inc)
    n_total = shell.planes * shell.sats_per_plane
    mean_motion = 2.0 * math.pi / shell.period_s

    out: dict[SatelliteId, EciPosition] = {}
    for p in range(shell.planes):
        raan = math.radians(shell.raan_offset_deg) + 2.0 * math.pi * p / shell.planes
        cos_o, sin_o = math.cos(raan), math.sin(raan)
        for s in range(shell.sats_per_plane):
            # argument of latitude: slot spacing + Walker stagger + motion
            u = (
                2.0 * math.pi * s / shell.sats_per_plane
                + 2.0 * math.pi * shell.phasing_factor * p / n_total
                + mean_motion * t
            )
            cos_u, sin_u = math.cos(u), math.sin(u)
            x = a * (cos_u * cos_o - sin_u * cos_i * sin_o)
            y = a * (cos_u * sin_o + sin_u * cos_i * cos_o)
            z = a * (sin_u * sin_i)
            out[SatelliteId(shell.shell_id, p, s)] = EciPosition(x, y, z, t)
    return out


def in_plane_phase(shell: WalkerShell, plane: int, slot: int) -> float:
    """Argument-of-latitude offset of a slot at epoch, radians in [0, 2*pi)."""
    n_total = shell.planes * shell.sats_per_plane
    u = 2.0 * math.pi * slot / shell.sats_per_plane + 2.0 * math.pi * shell.phasing_factor * plane / n_total
    return u % (2.0 * math.pi)


def _nearest_slot_offset(shell: WalkerShell, from_plane: int, to_plane: int) -> int:
    """Slot offset k so that (to_plane, s + k) is phase-nearest to (from_plane, s).

    The offset is constant per plane pair because slots are uniformly spaced;
    ties break toward the lower slot index.
    """
    spacing = 2.0 * math.pi / shell.sats_per_plane
    stagger = in_plane_phase(shell, to_plane, 0) - in_plane_phase(shell, from_plane, 0)
    # minimize |k * spacing + stagger| over integer k
    x = -stagger / spacing
    best_k, best_val = None, None
    for k in (math.floor(x), math.ceil(x)):
        val = abs(k * spacing + stagger)
        # strict < keeps the lower k on exact ties
        if best_val is None or val < best_val - 1e-12:
            best_k, best_val = k, val
    return int(best_k) % shell.sats_per_plane


def _plus_grid_links(shell: WalkerShell, positions: dict[SatelliteId, EciPosition],
                     rate_bps: float) -> list[tuple[SatelliteId, SatelliteId]]:
    pairs: set[tuple[SatelliteId, SatelliteId]] = set()
    S = shell.sats_per_plane
    for p in range(shell.planes):
        for s in range(S):
            me = SatelliteId(shell.shell_id, p, s)
            for ds in (-1, 1):
                other = SatelliteId(shell.shell_id, p, (s + ds) % S)
                if other != me:
                    pairs.add(tuple(sorted((me, other))))
    if shell.planes > 1:
        neighbour_planes = {1, shell.planes - 1} if shell.planes > 2 else {1}
        for dp in neighbour_planes:
            for p in range(shell.planes):
                q = (p + dp) % shell.planes
                k = _nearest_slot_offset(shell, p, q)
                for s in range(S):
                    me = SatelliteId(shell.shell_id, p, s)
                    other = SatelliteId(shell.shell_id, q, (s + k) % S)
                    pairs.add(tuple(sorted((me, other))))
    return sorted(pairs)


def build_topology(
    shells: list[WalkerShell] | WalkerShell,
    t: float,
    policy: IslPolicy,
    sun_direction: np.ndarray | None = None,
) -> TopologySnapshot:
    """Build the connectivity snapshot at time t for one or more shells.

    Link delays are geometric distance over the speed of light, frozen at the
    snapshot time. Shells are sorted by altitude; cross-shell links (when
    enabled) go from each lower-shell satellite to its nearest satellite in the
    next shell up.
    """
    if isinstance(shells, WalkerShell):
        shells = [shells]
    ids = {s.shell_id for s in shells}
    if len(ids) != len(shells):
        raise ConfigError("shell_id values must be unique across shells")

    positions: dict[SatelliteId, EciPosition] = {}
    for shell in shells:
        positions.update(propagate(shell, t))

    pair_rate: list[tuple[SatelliteId, SatelliteId, float]] = []
    for shell in shells:
        for a, b in _plus_grid_links(shell, positions, policy.isl_rate_bps):
            pair_rate.append((a, b, policy.isl_rate_bps))

    if policy.cross_shell and len(shells) > 1:
        by_alt = sorted(shells, key=lambda s: s.altitude_km)
        rate = policy.cross_shell_rate_bps or policy.isl_rate_bps
        for lower, upper in zip(by_alt[:-1], by_alt[1:]):
            upper_sats = upper.satellites()
            upper_xyz = np.array([positions[u].as_array() for u in upper_sats])
            for sat in lower.satellites():
                d2 = np.sum((upper_xyz - positions[sat].as_array()) ** 2, axis=1)
                nearest = upper_sats[int(np.argmin(d2))]
                a, b = sorted((sat, nearest))
                pair_rate.append((a, b, rate))

    seen: set[tuple[SatelliteId, SatelliteId]] = set()
    links: list[Link] = []
    for a, b, rate in pair_rate:
        if (a, b) in seen:
            continue
        seen.add((a, b))
        dist = float(np.linalg.norm(positions[a].as_array() - positions[b].as_array()))
        links.append(Link(a, b, dist, dist / SPEED_OF_LIGHT_KM_S, rate))

    nodes = sorted(positions)
    if sun_direction is None:
        sun_map = {n: True for n in nodes}
    else:
        sun_map = {n: sunlit(positions[n], sun_direction) for n in nodes}

    return TopologySnapshot(
        t=t,
        nodes=nodes,
        links=links,
        sunlit=sun_map,
        positions=positions,
        altitude_km={s.shell_id: s.altitude_km for s in shells},
    )


def sunlit(position: EciPosition, sun_direction: np.ndarray) -> bool:
    """Cylindrical Earth-shadow test.

    The satellite is eclipsed iff it sits behind Earth along the anti-sun axis
    and within one Earth radius of that axis.
    """
    sun = np.asarray(sun_direction, dtype=float)
    norm = np.linalg.norm(sun)
    if not math.isclose(norm, 1.0, rel_tol=1e-6):
        raise ValueError(f"sun_direction must be a unit vector, |v|={norm:.6g}")
    pos = position.as_array()
    behind = float(pos @ sun)
    if behind >= 0.0:
        return True
    radial = math.sqrt(max(float(pos @ pos) - behind * behind, 0.0))
    return radial >= R_EARTH_KM


def ground_visibility(
    position: EciPosition,
    station_lat_deg: float,
    station_lon_deg: float,
    min_elevation_deg: float = 10.0,
) -> bool:
    """True iff the satellite is at least min_elevation above the station horizon.

    Non-rotating Earth: the station's inertial position is fixed by its
    geodetic coordinates on a spherical Earth.
    """
    if not -90.0 <= station_lat_deg <= 90.0:
        raise ValueError(f"latitude must be in [-90, 90], got {station_lat_deg}")
    lat = math.radians(station_lat_deg)
    lon = math.radians(station_lon_deg)
    station = R_EARTH_KM * np.array(
        [math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)]
    )
    up = station / R_EARTH_KM
    line = position.as_array() - station
    dist = np.linalg.norm(line)
    if dist == 0.0:
        return True
    elevation = math.degrees(math.asin(float(np.clip(line @ up / dist, -1.0, 1.0))))
    return elevation >= min_elevation_deg


def eclipse_fraction(shell: WalkerShell, plane: int, slot: int,
                     sun_direction: np.ndarray, samples: int = 2000) -> float:
    """Fraction of one orbital period a satellite spends in eclipse (sampled)."""
    period = shell.period_s
    dark = 0
    for i in range(samples):
        pos = propagate(shell, i * period / samples)[SatelliteId(shell.shell_id, plane, slot)]
        if not sunlit(pos, sun_direction):
            dark += 1
    return dark / samples


def export_snapshot_csv(snapshot: TopologySnapshot) -> list[str]:
    """CSV rows `t,sat_id,x_km,y_km,z_km,sunlit` for one snapshot."""
    rows = []
    for sat in snapshot.nodes:
        p = snapshot.positions[sat]
        rows.append(
            f"{snapshot.t!r},{sat},{p.x!r},{p.y!r},{p.z!r},{int(snapshot.sunlit[sat])}"
        )
    return rows
