"""Solar harvesting, battery state of charge, and nonlinear degradation.

Degradation per discharge event is throughput * dod^alpha * (1 + c_rate)^beta:
a minimal law that is monotone in energy throughput, depth, and rate of
discharge. Depth of discharge is anchored at the highest state of charge
reached so far (equivalently, at the last full charge once one occurs), so
long shallow eclipses and deep discharges accumulate differently.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import BrownoutError

SECONDS_PER_HOUR = 3600.0


@dataclass(frozen=True)
class DegradationLaw:
    """Coefficients of the discharge-degradation law."""

    k_d: float = 1e-4
    alpha: float = 1.1
    beta: float = 0.5
    health_floor: float = 0.6


@dataclass(frozen=True)
class PowerProfile:
    """Platform power characteristics, shared by energy and thermal accounting."""

    solar_panel_w: float = 800.0
    idle_load_w: float = 150.0
    compute_w_per_gflops: float = 0.05
    tx_w_per_gbps: float = 2.0
    compute_flops_per_s: float = 1e12

    def __post_init__(self):
        for name in ("solar_panel_w", "idle_load_w", "compute_w_per_gflops", "tx_w_per_gbps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.compute_flops_per_s <= 0:
            raise ValueError("compute_flops_per_s must be > 0")

    @property
    def compute_power_w(self) -> float:
        """Power drawn while computing at the full configured rate."""
        return self.compute_w_per_gflops * self.compute_flops_per_s / 1e9

    def tx_power_w(self, rate_bps: float) -> float:
        return self.tx_w_per_gbps * rate_bps / 1e9

    def compute_energy_wh(self, flops: float) -> float:
        """Energy to execute a fixed amount of work, independent of rate."""
        return self.compute_w_per_gflops * (flops / 1e9) / SECONDS_PER_HOUR

    def tx_energy_wh(self, n_bytes: float) -> float:
        return self.tx_w_per_gbps * (n_bytes * 8.0 / 1e9) / SECONDS_PER_HOUR


@dataclass(frozen=True)
class BatteryState:
    """Battery charge and irreversible-degradation state."""

    capacity_wh: float
    soc: float = 1.0
    cumulative_degradation: float = 0.0
    charge_mark: float | None = None
    law: DegradationLaw = DegradationLaw()

    def __post_init__(self):
        if self.capacity_wh <= 0:
            raise ValueError("capacity_wh must be > 0")
        if not 0.0 <= self.soc <= 1.0:
            raise ValueError(f"soc must be in [0, 1], got {self.soc}")
        if self.charge_mark is None:
            object.__setattr__(self, "charge_mark", self.soc)

    @property
    def health(self) -> float:
        return max(1.0 - self.cumulative_degradation, self.law.health_floor)


@dataclass(frozen=True)
class EnergyLedger:
    """Per-step energy accounting record."""

    harvest_w: float
    load_w: float
    discharge_w: float
    discharge_wh: float
    dod: float
    c_rate: float
    degradation_increment: float


def apply_degradation(
    b: BatteryState, discharge_wh: float, dod: float, c_rate: float
) -> BatteryState:
    """Accumulate the degradation of one discharge event.

    Args:
        b: Battery state before the event.
        discharge_wh: Energy drawn from the battery during the event.
        dod: Depth of discharge, measured from the last full-charge mark.
        c_rate: Discharge power divided by effective capacity, per hour.
    """
    if discharge_wh < 0 or not 0.0 <= dod <= 1.0 or c_rate < 0:
        raise ValueError("discharge_wh >= 0, dod in [0, 1], c_rate >= 0 required")
    if discharge_wh == 0.0:
        return b
    increment = degradation_increment(b, discharge_wh, dod, c_rate)
    return replace(b, cumulative_degradation=b.cumulative_degradation + increment)


def degradation_increment(
    b: BatteryState, discharge_wh: float, dod: float, c_rate: float
) -> float:
    law = b.law
    return law.k_d * (discharge_wh / b.capacity_wh) * dod**law.alpha * (1.0 + c_rate) ** law.beta


def step_energy(
    b: BatteryState,
    p: PowerProfile,
    is_sunlit: bool,
    load_w: float,
    dt: float,
    sat_id=None,
    t: float | None = None,
) -> tuple[BatteryState, EnergyLedger]:
    """Advance the battery by one interval under a fixed extra load.

    Harvest is the full panel output when sunlit, zero in eclipse. Net surplus
    charges the battery (clipped at full, surplus discarded); net deficit
    discharges it and accrues degradation.

    Raises:
        BrownoutError: if the state of charge would fall below zero.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if load_w < 0:
        raise ValueError(f"load_w must be >= 0, got {load_w}")

    harvest = p.solar_panel_w if is_sunlit else 0.0
    total_load = p.idle_load_w + load_w
    net = harvest - total_load
    usable_wh = b.capacity_wh * b.health

    if net >= 0.0:
        new_soc = min(b.soc + net * dt / (SECONDS_PER_HOUR * usable_wh), 1.0)
        mark = max(b.charge_mark, new_soc)
        new_state = replace(b, soc=new_soc, charge_mark=mark)
        ledger = EnergyLedger(harvest, total_load, 0.0, 0.0, 0.0, 0.0, 0.0)
        return new_state, ledger

    discharge_w = -net
    delta_soc = discharge_w * dt / (SECONDS_PER_HOUR * usable_wh)
    new_soc = b.soc - delta_soc
    if new_soc < 0.0:
        where = f" on {sat_id}" if sat_id is not None else ""
        when = f" at t={t:.3f}s" if t is not None else ""
        raise BrownoutError(
            f"battery{where}{when}: soc {b.soc:.4f} cannot supply "
            f"{discharge_w:.1f} W for {dt:.1f} s",
            sat_id=sat_id,
            t=t,
        )
    discharge_wh = discharge_w * dt / SECONDS_PER_HOUR
    dod = min(max(b.charge_mark - new_soc, 0.0), 1.0)
    c_rate = discharge_w / usable_wh
    increment = degradation_increment(b, discharge_wh, dod, c_rate)
    new_state = replace(
        b, soc=new_soc, cumulative_degradation=b.cumulative_degradation + increment
    )
    ledger = EnergyLedger(harvest, total_load, discharge_w, discharge_wh, dod, c_rate, increment)
    return new_state, ledger


def marginal_degradation_cost(
    b: BatteryState,
    p: PowerProfile,
    is_sunlit: bool,
    extra_energy_wh: float,
    window_s: float,
    base_load_w: float = 0.0,
) -> float:
    """Degradation added by an extra load, relative to not running it.

    Counterfactual and side-effect free: compares the degradation increment of
    the window with and without the extra energy spread over it. Exactly zero
    when the harvest surplus covers the extra load for the whole window.
    """
    if extra_energy_wh < 0:
        raise ValueError("extra_energy_wh must be >= 0")
    if window_s <= 0:
        raise ValueError("window_s must be > 0")
    if extra_energy_wh == 0.0:
        return 0.0

    extra_w = extra_energy_wh * SECONDS_PER_HOUR / window_s
    harvest = p.solar_panel_w if is_sunlit else 0.0
    base_total = p.idle_load_w + base_load_w

    def increment(total_load_w: float) -> float:
        net = harvest - total_load_w
        if net >= 0.0:
            return 0.0
        discharge_w = -net
        usable_wh = b.capacity_wh * b.health
        delta_soc = discharge_w * window_s / (SECONDS_PER_HOUR * usable_wh)
        new_soc = max(b.soc - delta_soc, 0.0)
        discharge_wh = discharge_w * window_s / SECONDS_PER_HOUR
        dod = min(max(b.charge_mark - new_soc, 0.0), 1.0)
        c_rate = discharge_w / usable_wh
        return degradation_increment(b, discharge_wh, dod, c_rate)

    return increment(base_total + extra_w) - increment(base_total)
