"""Radiative thermal budget and admission of extra onboard power.

The radiator is isothermal at a fixed set-point temperature, so the rejected
power is constant while the absorbed environmental heat switches with the
sunlight state. The remaining budget (rejected minus absorbed) is the power
headroom available for extra compute and forwarding; admissions accumulate
within one topology snapshot and reset at the boundary, i.e. the budget is a
rate constraint, not an energy budget.
"""
from __future__ import annotations

from dataclasses import dataclass

STEFAN_BOLTZMANN = 5.670374419e-8   # W / (m^2 K^4)
SOLAR_FLUX_W_M2 = 1361.0            # solar constant at 1 AU
EARTH_ALBEDO = 0.3
EARTH_IR_W_M2 = 237.0


@dataclass(frozen=True)
class ThermalSpec:
    """Radiator and absorber geometry plus surface properties.

    electronics_w is the baseline internal dissipation the radiator must
    reject on top of environmental heat; it is folded into the absorbed side
    of the budget.
    """

    emissivity: float = 0.9
    radiator_area_m2: float = 1.0
    radiator_temp_k: float = 290.0
    absorptivity: float = 0.3
    sun_facing_area_m2: float = 1.0
    earth_facing_area_m2: float = 1.0
    electronics_w: float = 0.0
    solar_flux_w_m2: float = SOLAR_FLUX_W_M2
    albedo: float = EARTH_ALBEDO
    earth_ir_w_m2: float = EARTH_IR_W_M2

    def __post_init__(self):
        if not 0.0 < self.emissivity <= 1.0:
            raise ValueError(f"emissivity must be in (0, 1], got {self.emissivity}")
        if not 0.0 < self.absorptivity <= 1.0:
            raise ValueError(f"absorptivity must be in (0, 1], got {self.absorptivity}")
        for name in ("radiator_area_m2", "sun_facing_area_m2", "earth_facing_area_m2"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.radiator_temp_k < 0:
            raise ValueError("radiator_temp_k must be >= 0")
        if self.electronics_w < 0:
            raise ValueError("electronics_w must be >= 0")


def radiated_power(spec: ThermalSpec) -> float:
    """Stefan-Boltzmann rejection of the isothermal radiator."""
    return (
        spec.emissivity
        * STEFAN_BOLTZMANN
        * spec.radiator_area_m2
        * spec.radiator_temp_k**4
    )


def absorbed_power(spec: ThermalSpec, is_sunlit: bool, view_factor: float) -> float:
    """Environmental heat load: direct solar, Earth albedo, and Earth IR.

    Solar and albedo terms vanish in eclipse; Earth IR does not. The baseline
    electronics dissipation is included since the radiator must reject it too.
    """
    if not 0.0 <= view_factor <= 1.0:
        raise ValueError(f"view_factor must be in [0, 1], got {view_factor}")
    solar = 0.0
    albedo = 0.0
    if is_sunlit:
        solar = spec.solar_flux_w_m2 * spec.absorptivity * spec.sun_facing_area_m2
        albedo = (
            spec.albedo
            * spec.solar_flux_w_m2
            * spec.absorptivity
            * spec.earth_facing_area_m2
            * view_factor
        )
    earth_ir = spec.earth_ir_w_m2 * spec.emissivity * spec.earth_facing_area_m2 * view_factor
    return solar + albedo + earth_ir + spec.electronics_w


@dataclass
class ThermalState:
    """Budget and running admissions of one satellite within one snapshot."""

    p_rad_w: float
    p_abs_w: float
    budget_w: float
    committed_w: float = 0.0

    def headroom_w(self) -> float:
        return self.budget_w - self.committed_w

    def can_admit(self, extra_power_w: float) -> bool:
        """Query-only admission test; state unchanged."""
        if extra_power_w < 0:
            raise ValueError(f"extra_power_w must be >= 0, got {extra_power_w}")
        if extra_power_w == 0.0:
            return True
        return self.committed_w + extra_power_w <= self.budget_w

    def reset_commitments(self) -> None:
        self.committed_w = 0.0


def thermal_budget(spec: ThermalSpec, is_sunlit: bool, view_factor: float) -> ThermalState:
    """Remaining thermal budget: radiated minus absorbed power.

    May be negative, in which case the satellite cannot admit any extra load.
    """
    p_rad = radiated_power(spec)
    p_abs = absorbed_power(spec, is_sunlit, view_factor)
    return ThermalState(p_rad_w=p_rad, p_abs_w=p_abs, budget_w=p_rad - p_abs)


def admit(state: ThermalState, extra_power_w: float) -> bool:
    """Admit and commit extra power iff it fits the remaining budget."""
    if not state.can_admit(extra_power_w):
        return False
    state.committed_w += extra_power_w
    return True
