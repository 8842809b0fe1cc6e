"""Closed-form fringe visibility laws and the combined visibility budget."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

__all__ = [
    "MultipairRates",
    "VisibilityBudget",
    "analytic_visibility_d",
    "multipair_rates",
    "visibility_multipair",
    "visibility_phase_noise",
    "visibility_misalignment",
    "imbalance_db_to_ratio",
    "visibility_budget",
    "budget_from_factors",
]


def _check_d(d):
    if int(d) != d or d < 1:
        raise ValueError(f"d >= 1 required, got {d!r}")


def analytic_visibility_d(d: int, v_max: float = 1.0) -> float:
    """v_max * (d - 1) / d: the first and last bins never interfere."""
    _check_d(d)
    if not 0.0 <= v_max <= 1.0:
        raise ValueError(f"v_max must lie in [0, 1], got {v_max!r}")
    return v_max * (d - 1) / d


@dataclass(frozen=True)
class MultipairRates:
    """Coincidence rates (per train, in units of the single-pair rate scale).

    r1 is the single-pair term carrying the fringe, r2_same the
    cross-pair term from pairs born in the same bin and r2_consecutive the
    cross-pair term from pairs born in neighbouring bins.
    """

    r1: float
    r2_same: float
    r2_consecutive: float

    @property
    def r2(self) -> float:
        return self.r2_same + self.r2_consecutive

    @property
    def total(self) -> float:
        return self.r1 + self.r2


def multipair_rates(mu: float, d: int) -> MultipairRates:
    if mu < 0:
        raise ValueError("mu must be >= 0")
    _check_d(d)
    return MultipairRates(
        r1=0.5 * mu * d,
        r2_same=0.5 * mu * mu * d,
        r2_consecutive=0.5 * mu * mu * (d - 1),
    )


def visibility_multipair(mu: float, d: int, v_d: float) -> float:
    """Fringe visibility diluted by coincidences between independent pairs."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    _check_d(d)
    return v_d / (1.0 + 2.0 * mu - mu / d)


def visibility_phase_noise(v_d: float, delta_eps: float, m: int = 1) -> float:
    """Visibility with Gaussian pump phase noise of width ``delta_eps`` per
    pulse step, compared across ``m`` steps."""
    if delta_eps < 0:
        raise ValueError("delta_eps must be >= 0")
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    return v_d * math.exp(-0.5 * m * delta_eps**2)


def visibility_misalignment(t_s: float, t_l: float) -> float:
    """2 t_s^2 t_l^2 / (t_s^4 + t_l^4) for unequal arm amplitude transmissions."""
    if t_s < 0 or t_l < 0:
        raise ValueError("transmissions must be non-negative")
    if t_s == 0 and t_l == 0:
        raise ValueError("t_s and t_l cannot both be zero")
    s2, l2 = t_s * t_s, t_l * t_l
    return 2.0 * s2 * l2 / (s2 * s2 + l2 * l2)


def imbalance_db_to_ratio(imbalance_db: float) -> float:
    """Amplitude ratio t_l / t_s for an intensity imbalance given in dB."""
    return 10.0 ** (-imbalance_db / 20.0)


@dataclass(frozen=True)
class VisibilityBudget:
    """Multiplicative decomposition of the expected fringe visibility.

    ``v_max`` is the product of the imperfection factors (everything except
    the dimension factor) and ``v_total = v_d * v_max``.
    """

    v_d: float
    v_multipair: float
    v_misalign: float
    v_phase: float
    v_residual: float

    def __post_init__(self):
        for name in ("v_d", "v_multipair", "v_misalign", "v_phase", "v_residual"):
            val = getattr(self, name)
            if not 0.0 <= val <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {val!r}")

    @property
    def v_max(self) -> float:
        return self.v_multipair * self.v_misalign * self.v_phase * self.v_residual

    @property
    def v_total(self) -> float:
        return self.v_d * self.v_max

    def as_dict(self) -> dict:
        return {
            "v_d": self.v_d,
            "v_multipair": self.v_multipair,
            "v_misalign": self.v_misalign,
            "v_phase": self.v_phase,
            "v_residual": self.v_residual,
            "v_max": self.v_max,
            "v_total": self.v_total,
        }


def visibility_budget(
    d: Optional[int],
    mu: float = 0.0,
    t_s: float = 1.0,
    t_l: float = 1.0,
    delta_eps: float = 0.0,
    v_residual: float = 1.0,
) -> VisibilityBudget:
    """Compose the visibility factors for one configuration.

    ``d=None`` means the large-d limit: the dimension factor is 1 and the
    multi-pair factor is evaluated at 1/d -> 0.
    """
    if d is None:
        if mu < 0:
            raise ValueError("mu must be >= 0")
        v_d = 1.0
        v_mp = 1.0 / (1.0 + 2.0 * mu)
    else:
        v_d = analytic_visibility_d(d, 1.0)
        v_mp = visibility_multipair(mu, d, 1.0)
    return VisibilityBudget(
        v_d=v_d,
        v_multipair=v_mp,
        v_misalign=visibility_misalignment(t_s, t_l),
        v_phase=visibility_phase_noise(1.0, delta_eps, 1),
        v_residual=v_residual,
    )


def budget_from_factors(
    v_multipair: float,
    v_misalign: float,
    v_residual: float,
    v_phase: float = 1.0,
    d: Optional[int] = None,
) -> VisibilityBudget:
    """Budget from externally estimated factors."""
    v_d = 1.0 if d is None else analytic_visibility_d(d, 1.0)
    return VisibilityBudget(v_d, v_multipair, v_misalign, v_phase, v_residual)
