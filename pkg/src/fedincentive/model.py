"""Utility, accuracy and fatigue formulas of the three-tier incentive model.

Every function here is a pure scalar function of explicit parameter records.
Invalid inputs raise ``DomainError`` instead of being clamped, so callers
(budget search, the adaptive outer loop) can tell when a regime is infeasible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np


class DomainError(ValueError):
    """An input lies outside the domain on which a formula is defined."""


@dataclass(frozen=True)
class SystemParams:
    """Scalar parameters of the mechanism.

    ``lam``, ``alpha``, ``beta`` and ``theta`` have no published values; the
    defaults below are our own choice. ``fatigue_*`` defaults are the
    experimental settings (epsilon=0.1, gamma=-10, delta=0.5). A negative
    ``fatigue_gamma`` makes fatigue *decrease* with contribution; pass a
    positive value for the increasing shape.

    ``obsa_tolerance`` and ``conv_tolerance`` may be ``None``, in which case
    the budget search and the outer loop fall back to relative defaults
    (5% of the data target and 0.1% of the total data respectively).
    """

    lam: float = 1.0
    alpha: float = 10.0
    beta: float = 1.0
    theta: float = 0.1
    phi: float = -0.05
    fatigue_epsilon: float = 0.1
    fatigue_gamma: float = -10.0
    fatigue_delta: float = 0.5
    obsa_tolerance: Optional[float] = None
    conv_tolerance: Optional[float] = None

    def __post_init__(self):
        for name in ("lam", "alpha", "beta", "fatigue_epsilon"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise DomainError(f"{name} must be finite and > 0, got {value}")
        for name in ("obsa_tolerance", "conv_tolerance"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise DomainError(f"{name} must be > 0 when given, got {value}")
        if not self.phi <= 0:
            raise DomainError(f"phi must be <= 0, got {self.phi}")
        if not self.theta >= 0:
            raise DomainError(f"theta must be >= 0, got {self.theta}")
        for name in ("fatigue_gamma", "fatigue_delta"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    @property
    def lam_alpha(self) -> float:
        return self.lam * self.alpha


@dataclass(frozen=True)
class LmoProfile:
    """A local model owner: unit data price, non-data cost and worker count."""

    id: int
    price: float
    fixed_cost: float = 0.0
    worker_count: int = 1

    def __post_init__(self):
        if not self.price > 0:
            raise DomainError(f"LMO {self.id}: price must be > 0, got {self.price}")
        if not self.fixed_cost >= 0:
            raise DomainError(f"LMO {self.id}: fixed_cost must be >= 0")
        if int(self.worker_count) != self.worker_count or self.worker_count < 1:
            raise DomainError(f"LMO {self.id}: worker_count must be an integer >= 1")


@dataclass(frozen=True)
class LmoOutcome:
    zeta: float
    budget: float
    utility: float


def accuracy_gain(z: float, params: SystemParams) -> float:
    """Model accuracy as a concave function of total data, ``alpha*ln(1+beta*z)``."""
    if z < 0:
        raise DomainError(f"total data must be >= 0, got {z}")
    return params.alpha * math.log1p(params.beta * z)


def tp_utility(tau: float, z: float, params: SystemParams) -> float:
    """Task publisher utility: revenue from accuracy minus the published budget."""
    if tau < 0:
        raise DomainError(f"budget must be >= 0, got {tau}")
    return params.lam * accuracy_gain(z, params) - tau


def lmo_budget(zeta: float, z_total: float, tau: float) -> float:
    """Share of ``tau`` proportional to this LMO's data contribution."""
    if z_total == 0:
        raise ZeroDivisionError("total data is zero; budget share undefined")
    if z_total < 0 or zeta < 0 or zeta > z_total:
        raise DomainError(f"need 0 <= zeta <= z_total, got zeta={zeta}, z_total={z_total}")
    return zeta / z_total * tau


def lmo_utility(zeta: float, tau: float, z_total: float, profile: LmoProfile) -> float:
    return lmo_budget(zeta, z_total, tau) - profile.price * zeta - profile.fixed_cost


def fatigue(d: float, params: SystemParams) -> float:
    """Sigmoid fatigue penalty for a cumulative contribution ``d``.

    ``epsilon / (1 + exp(-(gamma*(d - delta) - 0.5)))``, including the -0.5
    shift, so ``fatigue(delta) == epsilon * sigmoid(-0.5)``. The result lies
    strictly inside ``(0, epsilon)`` for moderate arguments.
    """
    if d < 0:
        raise DomainError(f"contribution must be >= 0, got {d}")
    x = params.fatigue_gamma * (d - params.fatigue_delta) - 0.5
    # stable logistic: avoid overflow of exp for large |x|
    if x >= 0:
        return params.fatigue_epsilon / (1.0 + math.exp(-x))
    e = math.exp(x)
    return params.fatigue_epsilon * e / (1.0 + e)


def base_reward(remaining: float, budget: float, params: SystemParams) -> float:
    """Participation bonus that grows as the LMO's budget is spent."""
    if not budget > 0:
        raise DomainError(f"budget must be > 0, got {budget}")
    if remaining < 0 or remaining > budget:
        raise DomainError(f"remaining must lie in [0, budget], got {remaining}")
    return params.theta * (1.0 - remaining / budget)


def worker_utility(d_i: float, d_sum: float, budget: float, remaining: float,
                   params: SystemParams) -> float:
    """Static worker utility using the full LMO budget as the divisible pool."""
    if d_i < 0 or d_sum < 0 or d_i > d_sum:
        raise DomainError(f"need 0 <= d_i <= d_sum, got d_i={d_i}, d_sum={d_sum}")
    if d_sum == 0:
        share = 0.0
    else:
        share = d_i / d_sum * budget
    return share + base_reward(remaining, budget, params) - fatigue(d_i, params)


def fatigue_array(d, params: SystemParams):
    """Elementwise :func:`fatigue` over an array of contributions."""
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise DomainError("contributions must be >= 0")
    x = params.fatigue_gamma * (d - params.fatigue_delta) - 0.5
    e = np.exp(-np.abs(x))
    return params.fatigue_epsilon * np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
