"""Closed-form Stackelberg equilibrium between the task publisher and LMOs.

The publisher (leader) announces a total budget ``tau``; LMOs (followers)
play a Nash game over their data contributions ``zeta_m`` and are paid a
share of ``tau`` proportional to their data. All quantities below are the
closed forms of that game plus finite-difference helpers to check them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import DomainError, LmoProfile, SystemParams, tp_utility


class MechanismUndefinedError(DomainError):
    """Fewer than two LMOs: the closed forms need competition to be defined."""


def _check_prices(prices: Sequence[float]) -> np.ndarray:
    p = np.asarray(prices, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise MechanismUndefinedError(f"need at least 2 LMOs, got {p.size}")
    if np.any(~(p > 0)):
        raise DomainError(f"prices must be > 0, got {p.tolist()}")
    return p


def optimal_total_data(tau: float, prices: Sequence[float]) -> float:
    """Equilibrium total data ``(M-1)*tau / sum(P)``."""
    p = _check_prices(prices)
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    return float((p.size - 1) * tau / p.sum())


def best_response_zeta(z_total: float, price: float, tau: float) -> float:
    """Follower first-order condition solved for its own contribution.

    May be negative; callers treat ``<= 0`` as the LMO leaving the game.
    """
    if not (z_total > 0 and tau > 0):
        raise DomainError("z_total and tau must be > 0")
    return z_total - price * z_total**2 / tau


def optimal_zeta(tau: float, prices: Sequence[float], m: int) -> float:
    """Equilibrium contribution of LMO ``m`` (0-based index into ``prices``)."""
    p = _check_prices(prices)
    s = p.sum()
    big_m = p.size
    return float((big_m - 1) * tau / s * (1.0 - (big_m - 1) * p[m] / s))


def optimal_zeta_given_tau(tau: float, price: float, params: SystemParams) -> float:
    """Contribution expressed through ``tau`` alone.

    Agrees with :func:`optimal_zeta` only when ``tau`` is the publisher's
    optimal budget.
    """
    k = (params.lam_alpha - tau) * params.beta
    if not k > 0:
        raise DomainError(f"(lam*alpha - tau)*beta must be > 0, got {k}")
    return tau * (k - price) / k**2


def optimal_total_data_given_tau(tau: float, params: SystemParams) -> float:
    k = (params.lam_alpha - tau) * params.beta
    if not k > 0:
        raise DomainError(f"(lam*alpha - tau)*beta must be > 0, got {k}")
    return tau / k


def optimal_tau(prices: Sequence[float], params: SystemParams) -> float:
    """Publisher's optimal budget; a non-positive value means the game ends."""
    p = _check_prices(prices)
    return float(params.lam_alpha - p.sum() / (params.beta * (p.size - 1)))


def optimal_budget(tau: float, price: float, params: SystemParams) -> float:
    k = (params.lam_alpha - tau) * params.beta
    if not k > 0:
        raise DomainError(f"(lam*alpha - tau)*beta must be > 0, got {k}")
    return (1.0 - price / k) * tau


def price_feasible(price: float, tau: float, params: SystemParams) -> bool:
    """True iff ``0 < price < (lam*alpha - tau)*beta``."""
    return 0 < price < (params.lam_alpha - tau) * params.beta


def is_eliminated(prices: Sequence[float], m: int) -> bool:
    """Sign of the equilibrium contribution: ``(M-1)*P_m >= sum(P)``."""
    p = np.asarray(prices, dtype=float)
    return bool((p.size - 1) * p[m] >= p.sum())


@dataclass
class LmoEquilibrium:
    id: int
    zeta_star: float
    budget: float
    predicted_utility: float
    feasible: bool


@dataclass
class EquilibriumSolution:
    tau_star: float
    z_star: float
    per_lmo: list[LmoEquilibrium] = field(default_factory=list)
    terminated: bool = False

    @property
    def feasible(self) -> bool:
        return not self.terminated and self.tau_star > 0

    @property
    def zetas(self) -> np.ndarray:
        return np.array([e.zeta_star for e in self.per_lmo])

    @property
    def budgets(self) -> np.ndarray:
        return np.array([e.budget for e in self.per_lmo])


def solve_equilibrium(profiles: Sequence[LmoProfile], params: SystemParams) -> EquilibriumSolution:
    """Evaluate the equilibrium system once; no elimination rounds.

    LMOs whose price falls outside the feasible range still get their
    (non-positive) contribution reported, with ``feasible=False``. Their
    budget is computed from the same closed form and may be negative.
    """
    prices = [pr.price for pr in profiles]
    tau = optimal_tau(prices, params)
    if tau <= 0:
        return EquilibriumSolution(tau_star=tau, z_star=0.0, terminated=True)
    z_star = optimal_total_data(tau, prices)
    per_lmo = []
    for m, pr in enumerate(profiles):
        zeta = optimal_zeta(tau, prices, m)
        budget = optimal_budget(tau, pr.price, params)
        utility = budget - pr.price * zeta - pr.fixed_cost
        per_lmo.append(LmoEquilibrium(pr.id, zeta, budget, utility,
                                      price_feasible(pr.price, tau, params)))
    return EquilibriumSolution(tau_star=tau, z_star=z_star, per_lmo=per_lmo)


def tp_utility_of_tau(tau: float, prices: Sequence[float], params: SystemParams) -> float:
    """Publisher utility when followers answer ``tau`` with their equilibrium."""
    return tp_utility(tau, optimal_total_data(tau, prices), params)


def follower_utility(zeta: float, others: float, tau: float, profile: LmoProfile) -> float:
    """LMO utility as a function of its own contribution, others held fixed."""
    total = zeta + others
    share = 0.0 if total == 0 else zeta / total * tau
    return share - profile.price * zeta - profile.fixed_cost


@dataclass
class FirstOrderReport:
    follower_gradients: list[float]
    tp_gradient: float
    follower_curvatures: list[float]
    tp_curvature: float

    @property
    def max_deviation(self) -> float:
        return max([abs(g) for g in self.follower_gradients] + [abs(self.tp_gradient)])


def verify_first_order(solution: EquilibriumSolution, profiles: Sequence[LmoProfile],
                       params: SystemParams) -> FirstOrderReport:
    """Central finite differences of each utility around the equilibrium.

    Followers are perturbed one at a time with the others fixed; the
    publisher's budget is perturbed with followers re-solving their
    equilibrium.
    """
    if not solution.feasible:
        raise DomainError("first-order check needs a feasible (non-terminated) solution")
    tau = solution.tau_star
    prices = [p.price for p in profiles]
    grads, curvs = [], []
    for eq, pr in zip(solution.per_lmo, profiles):
        others = solution.z_star - eq.zeta_star
        h = 1e-6 * max(1.0, abs(eq.zeta_star))
        up = follower_utility(eq.zeta_star + h, others, tau, pr)
        mid = follower_utility(eq.zeta_star, others, tau, pr)
        down = follower_utility(eq.zeta_star - h, others, tau, pr)
        grads.append((up - down) / (2 * h))
        h2 = 1e-4 * max(1.0, abs(eq.zeta_star))
        curvs.append((follower_utility(eq.zeta_star + h2, others, tau, pr) - 2 * mid
                       + follower_utility(eq.zeta_star - h2, others, tau, pr)) / h2**2)
    h = 1e-6 * max(1.0, tau)
    tp_grad = (tp_utility_of_tau(tau + h, prices, params)
               - tp_utility_of_tau(tau - h, prices, params)) / (2 * h)
    h2 = 1e-4 * max(1.0, tau)
    tp_curv = (tp_utility_of_tau(tau + h2, prices, params) - 2 * tp_utility_of_tau(tau, prices, params)
               + tp_utility_of_tau(tau - h2, prices, params)) / h2**2
    return FirstOrderReport(grads, tp_grad, curvs, tp_curv)


def nash_deviation_gain(solution: EquilibriumSolution, profiles: Sequence[LmoProfile],
                        n_grid: int = 1000) -> np.ndarray:
    """Best unilateral gain per LMO over ``zeta`` in ``[0, 2*zeta_star]``.

    Non-positive entries (up to rounding) mean no profitable deviation.
    """
    gains = []
    tau = solution.tau_star
    for eq, pr in zip(solution.per_lmo, profiles):
        others = solution.z_star - eq.zeta_star
        grid = np.linspace(0.0, 2 * eq.zeta_star, n_grid)
        total = grid + others
        share = np.divide(grid, total, out=np.zeros_like(grid), where=total > 0) * tau
        utils = share - pr.price * grid - pr.fixed_cost
        gains.append(utils.max() - follower_utility(eq.zeta_star, others, tau, pr))
    return np.array(gains)

