"""Optimal budget search: bisect an LMO's actual budget until its workers
deliver the equilibrium data amount.

A *response* is any callable ``budget -> (total_data, total_paid)``. Two are
provided: :class:`LinearResponse`, a deterministic test double, and
:class:`PolicyResponse`, which averages seeded episodes of trained workers.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

from .env import EnvConfig
from .marl import evaluate
from .model import DomainError

TRACE_COLUMNS = ("bisection_iter", "b_mid", "total_data", "total_paid")
CAPACITY_DIAGNOSTIC = "target exceeds worker capacity"

Response = Callable[[float], "tuple[float, float]"]


@dataclass
class LinearResponse:
    """Workers deliver ``rate`` data per unit of budget, up to ``capacity``.

    Payment is the budget actually needed for the delivered data, so the
    realised unit price is always ``1/rate``.
    """

    rate: float
    capacity: Optional[float] = None

    def __call__(self, budget: float) -> tuple[float, float]:
        data = self.rate * budget
        if self.capacity is not None and data > self.capacity:
            data = self.capacity
        return data, data / self.rate

    @property
    def max_data(self) -> Optional[float]:
        return self.capacity


@dataclass
class PolicyResponse:
    """Mean outcome of ``episodes`` seeded evaluation episodes at a given budget."""

    policy: object
    env_template: EnvConfig
    episodes: int = 16
    cost: str = "disbursed"
    parallelism: int = 1

    def __call__(self, budget: float) -> tuple[float, float]:
        res = evaluate(self.policy, self.env_template.with_budget(budget), self.episodes,
                       cost=self.cost, parallelism=self.parallelism)
        return res.mean_total_data, res.mean_total_paid

    @property
    def max_data(self) -> float:
        return self.env_template.worker_count * self.env_template.capacity


@dataclass
class ObsaResult:
    budget_star: float
    total_paid: float
    total_data: float
    iterations: int
    converged: bool
    tolerance: float
    diagnostic: str = ""
    trace: list[tuple[int, float, float, float]] = field(default_factory=list)


def obsa(tau: float, zeta_target: float, response: Response, tolerance: Optional[float] = None,
         relative_tolerance: float = 0.05, max_bisections: int = 40) -> ObsaResult:
    """Bisect the budget on ``[0, tau]`` until ``|total_data - zeta_target| < tolerance``.

    ``tolerance`` is absolute; when omitted it is ``relative_tolerance * zeta_target``.
    Without convergence after ``max_bisections`` the midpoint whose data came
    closest to the target is returned with ``converged=False``.
    """
    if not tau > 0:
        raise DomainError(f"tau must be > 0, got {tau}")
    if not zeta_target > 0:
        raise DomainError(f"zeta_target must be > 0, got {zeta_target}")
    tol = tolerance if tolerance is not None else relative_tolerance * zeta_target
    if not tol > 0:
        raise DomainError("tolerance must be > 0")

    max_data = getattr(response, "max_data", None)
    if max_data is not None and zeta_target > max_data:
        return ObsaResult(0.0, 0.0, 0.0, 0, False, tol, CAPACITY_DIAGNOSTIC)

    lo, hi = 0.0, tau
    best = None
    trace = []
    for k in range(1, max_bisections + 1):
        mid = (lo + hi) / 2
        data, paid = response(mid)
        trace.append((k, mid, data, paid))
        if best is None or abs(data - zeta_target) < abs(best[2] - zeta_target):
            best = (k, mid, data, paid)
        if abs(data - zeta_target) < tol:
            return ObsaResult(mid, paid, data, k, True, tol, "", trace)
        if data > zeta_target:
            hi = mid
        else:
            lo = mid
    _, mid, data, paid = best
    if all(t[2] < zeta_target for t in trace):
        diag = "target unreachable: realised data stayed below target for every budget up to tau"
    else:
        diag = f"no convergence within {max_bisections} bisections"
    return ObsaResult(mid, paid, data, max_bisections, False, tol, diag, trace)


def probe_monotonicity(response: Response, tau: float, low_fraction: float = 1e-3) -> bool:
    """Warn (and return False) when data at ``tau`` is below data near zero budget."""
    low, _ = response(low_fraction * tau)
    high, _ = response(tau)
    if high < low:
        warnings.warn(f"realised data is not increasing in budget: {low} at "
                      f"{low_fraction * tau} vs {high} at {tau}; bisection premise violated")
        return False
    return True


def write_obsa_trace(path, result: ObsaResult, header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k, mid, data, paid in result.trace:
            w.writerow([k, repr(float(mid)), repr(float(data)), repr(float(paid))])
