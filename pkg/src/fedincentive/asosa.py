"""Adaptive outer loop coupling the Stackelberg layer to realised worker behaviour.

Each iteration: LMOs report unit prices, the publisher sets its optimal
budget, LMOs with a non-positive equilibrium contribution leave, every
remaining LMO bisects for the budget that makes its workers deliver the
equilibrium data, and the unit price is reset to what was actually paid per
unit of data. The loop stops once no LMO would change its strategy.

Also hosts the fixed- and random-pricing baselines, which are a single
round of the same procedure with externally chosen prices.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .model import LmoProfile, SystemParams, tp_utility
from .obsa import CAPACITY_DIAGNOSTIC, Response, obsa
from .stackelberg import is_eliminated, optimal_budget, optimal_tau, optimal_zeta, optimal_zeta_given_tau

TRACE_COLUMNS = ("iteration", "lmo", "price", "zeta_theory", "budget_theory", "budget_actual",
                 "total_paid", "total_data", "lmo_utility", "tau", "tp_utility", "status")
COMPARISON_COLUMNS = ("scheme", "M", "tau", "tp_utility", "total_data")

NAN = float("nan")


@dataclass
class LmoRecord:
    iteration: int
    lmo: int
    price: float
    zeta_theory: float
    budget_theory: float = NAN
    budget_actual: float = NAN
    total_paid: float = NAN
    total_data: float = NAN
    lmo_utility: float = NAN
    tau: float = NAN
    tp_utility: float = NAN
    status: str = "active"
    diagnostic: str = ""


@dataclass
class RoundResult:
    iteration: int
    tau: float
    status: str  # "ok" | "tau_nonpositive" | "mechanism_undefined"
    records: list[LmoRecord] = field(default_factory=list)
    zetas: dict[int, float] = field(default_factory=dict)
    new_prices: dict[int, float] = field(default_factory=dict)
    eliminated: list[int] = field(default_factory=list)
    total_data: float = 0.0
    tp_utility: float = 0.0

    @property
    def active(self) -> list[int]:
        return list(self.zetas)


@dataclass
class AsosaTrace:
    rounds: list[RoundResult] = field(default_factory=list)
    termination: str = "max_iterations"  # | "converged" | "tau_nonpositive"
    diagnostics: list[str] = field(default_factory=list)

    @property
    def records(self) -> list[LmoRecord]:
        return [r for rnd in self.rounds for r in rnd.records]

    @property
    def iterations(self) -> int:
        return len(self.rounds)

    @property
    def last_ok(self) -> Optional[RoundResult]:
        ok = [r for r in self.rounds if r.status == "ok"]
        return ok[-1] if ok else None

    def active_sets(self) -> list[list[int]]:
        return [r.active for r in self.rounds if r.status == "ok"]


def play_round(iteration: int, profiles: Sequence[LmoProfile], prices: Mapping[int, float],
               params: SystemParams, responses: Mapping[int, Response],
               obsa_options: Optional[dict] = None,
               retrain: Optional[Callable[[LmoProfile, float], Response]] = None) -> RoundResult:
    """One pass of the loop body with the given prices.

    Eliminations restart the closed-form computation with the reduced set
    inside the same iteration, so every reported (tau, zeta, B) refers to
    the final membership of the round.
    """
    opts = dict(obsa_options or {})
    active = list(profiles)
    records: list[LmoRecord] = []
    eliminated: list[int] = []
    while True:
        if len(active) < 2:
            return RoundResult(iteration, NAN, "mechanism_undefined", records, eliminated=eliminated)
        p = [prices[pr.id] for pr in active]
        tau = optimal_tau(p, params)
        if tau <= 0:
            return RoundResult(iteration, tau, "tau_nonpositive", records, eliminated=eliminated)

        leaving = [m for m in range(len(active)) if is_eliminated(p, m)]
        if leaving:
            for m in leaving:
                pr = active[m]
                records.append(LmoRecord(iteration, pr.id, p[m], optimal_zeta_given_tau(tau, p[m], params),
                                         tau=tau, status="eliminated",
                                         diagnostic="non-positive equilibrium strategy"))
                eliminated.append(pr.id)
            active = [pr for m, pr in enumerate(active) if m not in leaving]
            continue

        outcomes = {}
        failed = []
        for m, pr in enumerate(active):
            zeta = optimal_zeta_given_tau(tau, p[m], params)
            budget = optimal_budget(tau, p[m], params)
            response = retrain(pr, budget) if retrain is not None else responses[pr.id]
            res = obsa(tau, zeta, response, **opts)
            if res.diagnostic == CAPACITY_DIAGNOSTIC or res.total_data <= 0:
                status = "capacity" if res.diagnostic == CAPACITY_DIAGNOSTIC else "no_data"
                records.append(LmoRecord(iteration, pr.id, p[m], zeta, budget, res.budget_star,
                                         res.total_paid, res.total_data, tau=tau, status=status,
                                         diagnostic=res.diagnostic or "workers delivered no data"))
                failed.append(m)
            else:
                outcomes[pr.id] = (m, zeta, budget, res)
        if failed:
            eliminated.extend(active[m].id for m in failed)
            active = [pr for m, pr in enumerate(active) if m not in failed]
            continue
        break

    total_data = sum(o[3].total_data for o in outcomes.values())
    u_tp = tp_utility(tau, total_data, params)
    rnd = RoundResult(iteration, tau, "ok", records, eliminated=eliminated,
                      total_data=total_data, tp_utility=u_tp)
    for pr in active:
        m, zeta, budget, res = outcomes[pr.id]
        rnd.zetas[pr.id] = zeta
        rnd.new_prices[pr.id] = res.total_paid / res.total_data
        records.append(LmoRecord(iteration, pr.id, p[m], zeta, budget, res.budget_star, res.total_paid,
                                 res.total_data, budget - res.total_paid - pr.fixed_cost, tau, u_tp,
                                 "active" if res.converged else "nonconverged", res.diagnostic))
    for r in records:
        r.tp_utility = u_tp
    return rnd


def _strategy_shift(zetas: Mapping[int, float], prices: Mapping[int, float],
                    params: SystemParams) -> float:
    """Largest change in equilibrium strategy the updated prices would cause.

    Infinite when the next round would terminate or eliminate someone.
    """
    ids = list(zetas)
    p = [prices[i] for i in ids]
    tau = optimal_tau(p, params)
    if tau <= 0 or any(is_eliminated(p, m) for m in range(len(ids))):
        return math.inf
    return max(abs(optimal_zeta(tau, p, m) - zetas[i]) for m, i in enumerate(ids))


def asosa(profiles: Sequence[LmoProfile], responses: Mapping[int, Response], params: SystemParams,
          max_iterations: int = 50, conv_tolerance: Optional[float] = None,
          obsa_options: Optional[dict] = None,
          retrain: Optional[Callable[[LmoProfile, float], Response]] = None) -> AsosaTrace:
    """Iterate price updates until strategies stop moving.

    Convergence: after the price update of iteration ``k`` the closed-form
    strategies for the same membership move by less than ``conv_tolerance``
    (default ``params.conv_tolerance`` or ``1e-3`` of the total data).
    """
    by_id = {pr.id: pr for pr in profiles}
    prices = {pr.id: pr.price for pr in profiles}
    active = [pr.id for pr in profiles]
    trace = AsosaTrace()
    for k in range(1, max_iterations + 1):
        rnd = play_round(k, [by_id[i] for i in active], prices, params, responses, obsa_options, retrain)
        trace.rounds.append(rnd)
        if rnd.status != "ok":
            trace.termination = "tau_nonpositive"
            if rnd.status == "mechanism_undefined":
                trace.diagnostics.append(f"iteration {k}: fewer than two LMOs remain; mechanism undefined")
            else:
                trace.diagnostics.append(f"iteration {k}: publisher budget {rnd.tau!r} is non-positive")
            return trace
        active = rnd.active
        prices.update(rnd.new_prices)
        tol = conv_tolerance or params.conv_tolerance or 1e-3 * sum(rnd.zetas.values())
        if _strategy_shift(rnd.zetas, prices, params) < tol:
            trace.termination = "converged"
            missed = [r.lmo for r in rnd.records if r.status == "nonconverged"]
            if missed:
                trace.diagnostics.append(f"iteration {k}: prices settled but budget search missed the data "
                                         f"target for LMOs {missed}")
            return trace
    trace.diagnostics.append(f"strategies still moving after {max_iterations} iterations")
    return trace


@dataclass
class ComparisonRecord:
    scheme: str
    M: int
    tau: float
    tp_utility: float
    total_data: float
    status: str = "ok"
    prices: list[float] = field(default_factory=list)


def _round_record(scheme: str, m: int, rnd: RoundResult, prices) -> ComparisonRecord:
    if rnd.status != "ok":
        return ComparisonRecord(scheme, m, rnd.tau, 0.0, 0.0, rnd.status, list(prices))
    return ComparisonRecord(scheme, m, rnd.tau, rnd.tp_utility, rnd.total_data, "ok", list(prices))


def run_fixed_pricing(profiles: Sequence[LmoProfile], price: float, params: SystemParams,
                      responses: Mapping[int, Response], obsa_options: Optional[dict] = None,
                      scheme: str = "fixed") -> ComparisonRecord:
    """Single round with every LMO charging ``price``; no price iteration.

    A non-positive publisher budget yields a terminated record with zero
    utility and data.
    """
    prices = {pr.id: price for pr in profiles}
    rnd = play_round(1, profiles, prices, params, responses, obsa_options)
    return _round_record(scheme, len(profiles), rnd, prices.values())


def random_prices(n: int, hi: float, seed: int) -> np.ndarray:
    """``n`` prices uniform on the open interval ``(0, hi)``."""
    if not hi > 0:
        raise ValueError("hi must be > 0")
    rng = np.random.default_rng(seed)
    return rng.uniform(np.nextafter(0.0, 1.0), hi, size=n)


def run_random_pricing(profiles: Sequence[LmoProfile], hi: float, seed: int, params: SystemParams,
                       responses: Mapping[int, Response], obsa_options: Optional[dict] = None
                       ) -> ComparisonRecord:
    p = random_prices(len(profiles), hi, seed)
    prices = {pr.id: float(v) for pr, v in zip(profiles, p)}
    rnd = play_round(1, profiles, prices, params, responses, obsa_options)
    return _round_record("random", len(profiles), rnd, prices.values())


def asosa_record(trace: AsosaTrace, m: int) -> ComparisonRecord:
    """Outcome of the last completed iteration (zero utility if none completed)."""
    rnd = trace.last_ok
    if rnd is None:
        return ComparisonRecord("asosa", m, trace.rounds[0].tau if trace.rounds else NAN, 0.0, 0.0,
                                trace.termination)
    return ComparisonRecord("asosa", m, rnd.tau, rnd.tp_utility, rnd.total_data, trace.termination)


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_asosa_trace(path, trace: AsosaTrace, header: str = "") -> None:
    """Per-LMO rows; a terminated iteration adds one row with an empty ``lmo``."""
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for rnd in trace.rounds:
            for r in rnd.records:
                w.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
            if rnd.status != "ok":
                w.writerow([rnd.iteration, "", "", "", "", "", "", "", "", _fmt(float(rnd.tau)),
                            "", rnd.status])


def write_comparison(path, records: Sequence[ComparisonRecord], header: str = "") -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(f"# {header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        for r in records:
            w.writerow([r.scheme, r.M, _fmt(float(r.tau)), _fmt(float(r.tp_utility)),
                        _fmt(float(r.total_data))])
