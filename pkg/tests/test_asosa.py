import csv

import numpy as np
import pytest

from fedincentive.asosa import (COMPARISON_COLUMNS, TRACE_COLUMNS, asosa, asosa_record, play_round,
                                random_prices, run_fixed_pricing, run_random_pricing, write_asosa_trace,
                                write_comparison)
from fedincentive.model import LmoProfile, SystemParams
from fedincentive.obsa import LinearResponse
from fedincentive.stackelberg import optimal_tau, optimal_zeta

P = SystemParams()
FIG7 = SystemParams(lam=1.0, alpha=100.0, beta=0.1)


def lmos(prices, fixed=0.0):
    return [LmoProfile(i + 1, p, fixed) for i, p in enumerate(prices)]


def stubs(rates):
    return {i + 1: LinearResponse(r) for i, r in enumerate(rates)}


class TestRound:
    def test_price_update_is_realised_unit_cost(self):
        profiles = lmos([0.5, 0.5])
        rnd = play_round(1, profiles, {1: 0.5, 2: 0.5}, P, stubs([4.0, 5.0]), {"tolerance": 1e-4})
        assert rnd.status == "ok"
        np.testing.assert_allclose([rnd.new_prices[1], rnd.new_prices[2]], [0.25, 0.2], rtol=1e-12)
        tau = optimal_tau([0.5, 0.5], P)
        for r in rnd.records:
            assert r.zeta_theory == pytest.approx(optimal_zeta(tau, [0.5, 0.5], r.lmo - 1))
            assert abs(r.total_data - r.zeta_theory) < 1e-4
            assert r.lmo_utility == pytest.approx(r.budget_theory - r.total_paid)
        assert rnd.tp_utility == pytest.approx(P.lam * P.alpha * np.log1p(rnd.total_data) - tau)

    def test_elimination_restarts_round(self):
        prices = {1: 0.2, 2: 0.2, 3: 0.2, 4: 1.0}
        rnd = play_round(1, lmos(prices.values()), prices, P, stubs([5.0] * 4))
        assert rnd.eliminated == [4]
        assert rnd.active == [1, 2, 3]
        assert rnd.tau == pytest.approx(optimal_tau([0.2] * 3, P))
        elim = [r for r in rnd.records if r.status == "eliminated"]
        assert [r.lmo for r in elim] == [4] and elim[0].zeta_theory < 0

    def test_nonpositive_tau(self):
        rnd = play_round(1, lmos([10.0, 10.0]), {1: 10.0, 2: 10.0}, P, stubs([1.0, 1.0]))
        assert rnd.status == "tau_nonpositive"
        assert rnd.tau <= 0

    def test_capacity_failure_eliminates(self):
        responses = {1: LinearResponse(1.0), 2: LinearResponse(1.0), 3: LinearResponse(1.0, capacity=1e-3)}
        rnd = play_round(1, lmos([1.0, 1.0, 1.0]), {1: 1.0, 2: 1.0, 3: 1.0}, P, responses)
        assert rnd.eliminated == [3]
        assert [r.status for r in rnd.records if r.lmo == 3] == ["capacity"]


class TestLoop:
    def test_fixed_point_converges_immediately(self):
        # stub rate c means a realised price 1/c; start there
        trace = asosa(lmos([0.5, 0.25]), stubs([2.0, 4.0]), P, obsa_options={"tolerance": 1e-6})
        assert trace.termination == "converged"
        assert trace.iterations == 1

    def test_elimination_scenario(self):
        profiles = lmos([0.2, 0.2, 0.2, 1.0])
        trace = asosa(profiles, stubs([5.0] * 4), P)
        assert trace.rounds[0].eliminated == [4]
        assert trace.termination == "converged"
        assert trace.iterations <= 50
        assert trace.active_sets()[-1] == [1, 2, 3]

    def test_terminates_on_nonpositive_tau(self):
        trace = asosa(lmos([10.0, 10.0]), stubs([1.0, 1.0]), P)
        assert trace.termination == "tau_nonpositive"
        assert trace.iterations == 1 and trace.last_ok is None
        assert asosa_record(trace, 2).tp_utility == 0.0

    def test_price_trajectory_moves_to_realised(self):
        trace = asosa(lmos([1.0, 1.0, 1.0]), stubs([2.0, 2.5, 3.0]), FIG7)
        last = trace.rounds[-1]
        np.testing.assert_allclose(sorted(last.new_prices.values()), [1 / 3.0, 1 / 2.5, 1 / 2.0], rtol=1e-9)
        assert trace.termination == "converged"

    def test_repeatable(self):
        args = (lmos([0.3, 0.2, 0.25]), stubs([3.0, 4.0, 5.0]), P)
        a, b = asosa(*args), asosa(*args)
        assert [vars(r) for r in a.records] == [vars(r) for r in b.records]

    def test_missed_targets_reported(self):
        def flat(budget):
            return 3.0, 0.5 * budget  # data ignores the budget
        trace = asosa(lmos([0.5, 0.5]), {1: flat, 2: flat}, P,
                      obsa_options={"tolerance": 1e-9, "max_bisections": 8})
        assert {r.status for r in trace.records} == {"nonconverged"}
        assert any("missed the data target" in d for d in trace.diagnostics)

    def test_max_iterations_reported(self):
        trace = asosa(lmos([1.0, 1.0]), stubs([2.0, 3.0]), FIG7, max_iterations=1, conv_tolerance=1e-300)
        assert trace.termination == "max_iterations"
        assert trace.diagnostics


class TestBaselines:
    def test_fixed_equals_first_iteration(self):
        profiles = lmos([1.0, 1.0, 1.0])
        responses = stubs([2.0, 2.5, 3.0])
        fixed = run_fixed_pricing(profiles, 1.0, FIG7, responses)
        first = asosa(profiles, responses, FIG7, max_iterations=1).rounds[0]
        assert fixed.tp_utility == first.tp_utility
        assert fixed.total_data == first.total_data

    def test_fixed_terminated(self):
        rec = run_fixed_pricing(lmos([1.0] * 4), 10.0, P, stubs([1.0] * 4))
        assert rec.status == "tau_nonpositive"
        assert (rec.tp_utility, rec.total_data) == (0.0, 0.0)

    def test_random_prices(self):
        a = random_prices(5, 10.0, seed=3)
        np.testing.assert_array_equal(a, random_prices(5, 10.0, seed=3))
        assert np.all((a > 0) & (a < 10))
        assert not np.array_equal(a, random_prices(5, 10.0, seed=4))
        with pytest.raises(ValueError):
            random_prices(3, 0.0, 0)

    def test_random_record(self):
        profiles = lmos([1.0] * 4)
        rec = run_random_pricing(profiles, 10.0, 7, FIG7, stubs([1.0] * 4))
        np.testing.assert_allclose(rec.prices, random_prices(4, 10.0, 7))


class TestWriters:
    def test_trace_csv(self, tmp_path):
        trace = asosa(lmos([0.2, 0.2, 0.2, 1.0]), stubs([5.0] * 4), P)
        path = tmp_path / "t.csv"
        write_asosa_trace(path, trace, header="seed=0")
        rows = list(csv.reader(path.read_text().splitlines()[1:]))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert rows[1][1] == "4" and rows[1][-1] == "eliminated"
        assert len(rows) - 1 == len(trace.records)

    def test_terminated_row(self, tmp_path):
        trace = asosa(lmos([10.0, 10.0]), stubs([1.0, 1.0]), P)
        path = tmp_path / "t.csv"
        write_asosa_trace(path, trace)
        rows = list(csv.reader(path.read_text().splitlines()))
        assert rows[-1][1] == "" and rows[-1][-1] == "tau_nonpositive"

    def test_comparison_csv(self, tmp_path):
        rec = run_fixed_pricing(lmos([1.0] * 3), 1.0, FIG7, stubs([2.0] * 3))
        path = tmp_path / "c.csv"
        write_comparison(path, [rec])
        rows = list(csv.reader(path.read_text().splitlines()))
        assert tuple(rows[0]) == COMPARISON_COLUMNS
        assert rows[1][0] == "fixed" and float(rows[1][3]) == rec.tp_utility
