import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedincentive.env import EnvConfig
from fedincentive.marl import ConstantPolicy
from fedincentive.model import DomainError
from fedincentive.obsa import (CAPACITY_DIAGNOSTIC, TRACE_COLUMNS, LinearResponse, PolicyResponse, obsa,
                               probe_monotonicity, write_obsa_trace)


class TestLinearStub:
    def test_example(self):
        res = obsa(16.0, 5.0, LinearResponse(1.0), tolerance=0.01)
        assert res.converged
        assert abs(res.budget_star - 5.0) < 0.01
        assert res.iterations <= math.ceil(math.log2(16 / 0.01))
        assert res.total_paid == pytest.approx(res.total_data)

    def test_midpoints_halve(self):
        res = obsa(16.0, 5.0, LinearResponse(1.0), tolerance=1e-6)
        mids = [t[1] for t in res.trace]
        assert mids[0] == 8.0
        steps = np.abs(np.diff(mids))
        np.testing.assert_allclose(steps, 16.0 / 2.0 ** np.arange(2, len(mids) + 1))

    @settings(max_examples=200)
    @given(st.floats(0.5, 2.0), st.floats(1.0, 100.0), st.floats(0.01, 0.99), st.floats(1e-3, 1.0))
    def test_dimensionally_consistent_bound(self, c, tau, frac, tol):
        # the data tolerance maps to a budget tolerance tol/c
        zeta = frac * c * tau
        res = obsa(tau, zeta, LinearResponse(c), tolerance=tol)
        assert res.converged
        assert abs(res.budget_star - zeta / c) < tol / c
        assert res.iterations <= max(1, math.ceil(math.log2(c * tau / tol)))

    def test_relative_default_tolerance(self):
        res = obsa(10.0, 4.0, LinearResponse(1.0))
        assert res.tolerance == pytest.approx(0.2)
        assert abs(res.total_data - 4.0) < 0.2


class TestFailures:
    def test_zero_target_rejected(self):
        with pytest.raises(DomainError):
            obsa(10.0, 0.0, LinearResponse(1.0))
        with pytest.raises(DomainError):
            obsa(0.0, 1.0, LinearResponse(1.0))

    def test_zero_data_not_converged(self):
        res = obsa(10.0, 1.0, lambda b: (0.0, 0.0), max_bisections=12)
        assert not res.converged
        assert "unreachable" in res.diagnostic
        assert res.iterations == 12

    def test_capacity_diagnostic(self):
        res = obsa(10.0, 5.0, LinearResponse(1.0, capacity=2.0))
        assert not res.converged and res.diagnostic == CAPACITY_DIAGNOSTIC

    def test_target_beyond_tau(self):
        res = obsa(4.0, 5.0, LinearResponse(1.0), tolerance=0.01, max_bisections=20)
        assert not res.converged
        assert res.budget_star == pytest.approx(4.0, abs=1e-4)

    def test_monotonicity_probe(self):
        assert probe_monotonicity(LinearResponse(1.0), 10.0)
        with pytest.warns(UserWarning, match="not increasing"):
            assert not probe_monotonicity(lambda b: (1.0 / (1.0 + b), 0.0), 10.0)


class TestPolicyResponse:
    def test_always_participate_budget_scales_payment(self):
        env = EnvConfig(worker_count=2, budget=1.0, contribution_std=0.0)
        resp = PolicyResponse(ConstantPolicy(2, 1.0), env, episodes=2)
        d1, p1 = resp(1.0)
        d2, p2 = resp(2.0)
        assert d1 == pytest.approx(d2)
        assert p2 == pytest.approx(2 * p1)
        assert resp.max_data == 2.0


class TestTrace:
    def test_csv(self, tmp_path):
        res = obsa(16.0, 5.0, LinearResponse(1.0), tolerance=0.01)
        path = tmp_path / "obsa.csv"
        write_obsa_trace(path, res, header="seed=0")
        lines = path.read_text().splitlines()
        rows = list(csv.reader(lines[1:]))
        assert tuple(rows[0]) == TRACE_COLUMNS
        assert len(rows) - 1 == res.iterations
        assert float(rows[1][1]) == 8.0
