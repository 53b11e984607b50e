import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedincentive.model import (DomainError, LmoProfile, SystemParams, accuracy_gain, base_reward,
                                fatigue, fatigue_array, lmo_budget, lmo_utility, tp_utility,
                                worker_utility)

P = SystemParams()  # lam=1, alpha=10, beta=1

# frozen with mpmath at 30 digits
G_OF_4 = 16.0943791243410037
G_OF_1_BETA2_ALPHA2 = 1.38629436111989062
FATIGUE_AT_DELTA = 0.0377540668798145456
FATIGUE_AT_0 = 0.0989013057369406875
FATIGUE_AT_2 = 1.85539101836833137e-8


class TestParams:
    def test_defaults(self):
        assert (P.lam, P.alpha, P.beta) == (1.0, 10.0, 1.0)
        assert P.phi == -0.05
        assert (P.fatigue_epsilon, P.fatigue_gamma, P.fatigue_delta) == (0.1, -10.0, 0.5)

    @pytest.mark.parametrize("kw", [{"lam": 0}, {"alpha": -1}, {"beta": 0}, {"theta": -0.1},
                                    {"fatigue_epsilon": 0}])
    def test_rejects_nonpositive(self, kw):
        with pytest.raises(DomainError):
            SystemParams(**kw)

    def test_profile_validation(self):
        with pytest.raises(DomainError):
            LmoProfile(1, price=0.0)
        with pytest.raises(DomainError):
            LmoProfile(1, price=1.0, fixed_cost=-1)


class TestAccuracy:
    def test_frozen_values(self):
        assert accuracy_gain(0.0, P) == 0.0
        assert accuracy_gain(4.0, P) == pytest.approx(G_OF_4, abs=1e-12)
        assert accuracy_gain(1.0, SystemParams(alpha=2, beta=1)) == pytest.approx(G_OF_1_BETA2_ALPHA2, abs=1e-12)
        assert tp_utility(8.0, 4.0, P) == pytest.approx(G_OF_4 - 8.0, abs=1e-12)

    def test_negative_data_rejected(self):
        with pytest.raises(DomainError):
            accuracy_gain(-1e-9, P)
        with pytest.raises(DomainError):
            tp_utility(-1.0, 1.0, P)

    @given(st.floats(0, 1e3), st.floats(0.1, 100), st.floats(0.01, 10))
    def test_increasing_and_concave(self, z, alpha, beta):
        params = SystemParams(alpha=alpha, beta=beta)
        h = 1e-3 * (1 + z)
        g0, g1, g2 = (accuracy_gain(z + k * h, params) for k in range(3))
        assert g1 > g0
        assert g2 - 2 * g1 + g0 <= 1e-9 * (1 + abs(g1))


class TestLmoBudget:
    def test_share(self):
        assert lmo_budget(2.0, 4.0, 8.0) == 4.0
        assert lmo_utility(2.0, 8.0, 4.0, LmoProfile(1, 1.0, 0.5)) == pytest.approx(1.5)

    def test_zero_total_raises(self):
        with pytest.raises(ZeroDivisionError):
            lmo_budget(0.0, 0.0, 8.0)

    @given(st.lists(st.floats(0.0, 100.0), min_size=2, max_size=10), st.floats(0.01, 1e3))
    def test_shares_sum_to_tau(self, zetas, tau):
        total = sum(zetas)
        if total <= 0:
            return
        s = sum(lmo_budget(z, total, tau) for z in zetas)
        assert s == pytest.approx(tau, rel=1e-9)


class TestFatigue:
    def test_frozen_values(self):
        assert fatigue(0.5, P) == pytest.approx(FATIGUE_AT_DELTA, rel=1e-12)
        assert fatigue(0.0, P) == pytest.approx(FATIGUE_AT_0, rel=1e-12)
        assert fatigue(2.0, P) == pytest.approx(FATIGUE_AT_2, rel=1e-9)

    def test_midpoint_includes_half_shift(self):
        sig = 1 / (1 + math.exp(0.5))
        assert fatigue(P.fatigue_delta, P) == pytest.approx(P.fatigue_epsilon * sig, rel=1e-14)

    def test_negative_rejected(self):
        with pytest.raises(DomainError):
            fatigue(-0.1, P)
        with pytest.raises(DomainError):
            fatigue_array([0.1, -0.1], P)

    @given(st.floats(0, 50))
    def test_bounds(self, d):
        f = fatigue(d, P)
        assert 0 <= f <= P.fatigue_epsilon

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=20))
    def test_array_matches_scalar(self, ds):
        np.testing.assert_allclose(fatigue_array(ds, P), [fatigue(d, P) for d in ds],
                                   rtol=1e-9, atol=1e-300)

    def test_extreme_arguments_finite(self):
        for gamma in (-1e4, 1e4):
            params = SystemParams(fatigue_gamma=gamma)
            for d in (0.0, 1e6):
                assert math.isfinite(fatigue(d, params))
                assert np.isfinite(fatigue_array([d], params)).all()


class TestWorkerUtility:
    def test_example(self):
        # d_i=1 of d_sum=4 with budget 8 gives share 2; base 0.1*(1-4/8)
        u = worker_utility(1.0, 4.0, 8.0, 4.0, P)
        assert u == pytest.approx(2.0 + 0.05 - fatigue(1.0, P), rel=1e-12)

    def test_base_reward_domain(self):
        assert base_reward(10.0, 10.0, P) == 0.0
        assert base_reward(0.0, 10.0, P) == pytest.approx(P.theta)
        with pytest.raises(DomainError):
            base_reward(11.0, 10.0, P)
        with pytest.raises(DomainError):
            base_reward(1.0, 0.0, P)

    def test_zero_pool_share(self):
        assert worker_utility(0.0, 0.0, 8.0, 8.0, P) == pytest.approx(-fatigue(0.0, P))
