import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vgcap.errors import Infeasible, InvalidSpec
from vgcap.lossmodels import (
    CoherentTlsModel,
    DoubleExpModel,
    LossBudget,
    LossChannel,
    TlsPowerModel,
    decay_population,
    model_from_json,
    model_to_json,
    q_coherent_tls,
    q_tls_budget,
    q_total,
    solve_unknown_tan_delta,
)

MODEL_98 = dict(q_low=1e5, q_high=5e5, n_c=46.0, beta=0.43, frequency=9.8e9, temperature=0.010)


class TestPowerModel:
    def test_saturation_limit(self):
        m = TlsPowerModel(**MODEL_98)
        assert q_total(1e15, m) == pytest.approx(m.q_high, rel=1e-4)
        assert q_total(1e20, m) == pytest.approx(m.q_high, rel=1e-7)

    def test_zero_photon_low_temperature(self):
        m = TlsPowerModel(q_low=2e5, q_high=8e5, n_c=10, beta=0.5, frequency=9.8e9,
                          temperature=1e-4)
        expected = 1.0 / (1.0 / 2e5 + 1.0 / 8e5)
        assert q_total(0.0, m) == pytest.approx(expected, rel=1e-9)

    def test_hand_evaluated_point(self):
        # independent scalar evaluation at n = n_c: thermal factor is 1 to
        # machine precision at 10 mK / 9.8 GHz, denominator 2^0.43
        m = TlsPowerModel(**MODEL_98)
        assert q_total(46.0, m) == pytest.approx(106127.619265, rel=1e-9)

    def test_thermal_factor_retained(self):
        cold = TlsPowerModel(**MODEL_98)
        warm = TlsPowerModel(**{**MODEL_98, "temperature": 0.5})
        assert warm.thermal_factor() < cold.thermal_factor()
        assert q_total(0.0, warm) > q_total(0.0, cold)

    @settings(max_examples=50, deadline=None)
    @given(n=st.floats(min_value=0, max_value=1e12))
    def test_monotone_and_bounded(self, n):
        m = TlsPowerModel(**MODEL_98)
        q1 = q_total(n, m)
        q2 = q_total(n * 2 + 1, m)
        assert q2 >= q1 - 1e-9
        assert q1 <= m.q_high * (1 + 1e-12)

    def test_beta_range_enforced(self):
        with pytest.raises(InvalidSpec):
            TlsPowerModel(**{**MODEL_98, "beta": 1.5})
        with pytest.raises(InvalidSpec):
            q_total(-1.0, TlsPowerModel(**MODEL_98))


class TestLossBudget:
    def test_single_channel(self):
        budget = LossBudget((LossChannel("ma", 0.03, 2.74e-4),))
        assert q_tls_budget(budget) == pytest.approx(121654.5, rel=1e-5)

    def test_lossless_marker(self):
        budget = LossBudget((LossChannel("ma", 0.03, 0.0), LossChannel("sa", 0.001, 0.0)))
        assert q_tls_budget(budget) is None

    def test_two_equal_channels_halve_q(self):
        one = LossBudget((LossChannel("a", 0.02, 1e-4),))
        two = LossBudget((LossChannel("a", 0.02, 1e-4), LossChannel("b", 0.02, 1e-4)))
        assert q_tls_budget(two) == pytest.approx(q_tls_budget(one) / 2.0, rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(perm=st.permutations(range(4)))
    def test_permutation_invariant(self, perm):
        chans = [LossChannel(f"c{i}", 0.01 * (i + 1), 1e-5 * (i + 1)) for i in range(4)]
        base = q_tls_budget(LossBudget(tuple(chans)))
        shuffled = q_tls_budget(LossBudget(tuple(chans[i] for i in perm)))
        assert shuffled == pytest.approx(base, rel=1e-12)

    def test_empty_budget_rejected(self):
        with pytest.raises(InvalidSpec):
            LossBudget(())


class TestSolveUnknown:
    def test_single_unknown_no_known(self):
        budget = LossBudget((LossChannel("x", 0.05, None),))
        assert solve_unknown_tan_delta(1e5, budget) == pytest.approx(1.0 / (1e5 * 0.05))

    def test_known_channels_subtracted(self):
        budget = LossBudget(
            (LossChannel("ma", 0.03, 1e-4), LossChannel("mssa", 0.02, None))
        )
        q = 1e5
        expected = (1.0 / q - 0.03 * 1e-4) / 0.02
        assert solve_unknown_tan_delta(q, budget) == pytest.approx(expected, rel=1e-12)

    def test_infeasible(self):
        budget = LossBudget(
            (LossChannel("ma", 0.5, 1e-3), LossChannel("x", 0.1, None))
        )
        with pytest.raises(Infeasible):
            solve_unknown_tan_delta(1e5, budget)


class TestDecay:
    def test_p0_is_one(self):
        m = DoubleExpModel(n_in=1.3, t1_in=1e-6, t1_res=5e-6)
        assert decay_population(0.0, m) == 1.0

    def test_no_initial_component_is_single_exponential(self):
        m = DoubleExpModel(n_in=0.0, t1_in=1e-6, t1_res=5e-6)
        t = np.linspace(0, 20e-6, 7)
        np.testing.assert_allclose(decay_population(t, m), np.exp(-t / 5e-6), rtol=1e-12)

    def test_frozen_table(self):
        # independently evaluated with 30-digit scalar arithmetic
        m = DoubleExpModel(n_in=0.5, t1_in=0.71e-6, t1_res=7.23e-6)
        expected = {
            0.5e-6: 0.724763016129,
            1.0e-6: 0.596872549557,
            2.0e-6: 0.473913856531,
            5.0e-6: 0.303878947765,
        }
        for t, p in expected.items():
            assert decay_population(t, m) == pytest.approx(p, rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(
        t=st.floats(min_value=0, max_value=1e-4),
        dt=st.floats(min_value=1e-9, max_value=1e-4),
    )
    def test_monotone_nonincreasing(self, t, dt):
        m = DoubleExpModel(n_in=2.0, t1_in=0.7e-6, t1_res=7e-6)
        assert decay_population(t + dt, m) <= decay_population(t, m) + 1e-15
        assert 0.0 < decay_population(t, m) <= 1.0

    def test_late_time_log_slope(self):
        m = DoubleExpModel(n_in=1.0, t1_in=0.5e-6, t1_res=8e-6)
        t = np.array([40e-6, 41e-6])
        p = decay_population(t, m)
        slope = (math.log(p[1]) - math.log(p[0])) / (t[1] - t[0])
        assert slope == pytest.approx(-1.0 / 8e-6, rel=0.01)


class TestCoherentTls:
    def test_zero_xi_field_independent(self):
        m = CoherentTlsModel(q0=7e4, xi=0.0)
        assert q_coherent_tls(1e3, m) == 7e4

    def test_table_row_at_22_v_per_m(self):
        m = CoherentTlsModel(q0=5.5e4, xi=3e-3, temperature=0.010)
        assert q_coherent_tls(22.0, m) == pytest.approx(665022.556, rel=1e-6)

    def test_large_field_linear(self):
        m = CoherentTlsModel(q0=5.5e4, xi=3e-3, temperature=0.010)
        e = 1e4
        linear = m.q0 * math.sqrt(m.xi / m.temperature) * e
        assert q_coherent_tls(e, m) == pytest.approx(linear, rel=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(e=st.floats(min_value=0, max_value=1e6))
    def test_monotone_and_floored(self, e):
        m = CoherentTlsModel(q0=5e4, xi=1e-3)
        assert q_coherent_tls(e, m) >= m.q0
        assert q_coherent_tls(e + 1.0, m) >= q_coherent_tls(e, m)


class TestJsonRoundTrip:
    @pytest.mark.parametrize(
        "model",
        [
            TlsPowerModel(**MODEL_98),
            DoubleExpModel(n_in=0.5, t1_in=0.71e-6, t1_res=7.23e-6),
            CoherentTlsModel(q0=8e4, xi=0.3e-3),
            LossBudget((LossChannel("ma", 0.03, 2.74e-4), LossChannel("x", 0.01, None))),
        ],
    )
    def test_round_trip(self, model):
        assert model_from_json(model_to_json(model)) == model
