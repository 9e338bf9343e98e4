import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sjfa import aging
from sjfa.aging import AgingRule, PlanePoint
from sjfa.errors import LipschitzViolation, NonFiniteTrajectory

LINEAR = AgingRule.linear(1.0)
EXPO = AgingRule.exponential(0.1)


def make_custom(validate=True):
    # decay with a bounded wobble; Lipschitz constant of the g-derivative is 0.2
    return AgingRule.custom(
        rhs=lambda g, s: -0.5 - 0.2 * np.sin(np.asarray(g, dtype=float)),
        lipschitz=0.2,
        probe_box=((-10.0, 10.0), (0.0, 10.0)),
        validate=validate,
    )


class TestTrajectory:
    def test_linear_value(self):
        assert aging.trajectory(LINEAR, 2.0, 1.0, 3.0) == pytest.approx(0.0, abs=1e-15)

    def test_exponential_value(self):
        got = aging.trajectory(EXPO, 1.0, 0.0, 10.0)
        assert got == pytest.approx(math.exp(-1.0), abs=1e-12)

    @given(x=st.floats(-5, 5), t=st.floats(0, 8))
    def test_anchor_identity(self, x, t):
        for rule in (LINEAR, EXPO):
            assert aging.trajectory(rule, x, t, t) == x

    def test_custom_matches_analytic_exponential(self):
        # numerically integrated proportional decay vs its exact solution
        rule = AgingRule.custom(lambda g, s: -0.1 * np.asarray(g, dtype=float),
                                lipschitz=0.1, probe_box=((-5, 5), (0, 10)))
        got = aging.trajectory(rule, 1.0, 0.0, 10.0)
        assert got == pytest.approx(math.exp(-1.0), abs=1e-10)

    def test_backward_evaluation(self):
        rule = make_custom()
        fwd = aging.trajectory(rule, 2.0, 1.0, 4.0)
        back = aging.trajectory(rule, fwd, 4.0, 1.0)
        assert back == pytest.approx(2.0, abs=1e-8)

    def test_non_finite_raises(self):
        bad = AgingRule.custom(
            rhs=lambda g, s: np.where(np.asarray(g) < -1.0, np.nan, -10.0),
            lipschitz=0.0, validate=False)
        with pytest.raises(NonFiniteTrajectory):
            aging.trajectory(bad, 0.0, 0.0, 5.0)

    def test_negative_times_rejected(self):
        with pytest.raises(ValueError):
            aging.trajectory(LINEAR, 1.0, -0.5, 1.0)


class TestPrimeTransform:
    def test_linear_to_prime(self):
        p = aging.to_prime(LINEAR, PlanePoint(0.5, 2.0))
        assert (p.x, p.t) == (2.5, 2.0)

    def test_exponential_to_prime(self):
        p = aging.to_prime(EXPO, PlanePoint(1.0, 10.0))
        assert p.x == pytest.approx(math.e, rel=1e-12)
        assert p.t == 10.0

    def test_time_zero_fixed_point(self):
        for rule in (LINEAR, EXPO, make_custom()):
            p = aging.to_prime(rule, PlanePoint(1.3, 0.0))
            assert p.x == pytest.approx(1.3, abs=1e-12)

    def test_linear_from_prime(self):
        p = aging.from_prime(LINEAR, PlanePoint(2.5, 2.0))
        assert (p.x, p.t) == (0.5, 2.0)

    def test_exponential_from_prime_at_zero(self):
        p = aging.from_prime(EXPO, PlanePoint(1.0, 0.0))
        assert (p.x, p.t) == (1.0, 0.0)

    def test_exponential_to_prime_backward_integration(self):
        # invert the analytic trajectory, then cross-check by integrating
        numeric = AgingRule.custom(lambda g, s: -0.1 * np.asarray(g, dtype=float),
                                   lipschitz=0.1, validate=False)
        got = aging.to_prime(numeric, PlanePoint(1.0, 10.0)).x
        assert got == pytest.approx(math.e, abs=1e-9)

    @given(x=st.floats(-3, 3), t=st.floats(0, 6))
    def test_round_trip_custom(self, x, t):
        rule = make_custom(validate=False)
        xp = aging.to_prime(rule, PlanePoint(x, t))
        back = aging.from_prime(rule, xp)
        assert back.x == pytest.approx(x, abs=1e-8)

    def test_prime_nonnegative_for_decreasing_rules(self):
        for rule in (LINEAR, EXPO):
            for x in (0.0, 0.3, 2.0):
                for t in (0.0, 1.0, 4.0):
                    assert aging.to_prime(rule, PlanePoint(x, t)).x >= x - 1e-12

    def test_plane_point_requires_nonnegative_time(self):
        with pytest.raises(ValueError):
            PlanePoint(1.0, -0.1)


class TestTrajectoryGeometry:
    def test_uniqueness_through_anchor(self):
        # evaluating via the prime anchor agrees with direct evaluation
        rule = make_custom()
        for (x, t, s) in [(1.0, 2.0, 3.5), (0.2, 0.7, 0.1), (-1.0, 3.0, 1.0)]:
            direct = aging.trajectory(rule, x, t, s)
            anchor = aging.to_prime(rule, PlanePoint(x, t)).x
            via = aging.trajectory(rule, anchor, 0.0, s)
            assert via == pytest.approx(direct, abs=1e-6)

    def test_analytic_anchor_agreement(self):
        for rule, tol in ((LINEAR, 1e-8), (EXPO, 1e-8)):
            for (x, t, s) in [(1.0, 2.0, 3.5), (0.5, 1.0, 0.2)]:
                direct = aging.trajectory(rule, x, t, s)
                via = aging.trajectory(rule, aging.to_prime_x(rule, x, t), 0.0, s)
                assert via == pytest.approx(direct, abs=tol)

    @given(x1=st.floats(-2, 2), gap=st.floats(1e-6, 2), t=st.floats(0, 4),
           s=st.floats(0, 4))
    def test_non_crossing(self, x1, gap, t, s):
        x2 = x1 + gap
        for rule in (LINEAR, EXPO):
            g1 = aging.trajectory(rule, x1, t, s)
            g2 = aging.trajectory(rule, x2, t, s)
            assert g1 < g2

    def test_monotone_decrease(self):
        ss = np.linspace(0.0, 5.0, 41)
        for rule in (LINEAR, EXPO, make_custom()):
            vals = [aging.trajectory(rule, 2.0, 0.0, float(s)) for s in ss]
            assert all(b < a for a, b in zip(vals, vals[1:]))


class TestSeparationBound:
    def test_linear_exact(self):
        assert aging.separation_bound(LINEAR, 0.0, 1.0, 0.0, 5.0)

    def test_exponential(self):
        assert aging.separation_bound(EXPO, 0.5, 2.0, 1.0, 6.0)

    def test_custom_probes(self, rng):
        rule = make_custom()
        for _ in range(200):
            x1, x2 = rng.uniform(-3, 3, 2)
            t, s = rng.uniform(0, 5, 2)
            assert aging.separation_bound(rule, x1, x2, float(t), float(s))


class TestValidator:
    def test_valid_rule_accepted(self):
        make_custom(validate=True)

    def test_understated_lipschitz_rejected(self):
        with pytest.raises(LipschitzViolation):
            AgingRule.custom(rhs=lambda g, s: -2.0 * np.asarray(g, dtype=float),
                             lipschitz=1.0, probe_box=((-5.0, 5.0), (0.0, 10.0)))

    def test_tolerance_accessor(self):
        assert LINEAR.tolerance(10.0) <= 1e-12
        c = make_custom(validate=False)
        assert c.tolerance(1.0) < c.tolerance(20.0)
        assert c.tolerance(1.0) > 0


class TestSweeps:
    def test_from_prime_sweep_matches_pointwise(self):
        rule = make_custom(validate=False)
        anchors = np.array([0.5, 1.5, 3.0])
        sgrid = np.linspace(0.0, 4.0, 9)
        mat = aging.from_prime_sweep(rule, anchors, sgrid)
        for i, s in enumerate(sgrid):
            want = [aging.trajectory(rule, a, 0.0, float(s)) for a in anchors]
            np.testing.assert_allclose(mat[i], want, atol=1e-9)

    def test_trajectory_sweep_brackets_anchor(self):
        rule = make_custom(validate=False)
        sgrid = np.linspace(0.0, 4.0, 17)
        mat = aging.trajectory_sweep(rule, np.array([1.0]), 2.0, sgrid)
        k = np.searchsorted(sgrid, 2.0)
        assert mat[k, 0] == pytest.approx(1.0, abs=1e-9)

    def test_no_aging_rule(self):
        rule = AgingRule.no_aging()
        assert aging.trajectory(rule, 1.7, 0.5, 9.0) == 1.7
        assert aging.to_prime(rule, PlanePoint(1.7, 3.0)).x == 1.7
