import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frictionlab import errors
from frictionlab import friction as fr


def grid_sup(g, y, lo=-60.0, hi=60.0, n=200001):
    x = np.linspace(lo, hi, n)
    return float(np.max(x * y - g(x)))


class TestEvalG:
    def test_power(self):
        assert fr.eval_g(fr.FrictionSpec.power(1.0, 2.0), None, 3.0) == pytest.approx(9.0)

    def test_quadratic_impact(self):
        spec = fr.FrictionSpec.quadratic_impact(0.5)
        assert fr.eval_g(spec, 100.0, 2.0) == pytest.approx(100.0)

    def test_matrix(self):
        spec = fr.FrictionSpec.matrix_quadratic(np.eye(2))
        assert fr.eval_g(spec, None, [1.0, 2.0]) == pytest.approx(5.0)

    def test_participation_cost_added(self):
        spec = fr.FrictionSpec.power(2.0, 1.5, participation_cost=0.25)
        assert fr.eval_g(spec, None, 0.0) == pytest.approx(0.25)

    def test_quadratic_impact_rejects_nonpositive_price(self):
        spec = fr.FrictionSpec.quadratic_impact(1.0)
        with pytest.raises(errors.InvalidPrice):
            fr.eval_g(spec, 0.0, 1.0)

    def test_vectorised_shape(self):
        spec = fr.FrictionSpec.power(1.0, 2.0)
        x = np.arange(12.0).reshape(3, 4, 1)
        assert fr.eval_g(spec, None, x).shape == (3, 4)


class TestConjugate:
    def test_alpha_two_value(self):
        out = fr.eval_g_star(fr.FrictionSpec.power(1.0, 2.0), None, 2.0)
        assert out.value == pytest.approx(1.0, abs=1e-14)
        assert out.argsup == pytest.approx([1.0])

    def test_zero_dual_variable(self):
        for spec in (fr.FrictionSpec.power(3.0, 1.5), fr.FrictionSpec.quadratic_impact(0.2),
                     fr.FrictionSpec.matrix_quadratic([[2.0, 0.5], [0.5, 1.0]])):
            y = np.zeros(spec.dim or 1)
            assert fr.eval_g_star(spec, np.ones_like(y), y).value == pytest.approx(0.0, abs=1e-15)

    @pytest.mark.parametrize("lam,alpha,y", [(0.7, 1.3, -2.1), (2.5, 3.0, 1.7), (1.0, 2.0, 3.0)])
    def test_power_against_grid(self, lam, alpha, y):
        spec = fr.FrictionSpec.power(lam, alpha)
        want = grid_sup(lambda x: lam * np.abs(x) ** alpha, y)
        assert fr.eval_g_star(spec, None, y).value == pytest.approx(want, rel=1e-6)

    def test_quadratic_impact(self):
        spec = fr.FrictionSpec.quadratic_impact(0.5)
        assert fr.eval_g_star(spec, 100.0, -100.0).value == pytest.approx(100.0)

    def test_matrix_against_linear_algebra(self):
        m = np.array([[2.0, 0.3], [0.3, 1.0]])
        y = np.array([0.4, -1.2])
        spec = fr.FrictionSpec.matrix_quadratic(m)
        assert fr.eval_g_star(spec, None, y).value == pytest.approx(0.25 * y @ np.linalg.solve(m, y))

    def test_tabulated_matches_closed_form(self):
        gx = np.linspace(-10.0, 10.0, 4001)
        spec = fr.FrictionSpec.tabulated(gx, gx ** 2, h_floor=0.5, alpha=2.0)
        assert fr.eval_g_star(spec, None, 3.0).value == pytest.approx(2.25, abs=1e-6)

    def test_tabulated_rejects_nonconvex(self):
        spec = fr.FrictionSpec.tabulated([-1.0, 0.0, 0.5, 1.0], [1.0, 0.0, 1.0, 1.0], 0.1, 2.0)
        with pytest.raises(errors.NonConvexTabulation):
            fr.validate(spec)


class TestGradient:
    def test_examples(self):
        assert fr.eval_g_prime(fr.FrictionSpec.quadratic_impact(1.0), 2.0, 3.0) == pytest.approx([6.0])
        assert fr.eval_g_prime(fr.FrictionSpec.power(1.0, 2.0), None, -1.0) == pytest.approx([-2.0])
        spec = fr.FrictionSpec.matrix_quadratic(np.diag([1.0, 2.0]))
        assert fr.eval_g_prime(spec, None, [1.0, 1.0]) == pytest.approx([2.0, 4.0])

    def test_kink_returns_zero(self):
        assert fr.eval_g_prime(fr.FrictionSpec.power(1.0, 1.5), None, 0.0) == pytest.approx([0.0])

    def test_finite_difference(self):
        spec = fr.FrictionSpec.power(1.3, 2.7)
        x = np.array([0.4, -0.9])
        h = 1e-6
        fd = [(fr.eval_g(spec, None, x + h * e) - fr.eval_g(spec, None, x - h * e)) / (2 * h)
              for e in np.eye(2)]
        assert fr.eval_g_prime(spec, None, x) == pytest.approx(fd, rel=1e-6)

    def test_tabulated_not_differentiable(self):
        spec = fr.FrictionSpec.tabulated([-1.0, 0.0, 1.0], [1.0, 0.0, 1.0], 0.5, 2.0)
        with pytest.raises(errors.NotDifferentiable):
            fr.eval_g_prime(spec, None, 0.3)


class TestEnvelope:
    def test_scalar(self):
        assert fr.dual_bound_envelope(fr.FrictionSpec.power(1.0, 2.0), 2.0) == pytest.approx(1.0)

    def test_zero(self):
        assert fr.dual_bound_envelope(fr.FrictionSpec.power(1.0, 1.5), 0.0) == 0.0

    def test_two_dimensional_dominates(self):
        spec = fr.FrictionSpec.power(1.0, 2.0)
        y = np.array([1.0, 1.0])
        env = fr.dual_bound_envelope(spec, y)
        assert env == pytest.approx(1.0)
        assert env >= fr.eval_g_star(spec, None, y).value


class TestValidate:
    def test_bad_alpha(self):
        with pytest.raises(errors.InvalidFriction):
            fr.validate(fr.FrictionSpec.power(1.0, 1.0))

    def test_bad_matrix(self):
        with pytest.raises(errors.InvalidFriction):
            fr.validate(fr.FrictionSpec.matrix_quadratic([[1.0, 0.0], [0.0, -1.0]]))


@settings(max_examples=200, deadline=None)
@given(lam=st.floats(0.05, 20.0), alpha=st.floats(1.1, 4.0),
       x=st.floats(-5.0, 5.0), y=st.floats(-5.0, 5.0))
def test_fenchel_young(lam, alpha, x, y):
    spec = fr.FrictionSpec.power(lam, alpha)
    g = float(fr.eval_g(spec, None, x))
    assert x * y <= g + float(fr.eval_g_star(spec, None, y).value) + 1e-9
    yy = fr.eval_g_prime(spec, None, x)
    lhs = x * yy[0]
    rhs = g + float(fr.eval_g_star(spec, None, yy).value)
    assert lhs == pytest.approx(rhs, rel=1e-6, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(lam=st.floats(0.1, 10.0), alpha=st.floats(1.2, 3.0), y=st.floats(-4.0, 4.0))
def test_conjugate_closed_form(lam, alpha, y):
    spec = fr.FrictionSpec.power(lam, alpha)
    p = alpha / (alpha - 1.0)
    want = (alpha - 1) / alpha * alpha ** (1 / (1 - alpha)) * lam ** (1 / (1 - alpha)) * abs(y) ** p
    assert float(fr.eval_g_star(spec, None, y).value) == pytest.approx(want, rel=1e-12, abs=1e-300)
    assert math.isfinite(want)
