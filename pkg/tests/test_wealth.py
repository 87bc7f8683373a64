import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frictionlab import errors
from frictionlab import friction as fr
from frictionlab import market as mk
from frictionlab import wealth as wl


def const_tree(s, steps=1, T=1.0):
    return mk.deterministic_tree(np.full(steps + 1, float(s)), mk.TimeGrid.uniform(T, steps))


class TestRollForward:
    def test_zero_plan_keeps_position(self, rng, quad):
        t = mk.random_tree(rng, steps=3, d=2)
        z = np.array([1.5, -0.5, 2.0])
        pos = wl.terminal_position(t, z, wl.TradingRatePlan.zeros(t), quad)
        assert pos == pytest.approx(np.tile(z, (t.n_leaves, 1)))

    def test_one_step_substitution(self, quad):
        t = const_tree(1.0)
        plan = wl.TradingRatePlan([[1.0], [0.0]])
        pos = wl.terminal_position(t, np.zeros(2), plan, quad)
        assert pos[0] == pytest.approx([-2.0, 1.0])

    def test_tree_and_path_forms_agree(self, rng, quad):
        t = mk.random_tree(rng, steps=3, d=1)
        plan = wl.random_plan(t, rng)
        z = np.array([0.3, 0.1])
        ens = t.to_ensemble()
        nodes = t.path_nodes()[:, :-1]
        pplan = wl.TradingRatePlan(plan.rates[nodes], "paths")
        assert wl.terminal_position(ens, z, pplan, quad) == pytest.approx(
            wl.terminal_position(t, z, plan, quad))

    def test_roll_forward_matches_terminal(self, rng, quad):
        t = mk.random_tree(rng, steps=2, d=2)
        plan = wl.random_plan(t, rng)
        st_ = wl.roll_forward(t, np.zeros(3), plan, quad)
        assert st_.stacked()[t.leaves] == pytest.approx(wl.terminal_position(t, np.zeros(3), plan, quad))

    def test_rejects_rates_on_leaves(self, quad):
        t = const_tree(1.0)
        with pytest.raises(errors.ShapeMismatch):
            wl.terminal_position(t, np.zeros(2), wl.TradingRatePlan([[1.0], [1.0]]), quad)


class TestExecutionPrice:
    def test_substitution(self, quad):
        t = const_tree(1.0)
        px = wl.execution_price_series(wl.TradingRatePlan([[2.0], [0.0]]), t, quad)
        assert px[0] == pytest.approx(3.0)
        assert np.isnan(px[1])

    def test_buying_above_selling_below(self, rng, quad):
        t = mk.random_tree(rng, steps=2)
        plan = wl.random_plan(t, rng)
        px = wl.execution_price_series(plan, t, quad)
        nt = t.nonterminal
        phi = plan.rates[nt, 0]
        s = t.prices[nt, 0]
        assert np.all((px[nt] > s)[phi > 0]) and np.all((px[nt] < s)[phi < 0])

    def test_small_rate_limit(self, quad):
        px = wl.execution_price_series(wl.TradingRatePlan([[1e-8], [0.0]]), const_tree(1.0), quad)
        assert px[0] == pytest.approx(1.0, abs=1e-7)

    def test_filter_zeroes_negative_execution(self, quad):
        t = const_tree(1.0)
        out = wl.filter_positive_execution(wl.TradingRatePlan([[-100.0], [0.0]]), t, quad)
        assert out.rates[0, 0] == 0.0

    def test_filter_fixed_point(self, rng, quad):
        t = mk.random_tree(rng, steps=2)
        rates = np.full((t.n_nodes, 1), 0.1)
        rates[t.leaves] = 0.0
        plan = wl.TradingRatePlan(rates)
        assert np.array_equal(wl.filter_positive_execution(plan, t, quad).rates, plan.rates)

    def test_filter_dominates(self, rng, quad):
        t = mk.random_tree(rng, steps=3)
        z = np.zeros(2)
        for _ in range(1000):
            plan = wl.random_plan(t, rng, scale=2.0, heavy=True)
            a = wl.terminal_position(t, z, plan, quad)
            b = wl.terminal_position(t, z, wl.filter_positive_execution(plan, t, quad), quad)
            assert np.all(b >= a - 1e-12)


class TestMarketBound:
    def test_quadratic_impact_constant(self):
        b = wl.market_bound(const_tree(100.0), fr.FrictionSpec.quadratic_impact(0.5))
        assert b == pytest.approx([100.0])

    def test_power_constant(self, quad):
        assert wl.market_bound(const_tree(2.0), quad) == pytest.approx([1.0])

    def test_dominates_random_plans(self, rng):
        spec = fr.FrictionSpec.power(0.8, 1.7)
        for _ in range(5):
            t = mk.random_tree(rng, steps=3, d=1)
            b = wl.market_bound(t, spec)
            for _ in range(200):
                v0 = wl.terminal_position(t, np.zeros(2), wl.random_plan(t, rng, 3.0, True), spec)[:, 0]
                assert np.all(v0 <= b + 1e-9)

    def test_optimal_selling_attains_bound(self, quad):
        # selling at the conjugate maximiser of -S realises the bound
        t = const_tree(2.0)
        phi = fr.eval_g_star(quad, None, -2.0).argsup
        v0 = wl.terminal_position(t, np.zeros(2), wl.TradingRatePlan([phi, [0.0]]), quad)[0, 0]
        assert v0 == pytest.approx(wl.market_bound(t, quad)[0])


class TestVolumeBound:
    def test_zero_plan(self, rng, quad):
        t = mk.random_tree(rng, steps=2)
        rep = wl.volume_bound_check(wl.TradingRatePlan.zeros(t), t, quad, wl.VolumeBoundParams(1.5))
        assert np.all(rep.lhs == 0) and np.all(rep.rhs >= 1) and rep.all_ok

    @pytest.mark.parametrize("beta", [1.1, 1.5, 1.9])
    def test_random_plans(self, rng, quad, beta):
        t = mk.random_tree(rng, steps=2)
        for _ in range(100):
            assert wl.volume_bound_check(wl.random_plan(t, rng, 2.0, True), t, quad,
                                         wl.VolumeBoundParams(beta)).all_ok

    def test_scaling_sweep(self, rng, quad):
        t = mk.random_tree(rng, steps=2, horizon=3.0)
        plan = wl.random_plan(t, rng)
        lhs = []
        for c in (1, 2, 4, 8, 16, 32, 64):
            rep = wl.volume_bound_check(plan.scaled(c), t, quad, wl.VolumeBoundParams(1.5))
            assert rep.all_ok
            lhs.append(rep.lhs)
        assert lhs[-1] / lhs[0] == pytest.approx(np.full_like(lhs[0], 64 ** 1.5))

    def test_beta_range(self, quad, rng):
        t = mk.random_tree(rng)
        with pytest.raises(errors.BetaOutOfRange):
            wl.volume_bound_check(wl.TradingRatePlan.zeros(t), t, quad, wl.VolumeBoundParams(2.0))


class TestConstantCashflow:
    def test_constant_price(self):
        spec = fr.FrictionSpec.quadratic_impact(1.0)
        for steps in (1, 7, 100):
            t = const_tree(1.0, steps)
            plan = wl.constant_cashflow_plan(t, spec, 1.0)
            pos = wl.terminal_position(t, np.zeros(2), plan, spec)
            assert pos[0, 1] == pytest.approx(math.sqrt(3.0) - 1.0, abs=1e-12)
            assert pos[0, 0] == pytest.approx(-1.0, abs=1e-12)

    def test_per_step_outflow(self, rng):
        spec = fr.FrictionSpec.quadratic_impact(0.3)
        t = mk.random_tree(rng, steps=4, s0=5.0)
        flows = wl.node_cash_flows(t, wl.constant_cashflow_plan(t, spec, 2.0), spec)
        nt = t.nonterminal
        assert flows[nt] == pytest.approx(2.0 * t.node_dt[nt], rel=1e-12)

    def test_frictionless_limit(self):
        t = const_tree(4.0)
        plan = wl.constant_cashflow_plan(t, fr.FrictionSpec.quadratic_impact(1e-8), 2.0)
        assert plan.rates[0, 0] == pytest.approx(0.5, rel=1e-5)

    def test_zero_rate(self):
        t = const_tree(3.0, 3)
        plan = wl.constant_cashflow_plan(t, fr.FrictionSpec.quadratic_impact(1.0), 0.0)
        assert np.all(plan.rates == 0)

    def test_needs_quadratic_impact(self, quad):
        with pytest.raises(errors.InvalidFriction):
            wl.constant_cashflow_plan(const_tree(1.0), quad, 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.floats(1.2, 3.0), lam=st.floats(0.1, 5.0))
def test_market_bound_property(seed, alpha, lam):
    rng = np.random.default_rng(seed)
    t = mk.random_tree(rng, steps=2, d=1)
    spec = fr.FrictionSpec.power(lam, alpha)
    v0 = wl.terminal_position(t, np.zeros(2), wl.random_plan(t, rng, 2.0, True), spec)[:, 0]
    assert np.all(v0 <= wl.market_bound(t, spec) + 1e-9)
