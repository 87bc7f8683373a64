import math

import numpy as np
import pytest

from frictionlab import errors
from frictionlab import market as mk


class TestTimeGrid:
    def test_uniform(self):
        g = mk.TimeGrid.uniform(2.0, 4)
        assert g.steps == 4 and g.horizon == 2.0 and g.is_uniform
        assert g.dt == pytest.approx([0.5] * 4)

    @pytest.mark.parametrize("times", [[0.0], [0.1, 1.0], [0.0, 0.5, 0.5], [0.0, float("nan")]])
    def test_invalid(self, times):
        with pytest.raises(errors.InvalidMarket):
            mk.TimeGrid(times)


class TestBinomial:
    def test_user_rule(self, binomial_one_step):
        t = binomial_one_step
        assert t.n_nodes == 3
        assert sorted(t.prices[t.leaves, 0]) == [0.5, 2.0]
        assert t.leaf_prob == pytest.approx([0.5, 0.5])

    def test_moment_matched_probability(self):
        t = mk.build_binomial_tree(mk.GBMParams(1.0, 0.0, 0.2), mk.TimeGrid.uniform(1.0, 1))
        up = t.children[0][0]
        assert t.q[up] == pytest.approx(0.45)
        assert math.log(t.prices[up, 0]) == pytest.approx(0.2)

    def test_node_count(self):
        t = mk.build_binomial_tree(mk.GBMParams(1.0, 0.05, 0.3), mk.TimeGrid.uniform(1.0, 3))
        assert t.n_nodes == 15 and t.n_leaves == 8

    def test_jr_matches_log_moments(self):
        p = mk.GBMParams(1.0, 0.1, 0.25)
        t = mk.build_binomial_tree(p, mk.TimeGrid.uniform(1.0, 1), rule="jr")
        logs = np.log(t.prices[t.leaves, 0])
        assert t.expectation(logs) == pytest.approx(p.mu - 0.5 * p.sigma ** 2)
        assert t.expectation(logs ** 2) - t.expectation(logs) ** 2 == pytest.approx(p.sigma ** 2)

    def test_explosive_step(self):
        with pytest.raises(errors.ExplosiveStep):
            mk.build_binomial_tree(mk.GBMParams(1.0, 0.0, 0.2), mk.TimeGrid.uniform(1.0, 1),
                                   rule=(2.0, -0.5, 0.5))


class TestScenarioTree:
    def test_probability_closure(self, rng):
        t = mk.random_tree(rng, steps=3, branching=(2, 3), d=2)
        t.validate()
        for k in range(t.steps + 1):
            assert t.prob[t.k == k].sum() == pytest.approx(1.0, abs=1e-12)

    def test_prob_sum_code(self):
        bad = mk.ScenarioTree([-1, 0, 0], [0, 1, 1], [1.0, 0.5, 0.4], [[1.0], [2.0], [0.5]],
                              mk.TimeGrid.uniform(1.0, 1))
        with pytest.raises(errors.InvalidMarket) as info:
            bad.validate()
        assert info.value.code == "TREE_PROB_SUM"

    def test_leaf_depth(self):
        with pytest.raises(errors.InvalidMarket):
            mk.ScenarioTree([-1, 0, 0, 1], [0, 1, 1, 2], [1, 0.5, 0.5, 1], np.ones(4),
                            mk.TimeGrid.uniform(1.0, 2))

    def test_reorders_nodes(self):
        t = mk.ScenarioTree([2, -1, 1], [2, 0, 1], [1.0, 1.0, 1.0], [3.0, 1.0, 2.0],
                            mk.TimeGrid.uniform(1.0, 2), ids=["c", "a", "b"])
        assert t.ids == ["a", "b", "c"]
        assert t.prices[:, 0] == pytest.approx([1.0, 2.0, 3.0])

    def test_martingale_flag(self, rng, binomial_one_step):
        assert mk.random_tree(rng, steps=3, martingale=True).is_martingale()
        assert not binomial_one_step.is_martingale()

    def test_node_expectation_tower(self, rng):
        t = mk.random_tree(rng, steps=3)
        x = rng.normal(size=t.n_leaves)
        e = t.node_expectation(x)
        assert e[0] == pytest.approx(t.expectation(x))
        for i in t.nonterminal:
            assert e[i] == pytest.approx(t.q[t.children[i]] @ e[t.children[i]])

    def test_to_ensemble(self, rng):
        t = mk.random_tree(rng, steps=2, d=2)
        ens = t.to_ensemble()
        assert ens.paths.shape == (t.n_leaves, 3, 2)
        assert ens.weights.sum() == pytest.approx(1.0)

    def test_liquidation_period(self, binomial_one_step):
        t = mk.append_liquidation_period(binomial_one_step, 0.5)
        assert t.steps == 2 and t.grid.horizon == 1.5
        assert t.prices[t.leaves, 0] == pytest.approx(binomial_one_step.prices[binomial_one_step.leaves, 0])


class TestSimulation:
    def test_gbm_deterministic_limit(self):
        g = mk.TimeGrid.uniform(1.0, 5)
        ens = mk.simulate_gbm(mk.GBMParams(2.0, 0.3, 1e-12), g, 50, seed=1)
        assert ens.paths[:, :, 0] == pytest.approx(np.tile(2.0 * np.exp(0.3 * g.times), (50, 1)), rel=1e-8)

    def test_gbm_mean(self):
        ens = mk.simulate_gbm(mk.GBMParams(1.0, 0.0, 0.2), mk.TimeGrid.uniform(1.0, 4), 100_000, seed=3)
        st = ens.paths[:, -1, 0]
        assert abs(st.mean() - 1.0) < 3 * st.std() / math.sqrt(st.size)

    def test_gbm_reproducible(self):
        g = mk.TimeGrid.uniform(1.0, 3)
        a = mk.simulate_gbm(mk.GBMParams(1.0, 0.0, 0.2), g, 5000, seed=9)
        b = mk.simulate_gbm(mk.GBMParams(1.0, 0.0, 0.2), g, 5000, seed=9)
        assert np.array_equal(a.paths, b.paths)

    def test_fbm_half_is_brownian(self):
        ens = mk.simulate_fbm_price(0.5, 1.0, 1.0, mk.TimeGrid.uniform(1.0, 16), 20_000, seed=2)
        inc = np.diff(np.log(ens.paths[:, :, 0]), axis=1)
        rho = np.corrcoef(inc[:, 3], inc[:, 4])[0, 1]
        assert abs(rho) < 3 / math.sqrt(inc.shape[0])

    def test_fbm_terminal_variance(self):
        ens = mk.simulate_fbm_price(0.75, 1.0, 1.0, mk.TimeGrid.uniform(2.0, 32), 10_000, seed=4)
        b = np.log(ens.paths[:, -1, 0])
        assert b.var() == pytest.approx(2.0 ** 1.5, rel=0.05)

    def test_fbm_methods_agree_in_law(self):
        g = mk.TimeGrid.uniform(1.0, 8)
        a = mk.simulate_fbm_price(0.3, 1.0, 1.0, g, 20_000, seed=5)
        b = mk.simulate_fbm_price(0.3, 1.0, 1.0, g, 20_000, seed=5, method="cholesky")
        va = np.log(a.paths[:, -1, 0]).var()
        vb = np.log(b.paths[:, -1, 0]).var()
        assert va == pytest.approx(vb, rel=0.05)

    def test_fbm_needs_uniform_grid(self):
        with pytest.raises(errors.InvalidMarket):
            mk.simulate_fbm_price(0.7, 1.0, 1.0, mk.TimeGrid([0.0, 0.3, 1.0]), 10)

    def test_quantized_tree(self):
        t = mk.fbm_quantized_tree(0.7, 1.0, 0.3, mk.TimeGrid.uniform(1.0, 3))
        t.validate()
        assert t.n_leaves == 8
        # conditional means: the quantized process keeps the root mean of B^H
        assert t.expectation(np.log(t.prices[t.leaves, 0])) == pytest.approx(0.0, abs=1e-12)
