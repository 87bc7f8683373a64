"""Optimal trading for an exponential-utility investor and its certificate.

The investor starts flat, trades over two random periods and must be flat
again after a short liquidation interval.  At the optimum the shadow price
Z = S + G'(phi) is a martingale under the marginal-utility measure and is
orthogonal to the plan.  Together these give a dual bound that the
achieved utility meets.
"""

import numpy as np

from frictionlab import FrictionSpec, TradingRatePlan, UtilitySpec, maximize_utility, random_tree, verify_foc
from frictionlab.errors import PlanNotFlat


def main():
    rng = np.random.default_rng(11)
    tree = random_tree(rng, steps=2, branching=3, liquidation=0.5)
    spec = FrictionSpec.quadratic_impact(0.5)
    util = UtilitySpec.exponential(2.0)
    endowment = rng.normal(0.0, 0.3, tree.n_leaves)

    rep = maximize_utility(tree, 0.0, endowment, util, spec)
    foc = verify_foc(tree, rep.plan, 0.0, endowment, util, spec)
    idle = float(tree.expectation(util.u(endowment)))
    print(f"expected utility without trading: {idle:.8f}")
    print(f"expected utility at the optimum:  {rep.primal_value:.8f}  ({rep.iterations} Newton steps)")
    print(f"martingale residual of Z under Q:  {foc.martingale_residual:.2e}")
    print(f"orthogonality residual:            {foc.orthogonality_residual:.2e}")
    print(f"dual bound minus objective:        {foc.duality_gap_bound:.2e}")
    print(f"verdict: {foc.verdict}")

    root = 0
    print(f"\nat the root: price {tree.prices[root, 0]:.4f}, rate {rep.plan.rates[root, 0]:+.4f}, "
          f"shadow price {foc.shadow_price[root, 0]:.4f}")

    worse = rep.plan.rates.copy()
    worse[root] *= 1.5
    print("scaling the root trade breaks flatness, which verify_foc rejects:")
    try:
        verify_foc(tree, TradingRatePlan(worse, "tree"), 0.0, endowment, util, spec)
    except PlanNotFlat as exc:
        print(f"  {type(exc).__name__}: {exc}")


if __name__ == "__main__":
    main()
