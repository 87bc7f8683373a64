"""Two closed-form situations.

First, a buyer facing quadratic impact G(x) = lam/2 S x^2 who spends cash
at the constant rate k.  With constant price 1 and lam = k = 1 the rate
solves x + x^2/2 = 1, so exactly sqrt(3) - 1 shares are bought in one unit
of time, however finely time is divided.

Second, a family of martingale certificates for a GBM market whose dual
values grow without bound as the last-period drift sharpens.  The moments
behind each value are checked by Monte Carlo.
"""

import math

import numpy as np

from frictionlab import FrictionSpec, GBMParams, TimeGrid, deterministic_tree
from frictionlab.superhedge import example1_dual_family, example1_moments, example1_monte_carlo, example1_x
from frictionlab.wealth import constant_cashflow_plan, terminal_position


def cashflow():
    spec = FrictionSpec.quadratic_impact(1.0)
    print("constant cash rate k = 1 at constant price 1")
    for steps in (1, 10, 1000):
        tree = deterministic_tree(np.ones(steps + 1), TimeGrid.uniform(1.0, steps))
        pos = terminal_position(tree, np.zeros(2), constant_cashflow_plan(tree, spec, 1.0), spec)
        print(f"  {steps:>5} steps: shares {pos[0, 1]:.15f}, cash {pos[0, 0]:+.15f}")
    print(f"  sqrt(3) - 1 = {math.sqrt(3) - 1:.15f}")


def exploding():
    params = GBMParams(1.0, 0.0, 0.2)
    print("\ndual values for the claim paying S_T in cash, sigma = 0.2")
    for lam in (0.01, 0.1):
        vals = [example1_dual_family(params, lam, 1.0, n, example1_x(n, 0.2)) for n in (2, 4, 8, 16, 32, 64)]
        print(f"  lam = {lam:<5}", " ".join(f"{v:10.3f}" for v in vals))
    print("  for small lam the first terms dip before the divergence sets in")

    n = 8
    x = example1_x(n, 0.2)
    t = 1.0
    exact = example1_moments(params, 1.0, n, x, t)
    mean, se = example1_monte_carlo(params, 1.0, n, x, t, 100_000, seed=3)
    print(f"\nMonte Carlo at n = {n}, t = {t}:")
    for name, e, m, s in zip(("E[Z0 S]", "E[Z0/S]"), exact, mean, se):
        print(f"  {name}: exact {float(e):.5f}, estimate {m:.5f} +- {s:.5f}")


if __name__ == "__main__":
    cashflow()
    exploding()
