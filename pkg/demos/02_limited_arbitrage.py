"""How much can be extracted from a price that is known to rise?

On a deterministic path 1 -> 2 a frictionless trader has unlimited
arbitrage.  Under superlinear friction buying faster costs more than
proportionally, so the achievable profit is finite.  This demo computes
the minimal cash c_star that finances a nonnegative terminal position,
once for the path as given and once with an interval in which the
purchased shares can be sold at price 2.
"""

import numpy as np

from frictionlab import FrictionSpec, TimeGrid, append_liquidation_period, deterministic_tree, random_tree
from frictionlab.arbitrage import detect_na2, na2_certificate_search


def main():
    rising = deterministic_tree([1.0, 2.0], TimeGrid.uniform(1.0, 1))
    print("rising price 1 -> 2 over one unit of time")
    print(f"{'Lambda':>8} {'as given':>12} {'exit L=1':>12} {'exit L=4':>12} {'-1/(8 Lambda)':>14}")
    for lam in (1.0, 10.0, 100.0):
        spec = FrictionSpec.power(lam, 2.0)
        row = [detect_na2(rising, spec).c_star]
        for length in (1.0, 4.0):
            row.append(detect_na2(append_liquidation_period(rising, length), spec).c_star)
        print(f"{lam:>8g} {row[0]:>12.6f} {row[1]:>12.6f} {row[2]:>12.6f} {-1 / (8 * lam):>14.6f}")
    print("without an exit the shares cannot become cash, so nothing is extracted;")
    print("with an exit of length L the profit is L / (4 Lambda (L + 1))")

    spec = FrictionSpec.power(1.0, 2.0)
    rep = detect_na2(append_liquidation_period(rising, 1.0), spec)
    print(f"\nwitness plan at Lambda = 1: buy at rate {rep.witness_plan.rates[0, 0]:.4f}, "
          f"sell at rate {rep.witness_plan.rates[1, 0]:.4f}")
    print(f"market bound for the same friction: {rep.market_bound_max:.4f}")

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        tree = random_tree(rng, steps=3, martingale=True)
        cert = na2_certificate_search(tree, spec, 1e-10)
        worst = max(worst, abs(detect_na2(tree, spec).c_star))
        assert cert, "martingale trees admit a zero-penalty certificate"
    print(f"\nten random martingale trees: certificates found, largest |c_star| = {worst:.1e}")


if __name__ == "__main__":
    main()
