import numpy as np
import pytest

from frictionlab import errors
from frictionlab import friction as fr
from frictionlab import market as mk
from frictionlab import wealth as wl
from frictionlab.arbitrage import NotFound, detect_na2, na2_certificate_search
from frictionlab.superhedge import MartingaleCertificate, penalty


def rising_with_exit(length):
    """Price 1 on [0, 1), then 2 on a liquidation interval of the given length."""
    return mk.append_liquidation_period(
        mk.deterministic_tree([1.0, 2.0], mk.TimeGrid.uniform(1.0, 1)), length)


class TestDetect:
    def test_martingale_tree(self, rng, quad):
        for _ in range(3):
            t = mk.random_tree(rng, steps=2, d=2, martingale=True)
            rep = detect_na2(t, quad)
            assert not rep.arbitrage_found
            assert rep.c_star == pytest.approx(0.0, abs=1e-7)
            assert rep.epsilon_achieved <= 1e-8
            assert rep.witness_plan is None

    @pytest.mark.parametrize("lam", [1.0, 10.0, 100.0])
    @pytest.mark.parametrize("length", [1.0, 3.0])
    def test_rising_price_with_exit(self, lam, length):
        # profit phi - lam phi^2 (1 + 1/length), maximised in closed form
        rep = detect_na2(rising_with_exit(length), fr.FrictionSpec.power(lam, 2.0))
        assert rep.arbitrage_found
        assert rep.c_star == pytest.approx(-length / (4.0 * lam * (length + 1.0)), abs=1e-6)

    def test_witness_is_solvent(self, quad):
        t = rising_with_exit(1.0)
        rep = detect_na2(t, quad)
        pos = wl.terminal_position(t, np.array([rep.c_star, 0.0]), rep.witness_plan, quad)
        assert np.all(pos >= -1e-6)
        assert rep.witness_plan.rates[0, 0] == pytest.approx(0.25, abs=1e-4)

    def test_rising_price_without_exit(self, rising, quad):
        # shares bought cannot be sold, and componentwise solvency ignores their value
        rep = detect_na2(rising, quad)
        assert not rep.arbitrage_found
        assert rep.c_star == pytest.approx(0.0, abs=1e-7)

    def test_market_bound_limits_arbitrage(self, quad):
        rep = detect_na2(rising_with_exit(1.0), quad)
        assert -rep.c_star <= rep.market_bound_max

    def test_negative_prices(self, quad):
        t = mk.deterministic_tree([1.0, -1.0], mk.TimeGrid.uniform(1.0, 1))
        with pytest.raises(errors.NegativePrices):
            detect_na2(t, quad)

    def test_fbm_quantized_trees(self, quad):
        for steps in (1, 2, 3, 4):
            t = mk.fbm_quantized_tree(0.7, 1.0, 0.3, mk.TimeGrid.uniform(1.0, steps))
            rep = detect_na2(t, quad)
            assert not rep.arbitrage_found
            assert rep.epsilon_achieved <= 1e-12


class TestCertificateSearch:
    def test_martingale_any_epsilon(self, rng, quad):
        t = mk.random_tree(rng, steps=3, martingale=True)
        cert = na2_certificate_search(t, quad, 1e-12)
        assert isinstance(cert, MartingaleCertificate)
        assert penalty(t, cert, quad) < 1e-12

    def test_rising_not_found_below_c_star(self, quad):
        t = rising_with_exit(1.0)
        res = na2_certificate_search(t, quad, 0.12)
        assert isinstance(res, NotFound) and not res
        assert res.best_penalty == pytest.approx(0.125, abs=1e-6)
        assert isinstance(na2_certificate_search(t, quad, 0.13), MartingaleCertificate)

    def test_consistency_with_detection(self, rng):
        spec = fr.FrictionSpec.power(2.0, 1.8)
        for _ in range(6):
            t = mk.random_tree(rng, steps=2, liquidation=0.5, vol=0.5)
            rep = detect_na2(t, spec)
            if rep.arbitrage_found:
                res = na2_certificate_search(t, spec, 0.9 * abs(rep.c_star))
                assert isinstance(res, NotFound)
                assert res.best_penalty >= -rep.c_star - 1e-8
            else:
                assert isinstance(na2_certificate_search(t, spec, 1e-6), MartingaleCertificate)
