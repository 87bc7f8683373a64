"""Arbitrage of the second kind: detection and certificates of its absence.

An arbitrage of the second kind turns a strictly negative cash endowment
into a terminal position that is nonnegative in every component.  The
minimal such endowment ``c_star`` is the superhedging price of the zero
claim; by weak duality ``c_star >= -inf_Z penalty(Z)``, so a certificate
with small penalty rules out all but small arbitrages.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SolverConfig
from .errors import NegativePrices
from .superhedge import (Claim, MartingaleCertificate, SolveReport, maximize_dual, penalty,
                         superhedge_price)
from .wealth import TradingRatePlan, market_bound

ARBITRAGE_TOL = 1e-7


def arbitrage_tolerance(tree):
    """Threshold below which a negative ``c_star`` is treated as arbitrage."""
    return ARBITRAGE_TOL * (1.0 + float(np.abs(tree.prices).max()))


@dataclass(eq=False)
class Na2Report:
    arbitrage_found: bool
    c_star: float
    witness_plan: TradingRatePlan | None
    certificate: MartingaleCertificate | None
    epsilon_achieved: float
    market_bound_max: float
    tolerance: float
    solve: SolveReport | None = field(default=None, repr=False)


@dataclass(frozen=True, eq=False)
class NotFound:
    """Returned by :func:`na2_certificate_search` when the target is missed."""

    best_penalty: float
    certificate: MartingaleCertificate

    def __bool__(self):
        return False


def _best_certificate(tree, friction, cfg):
    zero = Claim.zero(tree)
    candidates = [MartingaleCertificate.frictionless(tree)]
    if not tree.is_martingale():
        candidates.append(maximize_dual(tree, zero, friction, cfg).certificate)
    scored = [(penalty(tree, c, friction), c) for c in candidates]
    return min(scored, key=lambda pc: pc[0])


def na2_certificate_search(tree, friction, epsilon, cfg=None):
    """Look for a certificate whose penalty is below ``epsilon``.

    The frictionless-consistent certificate (``Z^0 = 1``,
    ``Ztilde = E[S_T | node]``) is tried first; on martingale trees its
    penalty is exactly ``T G*(0)``.  Otherwise the dual is maximised for the
    zero claim, which minimises the penalty.

    Returns
    -------
    MartingaleCertificate or NotFound
    """
    cfg = cfg or SolverConfig()
    pen, cert = _best_certificate(tree, friction, cfg)
    if pen < epsilon:
        return cert
    return NotFound(pen, cert)


def detect_na2(tree, friction, cfg=None):
    """Minimal endowment ``c_star`` from which the zero claim can be superhedged.

    Arbitrage is reported when ``c_star < -1e-7 (1 + max|S|)``; the witness
    plan then reaches a componentwise nonnegative terminal position from
    ``c_star`` (up to solver tolerance).  Otherwise the report carries the
    lowest-penalty certificate found.
    """
    if np.any(tree.prices < 0):
        raise NegativePrices("second-kind arbitrage needs nonnegative prices",
                             min=float(tree.prices.min()))
    cfg = cfg or SolverConfig()
    report = superhedge_price(tree, Claim.zero(tree), friction, cfg)
    c_star = report.primal_value
    tol = arbitrage_tolerance(tree)
    found = c_star < -tol
    bound = float(np.max(market_bound(tree, friction)))
    pen = penalty(tree, report.certificate, friction)
    cert = report.certificate
    if not found:
        alt_pen, alt = _best_certificate(tree, friction, cfg)
        if alt_pen < pen:
            pen, cert = alt_pen, alt
    return Na2Report(
        arbitrage_found=bool(found), c_star=c_star,
        witness_plan=report.plan if found else None,
        certificate=cert, epsilon_achieved=float(pen),
        market_bound_max=bound, tolerance=tol, solve=report)
