"""Utility maximisation under friction with first-order-condition checks.

The problem is ``max E U(V^0_T(c, phi) + W)`` over node-indexed plans whose
terminal asset positions vanish (class ``flat``) or are nonnegative (class
``nonneg``).  At an optimum the shadow price ``Z = S + G'(phi)`` is a
martingale under ``dQ/dP = U'(V^0_T + W) / y*`` and is orthogonal to the
plan, ``E_Q sum phi.Z dt = 0``.  The dual bound

    E[Ut(y dQ/dP)] + y (c + E_Q W + E_Q sum G*(Z - S) dt),

with ``Ut`` the convex conjugate of ``U``, dominates every achievable
objective and meets it at the optimum.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.optimize import minimize_scalar

from . import friction as fr
from .config import SolverConfig
from .errors import (CertificateInvalid, InvalidUtility, MaxIterations, NonIntegrableUtility,
                     PlanNotFlat, ShapeMismatch)
from .superhedge import SolveReport
from .wealth import TradingRatePlan, terminal_position

CONSTRAINT_CLASSES = ("flat", "nonneg")


@dataclass(frozen=True)
class UtilitySpec:
    """Concave utility on the real line.

    ``Exponential``: ``U(x) = -exp(-a x)``.
    ``NegPower``: ``U(x) = -C |x|**delta`` for ``x <= 0`` and ``0`` above
    (the concave extension; it is satiated on the positive half-line).

    ``env_C`` and ``env_delta`` declare the power envelope
    ``U(x) <= -env_C |x|**env_delta`` on ``x <= 0``.
    """

    kind: str
    a: float = 1.0
    C: float = 1.0
    delta: float = 2.0
    env_C: float | None = None
    env_delta: float | None = None

    @classmethod
    def exponential(cls, a=1.0):
        a = float(a)
        if not a > 0:
            raise InvalidUtility("risk aversion must be positive", a=a)
        # min_{u>0} exp(a u) / u^2 = (a e / 2)^2
        return cls("Exponential", a=a, env_C=(a * math.e / 2.0) ** 2, env_delta=2.0)

    @classmethod
    def neg_power(cls, C=1.0, delta=2.0):
        C, delta = float(C), float(delta)
        if not C > 0 or not delta > 1:
            raise InvalidUtility("NegPower needs C > 0 and delta > 1", C=C, delta=delta)
        return cls("NegPower", C=C, delta=delta, env_C=C, env_delta=delta)

    def u(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "Exponential":
            with np.errstate(over="ignore"):
                return -np.exp(-self.a * x)
        return np.where(x < 0, -self.C * np.abs(x) ** self.delta, 0.0)

    def du(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "Exponential":
            with np.errstate(over="ignore"):
                return self.a * np.exp(-self.a * x)
        return np.where(x < 0, self.C * self.delta * np.abs(x) ** (self.delta - 1.0), 0.0)

    def d2u(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "Exponential":
            return -self.a * self.a * np.exp(-self.a * x)
        dd = self.delta
        return np.where(x < 0, -self.C * dd * (dd - 1.0) * np.abs(x) ** (dd - 2.0), 0.0)

    def conj(self, y):
        """``Ut(y) = sup_x (U(x) - x y)`` for ``y > 0``."""
        y = np.asarray(y, dtype=float)
        if self.kind == "Exponential":
            r = y / self.a
            return r * (np.log(r) - 1.0)
        dd, C = self.delta, self.C
        return (dd - 1.0) / dd * y * (y / (C * dd)) ** (1.0 / (dd - 1.0))

    def validate(self, probe=None, tol=1e-9):
        """Check concavity, monotonicity, the envelope and the Fenchel identity."""
        if self.kind not in ("Exponential", "NegPower"):
            raise InvalidUtility(f"unknown utility kind {self.kind!r}")
        x = np.linspace(-5.0, 5.0, 201) if probe is None else np.asarray(probe, dtype=float)
        if np.any(self.du(x) < -tol) or np.any(self.d2u(x) > tol):
            raise InvalidUtility("utility must be nondecreasing and concave")
        neg = x[x <= 0]
        env = -self.env_C * np.abs(neg) ** self.env_delta
        if np.any(self.u(neg) > env + tol * (1.0 + np.abs(env))):
            raise InvalidUtility("declared power envelope is violated")
        live = x[self.du(x) > 0]
        lhs = self.conj(self.du(live))
        rhs = self.u(live) - live * self.du(live)
        if np.any(np.abs(lhs - rhs) > tol * (1.0 + np.abs(rhs))):
            raise InvalidUtility("Fenchel identity fails on the probe grid")
        return self

    def to_dict(self):
        if self.kind == "Exponential":
            return {"kind": self.kind, "a": self.a}
        return {"kind": self.kind, "C": self.C, "delta": self.delta}

    @classmethod
    def from_dict(cls, data):
        kind = data.get("kind")
        if kind == "Exponential":
            return cls.exponential(data.get("a", 1.0))
        if kind == "NegPower":
            return cls.neg_power(data.get("C", 1.0), data.get("delta", 2.0))
        raise InvalidUtility(f"unknown utility kind {kind!r}")


@dataclass(eq=False)
class FocReport:
    y_star: float
    q_density: np.ndarray
    shadow_price: np.ndarray
    martingale_residual: float
    orthogonality_residual: float
    duality_gap_bound: float
    objective: float
    verdict: str
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class GapBound:
    bound: float
    y: float
    gap: float | None


# ---------------------------------------------------------------------------
# problem assembly


class _Problem:
    def __init__(self, tree, c, W, utility, friction):
        self.tree = tree
        self.c = float(c)
        self.W = np.zeros(tree.n_leaves) if W is None else np.broadcast_to(
            np.asarray(W, dtype=float), (tree.n_leaves,)).copy()
        if not np.all(np.isfinite(self.W)):
            raise ShapeMismatch("endowment must be finite")
        self.U = utility
        self.friction = friction
        nt = tree.nonterminal
        self.nt = nt
        self.d = tree.d
        self.s = tree.prices[nt]
        self.dt = tree.node_dt[nt]
        self.anc = tree.ancestors[:, nt].astype(float)
        self.anc_dt = self.anc * self.dt[None, :]
        self.p = tree.leaf_prob
        n = nt.size
        d = self.d
        # asset position at each leaf is A @ phi (per asset)
        A = np.zeros((tree.n_leaves * d, n * d))
        for i in range(d):
            A[i::d, i::d] = self.anc_dt
        self.A = A

    def rates(self, phi_flat):
        return phi_flat.reshape(self.nt.size, self.d)

    def wealth(self, phi_flat):
        phi = self.rates(phi_flat)
        flow = np.sum(phi * self.s, axis=1) + fr.eval_g(self.friction, self.s, phi)
        return self.c - self.anc_dt @ flow + self.W

    def value(self, phi_flat):
        return float(self.p @ self.U.u(self.wealth(phi_flat)))

    def grad_hess(self, phi_flat, hessian=True):
        phi = self.rates(phi_flat)
        x = self.wealth(phi_flat)
        up = self.U.du(x)
        marg = self.s + fr.eval_g_prime(self.friction, self.s, phi)  # (n, d)
        # d wealth_l / d phi_j = -anc_dt[l, j] * marg_j
        w = (self.p * up) @ self.anc_dt  # (n,)
        grad = -(w[:, None] * marg).ravel()
        if not hessian:
            return grad, None
        J = -(self.anc_dt[:, :, None] * marg[None, :, :]).reshape(x.size, -1)
        H = J.T @ ((self.p * self.U.d2u(x))[:, None] * J)
        gh = fr.g_hessian(self.friction, self.s, phi)
        n, d = phi.shape
        for j in range(n):
            sl = slice(j * d, (j + 1) * d)
            H[sl, sl] -= w[j] * gh[j]
        return grad, H


def _plan_from(prob, phi_flat):
    rates = np.zeros((prob.tree.n_nodes, prob.d))
    rates[prob.nt] = prob.rates(phi_flat)
    return TradingRatePlan(rates, "tree")


def _newton_flat(prob, cfg):
    N = scipy.linalg.null_space(prob.A) if prob.A.size else np.eye(prob.A.shape[1])
    xi = np.zeros(N.shape[1])
    phi = N @ xi
    f = prob.value(phi)
    it = 0
    gnorm = 0.0
    if N.shape[1] == 0:
        return phi, f, 0, 0.0
    for it in range(1, cfg.max_iter + 1):
        g, H = prob.grad_hess(phi)
        gr = N.T @ g
        Hr = N.T @ H @ N
        gnorm = float(np.linalg.norm(gr))
        try:
            step = np.linalg.solve(-Hr, gr)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(-Hr, gr, rcond=None)[0]
        dec = float(gr @ step)
        if dec < 0:  # fall back to gradient ascent if curvature is lost
            step, dec = gr, float(gr @ gr)
        if gnorm <= cfg.tol * (1.0 + abs(f)) or dec <= cfg.tol ** 2:
            break
        t = 1.0
        while t > 1e-16:
            f_new = prob.value(N @ (xi + t * step))
            if np.isfinite(f_new) and f_new >= f + 1e-4 * t * dec:
                break
            t *= 0.5
        if t <= 1e-16:
            break
        xi = xi + t * step
        phi = N @ xi
        f = prob.value(phi)
    else:
        raise MaxIterations("utility Newton solver did not converge",
                            best=_plan_from(prob, phi), gradient_norm=gnorm)
    return phi, f, it, gnorm


def _newton_nonneg(prob, cfg):
    A = prob.A
    m, nvar = A.shape
    n, d = prob.nt.size, prob.d
    # small purchase at the root keeps every terminal position strictly positive
    phi = np.zeros(nvar)
    phi[:d] = 1e-3 / max(prob.dt[0], 1e-12)
    t = 1.0
    it = 0
    gnorm = 0.0

    def merit(x, t):
        s = A @ x
        if np.any(s <= 0):
            return -np.inf
        return t * prob.value(x) + np.sum(np.log(s))

    while True:
        for _ in range(200):
            it += 1
            g, H = prob.grad_hess(phi)
            s = A @ phi
            gb = t * g + A.T @ (1.0 / s)
            Hb = t * H - (A / s[:, None]).T @ (A / s[:, None])
            step = np.linalg.solve(-Hb, gb)
            dec = float(gb @ step)
            gnorm = float(np.linalg.norm(g))
            if dec <= 1e-12 or it > cfg.max_iter:
                break
            As = A @ step
            negs = As < 0
            lr = min(1.0, 0.99 * float(np.min(-s[negs] / As[negs]))) if np.any(negs) else 1.0
            f0 = merit(phi, t)
            while lr > 1e-16:
                if merit(phi + lr * step, t) >= f0 + 1e-4 * lr * dec:
                    break
                lr *= 0.5
            if lr <= 1e-16:
                break
            phi = phi + lr * step
        if m / t <= cfg.tol or it > cfg.max_iter:
            break
        t *= 20.0
    if it > cfg.max_iter:
        raise MaxIterations("utility barrier solver did not converge", best=_plan_from(prob, phi))
    return phi, prob.value(phi), it, gnorm


def maximize_utility(tree, c, W, utility, friction, cfg=None, constraint="flat"):
    """Maximise expected utility of terminal cash plus endowment.

    Parameters
    ----------
    tree : ScenarioTree
    c : float
        Initial cash.
    W : array_like or None
        Endowment per leaf (bounded).
    utility : UtilitySpec
    friction : FrictionSpec
        Must be a differentiable kind.
    cfg : SolverConfig, optional
    constraint : {"flat", "nonneg"}
        Terminal asset positions must vanish, or be nonnegative.

    Returns
    -------
    SolveReport
        ``primal_value`` is the expected utility of the returned plan.
    """
    cfg = cfg or SolverConfig()
    if constraint not in CONSTRAINT_CLASSES:
        raise ValueError(f"constraint must be one of {CONSTRAINT_CLASSES}")
    start = time.perf_counter()
    prob = _Problem(tree, c, W, utility, friction)
    f0 = prob.value(np.zeros(prob.A.shape[1]))
    if not np.isfinite(f0):
        raise NonIntegrableUtility("expected utility is not finite at the zero plan")
    if constraint == "flat":
        phi, f, it, gnorm = _newton_flat(prob, cfg)
    else:
        phi, f, it, gnorm = _newton_nonneg(prob, cfg)
    plan = _plan_from(prob, phi)
    pos = prob.A @ phi
    return SolveReport(
        status="optimal", primal_value=f, plan=plan,
        kkt_residuals={"gradient_norm": gnorm,
                       "flatness": float(np.max(np.abs(pos))) if constraint == "flat"
                       else float(max(0.0, -pos.min()))},
        iterations=it, wall_time=time.perf_counter() - start,
        extra={"constraint": constraint, "cash": float(c)})


# ---------------------------------------------------------------------------
# verification


def _q_martingale_residual(tree, dens_nodes, Z):
    worst = 0.0
    for i in tree.nonterminal:
        ch = tree.children[i]
        if ch.size == 0 or np.any(np.isin(ch, tree.leaves)):
            continue
        qq = tree.q[ch] * dens_nodes[ch] / dens_nodes[i]
        worst = max(worst, float(np.max(np.abs(qq @ Z[ch] - Z[i]))))
    return worst


def verify_foc(tree, plan, c, W, utility, friction, tol=1e-5, constraint="flat"):
    """Residuals of the first-order conditions for a candidate optimum.

    Sets ``y* = E U'(V^0_T + W)`` and ``dQ/dP = U'(V^0_T + W) / y*``, builds
    ``Z = S + G'(phi)`` on trading nodes, and measures the Q-martingale
    defect of ``Z`` (between trading nodes) and ``|E_Q sum phi.Z dt|``.
    ``duality_gap_bound`` is infinite when ``Z`` fails the martingale
    precondition of :func:`duality_gap_bound`.
    """
    z0 = np.zeros(tree.d + 1)
    z0[0] = c
    vt = terminal_position(tree, z0, plan, friction)
    scale = 1.0 + float(np.abs(plan.rates).max())
    assets = vt[:, 1:]
    if constraint == "flat" and np.any(np.abs(assets) > 1e-8 * scale):
        raise PlanNotFlat("terminal asset positions are not zero", worst=float(np.abs(assets).max()))
    if constraint == "nonneg" and np.any(assets < -1e-8 * scale):
        raise PlanNotFlat("terminal asset positions are negative", worst=float(assets.min()))
    Wv = np.zeros(tree.n_leaves) if W is None else np.broadcast_to(np.asarray(W, float), (tree.n_leaves,))
    x = vt[:, 0] + Wv
    up = utility.du(x)
    y_star = float(tree.expectation(up))
    dens = up / y_star
    dens_nodes = tree.node_expectation(dens)
    nt = tree.nonterminal
    Z = np.full((tree.n_nodes, tree.d), np.nan)
    Z[nt] = tree.prices[nt] + fr.eval_g_prime(friction, tree.prices[nt], plan.rates[nt])
    mart = _q_martingale_residual(tree, dens_nodes, Z)
    qn = tree.prob[nt] * dens_nodes[nt]
    orth = abs(float(qn @ (np.sum(plan.rates[nt] * Z[nt], axis=1) * tree.node_dt[nt])))
    objective = float(tree.expectation(utility.u(x)))
    try:
        gap = duality_gap_bound(tree, c, Wv, utility, friction, dens, Z, objective=objective).gap
    except CertificateInvalid:
        gap = math.inf  # Z is no Q-martingale, so it certifies nothing
    verdict = "optimal_certified" if mart <= tol and orth <= tol else "not_certified"
    return FocReport(
        y_star=y_star, q_density=dens, shadow_price=Z, martingale_residual=mart,
        orthogonality_residual=orth, duality_gap_bound=gap, objective=objective,
        verdict=verdict,
        metadata={"envelope_C": utility.env_C, "envelope_delta": utility.env_delta,
                  "integrability": "automatic on finite trees", "constraint": constraint})


def duality_gap_bound(tree, c, W, utility, friction, q_density, Z, objective=None,
                      y_grid=None, tol=1e-6):
    """Smallest dual bound over ``y > 0`` and its excess over ``objective``.

    Parameters
    ----------
    q_density : array_like
        ``dQ/dP`` per leaf (positive, P-mean one).
    Z : array_like, shape (n_nodes, d)
        Shadow prices on trading nodes (leaf rows are ignored); must be a
        Q-martingale between trading nodes.
    y_grid : array_like, optional
        Values of ``y`` to scan before a bounded refinement in ``log y``.
    """
    dens = np.asarray(q_density, dtype=float)
    if dens.shape != (tree.n_leaves,) or np.any(dens <= 0):
        raise CertificateInvalid("density must be positive with one value per leaf")
    if abs(tree.expectation(dens) - 1.0) > 1e-10:
        raise CertificateInvalid("density must have P-mean one", mean=float(tree.expectation(dens)))
    Z = np.asarray(Z, dtype=float)
    dens_nodes = tree.node_expectation(dens)
    mart = _q_martingale_residual(tree, dens_nodes, Z)
    if mart > tol * (1.0 + np.nanmax(np.abs(Z))):
        raise CertificateInvalid("shadow price is not a Q-martingale", residual=mart)
    Wv = np.zeros(tree.n_leaves) if W is None else np.broadcast_to(np.asarray(W, float), (tree.n_leaves,))
    nt = tree.nonterminal
    gstar = fr.eval_g_star(friction, tree.prices[nt], Z[nt] - tree.prices[nt]).value
    pen = float((tree.prob[nt] * dens_nodes[nt]) @ (gstar * tree.node_dt[nt]))
    lin = float(c) + float(tree.expectation(dens * Wv)) + pen

    def bound(logy):
        y = math.exp(logy)
        return float(tree.expectation(utility.conj(y * dens))) + y * lin

    grid = np.logspace(-8, 8, 161) if y_grid is None else np.asarray(y_grid, dtype=float)
    vals = [bound(math.log(y)) for y in grid]
    k = int(np.argmin(vals))
    lo = math.log(grid[max(k - 1, 0)])
    hi = math.log(grid[min(k + 1, len(grid) - 1)])
    best_y, best = grid[k], vals[k]
    if hi > lo:
        res = minimize_scalar(bound, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12})
        if res.fun < best:
            best_y, best = math.exp(res.x), float(res.fun)
    gap = None if objective is None else best - float(objective)
    return GapBound(best, best_y, gap)
