"""Superhedging on scenario trees: primal solver, martingale certificates and
the dual bound.

The primal program is

    minimise c  subject to  V_T(c, z, phi) >= W  at every leaf,

with node-indexed rates ``phi``.  Its dual ranges over nonnegative
(d+1)-dimensional P-martingales ``Z`` with ``E Z^0_T = 1`` and has value

    E[Z_T . W] - E sum_n Z^0_n G*(Zbar_n - S_n) dt_n,    Zbar = Ztilde / Z^0.

On finite trees the two coincide, and the interior-point solver returns both
the plan and a certificate built from its Lagrange multipliers.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import _barrier
from . import friction as fr
from .config import SolverConfig
from .errors import (CertificateInvalid, ConjugateDiverged, MaxIterations, PlanInfeasibleForClaim,
                     ShapeMismatch, Unbounded)
from .wealth import TradingRatePlan, terminal_position

MARTINGALE_TOL = 1e-10


# ---------------------------------------------------------------------------
# data types


@dataclass(frozen=True, eq=False)
class Claim:
    """Target position per leaf: cash ``W[:, 0]`` and asset units ``W[:, 1:]``."""

    W: np.ndarray

    def __post_init__(self):
        w = np.array(self.W, dtype=float, ndmin=2)
        if not np.all(np.isfinite(w)):
            raise ShapeMismatch("claim has non-finite entries")
        w.setflags(write=False)
        object.__setattr__(self, "W", w)

    @classmethod
    def cash(cls, tree, values):
        w = np.zeros((tree.n_leaves, tree.d + 1))
        w[:, 0] = np.broadcast_to(np.asarray(values, dtype=float), (tree.n_leaves,))
        return cls(w)

    @classmethod
    def zero(cls, tree):
        return cls(np.zeros((tree.n_leaves, tree.d + 1)))

    def check(self, tree):
        if self.W.shape != (tree.n_leaves, tree.d + 1):
            raise ShapeMismatch("claim must give d+1 values per leaf",
                                expected=[tree.n_leaves, tree.d + 1], got=list(self.W.shape))
        return self


@dataclass(frozen=True, eq=False)
class MartingaleCertificate:
    """Nonnegative (d+1)-vector P-martingale on the tree, one row per node."""

    Z: np.ndarray

    def __post_init__(self):
        z = np.array(self.Z, dtype=float, ndmin=2)
        z.setflags(write=False)
        object.__setattr__(self, "Z", z)

    @classmethod
    def from_leaves(cls, tree, leaf_values, normalize=True):
        """Martingale generated by its terminal values (backward expectation)."""
        y = np.array(leaf_values, dtype=float, ndmin=2)
        if y.shape != (tree.n_leaves, tree.d + 1):
            raise ShapeMismatch("leaf values must have shape (n_leaves, d+1)")
        if normalize:
            mass = tree.expectation(y[:, 0])
            if not mass > 0:
                raise CertificateInvalid("cash component has zero mass")
            y = y / mass
        y[y[:, 0] <= 0, 1:] = 0.0
        return cls(tree.node_expectation(y))

    @classmethod
    def frictionless(cls, tree):
        """``Z^0 = 1`` and ``Ztilde = E[S_T | node]``; equals ``S`` on martingale trees."""
        y = np.concatenate([np.ones((tree.n_leaves, 1)), tree.prices[tree.leaves]], axis=1)
        return cls.from_leaves(tree, np.maximum(y, 0.0))

    def leaf_values(self, tree):
        return self.Z[tree.leaves]

    def validate(self, tree, tol=MARTINGALE_TOL):
        z = self.Z
        if z.shape != (tree.n_nodes, tree.d + 1):
            raise CertificateInvalid("certificate shape does not match the tree",
                                     expected=[tree.n_nodes, tree.d + 1], got=list(z.shape))
        if not np.all(np.isfinite(z)):
            raise CertificateInvalid("certificate has non-finite entries")
        if np.any(z < -tol):
            raise CertificateInvalid("certificate has negative entries", min=float(z.min()))
        if abs(z[0, 0] - 1.0) > tol:
            raise CertificateInvalid("cash component must start at one", root=float(z[0, 0]))
        for i in tree.nonterminal:
            c = tree.children[i]
            defect = np.max(np.abs(tree.q[c] @ z[c] - z[i]))
            if defect > tol * (1.0 + np.abs(z[i]).max()):
                raise CertificateInvalid("certificate is not a martingale",
                                         node=str(tree.ids[i]), defect=float(defect))
        dead = z[:, 0] <= 0
        if np.any(np.abs(z[dead, 1:]) > tol):
            raise CertificateInvalid("asset components must vanish where the cash component does")
        return self


@dataclass(eq=False)
class SolveReport:
    """Outcome of a solver run."""

    status: str
    primal_value: float
    plan: TradingRatePlan | None = None
    certificate: MartingaleCertificate | None = None
    dual_value: float | None = None
    duality_gap: float | None = None
    kkt_residuals: dict = field(default_factory=dict)
    iterations: int = 0
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class WeakDualityCheck:
    lhs: float
    rhs: float
    ok: bool


@dataclass(eq=False)
class DualResult:
    """Best certificate found by :func:`maximize_dual`.

    Unpacks as ``(certificate, value)``.
    """

    certificate: MartingaleCertificate
    value: float
    iterations: int
    converged: bool

    def __iter__(self):
        yield self.certificate
        yield self.value


# ---------------------------------------------------------------------------
# dual objective


def _perspective(friction, s, z0, zt):
    """``z0 G*(zt/z0 - s)`` with its partial derivatives.

    At ``z0 = 0`` the closure of the perspective is 0 when ``zt = 0`` and
    ``+inf`` otherwise.  Derivatives there are taken along the ray
    ``zt = z0 s``, on which the penalty is smallest.
    """
    live = z0 > 0
    zbar = np.where(live[:, None], zt / np.where(live, z0, 1.0)[:, None], s)
    ev = fr.eval_g_star(friction, s, zbar - s)
    gstar = np.asarray(ev.value, dtype=float)
    val = np.where(live, z0 * gstar, np.where(np.any(zt != 0, axis=-1), np.inf, 0.0))
    d_zt = ev.argsup
    d_z0 = gstar - np.sum(ev.argsup * zbar, axis=-1)
    return val, d_z0, d_zt


def node_penalty(tree, cert, friction):
    """Per-node term ``Z^0_n G*(Zbar_n - S_n) dt_n`` (zero on leaves)."""
    nt = tree.nonterminal
    z = cert.Z
    out = np.zeros(tree.n_nodes)
    z0 = z[nt, 0]
    zt = np.where((z0 > 0)[:, None], z[nt, 1:], 0.0)
    val, _, _ = _perspective(friction, tree.prices[nt], z0, zt)
    out[nt] = val * tree.node_dt[nt]
    return out


def penalty(tree, cert, friction):
    """``E sum_n Z^0_n G*(Zbar_n - S_n) dt_n``."""
    return float(tree.prob @ node_penalty(tree, cert, friction))


def dual_value(tree, cert, claim, friction, tol=MARTINGALE_TOL):
    """Dual bound ``E[Z_T.W] - E sum Z^0 G*(Zbar - S) dt`` of a certificate."""
    claim.check(tree)
    cert.validate(tree, tol)
    gain = tree.expectation(np.sum(cert.leaf_values(tree) * claim.W, axis=1))
    return float(gain - penalty(tree, cert, friction))


def verify_weak_duality(tree, z, plan, claim, cert, friction, tol=1e-8):
    """Check ``Z_0.z >= dual_value`` for a plan that superhedges the claim."""
    claim.check(tree)
    z = np.asarray(z, dtype=float)
    vt = terminal_position(tree, z, plan, friction)
    short = claim.W - vt
    if np.any(short > 1e-9 * (1.0 + np.abs(claim.W))):
        raise PlanInfeasibleForClaim("plan does not superhedge the claim",
                                     worst=float(short.max()))
    lhs = float(cert.Z[0] @ z)
    rhs = dual_value(tree, cert, claim, friction)
    return WeakDualityCheck(lhs, rhs, lhs >= rhs - tol)


# ---------------------------------------------------------------------------
# primal solver


def _layout(tree):
    n_nt = tree.nonterminal.size
    d = tree.d
    phi_idx = 1 + np.arange(n_nt * d).reshape(n_nt, d)
    u_idx = 1 + n_nt * d + np.arange(n_nt)
    return phi_idx, u_idx, 1 + n_nt * (d + 1)


def _tabulated_rows(friction, phi_idx, u_idx, nvar):
    gx, gg = friction.grid_x, friction.grid_g
    slope = np.diff(gg) / np.diff(gx)
    icpt = gg[:-1] - slope * gx[:-1]
    rows, rhs = [], []
    for j in range(u_idx.size):
        block = np.zeros((slope.size, nvar))
        block[:, u_idx[j]] = 1.0
        block[:, phi_idx[j, 0]] = -slope
        rows.append(block)
        rhs.append(icpt)
    return np.vstack(rows), np.concatenate(rhs)


def _program(tree, W, friction, z_assets):
    """Constraint matrices for ``min c`` s.t. ``V_T >= W`` (barrier form)."""
    nt = tree.nonterminal
    d, L = tree.d, tree.n_leaves
    phi_idx, u_idx, nvar = _layout(tree)
    anc = tree.ancestors[:, nt].astype(float) * tree.node_dt[nt][None, :]  # (L, n_nt)
    s = tree.prices[nt]

    cash = np.zeros((L, nvar))
    cash[:, 0] = 1.0
    for i in range(d):
        cash[:, phi_idx[:, i]] = -anc * s[:, i][None, :]
    cash[:, u_idx] = -anc
    rows, rhs = [cash], [W[:, 0]]
    for i in range(d):
        a = np.zeros((L, nvar))
        a[:, phi_idx[:, i]] = anc
        rows.append(a)
        rhs.append(W[:, 1 + i] - z_assets[i])
    blocks = []
    if friction.kind == "Tabulated":
        a, r = _tabulated_rows(friction, phi_idx, u_idx, nvar)
        rows.append(a)
        rhs.append(r)
    else:
        blocks.append(_barrier.EpigraphBlock(friction, s, phi_idx, u_idx))
    A = np.vstack(rows)
    b = np.concatenate(rhs)

    # strictly feasible start: buy enough of every asset, pay for it with cash
    x0 = np.zeros(nvar)
    horizon = tree.grid.horizon
    for i in range(d):
        x0[phi_idx[:, i]] = (np.max(W[:, 1 + i] - z_assets[i]) + 1.0) / horizon
    phi0 = x0[phi_idx]
    if friction.kind == "Tabulated":
        gx, gg = friction.grid_x, friction.grid_g
        slope = np.diff(gg) / np.diff(gx)
        icpt = gg[:-1] - slope * gx[:-1]
        g0 = np.max(phi0[:, :1] * slope[None, :] + icpt[None, :], axis=1)
    else:
        g0 = fr.eval_g(friction, s, phi0)
    x0[u_idx] = g0 + 1.0
    spend = anc @ (np.sum(phi0 * s, axis=1) + x0[u_idx])
    x0[0] = np.max(W[:, 0] + spend) + 1.0
    return A, b, blocks, x0, phi_idx, u_idx, nvar


def superhedge_price(tree, claim, friction, cfg=None, z_assets=None):
    """Minimal initial cash superhedging ``claim`` (componentwise at every leaf).

    Parameters
    ----------
    tree : ScenarioTree
    claim : Claim
    friction : FrictionSpec
    cfg : SolverConfig, optional
    z_assets : array_like, optional
        Initial asset holdings (default zero).

    Returns
    -------
    SolveReport
        ``primal_value`` is the price, ``plan`` a superhedging plan and
        ``certificate`` the martingale built from the solver's multipliers.

    Raises
    ------
    Unbounded
        If the price exceeds ``cfg.ceiling``.
    MaxIterations
        If the Newton budget is exhausted.
    """
    cfg = cfg or SolverConfig()
    claim.check(tree)
    start = time.perf_counter()
    W = claim.W
    d = tree.d
    z_assets = np.zeros(d) if z_assets is None else np.asarray(z_assets, dtype=float)
    A, b, blocks, x0, phi_idx, u_idx, nvar = _program(tree, W, friction, z_assets)
    scale = 1.0 + float(np.max(np.abs(W))) + float(np.max(np.abs(tree.prices)))
    res = _barrier.minimize(np.eye(nvar)[0], A, b, x0, blocks,
                            gap=cfg.gap_tol * 0.1 * scale, max_iter=cfg.max_iter)
    x = res.x
    c = float(x[0])
    if not np.isfinite(c) or abs(c) > cfg.ceiling:
        raise Unbounded("superhedging price exceeds the configured ceiling", value=c,
                        ceiling=cfg.ceiling)

    rates = np.zeros((tree.n_nodes, d))
    rates[tree.nonterminal] = x[phi_idx]
    plan = TradingRatePlan(rates, "tree")

    L = tree.n_leaves
    cert, dual, mass = None, -np.inf, None
    for _, mult in res.history[-6:]:
        leaf = np.empty((L, d + 1))
        leaf[:, 0] = mult[:L]
        for i in range(d):
            leaf[:, 1 + i] = mult[L * (1 + i):L * (2 + i)]
        leaf /= tree.leaf_prob[:, None]
        cand = MartingaleCertificate.from_leaves(tree, leaf)
        val = dual_value(tree, cand, claim, friction, tol=1e-8)
        if val > dual:
            cert, dual, mass = cand, val, float(mult[:L].sum())

    vt = terminal_position(tree, np.concatenate([[c], z_assets]), plan, friction)
    infeas = float(max(0.0, np.max(W - vt)))
    gap = c - dual
    status = "optimal" if gap <= cfg.gap_tol * scale and infeas <= cfg.feas_tol else "inexact"
    return SolveReport(
        status=status, primal_value=c, plan=plan, certificate=cert, dual_value=dual,
        duality_gap=gap,
        kkt_residuals={"primal_infeasibility": infeas,
                       "complementarity": res.n_constraints / res.t,
                       "newton_decrement": res.decrement},
        iterations=res.iterations, wall_time=time.perf_counter() - start,
        extra={"multiplier_mass": mass})


# ---------------------------------------------------------------------------
# dual solver


def _project(y, p, floor=0.0):
    """P-weighted projection onto ``{y >= 0, y^0 >= floor, E y^0 = 1}``."""
    out = np.maximum(y, 0.0)
    v = y[:, 0] - floor
    target = 1.0 - floor
    # y0 - floor = max(v + tau, 0) with tau fixed by the mass constraint
    order = np.argsort(-v)
    vs, ps = v[order], p[order]
    taus = (target - np.cumsum(ps * vs)) / np.cumsum(ps)
    active = np.flatnonzero(vs + taus > 0)
    # the first index is always admissible; rounding can hide it for huge v
    j = int(active[-1]) if active.size else 0
    out[:, 0] = np.maximum(v + taus[j], 0.0) + floor
    out[:, 0] /= p @ out[:, 0]
    return out


def _settle(y, p, floor=1e-12):
    """Give a tiny cash weight to leaves carrying asset weight without cash."""
    y = y.copy()
    bad = (y[:, 0] <= 0) & np.any(y[:, 1:] > 0, axis=1)
    y[bad, 0] = floor
    return y / (p @ y[:, 0])


class _DualModel:
    """Dual objective as a function of terminal certificate values."""

    def __init__(self, tree, W, friction):
        self.tree = tree
        self.W = W
        self.friction = friction
        self.p = tree.leaf_prob
        nt = tree.nonterminal
        self.nt = nt
        self.anc_dt = tree.ancestors[:, nt].astype(float) * tree.node_dt[nt][None, :]
        self.pdt = tree.prob[nt] * tree.node_dt[nt]

    def value_grad(self, y):
        """Objective and its gradient in the P-weighted inner product."""
        tree, nt = self.tree, self.nt
        z = tree.node_expectation(y)
        try:
            val, d0, dt_ = _perspective(self.friction, tree.prices[nt], z[nt, 0], z[nt, 1:])
        except ConjugateDiverged:
            return -np.inf, None
        obj = self.p @ np.sum(y * self.W, axis=1) - self.pdt @ val
        grad = self.W - self.anc_dt @ np.concatenate([d0[:, None], dt_], axis=1)
        return float(obj), grad

    def hessian(self, y):
        """Euclidean Hessian of the objective (negative semidefinite)."""
        tree, nt = self.tree, self.nt
        z = tree.node_expectation(y)[nt]
        z0, zbar = z[:, 0], z[:, 1:] / z[:, :1]
        hs = fr.g_star_hessian(self.friction, tree.prices[nt], zbar - tree.prices[nt])
        d = tree.d
        n = nt.size
        hp = np.empty((n, d + 1, d + 1))
        hz = np.einsum("nij,nj->ni", hs, zbar)
        hp[:, 0, 0] = np.einsum("ni,ni->n", zbar, hz)
        hp[:, 0, 1:] = -hz
        hp[:, 1:, 0] = -hz
        hp[:, 1:, 1:] = hs
        hp /= z0[:, None, None]
        # Z_n = sum_l (P_l / P_n) a_nl Y_l
        e = self.tree.ancestors[:, nt].astype(float) * self.p[:, None]  # (L, n)
        w = self.tree.node_dt[nt] / self.tree.prob[nt]
        L = y.shape[0]
        H = np.empty((L, d + 1, L, d + 1))
        for a in range(d + 1):
            for b in range(d + 1):
                H[:, a, :, b] = -(e * (w * hp[:, a, b])[None, :]) @ e.T
        return H.reshape(L * (d + 1), L * (d + 1))


def _fista(model, y, max_iter, tol, floor):
    p = model.p

    def inner(a):
        return float(p @ np.sum(a, axis=1))

    fy, gy = model.value_grad(y)
    best_y, best_f = y, fy
    v, fv, gv = y, fy, gy
    lip, theta = 1.0, 1.0
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        while True:
            cand = _project(v + gv / lip, p, floor)
            fc, gc = model.value_grad(cand)
            diff = cand - v
            if np.isfinite(fc) and fc >= fv + inner(gv * diff) - 0.5 * lip * inner(diff * diff) - 1e-14 * abs(fv):
                break
            lip *= 2.0
        if fc > best_f:
            best_y, best_f = cand, fc
        if math.sqrt(inner(diff * diff)) * lip <= tol * (1.0 + abs(fc)):
            converged = True
            break
        if fc < fy:  # adaptive restart
            theta = 1.0
            v, fv, gv = y, fy, gy
            continue
        theta_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * theta * theta))
        v = _project(cand + ((theta - 1.0) / theta_next) * (cand - y), p, floor)
        y, fy, gy = cand, fc, gc
        fv, gv = model.value_grad(v)
        if gv is None:
            v, fv, gv = y, fy, gy
        theta = theta_next
        lip *= 0.9
    return best_y, best_f, it, converged


def _barrier_ascent(model, y, gap, max_iter):
    """Equality-constrained Newton on ``t*D(Y) + sum log Y`` with ``E Y^0 = 1``."""
    p = model.p
    L, k = y.shape
    m = y.size
    a = np.zeros(m)
    a[0::k] = p
    y = np.maximum(y, 1e-3 * np.maximum(y.max(axis=0), 1e-3)[None, :])
    y[:, 0] /= p @ y[:, 0]
    pw = np.repeat(p, k)

    def merit(yy, t):
        if np.any(yy <= 0):
            return -np.inf
        f, _ = model.value_grad(yy)
        return t * f + np.sum(np.log(yy))

    t = 1.0
    it = 0
    while True:
        for _ in range(200):
            f, g = model.value_grad(y)
            grad = t * g.ravel() * pw + 1.0 / y.ravel()
            H = t * model.hessian(y) - np.diag(1.0 / y.ravel() ** 2)
            kkt = np.zeros((m + 1, m + 1))
            kkt[:m, :m] = -H
            kkt[:m, m] = a
            kkt[m, :m] = a
            rhs = np.concatenate([grad, [0.0]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
            dy = sol[:m]
            dec = float(grad @ dy)
            it += 1
            if dec <= 1e-9 or it >= max_iter:
                break
            dyr = dy.reshape(L, k)
            neg = dyr < 0
            step = min(1.0, 0.99 * float(np.min(-y[neg] / dyr[neg]))) if np.any(neg) else 1.0
            f0 = merit(y, t)
            while step > 1e-14:
                f1 = merit(y + step * dyr, t)
                if f1 >= f0 + 0.25 * step * dec or (np.isfinite(f1) and abs(f1 - f0) <= 1e-13 * abs(f0)
                                                    and dec < 1e-6):
                    break
                step *= 0.5
            if step <= 1e-14:
                break
            y = y + step * dyr
            y[:, 0] /= p @ y[:, 0]
        if m / t <= gap or it >= max_iter:
            break
        t *= 20.0
    return y, it, m / t <= gap


def _tabulated_dual_lp(tree, W, friction):
    """Exact dual for a tabulated friction as a linear program.

    With ``G`` piecewise linear, ``z0 G*(zt/z0 - s)`` is the maximum of the
    vertex terms ``x_i (zt - s z0) - g_i z0``, finite only while
    ``zt - s z0`` stays within the end slopes times ``z0``.  Variables are
    the leaf values ``Y`` and one epigraph variable per trading node.
    """
    gx, gg = friction.grid_x, friction.grid_g
    lo = (gg[1] - gg[0]) / (gx[1] - gx[0])
    hi = (gg[-1] - gg[-2]) / (gx[-1] - gx[-2])
    L, nt = tree.n_leaves, tree.nonterminal
    n = nt.size
    # Z_n = sum_l A[n, l] Y_l
    A = (tree.ancestors[:, nt].T * tree.leaf_prob[None, :]) / tree.prob[nt][:, None]
    s = tree.prices[nt, 0]
    # y_n = Z1_n - s_n Z0_n as a row operator on [Y0, Y1]
    Y0 = -A * s[:, None]
    Y1 = A
    rows = []
    for xi, gi in zip(gx, gg):
        rows.append(sp.hstack([sp.csr_matrix(xi * Y0 - gi * A), sp.csr_matrix(xi * Y1), -sp.eye(n)]))
    zero = sp.csr_matrix((n, n))
    rows.append(sp.hstack([sp.csr_matrix(Y0 - hi * A), sp.csr_matrix(Y1), zero]))
    rows.append(sp.hstack([sp.csr_matrix(lo * A - Y0), sp.csr_matrix(-Y1), zero]))
    A_ub = sp.vstack(rows).tocsr()
    b_ub = np.zeros(A_ub.shape[0])
    p = tree.leaf_prob
    c = -np.concatenate([p * W[:, 0], p * W[:, 1], -tree.prob[nt] * tree.node_dt[nt]])
    A_eq = np.concatenate([p, np.zeros(L + n)])[None, :]
    bounds = [(0, None)] * (2 * L) + [(None, None)] * n
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=[1.0], bounds=bounds, method="highs")
    if res.status != 0:
        raise MaxIterations(f"dual linear program failed: {res.message}")
    y = np.maximum(res.x[:2 * L].reshape(2, L).T, 0.0)
    return y, int(getattr(res, "nit", 0))


def maximize_dual(tree, claim, friction, cfg=None, warm_start=None, method="newton",
                  max_iter=None, tol=1e-9):
    """Maximise the dual bound over martingale certificates.

    The certificate is parametrised by its terminal values; interior values
    follow by backward conditional expectation, so the feasible set is
    ``Z_T >= 0`` with ``E Z^0_T = 1``.  Tabulated frictions make the dual a
    linear program, which is solved exactly unless ``method="fista"``.
    Otherwise a projected-gradient phase (FISTA
    with backtracking and adaptive restart) runs first.  With
    ``method="newton"`` (the default for differentiable frictions) the result
    is then refined by a log-barrier Newton ascent on the same set, which
    reaches the optimum to high accuracy even when it sits on the boundary.

    Returns
    -------
    DualResult
        Unpacks as ``(certificate, value)``; ``converged`` is False when the
        iteration cap was hit.
    """
    cfg = cfg or SolverConfig()
    claim.check(tree)
    model = _DualModel(tree, claim.W, friction)
    p = model.p
    if method not in ("newton", "fista"):
        raise ValueError(f"unknown method {method!r}")
    if friction.kind == "Tabulated" and method == "newton":
        y, it = _tabulated_dual_lp(tree, claim.W, friction)
        cert = MartingaleCertificate.from_leaves(tree, _settle(y, p))
        return DualResult(cert, dual_value(tree, cert, claim, friction, tol=1e-8), it, True)
    if not friction.differentiable:
        method = "fista"

    if warm_start is not None:
        y0 = np.array(warm_start.leaf_values(tree), dtype=float)
    else:
        y0 = np.concatenate([np.ones((tree.n_leaves, 1)),
                             np.maximum(tree.prices[tree.leaves], 0.0)], axis=1)
    floor = 1e-9
    y0 = _project(y0, p, floor)
    n_first = max_iter or (50_000 if method == "fista" else 200)
    y, _, it, converged = _fista(model, y0, n_first, tol, floor)
    if method == "newton":
        scale = 1.0 + float(np.abs(claim.W).max()) + float(np.abs(tree.prices).max())
        y, it2, converged = _barrier_ascent(model, y, cfg.gap_tol * 0.1 * scale, max_iter=max(cfg.max_iter, 500))
        it += it2
    cert = MartingaleCertificate.from_leaves(tree, _settle(y, p))
    return DualResult(cert, dual_value(tree, cert, claim, friction, tol=1e-8), it, converged)


# ---------------------------------------------------------------------------
# Exploding dual family: GBM with quadratic impact and a cash claim paying S_T


def _int_exp(rate, length):
    """``int_0^length exp(rate * t) dt``."""
    if abs(rate * length) < 1e-12:
        return length * (1.0 + 0.5 * rate * length)
    return math.expm1(rate * length) / rate


def example1_moments(params, T, n, x, t):
    """Closed-form ``E[Z0_t S_t]`` and ``E[S0^2 Z0_t / S_t]`` for the exponential family.

    ``Z0`` adds drift ``-sigma`` to the Brownian motion up to ``a = T - 1/n``
    and drift ``x - sigma`` afterwards.
    """
    s0, mu, sig = params.s0, params.mu, params.sigma
    a = T - 1.0 / n
    t = np.asarray(t, dtype=float)
    tau = np.maximum(t - a, 0.0)
    tl = np.minimum(t, a)
    zs = s0 * np.exp((mu - sig * sig) * tl + (mu + sig * x - sig * sig) * tau)
    inv = s0 * np.exp((2 * sig * sig - mu) * tl + (2 * sig * sig - mu - sig * x) * tau)
    return zs, inv


def example1_dual_family(params, lam, T, n, x):
    """Dual value of the exploding certificate family for the claim paying ``S_T`` in cash.

    Evaluates ``E[S_T Z0_T] - (1/(2 lam)) int_0^T (E[S0^2 Z0_t/S_t] - 2 S0
    + E[Z0_t S_t]) dt`` with every time integral in closed form.
    """
    if not n > 1.0 / T:
        raise ValueError("n must exceed 1/T")
    if not x > 0:
        raise ValueError("x must be positive")
    s0, mu, sig = params.s0, params.mu, params.sigma
    a = T - 1.0 / n
    h = 1.0 / n
    zs_T, _ = example1_moments(params, T, n, x, T)
    zs_a = s0 * math.exp((mu - sig * sig) * a)
    inv_a = s0 * math.exp((2 * sig * sig - mu) * a)
    integral = (s0 * _int_exp(2 * sig * sig - mu, a) + s0 * _int_exp(mu - sig * sig, a)
                + inv_a * _int_exp(2 * sig * sig - mu - sig * x, h)
                + zs_a * _int_exp(mu + sig * x - sig * sig, h)
                - 2.0 * s0 * T)
    return float(zs_T) - integral / (2.0 * lam)


def example1_x(n, sigma):
    """Drift size ``n ln n / sigma`` that makes the family diverge."""
    return n * math.log(n) / sigma


def example1_monte_carlo(params, T, n, x, t, n_paths, seed=0, method="girsanov"):
    """Monte Carlo estimates of the two moments at time ``t``.

    ``method="direct"`` samples the Brownian motion under P and weights by
    ``Z0_t``; ``"girsanov"`` samples under the measure with density ``Z0_T``,
    where the two moments become plain expectations of ``S_t`` and
    ``S0^2 / S_t``.  Returns ``(means, standard_errors)``, each of length 2.
    """
    s0, mu, sig = params.s0, params.mu, params.sigma
    a = T - 1.0 / n
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 1]))
    t1 = min(t, a)
    w_a = rng.normal(0.0, math.sqrt(t1), n_paths)
    w_b = rng.normal(0.0, math.sqrt(max(t - a, 0.0)), n_paths)
    if method == "girsanov":
        w_t = w_a + w_b - sig * t1 + (x - sig) * max(t - a, 0.0)
        st = s0 * np.exp((mu - 0.5 * sig * sig) * t + sig * w_t)
        samples = np.stack([st, s0 * s0 / st])
    elif method == "direct":
        tau = max(t - a, 0.0)
        w_t = w_a + w_b
        z0 = np.exp(-sig * w_a - 0.5 * sig * sig * t1 + (x - sig) * w_b - 0.5 * (x - sig) ** 2 * tau)
        st = s0 * np.exp((mu - 0.5 * sig * sig) * t + sig * w_t)
        samples = np.stack([z0 * st, s0 * s0 * z0 / st])
    else:
        raise ValueError(f"unknown method {method!r}")
    mean = samples.mean(axis=1)
    se = samples.std(axis=1, ddof=1) / math.sqrt(n_paths)
    return mean, se


__all__ = [
    "Claim", "MartingaleCertificate", "SolveReport", "WeakDualityCheck", "DualResult",
    "dual_value", "penalty", "node_penalty", "verify_weak_duality", "superhedge_price",
    "maximize_dual", "example1_dual_family", "example1_moments", "example1_monte_carlo",
    "example1_x",
]
