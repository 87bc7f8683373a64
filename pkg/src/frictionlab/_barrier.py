"""Log-barrier interior-point method for the tree programs.

Solves ``min f.x`` subject to linear constraints ``A x >= b`` and epigraph
constraints ``u_j >= G(phi_j)``, where ``u_j`` and ``phi_j`` are slices of
``x``.  Newton centring with backtracking, followed by a geometric increase of
the barrier weight ``t``.  After each centring ``1 / (t * slack)`` are the
Lagrange multipliers of the constraints (exact on the central path); they
are kept for every stage because the last ones can lose accuracy once the
active slacks approach rounding level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import friction as fr
from .errors import MaxIterations


@dataclass
class EpigraphBlock:
    friction: fr.FrictionSpec
    prices: np.ndarray  # (n, d)
    phi_idx: np.ndarray  # (n, d) int
    u_idx: np.ndarray  # (n,) int

    def slack(self, x):
        return x[self.u_idx] - fr.eval_g(self.friction, self.prices, x[self.phi_idx])


@dataclass
class BarrierResult:
    x: np.ndarray
    t: float
    lin_mult: np.ndarray
    epi_mult: list
    iterations: int
    n_constraints: int
    decrement: float
    history: list


def _barrier_value(x, t, f, A, b, blocks):
    s = A @ x - b
    if np.any(s <= 0):
        return np.inf
    val = t * (f @ x) - np.sum(np.log(s))
    for blk in blocks:
        h = blk.slack(x)
        if np.any(h <= 0):
            return np.inf
        val -= np.sum(np.log(h))
    return val


def _newton_system(x, t, f, A, b, blocks):
    s = A @ x - b
    g = t * f - A.T @ (1.0 / s)
    As = A / s[:, None]
    H = As.T @ As
    for blk in blocks:
        phi = x[blk.phi_idx]
        h = blk.slack(x)
        gp = fr.eval_g_prime(blk.friction, blk.prices, phi)
        hp = fr.g_hessian(blk.friction, blk.prices, phi)
        n, d = phi.shape
        # gradient of h: (-G', 1) on (phi, u)
        dh = np.concatenate([-gp, np.ones((n, 1))], axis=1)
        idx = np.concatenate([blk.phi_idx, blk.u_idx[:, None]], axis=1)
        np.add.at(g, idx, -dh / h[:, None])
        block = dh[:, :, None] * dh[:, None, :] / (h * h)[:, None, None]
        block[:, :d, :d] += hp / h[:, None, None]
        np.add.at(H, (idx[:, :, None], idx[:, None, :]), block)
    return g, H


def _solve(H, g):
    scale = np.sqrt(np.maximum(np.diag(H), 1e-300))
    Hs = H / scale[:, None] / scale[None, :]
    try:
        step = scipy.linalg.solve(Hs, -g / scale, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError):
        step = np.linalg.lstsq(Hs + 1e-14 * np.eye(len(g)), -g / scale, rcond=None)[0]
    return step / scale


def minimize(f, A, b, x0, blocks=(), gap=1e-10, max_iter=500, t0=1.0, mu=20.0,
             center_tol=1e-9):
    """Barrier method from a strictly feasible ``x0``.

    ``gap`` bounds ``m / t`` at termination, which on the central path is
    the duality gap of the returned point.
    """
    f = np.asarray(f, dtype=float)
    x = np.asarray(x0, dtype=float).copy()
    blocks = list(blocks)
    m = A.shape[0] + sum(blk.u_idx.size for blk in blocks)
    if not np.isfinite(_barrier_value(x, t0, f, A, b, blocks)):
        raise ValueError("barrier start point is not strictly feasible")
    t = t0
    it = 0
    lam2 = np.inf
    history = []
    while True:
        # centring
        for _ in range(100):
            g, H = _newton_system(x, t, f, A, b, blocks)
            dx = _solve(H, g)
            lam2 = float(-g @ dx)
            it += 1
            if lam2 <= 2 * center_tol:
                break
            if it > max_iter:
                raise MaxIterations("barrier method exceeded its Newton budget",
                                    best=x.copy(), iterations=it)
            # largest step keeping the linear slacks positive
            Adx = A @ dx
            s = A @ x - b
            neg = Adx < 0
            step = min(1.0, 0.99 * float(np.min(-s[neg] / Adx[neg]))) if np.any(neg) else 1.0
            f0 = _barrier_value(x, t, f, A, b, blocks)
            while step > 1e-14:
                f1 = _barrier_value(x + step * dx, t, f, A, b, blocks)
                if f1 <= f0 - 0.25 * step * lam2 or (np.isfinite(f1) and abs(f1 - f0) <= 1e-13 * abs(f0)
                                                     and lam2 < 1e-6):
                    break
                step *= 0.5
            if step <= 1e-14:
                break
            x = x + step * dx
        history.append((t, 1.0 / (t * (A @ x - b))))
        if m / t <= gap:
            break
        t *= mu
    s = A @ x - b
    return BarrierResult(x=x, t=t, lin_mult=1.0 / (t * s),
                         epi_mult=[1.0 / (t * blk.slack(x)) for blk in blocks],
                         iterations=it, n_constraints=m, decrement=lam2, history=history)
