"""Friction functionals, their Fenchel conjugates and gradients.

A friction ``G`` maps a trading rate ``x`` (a d-vector of shares per unit of
time) to a cash cost rate.  All evaluators are vectorised over leading axes:
``x`` and ``y`` have shape ``(..., d)`` and results have shape ``(...)``.  A
bare scalar is treated as a 1-vector.

Four kinds are supported:

``PowerScalar``       ``G(x) = lam * |x|**alpha + K``
``QuadraticImpact``   ``G(x) = lam/2 * sum_i s_i x_i**2 + K`` (price scaled)
``MatrixQuadratic``   ``G(x) = x' M x + K``
``Tabulated``         convex piecewise-linear interpolation of a 1-d table
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConjugateDiverged,
    InvalidFriction,
    InvalidPrice,
    NonConvexTabulation,
    NotDifferentiable,
)

KINDS = ("PowerScalar", "QuadraticImpact", "MatrixQuadratic", "Tabulated")
DIFFERENTIABLE_KINDS = ("PowerScalar", "QuadraticImpact", "MatrixQuadratic")

ABS_TOL = 1e-9
REL_TOL = 1e-6

# smallest |x| used when evaluating the curvature of |x|**alpha, alpha < 2
_CURVATURE_FLOOR = 1e-12
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class FrictionSpec:
    """Immutable description of a friction functional.

    Use the ``power``, ``quadratic_impact``, ``matrix_quadratic`` and
    ``tabulated`` constructors rather than the raw initialiser.
    """

    kind: str
    lambda_coef: float = 1.0
    alpha: float = 2.0
    impact_matrix: np.ndarray | None = None
    participation_cost: float = 0.0
    h_floor: float | None = None
    grid_x: np.ndarray | None = field(default=None, repr=False)
    grid_g: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def power(cls, lam, alpha=2.0, participation_cost=0.0, h_floor=None):
        return cls("PowerScalar", lambda_coef=float(lam), alpha=float(alpha),
                   participation_cost=float(participation_cost),
                   h_floor=None if h_floor is None else float(h_floor))

    @classmethod
    def quadratic_impact(cls, lam, participation_cost=0.0, h_floor=None):
        return cls("QuadraticImpact", lambda_coef=float(lam), alpha=2.0,
                   participation_cost=float(participation_cost),
                   h_floor=None if h_floor is None else float(h_floor))

    @classmethod
    def matrix_quadratic(cls, matrix, participation_cost=0.0, h_floor=None):
        m = np.array(matrix, dtype=float, ndmin=2)
        m.setflags(write=False)
        return cls("MatrixQuadratic", lambda_coef=float("nan"), alpha=2.0,
                   impact_matrix=m, participation_cost=float(participation_cost),
                   h_floor=None if h_floor is None else float(h_floor))

    @classmethod
    def tabulated(cls, grid_x, grid_g, h_floor, alpha):
        gx = np.array(grid_x, dtype=float)
        gg = np.array(grid_g, dtype=float)
        if gx.ndim != 1 or gx.shape != gg.shape or gx.size < 3:
            raise InvalidFriction("tabulated friction needs two 1-d arrays of equal length >= 3")
        order = np.argsort(gx)
        gx, gg = gx[order], gg[order]
        gx.setflags(write=False)
        gg.setflags(write=False)
        k0 = float(_interp_extend(gx, gg, np.zeros(1))[0]) if gx[0] <= 0 <= gx[-1] else float("nan")
        return cls("Tabulated", lambda_coef=float("nan"), alpha=float(alpha),
                   participation_cost=k0, h_floor=float(h_floor), grid_x=gx, grid_g=gg)

    @property
    def dim(self):
        """Number of assets fixed by the spec, or None if any d works."""
        if self.kind == "MatrixQuadratic":
            return self.impact_matrix.shape[0]
        if self.kind == "Tabulated":
            return 1
        return None

    @property
    def needs_price(self):
        return self.kind == "QuadraticImpact"

    @property
    def differentiable(self):
        return self.kind in DIFFERENTIABLE_KINDS

    @property
    def envelope_floor(self):
        """Coefficient H of the lower envelope ``G(x) >= H |x|**alpha``."""
        if self.h_floor is not None:
            return self.h_floor
        if self.kind == "PowerScalar":
            return self.lambda_coef
        if self.kind == "MatrixQuadratic":
            return float(np.linalg.eigvalsh(_sym(self.impact_matrix)).min())
        return None


@dataclass(frozen=True)
class DualEval:
    """Value of ``G*(y)`` and a maximiser of ``x.y - G(x)``."""

    value: float | np.ndarray
    argsup: np.ndarray


def _sym(m):
    return 0.5 * (m + m.T)


def _as_vec(x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1)
    return x


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


def _conj_coef(alpha, coef):
    """Coefficient c with sup_x (x y - coef |x|^alpha) = c |y|^(alpha/(alpha-1))."""
    return ((alpha - 1.0) / alpha) * alpha ** (1.0 / (1.0 - alpha)) * coef ** (1.0 / (1.0 - alpha))


def _price(spec, s, shape):
    if s is None:
        raise InvalidPrice(f"{spec.kind} friction needs the asset price")
    s = _as_vec(s)
    if not np.all(np.isfinite(s)):
        raise InvalidPrice("non-finite price")
    if np.any(s <= 0):
        raise InvalidPrice("QuadraticImpact friction requires strictly positive prices",
                           min_price=float(np.min(s)))
    return np.broadcast_to(s, shape)


def _interp_extend(gx, gg, x):
    """Piecewise-linear interpolation, extended linearly by the end slopes."""
    y = np.interp(x, gx, gg)
    left_slope = (gg[1] - gg[0]) / (gx[1] - gx[0])
    right_slope = (gg[-1] - gg[-2]) / (gx[-1] - gx[-2])
    y = np.where(x < gx[0], gg[0] + left_slope * (x - gx[0]), y)
    y = np.where(x > gx[-1], gg[-1] + right_slope * (x - gx[-1]), y)
    return y


def _check_dim(spec, x):
    d = spec.dim
    if d is not None and x.shape[-1] != d:
        raise InvalidFriction(f"{spec.kind} friction is {d}-dimensional, got vectors of size {x.shape[-1]}")


# ---------------------------------------------------------------------------
# validation


def validate(spec, probe=None, tol=ABS_TOL):
    """Check the friction axioms; return ``spec`` unchanged on success.

    Checks parameter ranges, then on a probe grid: minimum at zero, the
    superlinear lower envelope and midpoint convexity.
    """
    if spec.kind not in KINDS:
        raise InvalidFriction(f"unknown friction kind {spec.kind!r}")
    if not (math.isfinite(spec.participation_cost) and spec.participation_cost >= 0):
        raise InvalidFriction("participation cost must be finite and nonnegative")
    if not spec.alpha > 1:
        raise InvalidFriction("superlinearity exponent alpha must exceed 1")
    if spec.kind in ("QuadraticImpact", "MatrixQuadratic") and spec.alpha != 2.0:
        raise InvalidFriction("quadratic frictions have alpha = 2")
    if spec.kind in ("PowerScalar", "QuadraticImpact"):
        if not (math.isfinite(spec.lambda_coef) and spec.lambda_coef > 0):
            raise InvalidFriction("friction coefficient must be positive")
    if spec.kind == "MatrixQuadratic":
        m = spec.impact_matrix
        if m is None or m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise InvalidFriction("impact matrix must be square")
        if not np.allclose(m, m.T, atol=1e-12):
            raise InvalidFriction("impact matrix must be symmetric")
        if np.linalg.eigvalsh(m).min() <= 0:
            raise InvalidFriction("impact matrix must be positive definite")
    if spec.h_floor is not None and not spec.h_floor > 0:
        raise InvalidFriction("h_floor must be positive")
    if spec.kind == "Tabulated":
        _validate_table(spec, tol)
        return spec

    d = spec.dim or 1
    if probe is None:
        t = np.linspace(-5.0, 5.0, 41)
        probe = np.stack(np.meshgrid(*([t] * d), indexing="ij"), axis=-1).reshape(-1, d) if d <= 2 \
            else np.random.default_rng(0).uniform(-5, 5, size=(400, d))
    probe = np.asarray(probe, dtype=float)
    s = np.ones(d) if spec.needs_price else None
    g = eval_g(spec, s, probe)
    g0 = spec.participation_cost
    if np.any(g < g0 - tol):
        raise InvalidFriction("G(x) < G(0) on the probe grid")
    h = spec.envelope_floor
    if h is not None and not spec.needs_price:
        env = h * _norm(probe) ** spec.alpha
        if np.any(g < env - tol * (1 + env)):
            raise InvalidFriction("lower envelope H|x|^alpha violated", h_floor=h)
    mid = eval_g(spec, s, 0.5 * (probe[:-1] + probe[1:]))
    if np.any(mid > 0.5 * (g[:-1] + g[1:]) + tol * (1 + np.abs(mid))):
        raise InvalidFriction("midpoint convexity violated")
    return spec


def _validate_table(spec, tol):
    gx, gg = spec.grid_x, spec.grid_g
    if not np.all(np.isfinite(gx)) or not np.all(np.isfinite(gg)):
        raise InvalidFriction("tabulated grid has non-finite entries")
    if np.any(np.diff(gx) <= 0):
        raise InvalidFriction("tabulated grid abscissae must be distinct")
    if not gx[0] <= 0 <= gx[-1]:
        raise InvalidFriction("tabulated grid must contain 0 in its hull")
    slopes = np.diff(gg) / np.diff(gx)
    scale = 1.0 + np.abs(slopes[:-1]) + np.abs(slopes[1:])
    if np.any(np.diff(slopes) < -1e-9 * scale):
        raise NonConvexTabulation("tabulated friction is not convex",
                                  index=int(np.argmin(np.diff(slopes))))
    g0 = spec.participation_cost
    if np.any(gg < g0 - tol):
        raise InvalidFriction("tabulated G(x) < G(0)")
    env = spec.h_floor * np.abs(gx) ** spec.alpha
    if np.any(gg < env - tol * (1 + env)):
        raise InvalidFriction("tabulated grid violates its declared envelope")


def check_envelope(spec, s, probe, tol=ABS_TOL):
    """Return True if ``G(x) >= H |x|**alpha`` at price ``s`` on ``probe``."""
    h = spec.envelope_floor
    if h is None:
        return False
    probe = np.asarray(probe, dtype=float)
    if probe.ndim == 1:
        probe = probe[:, None]
    g = eval_g(spec, s, probe)
    env = h * _norm(probe) ** spec.alpha
    return bool(np.all(g >= env - tol * (1 + env)))


# ---------------------------------------------------------------------------
# evaluation


def eval_g(spec, s, x):
    """Cost rate ``G(x)`` at price ``s`` (price used by QuadraticImpact only)."""
    x = _as_vec(x)
    _check_dim(spec, x)
    k = spec.kind
    if k == "PowerScalar":
        return spec.lambda_coef * _norm(x) ** spec.alpha + spec.participation_cost
    if k == "QuadraticImpact":
        sp = _price(spec, s, x.shape)
        return 0.5 * spec.lambda_coef * np.sum(sp * x * x, axis=-1) + spec.participation_cost
    if k == "MatrixQuadratic":
        return np.einsum("...i,ij,...j->...", x, spec.impact_matrix, x) + spec.participation_cost
    if k == "Tabulated":
        _validate_table(spec, ABS_TOL)
        return _interp_extend(spec.grid_x, spec.grid_g, x[..., 0])
    raise InvalidFriction(f"unknown friction kind {k!r}")


def eval_g_star(spec, s, y):
    """Fenchel conjugate ``G*(y) = sup_x (x.y - G(x))`` with a maximiser.

    Closed forms are used for the parametric kinds.  The tabulated kind uses a
    golden-section search over the grid hull followed by two vertex
    refinement passes.
    """
    y = _as_vec(y)
    _check_dim(spec, y)
    k = spec.kind
    K = spec.participation_cost
    if k == "PowerScalar":
        a, lam = spec.alpha, spec.lambda_coef
        r = _norm(y)
        value = _conj_coef(a, lam) * r ** (a / (a - 1.0)) - K
        with np.errstate(divide="ignore", invalid="ignore"):
            scale = np.where(r > 0, (r / (a * lam)) ** (1.0 / (a - 1.0)) / np.where(r > 0, r, 1.0), 0.0)
        return DualEval(value, y * scale[..., None])
    if k == "QuadraticImpact":
        sp = _price(spec, s, y.shape)
        lam = spec.lambda_coef
        return DualEval(np.sum(y * y / (2.0 * lam * sp), axis=-1) - K, y / (lam * sp))
    if k == "MatrixQuadratic":
        minv = np.linalg.inv(spec.impact_matrix)
        x = 0.5 * np.einsum("ij,...j->...i", minv, y)
        return DualEval(0.5 * np.einsum("...i,...i->...", x, y) - K, x)
    if k == "Tabulated":
        _validate_table(spec, ABS_TOL)
        flat = y[..., 0].ravel()
        vals = np.empty(flat.shape)
        args = np.empty(flat.shape)
        for i, yi in enumerate(flat):
            vals[i], args[i] = _table_conjugate(spec.grid_x, spec.grid_g, float(yi))
        shape = y.shape[:-1]
        return DualEval(vals.reshape(shape), args.reshape(shape + (1,)))
    raise InvalidFriction(f"unknown friction kind {k!r}")


def _table_conjugate(gx, gg, y):
    def h(x):
        return x * y - float(_interp_extend(gx, gg, np.array([x]))[0])

    lo, hi = gx[0], gx[-1]
    a = hi - _GOLDEN * (hi - lo)
    b = lo + _GOLDEN * (hi - lo)
    ha, hb = h(a), h(b)
    while hi - lo > 1e-13 * (1.0 + abs(gx[0]) + abs(gx[-1])):
        if ha < hb:
            lo, a, ha = a, b, hb
            b = lo + _GOLDEN * (hi - lo)
            hb = h(b)
        else:
            hi, b, hb = b, a, ha
            a = hi - _GOLDEN * (hi - lo)
            ha = h(a)
    xs = 0.5 * (lo + hi)

    # the maximum of a concave piecewise-linear function sits on a vertex
    vals = gx * y - gg
    n = gx.size
    i = int(np.clip(np.searchsorted(gx, xs), 0, n - 1))
    window = range(max(i - 2, 0), min(i + 3, n))
    best = max(window, key=lambda j: vals[j])
    while True:
        nxt = best
        if best + 1 < n and vals[best + 1] > vals[nxt]:
            nxt = best + 1
        if best - 1 >= 0 and vals[best - 1] > vals[nxt]:
            nxt = best - 1
        if nxt == best:
            break
        best = nxt

    left_slope = (gg[1] - gg[0]) / (gx[1] - gx[0])
    right_slope = (gg[-1] - gg[-2]) / (gx[-1] - gx[-2])
    if (best == n - 1 and y > right_slope) or (best == 0 and y < left_slope):
        raise ConjugateDiverged("conjugate unbounded: supremum escapes the tabulated hull",
                                y=y, boundary=float(gx[best]))
    return float(vals[best]), float(gx[best])


def eval_g_prime(spec, s, x):
    """Gradient of ``G`` at ``x``; zero at the origin for power frictions."""
    x = _as_vec(x)
    _check_dim(spec, x)
    k = spec.kind
    if k == "PowerScalar":
        a = spec.alpha
        r = _norm(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(r > 0, a * spec.lambda_coef * np.where(r > 0, r, 1.0) ** (a - 2.0), 0.0)
        return x * w[..., None]
    if k == "QuadraticImpact":
        return spec.lambda_coef * _price(spec, s, x.shape) * x
    if k == "MatrixQuadratic":
        return np.einsum("ij,...j->...i", spec.impact_matrix + spec.impact_matrix.T, x)
    raise NotDifferentiable(f"{k} friction has no gradient")


def g_hessian(spec, s, x):
    """Hessian of ``G``, shape ``(..., d, d)``.

    For ``1 < alpha < 2`` the curvature blows up at zero; ``|x|`` is floored
    at 1e-12 there.
    """
    x = _as_vec(x)
    _check_dim(spec, x)
    d = x.shape[-1]
    eye = np.eye(d)
    k = spec.kind
    if k == "PowerScalar":
        a, lam = spec.alpha, spec.lambda_coef
        r = np.maximum(_norm(x), _CURVATURE_FLOOR)
        u = x / r[..., None]
        outer = u[..., :, None] * u[..., None, :]
        return (lam * a * r ** (a - 2.0))[..., None, None] * (eye + (a - 2.0) * outer)
    if k == "QuadraticImpact":
        sp = _price(spec, s, x.shape)
        return spec.lambda_coef * sp[..., :, None] * eye
    if k == "MatrixQuadratic":
        return np.broadcast_to(spec.impact_matrix + spec.impact_matrix.T, x.shape[:-1] + (d, d))
    raise NotDifferentiable(f"{k} friction has no Hessian")


def dual_bound_envelope(spec, y):
    """Upper envelope of ``G*(y)`` implied by ``G(x) >= H |x|**alpha``.

    For d > 1 the coordinates are split with coefficient ``H/d`` each.
    """
    h = spec.envelope_floor
    if h is None:
        raise InvalidFriction("friction declares no lower envelope (set h_floor)")
    y = _as_vec(y)
    a = spec.alpha
    p = a / (a - 1.0)
    d = y.shape[-1]
    if d == 1:
        return _conj_coef(a, h) * np.abs(y[..., 0]) ** p
    return _conj_coef(a, h / d) * np.sum(np.abs(y) ** p, axis=-1)


def g_star_hessian(spec, s, y):
    """Hessian of ``G*``, shape ``(..., d, d)``; ``|y|`` is floored at 1e-12."""
    y = _as_vec(y)
    _check_dim(spec, y)
    d = y.shape[-1]
    eye = np.eye(d)
    k = spec.kind
    if k == "PowerScalar":
        a, lam = spec.alpha, spec.lambda_coef
        p = a / (a - 1.0)
        r = np.maximum(_norm(y), _CURVATURE_FLOOR)
        u = y / r[..., None]
        outer = u[..., :, None] * u[..., None, :]
        return (_conj_coef(a, lam) * p * r ** (p - 2.0))[..., None, None] * (eye + (p - 2.0) * outer)
    if k == "QuadraticImpact":
        sp = _price(spec, s, y.shape)
        return (1.0 / (spec.lambda_coef * sp))[..., :, None] * eye
    if k == "MatrixQuadratic":
        minv = np.linalg.inv(_sym(spec.impact_matrix))
        return np.broadcast_to(0.5 * minv, y.shape[:-1] + (d, d))
    raise NotDifferentiable(f"{k} friction has no conjugate Hessian")
