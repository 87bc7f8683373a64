"""Wealth dynamics under friction and pathwise bounds on feasible strategies.

All time integrals use the left endpoint of each interval: a rate chosen at
time index ``k`` is held on ``[t_k, t_{k+1})`` at the price ``S_k``.  With
step-constant prices these sums are exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import friction as fr
from .errors import BetaOutOfRange, InvalidFriction, InvalidPrice, ShapeMismatch
from .market import PathEnsemble, ScenarioTree


@dataclass(frozen=True, eq=False)
class TradingRatePlan:
    """Trading rates, either one d-vector per tree node or per (path, step).

    Tree form has shape ``(n_nodes, d)`` with zero rows on the leaves; path
    form has shape ``(N, M, d)``.
    """

    rates: np.ndarray
    form: str = "tree"

    def __post_init__(self):
        r = np.array(self.rates, dtype=float)
        if self.form not in ("tree", "paths"):
            raise ShapeMismatch(f"unknown plan form {self.form!r}")
        if r.ndim == (1 if self.form == "tree" else 2):
            r = r[..., None]
        if not np.all(np.isfinite(r)):
            raise ShapeMismatch("plan has non-finite rates")
        r.setflags(write=False)
        object.__setattr__(self, "rates", r)

    @classmethod
    def zeros(cls, market):
        if isinstance(market, ScenarioTree):
            return cls(np.zeros((market.n_nodes, market.d)), "tree")
        return cls(np.zeros((market.n_paths, market.grid.steps, market.d)), "paths")

    @property
    def adapted(self):
        return self.form == "tree"

    def scaled(self, c):
        return TradingRatePlan(self.rates * c, self.form)


@dataclass(frozen=True, eq=False)
class WealthState:
    """Cash ``v0`` and asset units ``v`` per node (tree) or per (path, time)."""

    v0: np.ndarray
    v: np.ndarray

    def stacked(self):
        return np.concatenate([self.v0[..., None], self.v], axis=-1)


@dataclass(frozen=True)
class VolumeBoundParams:
    """Hölder exponent ``1 < beta < alpha`` and its conjugate ``gamma``."""

    beta: float

    @property
    def gamma(self):
        return self.beta / (self.beta - 1.0)


@dataclass(frozen=True, eq=False)
class VolumeBoundReport:
    lhs: np.ndarray
    rhs: np.ndarray
    xi: np.ndarray
    m: np.ndarray
    ok: np.ndarray

    @property
    def all_ok(self):
        return bool(np.all(self.ok))


def _check_plan(market, plan):
    if isinstance(market, ScenarioTree):
        if plan.form != "tree" or plan.rates.shape != (market.n_nodes, market.d):
            raise ShapeMismatch("plan does not match the tree",
                                expected=[market.n_nodes, market.d], got=list(plan.rates.shape))
        if np.any(plan.rates[market.leaves] != 0):
            raise ShapeMismatch("plan assigns rates to terminal nodes")
        return
    if not isinstance(market, PathEnsemble):
        raise ShapeMismatch("market must be a ScenarioTree or PathEnsemble")
    if plan.form != "paths" or plan.rates.shape != (market.n_paths, market.grid.steps, market.d):
        raise ShapeMismatch("plan does not match the path ensemble",
                            expected=[market.n_paths, market.grid.steps, market.d],
                            got=list(plan.rates.shape))


def node_cash_flows(tree, plan, friction):
    """Cash spent on each node's interval: ``(phi.S + G(phi)) dt``."""
    nt = tree.nonterminal
    phi = plan.rates[nt]
    s = tree.prices[nt]
    flows = np.zeros(tree.n_nodes)
    flows[nt] = (np.sum(phi * s, axis=-1) + fr.eval_g(friction, s, phi)) * tree.node_dt[nt]
    return flows


def roll_forward(market, z, plan, friction):
    """Positions ``(V^0, V)`` generated by ``plan`` from initial position ``z``.

    Tree form returns the state on arrival at each node; path form returns
    shape ``(N, M+1)`` for cash and ``(N, M+1, d)`` for assets.
    """
    _check_plan(market, plan)
    z = np.asarray(z, dtype=float)
    if z.shape != (market.d + 1,):
        raise ShapeMismatch("initial position must have d+1 entries", got=list(z.shape))
    if isinstance(market, ScenarioTree):
        flows = node_cash_flows(market, plan, friction)
        units = plan.rates * market.node_dt[:, None]
        v0 = np.empty(market.n_nodes)
        v = np.empty((market.n_nodes, market.d))
        v0[0], v[0] = z[0], z[1:]
        for i in range(1, market.n_nodes):
            p = market.parent[i]
            v0[i] = v0[p] - flows[p]
            v[i] = v[p] + units[p]
        return WealthState(v0, v)

    dt = market.grid.dt
    s = market.paths[:, :-1]
    phi = plan.rates
    flows = (np.sum(phi * s, axis=-1) + fr.eval_g(friction, s, phi)) * dt
    v0 = z[0] - np.concatenate([np.zeros((market.n_paths, 1)), np.cumsum(flows, axis=1)], axis=1)
    units = np.cumsum(phi * dt[None, :, None], axis=1)
    v = z[1:] + np.concatenate([np.zeros((market.n_paths, 1, market.d)), units], axis=1)
    return WealthState(v0, v)


def terminal_position(market, z, plan, friction):
    """Terminal ``(V^0_T, V^1_T, ..., V^d_T)`` per leaf or path, shape (L, d+1)."""
    if isinstance(market, ScenarioTree):
        _check_plan(market, plan)
        z = np.asarray(z, dtype=float)
        flows = node_cash_flows(market, plan, friction)
        units = plan.rates * market.node_dt[:, None]
        v0 = z[0] - market.path_sum(flows)
        v = z[1:] + market.path_sum(units)
        return np.concatenate([v0[:, None], v], axis=1)
    state = roll_forward(market, z, plan, friction)
    return np.concatenate([state.v0[:, -1:], state.v[:, -1]], axis=1)


def _prices_and_rates(market, plan):
    if isinstance(market, ScenarioTree):
        _check_plan(market, plan)
        nt = market.nonterminal
        return market.prices[nt], plan.rates[nt], nt
    _check_plan(market, plan)
    return market.paths[:, :-1], plan.rates, None


def execution_price_series(plan, market, friction):
    """Execution price ``S + G(phi)/phi`` for one asset; NaN where ``phi = 0``.

    Tree form returns one value per node (NaN on leaves); path form returns
    shape ``(N, M)``.
    """
    if market.d != 1:
        raise ShapeMismatch("execution prices are defined for a single asset")
    s, phi, nt = _prices_and_rates(market, plan)
    g = fr.eval_g(friction, s, phi)
    x = phi[..., 0]
    with np.errstate(divide="ignore", invalid="ignore"):
        px = np.where(x != 0, s[..., 0] + g / np.where(x != 0, x, 1.0), np.nan)
    if nt is None:
        return px
    out = np.full(market.n_nodes, np.nan)
    out[nt] = px
    return out


def filter_positive_execution(plan, market, friction):
    """Zero the rate wherever the execution price is negative.

    The filtered plan trades only at nonnegative execution prices and, for
    frictions without participation cost, ends with at least as much cash
    and at least as many shares on every path.
    """
    s, _, _ = _prices_and_rates(market, plan)
    if np.any(s < 0):
        raise InvalidPrice("positive-execution filtering needs nonnegative prices")
    px = execution_price_series(plan, market, friction)
    bad = np.nan_to_num(px, nan=0.0) < 0
    rates = np.where(bad[..., None], 0.0, plan.rates)
    return TradingRatePlan(rates, plan.form)


def market_bound(market, friction):
    """Pathwise market bound ``sum_k G*(-S_k) dt_k`` per leaf or path."""
    if isinstance(market, ScenarioTree):
        nt = market.nonterminal
        vals = np.zeros(market.n_nodes)
        vals[nt] = fr.eval_g_star(friction, market.prices[nt], -market.prices[nt]).value * market.node_dt[nt]
        return market.path_sum(vals)
    s = market.paths[:, :-1]
    return fr.eval_g_star(friction, s, -s).value @ market.grid.dt


def volume_bound_check(plan, market, friction, params, tol=1e-9):
    """Pathwise trading-volume inequality on the horizon rescaled to one.

    With ``T = 1`` after rescaling, checks per path

        sum |phi|^b (1+|S|)^b dt  <=  xi_-  +  2^(b/(a-b)) m^(a/(a-b))  +  1

    where ``xi = -sum S.phi dt - sum G(phi) dt`` and
    ``m = [sum (H^(-b/a) (1+|S|)^b)^(a/(a-b)) dt]^((a-b)/a)``.
    """
    a = friction.alpha
    b = float(params.beta)
    if not 1.0 < b < a:
        raise BetaOutOfRange(f"beta must lie in (1, {a})", beta=b, alpha=a)
    h = friction.envelope_floor
    if h is None:
        raise InvalidFriction("volume bound needs a friction with a declared h_floor")

    if isinstance(market, ScenarioTree):
        _check_plan(market, plan)
        nodes = market.path_nodes()[:, :-1]
        s = market.prices[nodes]
        phi = plan.rates[nodes]
        dt = market.grid.dt
    else:
        _check_plan(market, plan)
        s = market.paths[:, :-1]
        phi = plan.rates
        dt = market.grid.dt
    if friction.needs_price and not np.all(0.5 * friction.lambda_coef * s >= h * (1 - 1e-12)):
        raise InvalidFriction("h_floor exceeds the price-scaled impact on this market")

    T = market.grid.horizon
    dtn = dt / T
    phin = phi * T
    hn = h * T ** (1.0 - a)
    snorm = np.sqrt(np.sum(s * s, axis=-1))
    rnorm = np.sqrt(np.sum(phin * phin, axis=-1))

    lhs = (rnorm ** b * (1.0 + snorm) ** b) @ dtn
    xi = -(np.sum(s * phi, axis=-1) + fr.eval_g(friction, s, phi)) @ dt
    m = (((hn ** (-b / a)) * (1.0 + snorm) ** b) ** (a / (a - b)) @ dtn) ** ((a - b) / a)
    rhs = np.maximum(-xi, 0.0) + 2.0 ** (b / (a - b)) * m ** (a / (a - b)) + 1.0
    return VolumeBoundReport(lhs, rhs, xi, m, lhs <= rhs + tol)


def constant_cashflow_plan(market, friction, k):
    """Buying plan spending exactly ``k`` units of cash per unit of time.

    For ``G(x) = lam/2 S x^2 + K`` the rate solving ``phi S + G(phi) = k`` is
    ``phi = (2 (k-K)/S) / (1 + sqrt(1 + 2 lam (k-K)/S))``, the cancellation-free
    form of ``(sqrt(1 + 2 lam (k-K)/S) - 1) / lam``.
    """
    if friction.kind != "QuadraticImpact":
        raise InvalidFriction("constant cash-flow plans are defined for QuadraticImpact friction")
    net = float(k) - friction.participation_cost
    if net < 0:
        raise ValueError("cash rate must cover the participation cost")
    lam = friction.lambda_coef
    if isinstance(market, ScenarioTree):
        s = market.prices
        rates = np.zeros_like(s)
        nt = market.nonterminal
        if np.any(s[nt] <= 0):
            raise InvalidPrice("constant cash-flow plan needs positive prices")
        a = 2.0 * net / s[nt]
        rates[nt] = a / (1.0 + np.sqrt(1.0 + lam * a))
        return TradingRatePlan(rates, "tree")
    s = market.paths[:, :-1]
    if np.any(s <= 0):
        raise InvalidPrice("constant cash-flow plan needs positive prices")
    a = 2.0 * net / s
    return TradingRatePlan(a / (1.0 + np.sqrt(1.0 + lam * a)), "paths")


def random_plan(tree, rng, scale=1.0, heavy=False):
    """Random adapted plan on a tree; ``heavy`` mixes in large rates."""
    rates = rng.normal(0.0, scale, size=(tree.n_nodes, tree.d))
    if heavy:
        rates *= np.exp(rng.uniform(-3.0, 3.0, size=(tree.n_nodes, 1)))
    rates[tree.leaves] = 0.0
    return TradingRatePlan(rates, "tree")
