"""Finite market representations: time grids, scenario trees, path ensembles.

Prices are treated as constant on each interval ``[t_k, t_{k+1})``; a node at
time index ``k`` carries the price used for trading on that interval.  Nodes
at the final index ``M`` are leaves and carry no trading interval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .errors import EmbeddingNotPSD, ExplosiveStep, InvalidMarket

PROB_TOL = 1e-12
_BLOCK = 4096


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing times ``0 = t_0 < ... < t_M = T``."""

    times: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise InvalidMarket("time grid needs at least two points", code="GRID_INVALID")
        if t[0] != 0.0:
            raise InvalidMarket("time grid must start at 0", code="GRID_INVALID")
        if np.any(np.diff(t) <= 0) or not np.all(np.isfinite(t)):
            raise InvalidMarket("time grid must be strictly increasing", code="GRID_INVALID")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, horizon, steps):
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def steps(self):
        return self.times.size - 1

    @property
    def dt(self):
        return np.diff(self.times)

    @property
    def is_uniform(self):
        dt = self.dt
        return bool(np.allclose(dt, dt[0], rtol=1e-10, atol=0.0))


@dataclass(frozen=True)
class GBMParams:
    s0: float
    mu: float
    sigma: float

    def __post_init__(self):
        if not self.s0 > 0:
            raise InvalidMarket("s0 must be positive")
        if not self.sigma > 0:
            raise InvalidMarket("sigma must be positive")


class ScenarioTree:
    """Finite filtered probability space with adapted d-dimensional prices.

    Parameters
    ----------
    parent : sequence of int
        Parent index of each node, ``-1`` for the root.
    k : sequence of int
        Time index of each node.
    q : sequence of float
        Conditional probability of each node given its parent.
    prices : array_like, shape (n, d)
        Asset prices at each node.
    grid : TimeGrid
    ids : sequence, optional
        External node identifiers (defaults to ``0..n-1``).

    Nodes are reordered so that time indices are nondecreasing; the tree is
    immutable afterwards.  Structural problems raise ``InvalidMarket``;
    probability-level invariants are checked by :meth:`validate`.
    """

    def __init__(self, parent, k, q, prices, grid, ids=None):
        parent = np.asarray(parent, dtype=int)
        k = np.asarray(k, dtype=int)
        q = np.asarray(q, dtype=float)
        prices = np.asarray(prices, dtype=float)
        if prices.ndim == 1:
            prices = prices[:, None]
        n = parent.size
        if not (k.size == q.size == prices.shape[0] == n):
            raise InvalidMarket("node arrays have inconsistent lengths", code="TREE_SHAPE")
        ids = list(range(n)) if ids is None else list(ids)
        if len(ids) != n or len(set(ids)) != n:
            raise InvalidMarket("node ids must be unique", code="TREE_IDS")
        if not isinstance(grid, TimeGrid):
            grid = TimeGrid(grid)

        order = np.argsort(k, kind="stable")
        inv = np.empty(n, dtype=int)
        inv[order] = np.arange(n)
        parent = np.where(parent[order] >= 0, inv[np.maximum(parent[order], 0)], -1)
        self.parent = parent
        self.k = k[order]
        self.q = q[order]
        self.prices = prices[order]
        self.ids = [ids[i] for i in order]
        self.grid = grid
        for arr in (self.parent, self.k, self.q, self.prices):
            arr.setflags(write=False)

        roots = np.flatnonzero(self.parent < 0)
        if roots.size != 1 or roots[0] != 0 or self.k[0] != 0:
            raise InvalidMarket("tree needs exactly one root at time index 0", code="TREE_ROOT")
        child_k = self.k[1:]
        if np.any(child_k != self.k[self.parent[1:]] + 1):
            raise InvalidMarket("child time index must be parent's plus one", code="TREE_DEPTH")

        M = grid.steps
        self.children = [[] for _ in range(n)]
        for i in range(1, n):
            self.children[self.parent[i]].append(i)
        self.children = [np.array(c, dtype=int) for c in self.children]
        is_leaf = np.array([c.size == 0 for c in self.children])
        if np.any(self.k[is_leaf] != M) or np.any(self.k > M):
            raise InvalidMarket("every leaf must sit at the final time index", code="TREE_DEPTH")
        self.leaves = np.flatnonzero(is_leaf)
        self.nonterminal = np.flatnonzero(~is_leaf)

        prob = np.empty(n)
        prob[0] = 1.0
        for i in range(1, n):
            prob[i] = prob[self.parent[i]] * self.q[i]
        self.prob = prob
        self.node_dt = np.where(is_leaf, 0.0, grid.dt[np.minimum(self.k, M - 1)])

        anc = np.zeros((self.leaves.size, n), dtype=bool)
        for row, leaf in enumerate(self.leaves):
            node = leaf
            while node >= 0:
                anc[row, node] = True
                node = self.parent[node]
        self.ancestors = anc
        self.leaf_prob = prob[self.leaves]
        self._index = {nid: i for i, nid in enumerate(self.ids)}

    # -- basic shape -----------------------------------------------------

    @property
    def n_nodes(self):
        return self.parent.size

    @property
    def d(self):
        return self.prices.shape[1]

    @property
    def steps(self):
        return self.grid.steps

    @property
    def n_leaves(self):
        return self.leaves.size

    def index_of(self, node_id):
        try:
            return self._index[node_id]
        except KeyError:
            # JSON object keys are strings
            for key, idx in self._index.items():
                if str(key) == str(node_id):
                    return idx
            raise InvalidMarket(f"unknown node id {node_id!r}", code="TREE_IDS") from None

    def validate(self, tol=PROB_TOL):
        """Check probability closure and finite prices; return self."""
        if not np.all(np.isfinite(self.prices)):
            raise InvalidMarket("non-finite node price", code="TREE_PRICE")
        if np.any(self.q[1:] <= 0) or np.any(self.q[1:] > 1 + tol):
            raise InvalidMarket("conditional probabilities must lie in (0, 1]", code="TREE_PROB_RANGE")
        for i in self.nonterminal:
            total = self.q[self.children[i]].sum()
            if abs(total - 1.0) > 1e-10:
                raise InvalidMarket(
                    f"children of node {self.ids[i]!r} have probabilities summing to {total:.12g}",
                    code="TREE_PROB_SUM", node=str(self.ids[i]), total=float(total))
        for kk in range(self.steps + 1):
            total = self.prob[self.k == kk].sum()
            if abs(total - 1.0) > max(tol, 1e-10):
                raise InvalidMarket(f"time slice {kk} probabilities sum to {total:.12g}",
                                    code="TREE_PROB_SUM", k=kk, total=float(total))
        return self

    # -- expectations ----------------------------------------------------

    def node_expectation(self, leaf_values):
        """Conditional expectation ``E[X | node]`` of a leaf-indexed variable."""
        x = np.asarray(leaf_values, dtype=float)
        w = self.leaf_prob.reshape((-1,) + (1,) * (x.ndim - 1)) * x
        total = np.tensordot(self.ancestors.T.astype(float), w, axes=(1, 0))
        return total / self.prob.reshape((-1,) + (1,) * (x.ndim - 1))

    def expectation(self, leaf_values):
        x = np.asarray(leaf_values, dtype=float)
        return np.tensordot(self.leaf_prob, x, axes=(0, 0))

    def path_sum(self, node_values):
        """Sum of node values along each root-to-leaf path, shape (L, ...)."""
        v = np.asarray(node_values, dtype=float)
        return np.tensordot(self.ancestors.astype(float), v, axes=(1, 0))

    def path_prices(self):
        """Prices along each root-to-leaf path, shape (L, M+1, d)."""
        out = np.empty((self.n_leaves, self.steps + 1, self.d))
        for row in range(self.n_leaves):
            nodes = np.flatnonzero(self.ancestors[row])
            out[row, self.k[nodes]] = self.prices[nodes]
        return out

    def path_nodes(self):
        """Node index at each time along each path, shape (L, M+1)."""
        out = np.empty((self.n_leaves, self.steps + 1), dtype=int)
        for row in range(self.n_leaves):
            nodes = np.flatnonzero(self.ancestors[row])
            out[row, self.k[nodes]] = nodes
        return out

    def to_ensemble(self):
        """Path form of the tree, one weighted path per leaf."""
        return PathEnsemble(self.path_prices(), self.leaf_prob.copy(), self.grid,
                            {"model": "tree", "parameters": {"n_nodes": self.n_nodes}, "seed": None})

    def is_martingale(self, tol=1e-10):
        for i in self.nonterminal:
            c = self.children[i]
            if np.max(np.abs(self.q[c] @ self.prices[c] - self.prices[i])) > tol * (1 + np.abs(self.prices[i]).max()):
                return False
        return True

    def __repr__(self):
        return f"ScenarioTree(n_nodes={self.n_nodes}, leaves={self.n_leaves}, d={self.d}, steps={self.steps})"


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Monte Carlo price paths with weights, shape ``(N, M+1, d)``."""

    paths: np.ndarray
    weights: np.ndarray
    grid: TimeGrid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        p = np.asarray(self.paths, dtype=float)
        if p.ndim == 2:
            p = p[:, :, None]
        w = np.asarray(self.weights, dtype=float)
        if p.ndim != 3 or p.shape[1] != self.grid.steps + 1:
            raise InvalidMarket("paths must have shape (N, M+1, d)", code="ENSEMBLE_SHAPE")
        if w.shape != (p.shape[0],):
            raise InvalidMarket("one weight per path required", code="ENSEMBLE_SHAPE")
        if not np.all(np.isfinite(p)):
            raise InvalidMarket("non-finite price in ensemble", code="ENSEMBLE_PRICE")
        if np.any(w < 0) or abs(w.sum() - 1.0) > PROB_TOL * max(1, p.shape[0]):
            raise InvalidMarket("weights must be nonnegative and sum to 1", code="ENSEMBLE_WEIGHTS")
        object.__setattr__(self, "paths", p)
        object.__setattr__(self, "weights", w)

    @property
    def n_paths(self):
        return self.paths.shape[0]

    @property
    def d(self):
        return self.paths.shape[2]


# ---------------------------------------------------------------------------
# builders


def build_binomial_tree(params, grid, rule="crr"):
    """Path-distinct binomial tree for a geometric Brownian motion.

    ``rule`` is ``"crr"`` (log-returns ``+-sigma sqrt(dt)`` with the up
    probability matching the log-mean), ``"jr"`` (drift-shifted returns with
    ``p = 1/2`` matching log-mean and log-variance), or a tuple ``(u, d, p)``
    of user multipliers used on every step.
    """
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    parent, ks, qs, prices = [-1], [0], [1.0], [params.s0]
    level = [0]
    for step, dt in enumerate(grid.dt):
        up, down, p = _branching(params, dt, rule)
        nxt = []
        for node in level:
            for mult, prob in ((up, p), (down, 1.0 - p)):
                parent.append(node)
                ks.append(step + 1)
                qs.append(prob)
                prices.append(prices[node] * mult)
                nxt.append(len(prices) - 1)
        level = nxt
    return ScenarioTree(parent, ks, qs, np.array(prices)[:, None], grid)


def _branching(params, dt, rule):
    sig = params.sigma * math.sqrt(dt)
    m = (params.mu - 0.5 * params.sigma ** 2) * dt
    if isinstance(rule, str):
        if rule == "crr":
            up, down, p = math.exp(sig), math.exp(-sig), 0.5 * (1.0 + m / sig)
        elif rule == "jr":
            up, down, p = math.exp(m + sig), math.exp(m - sig), 0.5
        else:
            raise InvalidMarket(f"unknown branching rule {rule!r}")
    else:
        up, down, p = (float(v) for v in rule)
    if not down > 0 or not up > down or not 0 < p < 1:
        raise ExplosiveStep("branching rule gives an invalid step", up=up, down=down, p=p)
    return up, down, p


def append_liquidation_period(tree, length=1.0):
    """Extend every leaf by one deterministic step of the given length.

    The new leaves repeat their parent's price, so positions acquired up to
    the old horizon can be unwound at the last observed prices.
    """
    parent = list(tree.parent) + list(tree.leaves)
    ks = list(tree.k) + [tree.steps + 1] * tree.n_leaves
    qs = list(tree.q) + [1.0] * tree.n_leaves
    prices = np.vstack([tree.prices, tree.prices[tree.leaves]])
    ids = list(tree.ids) + [f"{tree.ids[i]}_L" for i in tree.leaves]
    grid = TimeGrid(np.append(tree.grid.times, tree.grid.horizon + float(length)))
    return ScenarioTree(parent, ks, qs, prices, grid, ids=ids)


def deterministic_tree(prices, grid):
    """Single-path tree with the given price sequence (one value per time)."""
    prices = np.asarray(prices, dtype=float)
    if prices.ndim == 1:
        prices = prices[:, None]
    n = prices.shape[0]
    return ScenarioTree(np.arange(n) - 1, np.arange(n), np.ones(n), prices, grid)


def random_tree(rng, steps=2, branching=2, d=1, martingale=False, s0=1.0, vol=0.3,
                liquidation=0.0, horizon=1.0):
    """Random scenario tree for testing and demonstrations.

    Child prices are ``S * (1 + eps)`` with bounded ``eps``; with
    ``martingale=True`` the shocks are centred under the conditional
    probabilities so that prices form a P-martingale.  A positive
    ``liquidation`` appends a deterministic final period of that length.
    """
    times = np.concatenate([[0.0], np.sort(rng.uniform(0.0, horizon, steps - 1)), [horizon]]) \
        if steps > 1 else np.array([0.0, horizon])
    if np.any(np.diff(times) < 1e-3 * horizon):
        times = np.linspace(0.0, horizon, steps + 1)
    grid = TimeGrid(times)
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (d,))
    parent, ks, qs, prices = [-1], [0], [1.0], [s0.copy()]
    level = [0]
    for step in range(steps):
        nxt = []
        for node in level:
            b = int(branching) if np.isscalar(branching) else int(rng.integers(branching[0], branching[1] + 1))
            q = rng.dirichlet(np.full(b, 2.0))
            q = np.maximum(q, 0.05)
            q /= q.sum()
            eps = rng.uniform(-vol, vol, size=(b, d))
            if martingale:
                eps -= q @ eps
                worst = eps.min()
                if worst < -0.8:
                    eps *= 0.8 / -worst
            for j in range(b):
                parent.append(node)
                ks.append(step + 1)
                qs.append(q[j])
                prices.append(prices[node] * (1.0 + eps[j]))
                nxt.append(len(prices) - 1)
        level = nxt
    tree = ScenarioTree(parent, ks, qs, np.array(prices), grid)
    if liquidation > 0:
        tree = append_liquidation_period(tree, liquidation)
    return tree


# ---------------------------------------------------------------------------
# simulation


def _block_seeds(seed, n_paths):
    for b, start in enumerate(range(0, n_paths, _BLOCK)):
        yield start, min(start + _BLOCK, n_paths), np.random.default_rng(np.random.SeedSequence([int(seed), b]))


def simulate_gbm(params, grid, n_paths, seed=0):
    """Exact log-normal sampling of a GBM on the grid.

    Draws are organised in fixed blocks seeded by ``(seed, block)``, so the
    ensemble does not depend on how blocks are scheduled.
    """
    if n_paths < 1:
        raise InvalidMarket("n_paths must be positive")
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    dt = grid.dt
    drift = (params.mu - 0.5 * params.sigma ** 2) * dt
    vol = params.sigma * np.sqrt(dt)
    logs = np.empty((n_paths, grid.steps + 1))
    logs[:, 0] = 0.0
    for lo, hi, rng in _block_seeds(seed, n_paths):
        z = rng.standard_normal((hi - lo, grid.steps))
        logs[lo:hi, 1:] = np.cumsum(drift + vol * z, axis=1)
    paths = params.s0 * np.exp(logs)
    meta = {"model": "gbm", "parameters": {"s0": params.s0, "mu": params.mu, "sigma": params.sigma},
            "seed": int(seed)}
    return PathEnsemble(paths[:, :, None], np.full(n_paths, 1.0 / n_paths), grid, meta)


def fgn_autocovariance(hurst, n, step):
    k = np.arange(n + 1, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * step ** h2 * (np.abs(k + 1) ** h2 - 2 * k ** h2 + np.abs(k - 1) ** h2)


def _circulant_eigenvalues(hurst, n, step):
    gamma = fgn_autocovariance(hurst, n, step)
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise EmbeddingNotPSD("circulant embedding has negative eigenvalues", min_eig=float(lam.min()))
    return np.maximum(lam, 0.0)


def simulate_fbm_price(hurst, s0, sigma, grid, n_paths, seed=0, method="circulant"):
    """Price paths ``S = s0 * exp(sigma * B^H)`` with exact fBM covariance.

    ``method="circulant"`` uses circulant embedding of fractional Gaussian
    noise and falls back to a covariance square root if the embedding is not
    positive semidefinite; ``method="cholesky"`` forces the fallback.
    """
    if not 0 < hurst < 1:
        raise InvalidMarket("hurst exponent must lie in (0, 1)")
    if n_paths < 1:
        raise InvalidMarket("n_paths must be positive")
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    if not grid.is_uniform:
        raise InvalidMarket("fractional Brownian motion requires a uniform grid", code="GRID_NOT_UNIFORM")
    n = grid.steps
    step = grid.dt[0]
    lam = None
    if method == "circulant":
        try:
            lam = _circulant_eigenvalues(hurst, n, step)
        except EmbeddingNotPSD:
            method = "cholesky"
    if method == "cholesky":
        gamma = fgn_autocovariance(hurst, n, step)[:n]
        idx = np.abs(np.subtract.outer(np.arange(n), np.arange(n)))
        w, v = np.linalg.eigh(gamma[idx])
        root = v * np.sqrt(np.maximum(w, 0.0))
    elif method != "circulant":
        raise InvalidMarket(f"unknown fBM method {method!r}")

    incr = np.empty((n_paths, n))
    for lo, hi, rng in _block_seeds(seed, n_paths):
        if lam is not None:
            m = 2 * n
            z = rng.standard_normal((hi - lo, m)) + 1j * rng.standard_normal((hi - lo, m))
            incr[lo:hi] = np.fft.fft(np.sqrt(lam / m) * z, axis=1).real[:, :n]
        else:
            incr[lo:hi] = rng.standard_normal((hi - lo, n)) @ root.T
    b = np.concatenate([np.zeros((n_paths, 1)), np.cumsum(incr, axis=1)], axis=1)
    meta = {"model": "fbm", "parameters": {"hurst": hurst, "s0": s0, "sigma": sigma, "method": method},
            "seed": int(seed)}
    return PathEnsemble(s0 * np.exp(sigma * b)[:, :, None], np.full(n_paths, 1.0 / n_paths), grid, meta)


def fbm_covariance(hurst, times):
    t = np.asarray(times, dtype=float)
    h2 = 2.0 * hurst
    return 0.5 * (t[:, None] ** h2 + t[None, :] ** h2 - np.abs(t[:, None] - t[None, :]) ** h2)


def fbm_quantized_tree(hurst, s0, sigma, grid, branching=2):
    """Scenario tree approximating ``s0 * exp(sigma * B^H)``.

    At each node the next fBM value is drawn from its Gaussian law given the
    (quantized) values along the node's path; the law is cut into
    ``branching`` equiprobable quantile bins and each child takes the
    conditional mean of its bin.  This is an approximation of the continuous
    process, not a discretisation with known error.
    """
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    if branching not in (2, 3):
        raise InvalidMarket("branching must be 2 or 3")
    edges = stats.norm.ppf(np.linspace(0.0, 1.0, branching + 1))
    pdf = stats.norm.pdf(edges)
    offsets = (pdf[:-1] - pdf[1:]) * branching  # E[X | bin] for standard normal
    cov = fbm_covariance(hurst, grid.times[1:])

    parent, ks, qs, bvals = [-1], [0], [1.0], [0.0]
    hist = {0: np.zeros(0)}
    level = [0]
    for step in range(grid.steps):
        nxt = []
        past = cov[:step, :step]
        cross = cov[step, :step]
        weights = np.linalg.solve(past, cross) if step else np.zeros(0)
        cvar = cov[step, step] - cross @ weights
        csd = math.sqrt(max(cvar, 0.0))
        for node in level:
            mean = weights @ hist[node] if step else 0.0
            for off in offsets:
                parent.append(node)
                ks.append(step + 1)
                qs.append(1.0 / branching)
                bvals.append(mean + csd * off)
                idx = len(bvals) - 1
                hist[idx] = np.append(hist[node], bvals[idx])
                nxt.append(idx)
        level = nxt
    prices = s0 * np.exp(sigma * np.array(bvals))
    return ScenarioTree(parent, ks, qs, prices[:, None], grid)
