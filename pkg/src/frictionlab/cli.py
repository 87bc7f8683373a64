"""Command-line front end.

Every subcommand reads JSON documents (see :mod:`frictionlab.io`), runs one
library operation, prints a one-line summary and, with ``--out``, writes a
JSON report that embeds SHA-256 fingerprints of its inputs.

Exit codes: 0 ok, 1 usage or parse error, 2 unbounded, 3 iteration limit,
4 invariant violation.  Errors are written to stderr as
``{"error": {"code": ..., "message": ..., "details": ...}}``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import friction as fr
from . import io
from .arbitrage import detect_na2
from .config import RunConfig, SolverConfig, resolve_threads
from .errors import FrictionLabError, InvalidConfig, MaxIterations, Unbounded
from .market import GBMParams, TimeGrid, deterministic_tree, simulate_fbm_price, simulate_gbm
from .superhedge import (dual_value, example1_dual_family, example1_moments,
                         example1_monte_carlo, example1_x, penalty, superhedge_price)
from .utility import maximize_utility, verify_foc
from .wealth import constant_cashflow_plan, market_bound, roll_forward, terminal_position

EXIT_OK, EXIT_USAGE, EXIT_UNBOUNDED, EXIT_MAXITER, EXIT_INVARIANT = 0, 1, 2, 3, 4


class UsageError(Exception):
    code = "USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# helpers


def _file_digest(path):
    if str(path).endswith(".npy"):
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return io.fingerprint(io.read_json(path))


def _floats_arg(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _solver(args):
    return SolverConfig(max_iter=args.max_iter, gap_tol=args.gap_tol,
                        feas_tol=args.feas_tol, ceiling=args.ceiling, seed=args.seed)


class _Run:
    def __init__(self, args, inputs):
        self.args = args
        self.cfg = _solver(args)
        self.run = RunConfig(command=args.command, inputs=inputs, solver=self.cfg,
                             output=args.out, verbosity=args.verbose,
                             threads=resolve_threads(args.threads))
        self.start = time.perf_counter()

    def finish(self, result, summary):
        doc = {
            "command": self.run.command,
            "version": __version__,
            "inputs": {k: {"path": str(p), "sha256": _file_digest(p)}
                       for k, p in sorted(self.run.inputs.items()) if p is not None},
            "solver": self.cfg.to_dict(),
            "threads": self.run.threads,
            "result": result,
            "wall_time": time.perf_counter() - self.start,
        }
        if self.run.output:
            io.write_json(self.run.output, doc)
        print(summary)
        return doc


# ---------------------------------------------------------------------------
# subcommands


def _cmd_superhedge(args):
    r = _Run(args, {"tree": args.tree, "claim": args.claim, "friction": args.friction})
    tree = io.tree_from_dict(io.read_json(args.tree)).validate()
    claim = io.claim_from_dict(io.read_json(args.claim), tree)
    spec = fr.validate(io.friction_from_dict(io.read_json(args.friction)))
    z = None if args.z is None else np.array(_floats_arg(args.z))
    if z is not None and z.size != tree.d + 1:
        raise UsageError(f"--z needs {tree.d + 1} values")
    rep = superhedge_price(tree, claim, spec, r.cfg, z_assets=None if z is None else z[1:])
    r.finish(io.report_to_dict(rep, tree),
             f"superhedge: status={rep.status} price={rep.primal_value:.10g} gap={rep.duality_gap:.3g}")
    return EXIT_OK


def _cmd_maximize_utility(args):
    r = _Run(args, {"tree": args.tree, "friction": args.friction, "utility": args.utility,
                    "endowment": args.endowment})
    tree = io.tree_from_dict(io.read_json(args.tree)).validate()
    spec = fr.validate(io.friction_from_dict(io.read_json(args.friction)))
    util = io.utility_from_dict(io.read_json(args.utility)).validate()
    w = None if args.endowment is None else io.endowment_from_dict(io.read_json(args.endowment), tree)
    rep = maximize_utility(tree, args.cash, w, util, spec, r.cfg, constraint=args.constraint_class)
    foc = verify_foc(tree, rep.plan, args.cash, w, util, spec, constraint=args.constraint_class)
    out = io.report_to_dict(rep, tree)
    out["foc"] = {"y_star": foc.y_star,
                  "q_density": {str(tree.ids[leaf]): float(v)
                                for leaf, v in zip(tree.leaves, foc.q_density)},
                  "shadow_price": io._by_node(tree, foc.shadow_price, tree.nonterminal),
                  "martingale_residual": foc.martingale_residual,
                  "orthogonality_residual": foc.orthogonality_residual,
                  "duality_gap_bound": foc.duality_gap_bound, "objective": foc.objective,
                  "verdict": foc.verdict, "metadata": foc.metadata}
    r.finish(out, f"maximize-utility: objective={rep.primal_value:.10g} verdict={foc.verdict}")
    return EXIT_OK


def _cmd_detect_arbitrage(args):
    r = _Run(args, {"tree": args.tree, "friction": args.friction})
    tree = io.tree_from_dict(io.read_json(args.tree)).validate()
    spec = fr.validate(io.friction_from_dict(io.read_json(args.friction)))
    rep = detect_na2(tree, spec, r.cfg)
    out = {"arbitrage_found": rep.arbitrage_found, "c_star": rep.c_star,
           "epsilon_achieved": rep.epsilon_achieved, "market_bound_max": rep.market_bound_max,
           "tolerance": rep.tolerance,
           "witness_plan": None if rep.witness_plan is None else io.plan_to_dict(rep.witness_plan, tree),
           "certificate": None if rep.certificate is None else io.certificate_to_dict(rep.certificate, tree)}
    r.finish(out, f"detect-arbitrage: found={rep.arbitrage_found} c_star={rep.c_star:.10g}")
    return EXIT_OK


def _cmd_market_bound(args):
    r = _Run(args, {"market": args.market, "friction": args.friction, "plan": args.plan})
    market = io.load_market(args.market)
    spec = fr.validate(io.friction_from_dict(io.read_json(args.friction)))
    b = market_bound(market, spec)
    out = {"bound": b, "max": float(np.max(b))}
    ok = True
    if args.plan is not None:
        if not hasattr(market, "leaves"):
            raise UsageError("--plan is supported for tree markets only")
        plan = io.plan_from_dict(io.read_json(args.plan), market)
        z = np.zeros(market.d + 1)
        z[0] = args.cash
        v0 = terminal_position(market, z, plan, spec)[:, 0]
        viol = v0 - (args.cash + b)
        ok = bool(np.all(viol <= 1e-9))
        out.update(terminal_cash=v0, max_violation=float(viol.max()), ok=ok)
    r.finish(out, f"market-bound: max={out['max']:.10g}" + ("" if args.plan is None else f" ok={ok}"))
    return EXIT_OK if ok else EXIT_INVARIANT


def _cmd_dual_eval(args):
    r = _Run(args, {"tree": args.tree, "claim": args.claim, "friction": args.friction,
                    "certificate": args.certificate})
    tree = io.tree_from_dict(io.read_json(args.tree)).validate()
    claim = io.claim_from_dict(io.read_json(args.claim), tree)
    spec = fr.validate(io.friction_from_dict(io.read_json(args.friction)))
    cert = io.certificate_from_dict(io.read_json(args.certificate), tree)
    value = dual_value(tree, cert, claim, spec)
    pen = penalty(tree, cert, spec)
    r.finish({"dual_value": value, "penalty": pen}, f"dual-eval: value={value:.10g} penalty={pen:.6g}")
    return EXIT_OK


def _cmd_simulate(args):
    if not args.out:
        raise UsageError("simulate needs --out for the .npy matrix")
    r = _Run(args, {})
    grid = TimeGrid.uniform(args.T, args.steps)
    if args.model == "gbm":
        ens = simulate_gbm(GBMParams(args.s0, args.mu, args.sigma), grid, args.paths, args.seed)
    else:
        ens = simulate_fbm_price(args.hurst, args.s0, args.sigma, grid, args.paths, args.seed)
    npy = io.save_ensemble(args.out, ens)
    r.run = RunConfig(command=args.command, solver=r.cfg, output=None, threads=r.run.threads)
    r.finish({"file": str(npy), "shape": list(ens.paths.shape), "meta": ens.meta},
             f"simulate: {ens.n_paths} paths x {grid.steps} steps -> {npy}")
    return EXIT_OK


def _cmd_reproduce_example1(args):
    r = _Run(args, {})
    params = GBMParams(args.s0, args.mu, args.sigma)
    ns = [int(v) for v in _floats_arg(args.n)]
    rows = []
    for n in ns:
        x = example1_x(n, args.sigma)
        rows.append({"n": n, "x": x, "dual_value": example1_dual_family(params, args.lam, args.T, n, x)})
    vals = [row["dual_value"] for row in rows]
    out = {"table": rows, "strictly_increasing": bool(np.all(np.diff(vals) > 0))}
    if args.mc_paths:
        n = ns[len(ns) // 2]
        x = example1_x(n, args.sigma)
        checks = []
        for t in (0.5 * args.T, args.T - 0.5 / n, args.T):
            exact = example1_moments(params, args.T, n, x, t)
            mean, se = example1_monte_carlo(params, args.T, n, x, t, args.mc_paths, args.seed)
            checks.append({"t": t, "exact": [float(e) for e in exact], "mc": mean, "se": se})
        out["monte_carlo"] = {"n": n, "paths": args.mc_paths, "checks": checks}
    table = " ".join(f"{row['n']}:{row['dual_value']:.6g}" for row in rows)
    r.finish(out, f"reproduce-example1: {table} increasing={out['strictly_increasing']}")
    return EXIT_OK


def _price_path(text, T, steps, seed):
    kind, _, rest = text.partition(":")
    if kind == "const":
        return np.full(steps + 1, float(rest or 1.0))
    if kind == "gbm":
        vals = _floats_arg(rest) if rest else []
        s0, mu, sigma = (vals + [1.0, 0.0, 0.2][len(vals):])[:3]
        ens = simulate_gbm(GBMParams(s0, mu, sigma), TimeGrid.uniform(T, steps), 1, seed)
        return ens.paths[0, :, 0]
    raise UsageError(f"--s must be const:<value> or gbm:<s0>,<mu>,<sigma>, got {text!r}")


def _cmd_reproduce_example2(args):
    r = _Run(args, {})
    spec = fr.FrictionSpec.quadratic_impact(args.lam)
    grid = TimeGrid.uniform(args.T, args.steps)
    tree = deterministic_tree(_price_path(args.s, args.T, args.steps, args.seed), grid)
    plan = constant_cashflow_plan(tree, spec, args.k)
    state = roll_forward(tree, np.zeros(2), plan, spec)
    nt = tree.nonterminal
    s = tree.prices[nt, 0]
    phi = plan.rates[nt, 0]
    outflow = (phi * s + fr.eval_g(spec, tree.prices[nt], plan.rates[nt])) * tree.node_dt[nt]
    shares = float(state.v[tree.leaves[0], 0])
    closed = float(np.sum(np.sqrt(1.0 + 2.0 * args.k * args.lam / s) - 1.0) / args.lam * grid.dt[0]) \
        if grid.is_uniform else None
    out = {"shares": shares, "shares_closed_form": closed,
           "cash_spent": float(-state.v0[tree.leaves[0]]),
           "max_outflow_error": float(np.max(np.abs(outflow - args.k * tree.node_dt[nt]))),
           "sqrt3_minus_1": math.sqrt(3.0) - 1.0}
    r.finish(out, f"reproduce-example2: shares={shares:.12g} cash_spent={out['cash_spent']:.12g}")
    return EXIT_OK


def _cmd_validate(args):
    inputs = {k: getattr(args, k) for k in ("tree", "friction", "claim", "plan", "utility", "certificate")}
    if all(v is None for v in inputs.values()):
        raise UsageError("validate needs at least one document")
    r = _Run(args, inputs)
    checked = []
    tree = None
    if args.tree:
        tree = io.tree_from_dict(io.read_json(args.tree)).validate()
        checked.append("tree")
    if args.friction:
        fr.validate(io.friction_from_dict(io.read_json(args.friction)))
        checked.append("friction")
    if args.utility:
        io.utility_from_dict(io.read_json(args.utility)).validate()
        checked.append("utility")
    for name, loader in (("claim", io.claim_from_dict), ("plan", io.plan_from_dict),
                         ("certificate", io.certificate_from_dict)):
        if getattr(args, name):
            if tree is None:
                raise UsageError(f"validating a {name} needs --tree")
            obj = loader(io.read_json(getattr(args, name)), tree)
            if name == "certificate":
                obj.validate(tree)
            checked.append(name)
    r.finish({"valid": True, "checked": checked}, f"validate: ok ({', '.join(checked)})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = _Parser(prog="frictionlab", description="Superhedging, arbitrage and utility "
                "maximisation under superlinear trading frictions.")
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="write the JSON report here")
    common.add_argument("--threads", type=int, help="worker count (default: FRICTIONLAB_THREADS or CPUs)")
    common.add_argument("--max-iter", type=int, default=500)
    common.add_argument("--gap-tol", type=float, default=1e-8)
    common.add_argument("--feas-tol", type=float, default=1e-7)
    common.add_argument("--ceiling", type=float, default=1e9,
                        help="report prices beyond this magnitude as unbounded")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("superhedge", parents=[common], help="superhedging price and certificate")
    s.add_argument("--tree", required=True)
    s.add_argument("--claim", required=True)
    s.add_argument("--friction", required=True)
    s.add_argument("--z", help="initial position 'c,z1,...,zd'; asset entries are used")
    s.set_defaults(func=_cmd_superhedge)

    s = sub.add_parser("maximize-utility", parents=[common], help="utility maximisation with FOC check")
    s.add_argument("--tree", required=True)
    s.add_argument("--friction", required=True)
    s.add_argument("--utility", required=True)
    s.add_argument("--cash", type=float, required=True)
    s.add_argument("--endowment")
    s.add_argument("--constraint-class", choices=("flat", "nonneg"), default="flat")
    s.set_defaults(func=_cmd_maximize_utility)

    s = sub.add_parser("detect-arbitrage", parents=[common], help="second-kind arbitrage test")
    s.add_argument("--tree", required=True)
    s.add_argument("--friction", required=True)
    s.set_defaults(func=_cmd_detect_arbitrage)

    s = sub.add_parser("market-bound", parents=[common], help="pathwise market bound")
    s.add_argument("--market", "--tree", "--paths", dest="market", required=True,
                   help="tree JSON or ensemble .npy")
    s.add_argument("--friction", required=True)
    s.add_argument("--plan", help="tree plan to check against the bound")
    s.add_argument("--cash", type=float, default=0.0)
    s.set_defaults(func=_cmd_market_bound)

    s = sub.add_parser("dual-eval", parents=[common], help="evaluate a certificate")
    s.add_argument("--tree", required=True)
    s.add_argument("--claim", required=True)
    s.add_argument("--friction", required=True)
    s.add_argument("--certificate", required=True)
    s.set_defaults(func=_cmd_dual_eval)

    s = sub.add_parser("simulate", parents=[common], help="simulate GBM or fBM price paths")
    s.add_argument("--model", choices=("gbm", "fbm"), default="gbm")
    s.add_argument("--s0", type=float, default=1.0)
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=0.2)
    s.add_argument("--hurst", type=float, default=0.5)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=100)
    s.add_argument("--paths", type=int, default=1000)
    s.set_defaults(func=_cmd_simulate)

    s = sub.add_parser("reproduce-example1", parents=[common], help="exploding dual family")
    s.add_argument("--mu", type=float, default=0.0)
    s.add_argument("--sigma", type=float, default=0.2)
    s.add_argument("--s0", type=float, default=1.0)
    s.add_argument("--lambda", dest="lam", type=float, default=0.01)
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--n", default="2,4,8,16,32,64")
    s.add_argument("--mc-paths", type=int, default=0)
    s.set_defaults(func=_cmd_reproduce_example1)

    s = sub.add_parser("reproduce-example2", parents=[common], help="constant cash-flow plan")
    s.add_argument("--lambda", dest="lam", type=float, default=1.0)
    s.add_argument("--k", type=float, default=1.0)
    s.add_argument("--s", default="const:1")
    s.add_argument("--T", type=float, default=1.0)
    s.add_argument("--steps", type=int, default=100)
    s.set_defaults(func=_cmd_reproduce_example2)

    s = sub.add_parser("validate", parents=[common], help="check documents")
    for name in ("tree", "friction", "claim", "plan", "utility", "certificate"):
        s.add_argument(f"--{name}")
    s.set_defaults(func=_cmd_validate)
    return p


def _error(code, message, details=None):
    doc = {"error": {"code": code, "message": message, "details": details or {}}}
    print(io.dumps(doc), file=sys.stderr)


def run(argv=None):
    """Execute one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        _error("USAGE", str(exc))
        return EXIT_USAGE
    except (io.DocumentError, InvalidConfig) as exc:
        _error(exc.code, str(exc), exc.details)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError) as exc:
        _error("IO", str(exc))
        return EXIT_USAGE
    except Unbounded as exc:
        _error(exc.code, str(exc), exc.details)
        return EXIT_UNBOUNDED
    except MaxIterations as exc:
        details = {k: v for k, v in exc.details.items() if k != "best"}
        _error(exc.code, str(exc), details)
        return EXIT_MAXITER
    except FrictionLabError as exc:
        _error(exc.code, str(exc), exc.details)
        return EXIT_INVARIANT


def main():
    sys.exit(run())
