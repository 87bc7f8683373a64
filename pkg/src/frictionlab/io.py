"""JSON documents for trees, frictions, claims, plans, certificates and reports.

Documents are plain dicts; :func:`dumps` renders them canonically (sorted
keys, shortest round-trip float repr, ``null`` for non-finite numbers), so
identical content gives identical bytes and :func:`fingerprint` is stable.
Path ensembles are stored as ``.npy`` matrices with a JSON sidecar.
"""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .errors import FrictionLabError, ShapeMismatch
from .friction import FrictionSpec
from .market import PathEnsemble, ScenarioTree, TimeGrid
from .superhedge import Claim, MartingaleCertificate, SolveReport
from .utility import UtilitySpec
from .wealth import TradingRatePlan


class DocumentError(FrictionLabError, ValueError):
    code = "DOCUMENT_INVALID"


# ---------------------------------------------------------------------------
# canonical JSON


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(doc, indent=None):
    """Canonical JSON text for a document."""
    return json.dumps(_plain(doc), sort_keys=True, indent=indent,
                      separators=(",", ":") if indent is None else (",", ": "),
                      allow_nan=False)


def fingerprint(doc):
    """SHA-256 of the canonical rendering."""
    return hashlib.sha256(dumps(doc).encode()).hexdigest()


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DocumentError(f"{path}: {exc}", path=str(path)) from exc


def write_json(path, doc):
    Path(path).write_text(dumps(doc, indent=2) + "\n", encoding="utf-8")


def _require(doc, *keys, what="document"):
    if not isinstance(doc, dict):
        raise DocumentError(f"{what} must be a JSON object")
    missing = [k for k in keys if k not in doc]
    if missing:
        raise DocumentError(f"{what} is missing {', '.join(missing)}", missing=missing)


def _floats(values):
    return None if values is None else np.array(
        [np.nan if v is None else v for v in values], dtype=float)


# ---------------------------------------------------------------------------
# tree


def tree_to_dict(tree):
    nodes = []
    for i in range(tree.n_nodes):
        p = tree.parent[i]
        nodes.append({"id": tree.ids[i], "parent": None if p < 0 else tree.ids[p],
                      "k": int(tree.k[i]), "q": float(tree.q[i]),
                      "S": [float(v) for v in tree.prices[i]]})
    return {"d": tree.d, "grid": [float(t) for t in tree.grid.times], "nodes": nodes}


def tree_from_dict(doc):
    _require(doc, "d", "grid", "nodes", what="tree")
    nodes = doc["nodes"]
    if not nodes:
        raise DocumentError("tree has no nodes")
    ids = [n["id"] for n in nodes]
    pos = {nid: i for i, nid in enumerate(ids)}
    try:
        parent = [-1 if n["parent"] is None else pos[n["parent"]] for n in nodes]
        prices = np.array([n["S"] for n in nodes], dtype=float).reshape(len(nodes), -1)
        k = [n["k"] for n in nodes]
        q = [n["q"] for n in nodes]
    except KeyError as exc:
        raise DocumentError(f"tree node is missing or references unknown key {exc}") from exc
    if prices.shape[1] != doc["d"]:
        raise ShapeMismatch("node prices do not match d", d=doc["d"], got=prices.shape[1])
    return ScenarioTree(parent, k, q, prices, TimeGrid(doc["grid"]), ids=ids)


# ---------------------------------------------------------------------------
# friction and utility


def friction_to_dict(spec):
    out = {"kind": spec.kind, "alpha": spec.alpha, "h_floor": spec.h_floor}
    if spec.kind == "Tabulated":
        out.update(grid_x=list(spec.grid_x), grid_g=list(spec.grid_g))
        return out
    out["participation_cost"] = spec.participation_cost
    if spec.kind == "MatrixQuadratic":
        out["matrix"] = spec.impact_matrix.tolist()
    else:
        out["lambda"] = spec.lambda_coef
    return out


def friction_from_dict(doc):
    _require(doc, "kind", what="friction")
    kind = doc["kind"]
    k0 = doc.get("participation_cost", 0.0) or 0.0
    h = doc.get("h_floor")
    if kind == "PowerScalar":
        _require(doc, "lambda", what="friction")
        return FrictionSpec.power(doc["lambda"], doc.get("alpha", 2.0), k0, h)
    if kind == "QuadraticImpact":
        _require(doc, "lambda", what="friction")
        return FrictionSpec.quadratic_impact(doc["lambda"], k0, h)
    if kind == "MatrixQuadratic":
        _require(doc, "matrix", what="friction")
        return FrictionSpec.matrix_quadratic(doc["matrix"], k0, h)
    if kind == "Tabulated":
        _require(doc, "grid_x", "grid_g", "h_floor", "alpha", what="friction")
        return FrictionSpec.tabulated(doc["grid_x"], doc["grid_g"], h, doc["alpha"])
    raise DocumentError(f"unknown friction kind {kind!r}")


def utility_to_dict(spec):
    return spec.to_dict()


def utility_from_dict(doc):
    _require(doc, "kind", what="utility")
    return UtilitySpec.from_dict(doc)


# ---------------------------------------------------------------------------
# node-indexed data


def _by_node(tree, rows, nodes):
    return {str(tree.ids[i]): [float(v) for v in rows[i]] for i in nodes}


def _from_nodes(tree, mapping, width, nodes, what):
    out = np.zeros((tree.n_nodes, width))
    seen = set()
    for key, vals in mapping.items():
        i = tree.index_of(key)
        v = np.atleast_1d(np.asarray(vals, dtype=float))
        if v.shape != (width,):
            raise ShapeMismatch(f"{what} entry for node {key!r} must have {width} values")
        out[i] = v
        seen.add(i)
    missing = set(int(n) for n in nodes) - seen
    if missing:
        raise DocumentError(f"{what} lacks values for {len(missing)} node(s)",
                            nodes=sorted(str(tree.ids[i]) for i in missing))
    return out


def claim_to_dict(claim, tree):
    rows = np.zeros((tree.n_nodes, tree.d + 1))
    rows[tree.leaves] = claim.W
    return {"leaf_values": _by_node(tree, rows, tree.leaves)}


def claim_from_dict(doc, tree):
    _require(doc, "leaf_values", what="claim")
    rows = _from_nodes(tree, doc["leaf_values"], tree.d + 1, tree.leaves, "claim")
    return Claim(rows[tree.leaves]).check(tree)


def endowment_from_dict(doc, tree):
    """Scalar cash endowment per leaf: ``{"leaf_values": {id: w}}`` or a list."""
    if isinstance(doc, list):
        w = np.asarray(doc, dtype=float)
        if w.shape != (tree.n_leaves,):
            raise ShapeMismatch("endowment list needs one value per leaf")
        return w
    _require(doc, "leaf_values", what="endowment")
    return _from_nodes(tree, doc["leaf_values"], 1, tree.leaves, "endowment")[tree.leaves, 0]


def plan_to_dict(plan, tree):
    return {"node_rates": _by_node(tree, plan.rates, tree.nonterminal)}


def plan_from_dict(doc, tree):
    _require(doc, "node_rates", what="plan")
    return TradingRatePlan(_from_nodes(tree, doc["node_rates"], tree.d, tree.nonterminal, "plan"))


def certificate_to_dict(cert, tree):
    return {"node_values": _by_node(tree, cert.Z, range(tree.n_nodes))}


def certificate_from_dict(doc, tree):
    _require(doc, "node_values", what="certificate")
    z = _from_nodes(tree, doc["node_values"], tree.d + 1, range(tree.n_nodes), "certificate")
    return MartingaleCertificate(z)


# ---------------------------------------------------------------------------
# reports


def report_to_dict(report, tree=None):
    out = {"status": report.status, "primal_value": report.primal_value,
           "dual_value": report.dual_value, "duality_gap": report.duality_gap,
           "kkt_residuals": dict(report.kkt_residuals), "iterations": int(report.iterations),
           "wall_time": report.wall_time, "extra": dict(report.extra)}
    if tree is not None:
        out["plan"] = None if report.plan is None else plan_to_dict(report.plan, tree)
        out["certificate"] = (None if report.certificate is None
                              else certificate_to_dict(report.certificate, tree))
    return out


def report_from_dict(doc, tree=None):
    _require(doc, "status", "primal_value", what="report")
    plan = cert = None
    if tree is not None:
        if doc.get("plan") is not None:
            plan = plan_from_dict(doc["plan"], tree)
        if doc.get("certificate") is not None:
            cert = certificate_from_dict(doc["certificate"], tree)
    return SolveReport(status=doc["status"], primal_value=doc["primal_value"], plan=plan,
                       certificate=cert, dual_value=doc.get("dual_value"),
                       duality_gap=doc.get("duality_gap"),
                       kkt_residuals=dict(doc.get("kkt_residuals", {})),
                       iterations=doc.get("iterations", 0), wall_time=doc.get("wall_time", 0.0),
                       extra=dict(doc.get("extra", {})))


# ---------------------------------------------------------------------------
# path ensembles


def save_ensemble(path, ens):
    """Write ``path`` (``.npy``, shape (N, M+1, d)) and ``path + '.json'``."""
    path = Path(path)
    np.save(path, ens.paths, allow_pickle=False)
    npy = path if path.suffix == ".npy" else path.with_name(path.name + ".npy")
    sidecar = {"grid": list(ens.grid.times), "weights": list(ens.weights), "meta": ens.meta,
               "shape": list(ens.paths.shape), "sha256": hashlib.sha256(npy.read_bytes()).hexdigest()}
    write_json(str(npy) + ".json", sidecar)
    return npy


def load_ensemble(path):
    path = Path(path)
    side = read_json(str(path) + ".json")
    _require(side, "grid", "weights", what="ensemble sidecar")
    paths = np.load(path, allow_pickle=False)
    return PathEnsemble(paths, _floats(side["weights"]), TimeGrid(side["grid"]), side.get("meta", {}))


def load_market(path):
    """Tree JSON or ensemble ``.npy`` (with sidecar), chosen by suffix."""
    if str(path).endswith(".npy"):
        return load_ensemble(path)
    return tree_from_dict(read_json(path))
