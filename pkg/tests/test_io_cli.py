import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from frictionlab import cli, io
from frictionlab import friction as fr
from frictionlab import market as mk
from frictionlab import superhedge as sh
from frictionlab import wealth as wl
from frictionlab.utility import UtilitySpec

FRICTIONS = [
    fr.FrictionSpec.power(0.3, 1.7, participation_cost=0.01),
    fr.FrictionSpec.quadratic_impact(0.5, h_floor=0.1),
    fr.FrictionSpec.matrix_quadratic([[1.0, 0.25], [0.25, 2.0]]),
    fr.FrictionSpec.tabulated([-2.0, 0.0, 1.0, 3.0], [4.0, 0.0, 1.0, 9.0], 0.5, 2.0),
]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.integers(1, 2), steps=st.integers(1, 3))
def test_document_round_trips(seed, d, steps):
    rng = np.random.default_rng(seed)
    t = mk.random_tree(rng, steps=steps, branching=(1, 3), d=d)
    doc = io.tree_to_dict(t)
    t2 = io.tree_from_dict(json.loads(io.dumps(doc)))
    assert io.tree_to_dict(t2) == doc
    claim = sh.Claim(rng.normal(size=(t.n_leaves, d + 1)))
    cdoc = json.loads(io.dumps(io.claim_to_dict(claim, t)))
    assert np.array_equal(io.claim_from_dict(cdoc, t2).W, claim.W)
    plan = wl.random_plan(t, rng)
    pdoc = json.loads(io.dumps(io.plan_to_dict(plan, t)))
    assert np.array_equal(io.plan_from_dict(pdoc, t2).rates, plan.rates)
    cert = sh.MartingaleCertificate.from_leaves(t, rng.uniform(0.1, 2.0, (t.n_leaves, d + 1)))
    zdoc = json.loads(io.dumps(io.certificate_to_dict(cert, t)))
    assert np.array_equal(io.certificate_from_dict(zdoc, t2).Z, cert.Z)


@pytest.mark.parametrize("spec", FRICTIONS, ids=lambda s: s.kind)
def test_friction_round_trip(spec):
    doc = io.friction_to_dict(spec)
    again = io.friction_to_dict(io.friction_from_dict(json.loads(io.dumps(doc))))
    assert again == doc


def test_canonical_rendering():
    a = io.dumps({"b": 0.1 + 0.2, "a": [1, np.float64(2.5)], "c": float("nan")})
    assert a == '{"a":[1,2.5],"b":0.30000000000000004,"c":null}'
    assert io.fingerprint({"x": 1, "y": 2}) == io.fingerprint({"y": 2, "x": 1})


def test_report_round_trip(rng, quad):
    t = mk.random_tree(rng, steps=2)
    rep = sh.superhedge_price(t, sh.Claim(rng.normal(size=(t.n_leaves, 2))), quad)
    doc = json.loads(io.dumps(io.report_to_dict(rep, t)))
    assert io.report_to_dict(io.report_from_dict(doc, t), t) == doc


def test_ensemble_round_trip(tmp_path):
    ens = mk.simulate_gbm(mk.GBMParams(1.0, 0.0, 0.2), mk.TimeGrid.uniform(1.0, 4), 20, seed=1)
    path = io.save_ensemble(tmp_path / "p.npy", ens)
    back = io.load_market(path)
    assert np.array_equal(back.paths, ens.paths) and back.meta == ens.meta


def test_document_errors():
    with pytest.raises(io.DocumentError):
        io.tree_from_dict({"d": 1, "grid": [0, 1]})
    with pytest.raises(io.DocumentError):
        io.friction_from_dict({"kind": "Cubic"})


# ---------------------------------------------------------------------------
# command line


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    rng = np.random.default_rng(3)
    t = mk.random_tree(rng, steps=2, liquidation=1.0)
    io.write_json("tree.json", io.tree_to_dict(t))
    io.write_json("fric.json", io.friction_to_dict(fr.FrictionSpec.power(1.0, 2.0)))
    w = np.zeros((t.n_leaves, 2))
    w[:, 0] = np.maximum(t.prices[t.leaves, 0] - 1.0, 0.0)
    io.write_json("claim.json", io.claim_to_dict(sh.Claim(w), t))
    io.write_json("util.json", UtilitySpec.exponential(1.0).to_dict())
    return tmp_path


def _result(path):
    return json.loads(open(path).read())


def test_cli_superhedge(workdir, capsys):
    code = cli.run(["superhedge", "--tree", "tree.json", "--claim", "claim.json",
                    "--friction", "fric.json", "--out", "r.json"])
    assert code == 0
    doc = _result("r.json")
    assert doc["result"]["status"] == "optimal"
    assert set(doc["inputs"]) == {"tree", "claim", "friction"}
    assert len(doc["inputs"]["tree"]["sha256"]) == 64
    assert "superhedge:" in capsys.readouterr().out


def test_cli_deterministic(workdir):
    args = ["superhedge", "--tree", "tree.json", "--claim", "claim.json", "--friction", "fric.json"]
    cli.run(args + ["--out", "a.json", "--threads", "1"])
    cli.run(args + ["--out", "b.json", "--threads", "1"])
    a, b = _result("a.json"), _result("b.json")
    for doc in (a, b):
        doc.pop("wall_time")
        doc["result"].pop("wall_time")
    assert io.dumps(a) == io.dumps(b)


def test_cli_threads_env(workdir, monkeypatch):
    monkeypatch.setenv("FRICTIONLAB_THREADS", "3")
    cli.run(["reproduce-example2", "--out", "e.json"])
    assert _result("e.json")["threads"] == 3


def test_cli_dual_eval_and_validate(workdir):
    cli.run(["superhedge", "--tree", "tree.json", "--claim", "claim.json",
             "--friction", "fric.json", "--out", "r.json"])
    io.write_json("cert.json", _result("r.json")["result"]["certificate"])
    assert cli.run(["dual-eval", "--tree", "tree.json", "--claim", "claim.json", "--friction",
                    "fric.json", "--certificate", "cert.json", "--out", "d.json"]) == 0
    assert _result("d.json")["result"]["dual_value"] == pytest.approx(
        _result("r.json")["result"]["primal_value"], abs=1e-7)
    assert cli.run(["validate", "--tree", "tree.json", "--certificate", "cert.json"]) == 0


def test_cli_utility_and_arbitrage(workdir):
    assert cli.run(["maximize-utility", "--tree", "tree.json", "--friction", "fric.json",
                    "--utility", "util.json", "--cash", "0", "--out", "u.json"]) == 0
    assert _result("u.json")["result"]["foc"]["verdict"] == "optimal_certified"
    assert cli.run(["detect-arbitrage", "--tree", "tree.json", "--friction", "fric.json",
                    "--out", "a.json"]) == 0
    assert "c_star" in _result("a.json")["result"]


def test_cli_market_bound_and_simulate(workdir):
    assert cli.run(["simulate", "--paths", "50", "--steps", "4", "--out", "p.npy"]) == 0
    assert cli.run(["market-bound", "--paths", "p.npy", "--friction", "fric.json", "--out", "b.json"]) == 0
    assert len(_result("b.json")["result"]["bound"]) == 50
    t = io.tree_from_dict(_result("tree.json"))
    io.write_json("plan.json", io.plan_to_dict(wl.random_plan(t, np.random.default_rng(0)), t))
    assert cli.run(["market-bound", "--tree", "tree.json", "--friction", "fric.json",
                    "--plan", "plan.json", "--out", "b.json"]) == 0
    assert _result("b.json")["result"]["ok"] is True


def test_cli_example_two(workdir):
    assert cli.run(["reproduce-example2", "--lambda", "1", "--k", "1", "--s", "const:1",
                    "--T", "1", "--steps", "100", "--out", "e.json"]) == 0
    res = _result("e.json")["result"]
    assert res["shares"] == pytest.approx(3 ** 0.5 - 1, abs=1e-10)
    assert res["cash_spent"] == 1.0


def test_cli_example_one(workdir):
    assert cli.run(["reproduce-example1", "--n", "8,16,32", "--mc-paths", "2000", "--out", "e.json"]) == 0
    res = _result("e.json")["result"]
    assert [row["n"] for row in res["table"]] == [8, 16, 32]
    assert res["strictly_increasing"] is True


def test_cli_prob_sum_exit(workdir, capsys):
    doc = _result("tree.json")
    first_child = next(n for n in doc["nodes"] if n["parent"] == doc["nodes"][0]["id"])
    first_child["q"] *= 0.5
    io.write_json("bad.json", doc)
    assert cli.run(["validate", "--tree", "bad.json"]) == 4
    err = json.loads(capsys.readouterr().err)
    assert err["error"]["code"] == "TREE_PROB_SUM"


def test_cli_usage_errors(workdir, capsys):
    assert cli.run(["nonsense"]) == 1
    assert cli.run(["superhedge", "--tree", "missing.json", "--claim", "c", "--friction", "f"]) == 1
    open("broken.json", "w").write("{")
    assert cli.run(["validate", "--tree", "broken.json"]) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert all("error" in json.loads(line) for line in err)


def test_cli_unbounded_and_max_iter(workdir):
    t = io.tree_from_dict(_result("tree.json"))
    io.write_json("big.json", io.claim_to_dict(sh.Claim(np.tile([100.0, 0.0], (t.n_leaves, 1))), t))
    big = ["superhedge", "--tree", "tree.json", "--claim", "big.json", "--friction", "fric.json"]
    assert cli.run(big + ["--ceiling", "10"]) == 2
    args = ["superhedge", "--tree", "tree.json", "--claim", "claim.json", "--friction", "fric.json"]
    assert cli.run(args + ["--max-iter", "2"]) == 3
