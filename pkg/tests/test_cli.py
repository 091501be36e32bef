import csv
import json
import subprocess
import sys

import pytest

from recourse_trees.cli import main

SPEC = {
    "n": 300, "seed": 3,
    "features": [
        {"name": "sex", "kind": "categorical", "categories": ["female", "male"], "actionability": "immutable"},
        {"name": "income", "kind": "numeric", "low": 0, "high": 100, "bins": 10,
         "actionability": "increase_only", "by_group": {"female": [0, 40], "male": [30, 100]}},
        {"name": "savings", "kind": "numeric", "low": 0, "high": 50, "bins": 5, "actionability": "increase_only"},
        {"name": "owner", "kind": "binary", "p": 0.4},
    ],
    "rule": {"feature": "income", "threshold": 55},
    "group_thresholds": {"feature": "sex", "thresholds": {"female": 65, "male": 45}},
}


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    (root / "spec.json").write_text(json.dumps(SPEC))
    assert main(["gen-synth", "--spec", str(root / "spec.json"), "--out", str(root / "data")]) == 0
    return root / "data"


def solve_args(d, out, *extra):
    return ["solve", "--data", str(d / "data.csv"), "--schema", str(d / "schema.json"),
            "--predictor", f"rules:{d / 'rules.json'}", "--depth", "2", "--max-nodes", "3",
            "--min-leaf", "10", "--sparsity", "2", "--out", str(out), *extra]


@pytest.fixture(scope="module")
def solved(synth, tmp_path_factory):
    out = tmp_path_factory.mktemp("front")
    assert main(solve_args(synth, out)) == 0
    return out


def test_gen_synth_files(synth):
    assert {p.name for p in synth.iterdir()} == {"data.csv", "schema.json", "rules.json"}
    with open(synth / "data.csv") as fh:
        assert next(csv.reader(fh)) == ["sex", "income", "savings", "owner", "label"]


def test_solve_outputs(solved):
    doc = json.loads((solved / "front.json").read_text())
    assert doc["status"] == "complete"
    sols = doc["solutions"]
    assert sols[0]["v_L"] == doc["n_affected"] and sols[0]["v_C"] == 0
    costs = [s["v_C"] for s in sols]
    assert costs == sorted(costs)
    for s in sols:
        assert s["invalidity"] == s["cost_mean"] + s["loss_mean"]
        assert s["depth"] <= 2
    stats = json.loads((solved / "stats.json").read_text())
    assert stats["front_size"] == len(sols)
    rows = list(csv.DictReader(open(solved / "front.csv")))
    assert len(rows) == len(sols)


def test_solve_is_deterministic_across_threads(synth, tmp_path):
    assert main(solve_args(synth, tmp_path / "a")) == 0
    assert main(solve_args(synth, tmp_path / "b", "--threads", "4")) == 0
    assert (tmp_path / "a" / "front.json").read_bytes() == (tmp_path / "b" / "front.json").read_bytes()


def test_evaluate_train_matches_front(synth, solved):
    out = solved / "m.csv"
    assert main(["evaluate", "--front", str(solved / "front.json"), "--data", str(synth / "data.csv"),
                 "--split", "train", "--out", str(out)]) == 0
    doc = json.loads((solved / "front.json").read_text())
    rows = list(csv.DictReader(open(out)))
    for s, r in zip(doc["solutions"], rows):
        assert int(r["v_L"]) == s["v_L"]
        assert float(r["cost_mean"]) == s["cost_mean"]


def test_audit_outputs(synth, solved, tmp_path):
    assert main(["audit", "--front", str(solved / "front.json"), "--data", str(synth / "data.csv"),
                 "--group", "sex", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "audit.json").read_text())
    assert rep["disadvantaged"] == "female" and rep["advantaged"] == "male"
    assert (tmp_path / "audit.md").read_text().startswith("# Recourse audit")
    assert (tmp_path / "audit_metrics.csv").exists()


def test_audit_unknown_group_is_config_error(synth, solved, tmp_path):
    assert main(["audit", "--front", str(solved / "front.json"), "--data", str(synth / "data.csv"),
                 "--group", "zodiac", "--out", str(tmp_path)]) == 2


def test_bad_inputs_exit_2(synth, tmp_path):
    bad = tmp_path / "schema.json"
    bad.write_text('{"features": [{"name": "x", "kind": "ordinal"}]}')
    args = solve_args(synth, tmp_path / "o")
    args[args.index("--schema") + 1] = str(bad)
    assert main(args) == 2
    assert main(solve_args(synth, tmp_path / "o", "--predictor", "oracle")) == 2
    args = solve_args(synth, tmp_path / "o")
    args[args.index("--max-nodes") + 1] = "9"
    assert main(args) == 2


def test_infeasible_exit_3(synth, tmp_path):
    assert main(solve_args(synth, tmp_path / "o", "--min-leaf", "100000")) == 3
    assert json.loads((tmp_path / "o" / "front.json").read_text())["status"] == "infeasible"


def test_nobody_affected_exit_3(synth, tmp_path):
    rules = tmp_path / "all1.json"
    rules.write_text('{"rules": [], "default": 1}')
    assert main(solve_args(synth, tmp_path / "o", "--predictor", f"rules:{rules}")) == 3


def test_timeout_exit_4(tmp_path):
    (tmp_path / "spec.json").write_text('{"preset": "german", "n": 600, "seed": 1}')
    assert main(["gen-synth", "--spec", str(tmp_path / "spec.json"), "--out", str(tmp_path / "d")]) == 0
    d = tmp_path / "d"
    code = main(["solve", "--data", str(d / "data.csv"), "--schema", str(d / "schema.json"),
                 "--min-leaf", "5", "--timeout", "0.01", "--out", str(tmp_path / "o")])
    assert code == 4
    doc = json.loads((tmp_path / "o" / "front.json").read_text())
    assert doc["status"] == "timed_out" and doc["solutions"]


def test_modified_training_data_refused(synth, solved, tmp_path):
    import shutil
    copy = tmp_path / "data"
    shutil.copytree(synth, copy)
    out = tmp_path / "front"
    assert main(solve_args(copy, out)) == 0
    with open(copy / "data.csv", "a") as fh:
        fh.write("male,99.0,1.0,0,1\n")
    assert main(["evaluate", "--front", str(out / "front.json"), "--data", str(synth / "data.csv")]) == 2


def test_console_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "recourse_trees", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "gen-synth" in r.stdout
