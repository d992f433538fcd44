import csv
import json

import numpy as np
import pytest

from spiderchain.chain_model import SpiderParams, validate
from spiderchain.cli import main


def run(tmp_path, command, path, *extra, name="out"):
    out = tmp_path / name
    code = main([command, "--input", str(path), "--out", str(out), *extra])
    report = json.loads((out / "report.json").read_text())
    assert report["exit_code"] == code
    return code, report, out


def write_chain(tmp_path, payload, name="input.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return path


def rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_validate_ok(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "validate", chain_path)
    assert code == 0 and rep["valid"] and rep["N"] == 3
    again = validate(SpiderParams.from_dict(json.loads((out / "chain.json").read_text())))
    original = validate(SpiderParams.from_dict(json.loads(chain_path.read_text())))
    for n in range(4):
        a, b = again.blocks(n), original.blocks(n)
        for k in "ABC":
            x, y = getattr(a, k), getattr(b, k)
            assert (x is None and y is None) or np.array_equal(x, y)


def test_validate_sum_violation(tmp_path):
    path = write_chain(tmp_path, {"N": 2, "alpha": [0.5, 0.3, 0.3], "legs": [{"prefix": [], "tail": [0.2, 0.5, 0.3]}] * 2})
    code, rep, _ = run(tmp_path, "validate", path)
    assert code == 2 and not rep["valid"]
    assert {v["kind"] for v in rep["violations"]} == {"SumViolation"}


def test_validate_zero_rate(tmp_path):
    path = write_chain(tmp_path, {"N": 1, "alpha": [0.5, 0.5], "legs": [{"prefix": [[0.0, 0.5, 0.5]], "tail": [0.2, 0.5, 0.3]}]})
    code, rep, _ = run(tmp_path, "validate", path)
    assert code == 2 and "ZeroRate" in {v["kind"] for v in rep["violations"]}


def test_malformed_input(tmp_path):
    path = write_chain(tmp_path, {"alpha": [1.0]})
    code, rep, _ = run(tmp_path, "validate", path)
    assert code == 2


def test_missing_input(tmp_path):
    code, rep, _ = run(tmp_path, "validate", tmp_path / "nope.json")
    assert code == 3 and rep["error"] == "InputNotFound"


def test_unreadable_input(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, rep, _ = run(tmp_path, "analyze", bad)
    assert code == 3 and rep["error"] == "InputUnreadable"


def test_bad_option(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "simulate", chain_path, "--paths", "0")
    assert code == 2 and rep["error"] == "BadArgument"


def test_unknown_command(tmp_path, chain_path):
    with pytest.raises(SystemExit):
        main(["explode", "--input", str(chain_path)])


def test_analyze_constant(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "analyze", chain_path, "--levels", "10", "--samples", "50")
    assert code == 0 and rep["constant"]
    assert rep["classification"] == "positive_recurrent"
    lo, hi = rep["support"]
    assert lo == pytest.approx(0.55 - 2 * np.sqrt(0.05)) and hi == pytest.approx(0.55 + 2 * np.sqrt(0.05))
    np.testing.assert_allclose(rep["thresholds"]["values"], rep["thresholds_closed_form"]["values"], atol=1e-12)
    assert sorted(rep["atom_locations"]) == pytest.approx([1 / 12, 1.0])
    dens = rows(out / "density.csv")
    assert len(dens) == 50
    xs = [float(r["x"]) for r in dens]
    assert all(lo < x < hi for x in xs) and xs == sorted(xs)
    assert all(float(r["W11"]) >= 0 for r in dens)
    blocks = json.loads((out / "blocks.json").read_text())
    assert len(blocks) == 11 and "C" not in blocks[0]
    pots = json.loads((out / "potentials.json").read_text())
    assert pots[0]["diagonal"] == pytest.approx([1.0, 1 / 2, 2 / 3])
    conv = json.loads((out / "convergents.json").read_text())
    assert all(conv[m]["hypothesis_holds"] for m in ("1", "2", "3"))


def test_analyze_null_recurrent(tmp_path):
    leg = {"prefix": [], "tail": ["1/4", "1/2", "1/4"]}
    path = write_chain(tmp_path, {"N": 2, "alpha": ["1/2", "1/4", "1/4"], "legs": [leg, leg]})
    code, rep, out = run(tmp_path, "analyze", path, "--levels", "5")
    assert code == 0
    assert rep["classification"] == "null_recurrent"
    assert json.loads((out / "atoms.json").read_text()) == []


def test_analyze_general_chain(tmp_path):
    legs = [{"prefix": [[0.3, 0.4, 0.3]], "tail": [0.25, 0.45, 0.3]}, {"prefix": [], "tail": [0.2, 0.5, 0.3]}]
    path = write_chain(tmp_path, {"N": 2, "alpha": [0.6, 0.2, 0.2], "legs": legs})
    code, rep, _ = run(tmp_path, "analyze", path, "--levels", "5")
    assert code == 0 and not rep["constant"] and "classification" not in rep


def test_km_check(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "km-check", chain_path, "--max-level", "2", "--max-steps", "6")
    assert code == 0 and rep["passed"] and rep["max_error"] < 1e-8
    table = rows(out / "km_check.csv")
    assert len(table) == 3 * 3 * 7
    for r in table:
        if r["n"] == "0" and r["i"] == r["j"]:
            assert float(r["max_abs_error"]) < 1e-12


def test_km_check_impossible_tolerance(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "km-check", chain_path, "--max-level", "1", "--max-steps", "3", "--tol", "1e-20")
    assert code == 1 and not rep["passed"]


def test_factorize_thresholds(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "factorize", chain_path, "--levels", "60")
    assert code == 0 and rep["beta_source"] == "thresholds"
    assert rep["residual"] < 1e-12
    assert len(rows(out / "factors.csv")) == 3 * 62


def test_factorize_explicit_beta(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "factorize", chain_path, "--beta", "1/4,0.3,0.35", "--levels", "20")
    assert code == 0
    first = [r for r in rows(out / "factors.csv") if r["leg"] == "1" and r["depth"] == "1"][0]
    assert float(first["s"]) == pytest.approx(0.5)


def test_factorize_not_stochastic(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "factorize", chain_path, "--beta", "0.19,0.3,0.35")
    assert code == 1
    w = rep["witness"]
    assert w["error"] == "NotStochastic" and w["leg"] == 1 and w["depth"] >= 1


def test_factorize_bad_beta(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "factorize", chain_path, "--beta", "a,b,c")
    assert code == 2 and rep["error"] == "BadArgument"


def test_factorize_wrong_length_beta(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "factorize", chain_path, "--beta", "0.3,0.3")
    assert code == 1 and rep["error"] == "InvalidBeta"


def test_darboux(tmp_path, chain_path):
    code, rep, _ = run(tmp_path, "darboux", chain_path, "--beta", "0.25,0.3,0.35", "--levels", "30", "--gram-degree", "4")
    assert code == 0 and rep["passed"]
    d = np.array(rep["d"]["data"]).reshape(rep["d"]["rows"], rep["d"]["cols"])
    assert d[0, 1] == pytest.approx(0.15)
    P0 = np.array(rep["potential_0"]["data"]).reshape(3, 3)
    np.testing.assert_allclose(P0, np.diag([0.1, 0.5, 0.675]), atol=1e-14)
    assert rep["row_sum_error"] < 1e-12


def test_simulate(tmp_path, chain_path):
    code, rep, out = run(tmp_path, "simulate", chain_path, "--paths", "200000", "--steps", "4", "--workers", "2")
    assert code == 0 and rep["comparison"]["total_variation"] < 0.005
    table = rows(out / "empirical.csv")
    assert sum(int(r["count"]) for r in table) == 200000
    assert table[0]["state"] == "body"


def test_simulate_deterministic(tmp_path, chain_path):
    args = ("--paths", "5000", "--steps", "3", "--seed", "9")
    _, _, a = run(tmp_path, "simulate", chain_path, *args, name="a")
    _, _, b = run(tmp_path, "simulate", chain_path, *args, name="b")
    assert (a / "empirical.csv").read_text() == (b / "empirical.csv").read_text()


def test_report_records_defaults(tmp_path, chain_path):
    _, rep, _ = run(tmp_path, "validate", chain_path)
    assert rep["defaults"]["nodes"] == 512 and rep["defaults"]["levels"] == 100
    assert rep["options"]["seed"] == 0
