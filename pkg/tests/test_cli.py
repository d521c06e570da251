import json
import shutil
import subprocess
from fractions import Fraction

import pytest

from amseq.cli import main, run
from amseq.report import SCHEMA
from amseq.spec_lang import load_prefix

SMALL = ["--window", "2^16"]


def ops(rep):
    return {o["op"]: o for o in rep.to_dict()["operations"]}


def classify(spec, *extra, env=None):
    return run(["classify", spec, *SMALL, *extra], environ=env or {})


# -- classify


def test_classify_square():
    rep = classify("omega^2")
    o = ops(rep)
    assert o["infty_regular"]["verdict"] == "holds"
    assert o["trace_dimension"]["result"]["value"] == "one"
    assert rep.exit_code == 0


def test_classify_harmonic():
    rep = classify("omega")
    o = ops(rep)
    assert o["regular"]["verdict"] == "fails"
    assert o["trace_dimension"]["result"]["value"] == "uncountable"
    assert o["infty_regular"]["status"] == "skipped"
    assert o["cross_check_412"]["status"] == "skipped"
    assert rep.exit_code == 0


def test_classify_geometric():
    o = ops(classify("geom(1/3)"))
    assert o["delta_half"]["verdict"] == "fails"
    assert o["infty_regular"]["verdict"] == "holds"


def test_classify_runs_every_operation_in_order():
    names = [o["op"] for o in classify("omega^1.5").to_dict()["operations"]]
    assert names == [
        "symbolic_summability",
        "delta_half",
        "regular",
        "infty_regular",
        "matuszewska_indices",
        "analytic_bounds",
        "cross_check_412",
        "trace_dimension",
    ]


def test_unknown_summability_skips():
    o = ops(classify("omega*pw(ex45iii)"))
    assert o["symbolic_summability"]["verdict"] == "inconclusive"
    assert o["infty_regular"]["status"] == "skipped"


def test_inconclusive_exit_code():
    rep = classify("prefix([1,1,1])")
    assert ops(rep)["delta_half"]["verdict"] == "inconclusive"
    assert rep.exit_code == 2 and rep.status == "inconclusive"


# -- errors


def test_parse_error_reports_position():
    rep = run(["classify", "omega^2 * bogus"], environ={})
    d = rep.to_dict()
    assert d["error"]["type"] == "parse" and d["error"]["position"] == 10
    assert rep.exit_code == 1


def test_bad_environment_value():
    rep = run(["classify", "omega"], environ={"AMSEQ_WINDOW": "abc"})
    assert rep.to_dict()["error"]["type"] == "config"
    assert "AMSEQ_WINDOW" in rep.error["message"]
    assert rep.exit_code == 1


def test_unknown_suite():
    rep = run(["verify", "nosuchsuite"], environ={})
    assert rep.exit_code == 1 and "nosuchsuite" in rep.error["message"]


def test_unknown_construction():
    rep = run(["construct", "nothing"], environ={})
    assert rep.exit_code == 1


def test_bad_construction_parameter():
    rep = run(["construct", "remark42", "k=3"], environ={})
    assert rep.exit_code == 1 and "unknown parameter" in rep.error["message"]


def test_construction_precondition_named():
    rep = run(["construct", "lemma47", "xi=omega^2"], environ={})
    assert rep.exit_code == 1
    assert "summable" in json.dumps(rep.to_dict())


# -- configuration


def test_flag_beats_environment_beats_default():
    env = {"AMSEQ_WINDOW": "2^17", "AMSEQ_TOL": "1e-9"}
    cfg = run(["classify", "omega", "--window", "65536"], environ=env).to_dict()["config"]
    assert cfg["values"]["window"] == 65536 and cfg["sources"]["window"] == "flag"
    assert cfg["values"]["tol"] == 1e-9 and cfg["sources"]["tol"] == "env"
    assert cfg["sources"]["mmax"] == "default"
    assert cfg["defaults"]["window"] == "auto"


def test_power_of_two_syntax():
    cfg = classify("omega").to_dict()["config"]
    assert cfg["values"]["window"] == 1 << 16


# -- reports


def test_report_schema_and_determinism():
    a, b = classify("omega^2"), classify("omega^2")
    assert a.to_dict()["schema"] == SCHEMA
    assert json.dumps(a.body(), sort_keys=True) == json.dumps(b.body(), sort_keys=True)
    assert "wall_time" not in a.body() and "total" in a.to_dict()["wall_time"]


def test_report_json_round_trip():
    rep = classify("omega")
    assert json.loads(rep.to_json()) == rep.to_dict()


def test_pretty_output(capsys):
    code = main(["classify", "omega", *SMALL, "--pretty"])
    out = capsys.readouterr().out
    assert code == 0 and "trace_dimension" in out and "status definite" in out


def test_json_output_is_default(capsys):
    main(["member", "omega^2", "omega", *SMALL])
    assert json.loads(capsys.readouterr().out)["command"] == "member"


# -- member


def test_member_square_in_harmonic():
    o = ops(run(["member", "omega^2", "omega", *SMALL], environ={}))
    assert o["member"]["verdict"] == "holds" and o["member"]["result"]["m"] == 1
    assert o["se_member"]["verdict"] == "holds"


def test_member_respects_mmax():
    o = ops(run(["member", "D5(geom(1/2))", "geom(1/2)", "--window", "2^14", "--mmax", "4"], environ={}))
    assert o["member"]["verdict"] == "fails"


# -- prefix files


def test_prefix_monotonize_noted(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    (tmp_path / "x.txt").write_text("1\n3\n2\n")
    bad = run(["classify", "prefix(x.txt)"], environ={})
    assert bad.to_dict()["error"]["type"] == "prefix_file"
    rep = run(["classify", "prefix(x.txt)", "--monotonize"], environ={})
    assert any("monotonized" in n for n in rep.notes)
    assert rep.error is None


# -- construct


def test_indicator_witness_with_dump(tmp_path):
    path = tmp_path / "w.txt"
    rep = run(["construct", "remark42", "j=5", "--dump", str(path), "--dump-len", "12"], environ={})
    o = ops(rep)["remark42"]
    assert o["verdict"] == "holds" and o["result"]["ok"]
    assert o["result"]["stats"]["value"] in ("4/5", 0.8)
    vals, _ = load_prefix(str(path))
    assert vals == [1] * 9 + [0] * 3


def test_dump_of_inexact_sequence_reads_back(tmp_path):
    path = tmp_path / "x.txt"
    rep = run(["construct", "thm78xi", "L=6", "--dump", str(path), "--dump-len", "200"], environ={})
    assert rep.exit_code == 0
    vals, _ = load_prefix(str(path))
    assert len(vals) == 200 and vals[0] == 1
    assert abs(float(vals[2]) - 3 ** -0.5 / 2) < 1e-25 + 1e-16


def test_block_construction_rule_echo():
    rep = run(["construct", "ex45iii", "K=8"], environ={})
    assert rep.exit_code == 0 and rep.inputs["params"] == {"K": 8, "rule": "ex45iii"}


# -- verify


def test_verify_single_suite():
    rep = run(["verify", "cor43", "--jobs", "1"], environ={})
    o = ops(rep)["cor43"]
    assert o["verdict"] == "holds" and o["result"]["failed"] == []
    assert rep.exit_code == 0


@pytest.mark.skipif(shutil.which("amseq") is None, reason="console script not installed")
def test_console_script_exit_code(tmp_path):
    p = subprocess.run(["amseq", "classify", "omega^(", "--json"], capture_output=True, text=True)
    assert p.returncode == 1
    assert json.loads(p.stdout)["error"]["type"] == "parse"
