import json

import pytest

from conftest import FIXTURES
from lred import cli
from lred.errors import ExpressionSyntaxError, SchemaError
from lred.problem import canonical_json, load, save


def _json(capsys, argv):
    code = cli.main(argv + ["--format", "json"])
    return code, json.loads(capsys.readouterr().out)


def test_check_on_a_good_fixture_exits_zero(capsys):
    code, rep = _json(capsys, ["check", str(FIXTURES["schwarzschild_stationary"])])
    assert code == 0 and rep["status"] == "ok"
    assert rep["sections"]["check"]["transversality"]["holds"] is False


def test_empty_kinematic_bundle_exits_two(capsys):
    code, rep = _json(capsys, ["all", str(FIXTURES["mech_translation"])])
    assert code == 2
    assert rep["status"] == "finding" and rep["finding"]["kind"] == "EmptyKinematic"


def test_tool_failure_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.lred.json"
    bad.write_text("{not json", encoding="utf-8")
    code, rep = _json(capsys, ["check", str(bad)])
    assert code == 1 and rep["error"]["kind"] == "SchemaError"


def test_several_problems_make_one_document(capsys):
    paths = [str(FIXTURES[n]) for n in ("heat_translation", "mech_translation")]
    code, doc = _json(capsys, ["kinematic"] + paths)
    assert code == 2
    assert [r["status"] for r in doc["reports"]] == ["ok", "finding"]


def test_golden_flag(capsys):
    code, rep = _json(capsys, ["all", str(FIXTURES["heat_translation"]), "--golden"])
    assert code == 0 and rep["golden"]["ok"]


def test_golden_mismatch_is_an_error(tmp_path, capsys):
    src = FIXTURES["heat_translation"]
    dst = tmp_path / src.name
    dst.write_text(src.read_text(encoding="utf-8"), encoding="utf-8")
    gold = json.loads(src.with_name("heat_translation.golden.json").read_text(encoding="utf-8"))
    gold["reduced"]["F1"] = "D(U, xi) - D(U, xi, xi)"
    (tmp_path / "heat_translation.golden.json").write_text(json.dumps(gold), encoding="utf-8")
    code, rep = _json(capsys, ["all", str(dst), "--golden"])
    assert code == 1 and rep["error"]["kind"] == "GoldenMismatch"


def test_output_is_deterministic(tmp_path):
    p = str(FIXTURES["wave_boost"])
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli.main(["all", p, "--format", "json", "--out", str(a)]) == 0
    assert cli.main(["all", p, "--format", "json", "--out", str(b), "--jobs", "2"]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_text_output(capsys):
    assert cli.main(["reduce", str(FIXTURES["heat_translation"])]) == 0
    out = capsys.readouterr().out
    assert "invariant frame: dim 1" in out and "certificates: factorization=true" in out


def test_candidates_file(tmp_path, capsys):
    cand = tmp_path / "c.json"
    cand.write_text(json.dumps([{"name": "Dx1", "coeffs": {"x1": "1"}}]), encoding="utf-8")
    code, rep = _json(capsys, ["residual", str(FIXTURES["euler_rotational"]), "--candidates", str(cand)])
    verdicts = {c["candidate"]: c["isotropy"]["verdict"] for c in rep["sections"]["residual"]}
    assert code == 0 and verdicts["Dx1"] == "outside"


# -- problem files -------------------------------------------------------------


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_load_save_round_trip(name, tmp_path):
    spec = load(FIXTURES[name])
    out = tmp_path / f"{name}.lred.json"
    save(spec, out)
    again = load(out)
    assert canonical_json(again.raw) == canonical_json(spec.raw)
    assert again.sha256 == spec.sha256


def test_syntax_error_reports_the_line(tmp_path):
    raw = json.loads(FIXTURES["heat_translation"].read_text(encoding="utf-8"))
    raw["operator"]["components"]["e"] = "u_t - * u_xx"
    p = tmp_path / "broken.lred.json"
    text = json.dumps(raw, indent=2)
    p.write_text(text, encoding="utf-8")
    line = next(i for i, l in enumerate(text.splitlines(), 1) if "u_t - * u_xx" in l)
    with pytest.raises(ExpressionSyntaxError) as exc:
        load(p)
    assert f"broken.lred.json:{line}:" in str(exc.value)
    assert exc.value.details["line"] == line


def test_invalid_json_reports_the_line(tmp_path):
    p = tmp_path / "x.lred.json"
    p.write_text('{\n  "name": "x",\n  oops\n}', encoding="utf-8")
    with pytest.raises(SchemaError, match=r"x.lred.json:3"):
        load(p)
