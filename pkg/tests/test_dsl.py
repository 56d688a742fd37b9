import io
import json

import pytest
from hypothesis import given, strategies as st

from bourbaki.cli import main
from bourbaki.dsl import ModelError, build_model, emit_report, format_model, parse_model, run_checks
from conftest import MODELS, polys

MINIMAL = "chart 3\nbundle E rank 5\nbracket B = dorfman k=1\ncheck classify B\n"


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def write(tmp_path, text, name="m.alg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- parsing ------------------------------------------------------------------


def test_minimal_document():
    doc = parse_model(MINIMAL)
    assert len(doc.checks) == 1
    assert [s.name for s in doc.statements if type(s).__name__ == "BuiltinDecl"] == ["B"]


def test_poly_declaration_round_trips():
    text = "chart 3\npoly f = 3/2*x1^2*x3 - x2\n"
    assert format_model(parse_model(text)) == text


@given(polys(3))
def test_any_poly_round_trips(p):
    text = f"chart 3\npoly f = {p}\n"
    assert format_model(parse_model(text)) == text


def test_comments_survive_formatting():
    text = "# header\nchart 2\n\n\n\nform w = x1*d1,2  # trailing\n"
    once = format_model(parse_model(text))
    assert "# header" in once and "# trailing" in once
    assert format_model(parse_model(once)) == once


@pytest.mark.parametrize(
    "text, kind, where, needle",
    [
        ("chart 3\ntensor H [2,2,1] { (1,2,1): x4 }\n", "semantic", (2, 29), "x4 outside chart"),
        ("chart 3\nbracket B = dorfman k=\n", "syntax", (2, 23), "expected a value for k"),
        ("chart 3\ncheck jacobi Q\n", "semantic", (2, 14), "undeclared name 'Q'"),
        ("chart 3\nbracket B = dorfman k=1\nbracket B = dorfman k=2\n", "semantic", (3, 9), "line 2"),
        ("chart 2\nbracket B = dorfman k=5\n", "semantic", (2, 1), "cannot construct"),
        ("chart 2\nform w = x1*d1,3\n", "semantic", None, None),
        ("chart 2\nbogus\n", "syntax", (2, 1), "expected one of"),
    ],
)
def test_diagnostics(text, kind, where, needle):
    with pytest.raises(ModelError) as err:
        build_model(text)
    e = err.value
    assert e.kind == kind
    if where:
        assert (e.line, e.col) == where
    if needle:
        assert needle in e.render("m.alg")


@given(st.text(max_size=60))
def test_parser_is_total(text):
    try:
        parse_model(text)
    except ModelError:
        pass


@given(st.lists(st.sampled_from(["chart 2", "form w = d1", "poly f = x1", "check jacobi f", "(", "}", "bracket B = dorfman k=1", "# c", ""]), max_size=6))
def test_parser_is_total_on_near_miss_documents(lines):
    try:
        build_model("\n".join(lines))
    except ModelError:
        pass


# -- running --------------------------------------------------------------------


def test_empty_directive_list():
    report = run_checks(build_model("chart 2\n"))
    assert report.exit_code == 0 and report.checks == []
    data = json.loads(emit_report(report, "json"))
    assert data["checks"] == []


def test_dorfman_model_classification():
    report = run_checks(build_model((MODELS / "dorfman.alg").read_text()))
    data = json.loads(emit_report(report, "json"))
    assert report.exit_code == 0
    assert data["classification"][0]["label"] == "Metric-Bourbaki (Courant instance)"
    assert {c["verdict"] for c in data["checks"]} <= {"proved-structural", "verified"}
    assert set(data) >= {"version", "input_sha256", "checks"}
    for c in data["checks"]:
        assert set(c) >= {"name", "axiom", "verdict", "degree", "seed", "millis"}


def test_severa_model_failure_has_witness():
    report = run_checks(build_model((MODELS / "severa.alg").read_text()))
    assert report.exit_code == 1
    data = json.loads(emit_report(report, "json"))
    by_name = {c["name"]: c for c in data["checks"]}
    assert by_name["closed_twist"]["verdict"] == "verified"
    bad = by_name["open_twist"]
    assert bad["verdict"] == "failed"
    assert len(bad["witness"]["sections"]) == 3
    from bourbaki import Poly

    for text in bad["witness"]["residual"]:
        Poly.parse(text, 4)
    text = emit_report(report, "text")
    assert "Leibniz-Jacobi" in text and "FAIL open_twist" in text


def test_overrides_beat_directives():
    doc = "chart 2\nbracket B = dorfman k=1\ncheck jacobi B degree=2\n"
    rep = run_checks(build_model(doc), degree=1, seed=5)
    data = json.loads(emit_report(rep, "json"))
    assert data["checks"][0]["degree"] == 1 and data["checks"][0]["seed"] == 5


# -- command line ---------------------------------------------------------------


def test_cli_check_exit_codes(tmp_path):
    assert run("check", str(MODELS / "dorfman.alg"))[0] == 0
    assert run("check", str(MODELS / "severa.alg"))[0] == 1
    code, _, err = run("check", write(tmp_path, "chart 2\ncheck jacobi X\n"))
    assert code == 2 and "m.alg:2:" in err
    assert run("check", str(tmp_path / "missing.alg"))[0] == 2


def test_cli_fmt_write(tmp_path):
    path = write(tmp_path, "chart   2\n\n\n\nform w = x1*d1 + d2\n")
    code, out, _ = run("fmt", path)
    assert code == 0
    assert run("fmt", path, "--write")[0] == 0
    assert open(path).read() == out
    assert run("fmt", path)[1] == out


def test_cli_replay(tmp_path):
    model = str(MODELS / "severa.alg")
    code, out, _ = run("check", model, "--json")
    assert code == 1
    report = write(tmp_path, out, "report.json")
    code, text, _ = run("replay", model, report)
    assert code == 0 and "reproduced" in text
    entry = next(c for c in json.loads(out)["checks"] if c["verdict"] == "failed")
    entry["witness"]["residual"] = ["0"] * len(entry["witness"]["residual"])
    tampered = write(tmp_path, json.dumps(entry), "one.json")
    code, text, _ = run("replay", model, tampered)
    assert code == 1 and "differs from record" in text


def test_cli_bad_arguments():
    assert run("check")[0] == 2
    assert run("check", str(MODELS / "dorfman.alg"), "--jobs", "0")[0] == 2


def test_timings_flag_fills_millis():
    code, out, _ = run("check", str(MODELS / "connection.alg"), "--json", "--timings")
    assert code == 0
    assert all(isinstance(c["millis"], (int, float)) for c in json.loads(out)["checks"])
    code, out, _ = run("check", str(MODELS / "connection.alg"), "--json")
    assert all(c["millis"] is None for c in json.loads(out)["checks"])
