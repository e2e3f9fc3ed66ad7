import json
import subprocess
import sys

import pytest

from conftest import CORPUS, write_project
from soupgen.cli import main
from soupgen.pipeline import (
    ERRORS_SCHEMA, EXIT_BUDGET, EXIT_INPUT, EXIT_OK, EXPOSURE_SCHEMA, METRICS_SCHEMA, InputError,
    parse_sink,
)

OUTPUTS = ["stage1.proof", "stage2.proof", "stage3.proof", "report.json", "errors.json",
           "metrics.json", "stagelog.json"]


@pytest.fixture(scope="module")
def record_copy_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "record_copy"
    code = main(["generate", "--project", str(CORPUS / "record_copy"), "--entry", "process_record",
                 "--out", str(out)])
    assert code == EXIT_OK
    return out


def test_generate_writes_every_artifact(record_copy_out):
    for name in OUTPUTS:
        assert (record_copy_out / name).is_file(), name
    for name in OUTPUTS:
        if name.endswith(".json"):
            assert "schema_version" in json.loads((record_copy_out / name).read_text())
        else:
            assert (record_copy_out / name).read_text().startswith("manifest_version = 1")


def test_metrics_document(record_copy_out):
    doc = json.loads((record_copy_out / "metrics.json").read_text())
    assert doc["schema_version"] == METRICS_SCHEMA
    s1, s2, s3 = (doc["stages"][k] for k in ("stage1", "stage2", "stage3"))
    assert s2["custom_loop_bounds"] == 1
    assert s3["preconditions"] == 2 and s3["reported_errors"] == 1
    assert s1["covered_lines"] <= s2["covered_lines"] <= s3["covered_lines"]
    assert s1["verified_ratio"] <= s2["verified_ratio"] <= s3["verified_ratio"]
    assert all(s["structurally_valid"] for s in (s1, s2, s3))


def test_errors_document(record_copy_out):
    doc = json.loads((record_copy_out / "errors.json").read_text())
    assert doc["schema_version"] == ERRORS_SCHEMA
    assert doc["entry"] == "process_record"
    assert [e["property"]["id"] for e in doc["errors"]] == ["oob-pointer-deref@record.mc:11:1"]


def test_verify_reproduces_saved_report(record_copy_out, capsys):
    assert main(["verify", "--project", str(CORPUS / "record_copy"),
                 "--proof", str(record_copy_out / "stage3.proof")]) == EXIT_OK
    printed = json.loads(capsys.readouterr().out)
    saved = json.loads((record_copy_out / "report.json").read_text())
    assert printed == saved


def test_expose_reports_criterion(tmp_path, capsys):
    out = tmp_path / "mutant"
    fixture = CORPUS / "record_copy_mutant"
    assert main(["generate", "--project", str(fixture), "--entry", "process_record", "--out", str(out)]) == 0
    capsys.readouterr()
    assert main(["expose", "--errors", str(out / "errors.json"), "--sink", "record.mc:11:oob-pointer-deref"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc == {"schema_version": EXPOSURE_SCHEMA, "sink": ["record.mc", 11, "oob-pointer-deref"],
                   "exposed": True, "criterion": "i", "error": "oob-pointer-deref@record.mc:11:1"}
    assert main(["expose", "--errors", str(out / "errors.json"), "--sink", "record.mc:3:div-by-zero"]) == 0
    assert json.loads(capsys.readouterr().out)["exposed"] is False


def test_state_budget_one_exits_two(tmp_path):
    code = main(["generate", "--project", str(CORPUS / "record_copy"), "--entry", "process_record",
                 "--state-budget", "1", "--out", str(tmp_path / "o")])
    assert code == EXIT_BUDGET
    metrics = json.loads((tmp_path / "o" / "metrics.json").read_text())
    assert metrics["exit_code"] == EXIT_BUDGET and metrics["stages"] == {}


@pytest.mark.parametrize("argv", [
    ["generate", "--project", "/nonexistent", "--entry", "f"],
    ["generate", "--project", str(CORPUS / "record_copy"), "--entry", "nosuch"],
    ["generate", "--project", str(CORPUS / "record_copy"), "--entry", "process_record", "--scope-depth", "0"],
    ["generate", "--project", str(CORPUS / "record_copy"), "--entry", "process_record", "--resolver", "remote"],
    ["verify", "--project", str(CORPUS / "record_copy"), "--proof", "/nonexistent.proof"],
    ["expose", "--errors", "/nonexistent.json", "--sink", "a.mc:1:null-deref"],
    ["bogus"],
])
def test_input_errors_exit_three(argv, tmp_path):
    assert main(argv + (["--out", str(tmp_path / "o")] if argv[0] == "generate" else [])) == EXIT_INPUT


def test_syntax_error_in_project_exits_three(tmp_path):
    root = write_project(tmp_path / "p", {"a.mc": "u32 f( {\n"})
    assert main(["generate", "--project", str(root), "--entry", "f", "--out", str(tmp_path / "o")]) == EXIT_INPUT


def test_proof_against_changed_project_exits_three(record_copy_out, tmp_path):
    root = write_project(tmp_path / "p", {"record.mc": "void caller() {\n}\n"})
    assert main(["verify", "--project", str(root), "--proof", str(record_copy_out / "stage3.proof")]) == EXIT_INPUT


@pytest.mark.parametrize("text", ["a.mc:1", "a.mc:x:null-deref", ":3:null-deref", "a.mc:3:"])
def test_malformed_sinks(text):
    with pytest.raises(InputError):
        parse_sink(text)


def test_sink_paths_may_contain_colons():
    assert parse_sink("dir:a/b.mc:12:double-free") == ("dir:a/b.mc", 12, "double-free")


def test_console_script_runs():
    proc = subprocess.run([sys.executable, "-m", "soupgen.cli", "verify", "--project", "/nonexistent",
                           "--proof", "x"], capture_output=True, text=True)
    assert proc.returncode == EXIT_INPUT
    assert "soupgen:" in proc.stderr
