"""End-to-end acceptance checks, one test per criterion."""
import json
import time

from conftest import (
    CORPUS, corpus_fixtures, corpus_id, drop_effects, fixture_meta, index_of, level0_proof,
    record_criterion,
)
from micro import MICRO, micro_source
from soupgen.agent import audit
from soupgen.cli import main
from soupgen.engine import ResourceBudget, verify
from soupgen.minic.index import parse_project
from soupgen.pipeline import STAGE_FILES, generate, match_exposure, verify_proof
from soupgen.scope import run_scope_stage
from test_differential import agree

RECORD_COPY = CORPUS / "record_copy"
RET = "ret_of(get_record_count)"


def test_criterion_1_record_copy_golden_run(tmp_path):
    start = time.monotonic()
    res = generate(RECORD_COPY, "process_record", out=tmp_path / "l")
    elapsed = time.monotonic() - start
    s2, s3 = res.snapshot("stage2"), res.snapshot("stage3")
    pre = [str(t) for t in s3.proof.env.all_preconditions()]
    errs = [e.property for e in res.errors]
    fixed = generate(CORPUS / "record_copy_fixed", "process_record", out=tmp_path / "f")
    checks = {
        "bound": s2.proof.bounds.as_dict() == {"process_record.0": 11},
        "precondition": f"{RET} <= 10" in pre,
        "one dst error": len(errs) == 1 and (errs[0].file, errs[0].line) == ("record.mc", 11)
        and errs[0].kind == "oob-pointer-deref",
        "fixed verified": fixed.errors == [] and fixed.snapshot("stage3").report.status == "verified",
        "runtime": elapsed < 30,
    }
    ok = all(checks.values())
    record_criterion(1, ok, f"bound={s2.proof.bounds.as_dict()} pre={pre} errors={[e.id for e in errs]} "
                            f"fixed={fixed.snapshot('stage3').report.status} {elapsed:.1f}s")
    assert ok, checks


def test_criterion_2_handwritten_strict_proof(tmp_path):
    out = tmp_path / "l"
    generate(RECORD_COPY, "process_record", out=out)
    inferred = (out / "stage3.proof").read_text()
    assert f"pre variable-constant {RET} <= 10" in inferred
    hand = tmp_path / "hand.proof"
    hand.write_text(inferred.replace(f"{RET} <= 10", f"{RET} < 10"))
    report = verify_proof(hand, RECORD_COPY)
    code = main(["verify", "--project", str(RECORD_COPY), "--proof", str(hand)])
    ok = report.status == "verified" and code == 0
    record_criterion(2, ok, f"hand-written '< 10' -> {report.status}; pipeline infers '<= 10'")
    assert ok


def test_criterion_3_option_loop_bound(corpus_runs):
    res, _ = corpus_runs.get(CORPUS / "option_loop")
    bounds = res.snapshot("stage2").proof.bounds.as_dict()
    ok = bounds == {"process_options.0": 6}
    record_criterion(3, ok, f"bounds={bounds}")
    assert ok


def test_criterion_4_micro_suite():
    passed = 0
    for kind, (bad, good) in sorted(MICRO.items()):
        for body, want_violation in ((bad, True), (good, False)):
            index = index_of({"m.mc": micro_source(body)})
            report = verify(level0_proof(index, "entry"), index)
            kinds = {q.kind for q, _ in report.violations}
            passed += (kind in kinds) if want_violation else report.status == "verified"
    ok = len(MICRO) == 20 and passed == 40
    record_criterion(4, ok, f"{passed}/40 micro programs")
    assert ok


def test_criterion_5_differential_oracle():
    n = 50
    start = time.monotonic()
    agreeing = sum(not agree(seed)[0] for seed in range(1000, 1000 + n))
    elapsed = time.monotonic() - start
    ok = agreeing == n and elapsed < 300
    record_criterion(5, ok, f"{agreeing}/{n} agree in {elapsed:.1f}s")
    assert ok


def test_criterion_6_seeded_bugs(corpus_runs):
    exposed, kinds, wrong = 0, set(), []
    seeded = [f for f in corpus_fixtures() if "expect" in fixture_meta(f)]
    for fixture in seeded:
        meta = fixture_meta(fixture)
        _, out = corpus_runs.get(fixture)
        for sink in meta["sinks"]:
            doc = match_exposure(out / "errors.json", sink)
            want = meta["expect"] == "exposed"
            if doc["exposed"] != want:
                wrong.append(corpus_id(fixture))
            elif want:
                exposed += 1
                kinds.add(sink.rsplit(":", 1)[1])
    n_bugs = sum(fixture_meta(f)["expect"] == "exposed" for f in seeded)
    ok = n_bugs == 10 and exposed == 10 and len(kinds) >= 6 and not wrong
    record_criterion(6, ok, f"{exposed}/{n_bugs} exposed over {len(kinds)} kinds; mismatches={wrong}")
    assert ok


def test_criterion_7_corpus_invariants(corpus_runs):
    bad = []
    for fixture in corpus_fixtures():
        res, a = corpus_runs.get(fixture, "a")
        _, b = corpus_runs.get(fixture, "b")
        stages = json.loads((a / "metrics.json").read_text())["stages"]
        lines = [stages[s]["covered_lines"] for s in ("stage1", "stage2", "stage3")]
        ratios = [stages[s]["verified_ratio"] for s in ("stage1", "stage2", "stage3")]
        same = all((a / n).read_bytes() == (b / n).read_bytes() for n in STAGE_FILES + ("errors.json",))
        if lines != sorted(lines) or ratios != sorted(ratios) or audit(res.log.events) or not same:
            bad.append(corpus_id(fixture))
    ok = not bad
    record_criterion(7, ok, f"{len(corpus_fixtures())} fixtures; failing={bad}")
    assert ok


def test_criterion_8_budgets(tmp_path):
    code = main(["generate", "--project", str(RECORD_COPY), "--entry", "process_record",
                 "--state-budget", "1", "--out", str(tmp_path / "o")])
    res = run_scope_stage(parse_project(CORPUS / "budget_levels"), "run", 2, ResourceBudget(max_file_depth=2))
    ok = code == 2 and res is not None and res.level == 1
    record_criterion(8, ok, f"state_budget=1 exit={code}; budget_levels level={res and res.level}")
    assert ok


def test_criterion_9_preconditions_are_minimal(corpus_runs):
    checked, loose = 0, []
    for fixture in corpus_fixtures():
        res, _ = corpus_runs.get(fixture)
        for term, new_ids, more in drop_effects(res.snapshot("stage3"), parse_project(fixture)):
            checked += 1
            if not (new_ids or more):
                loose.append(f"{corpus_id(fixture)}: {term}")
    ok = not loose
    record_criterion(9, ok, f"{checked} final preconditions each needed; droppable={loose}")
    assert ok
