import io
import json

import pytest
from hypothesis import given, strategies as st

from conftest import CORPUS, index_of, level0_proof
from soupgen.agent import (
    GateVerdict, RemoteResolver, RuleResolver, SemanticTask, StageLog, audit, build_request,
    decode_result, extract_result_block, gate, make_resolver, prompt_text,
)
from soupgen.engine import verify
from soupgen.pipeline import generate
from soupgen.proof import PreconditionTerm
from soupgen.scope import init_scope

KINDS = ["synthesize-input-model", "model-external-callee", "classify-coverage-gap",
         "estimate-loop-bound", "infer-precondition", "extract-path-constraints", "weaken-precondition"]

json_values = st.recursive(
    st.none() | st.booleans() | st.integers() | st.text(max_size=10),
    lambda inner: st.lists(inner, max_size=3) | st.dictionaries(st.text(max_size=5), inner, max_size=3),
    max_leaves=6)


@given(json_values, st.text(max_size=20), st.booleans())
def test_result_block_is_found_fenced_or_bare(result, rationale, fenced):
    body = json.dumps({"result": result, "rationale": rationale})
    text = f"Here you go.\n```json\n{body}\n```\nThanks." if fenced else body
    assert extract_result_block(text) == {"result": result, "rationale": rationale}


@pytest.mark.parametrize("text", ["no json here", "```json\n[1, 2]\n```", '{"rationale": "x"}'])
def test_replies_without_result_are_rejected(text):
    with pytest.raises(ValueError):
        extract_result_block(text)


def test_decode_validates_each_kind():
    assert decode_result("estimate-loop-bound", 6) == 6
    assert decode_result("estimate-loop-bound", None) is None
    with pytest.raises(ValueError):
        decode_result("estimate-loop-bound", 0)
    with pytest.raises(ValueError):
        decode_result("estimate-loop-bound", True)
    with pytest.raises(ValueError):
        decode_result("classify-coverage-gap", "weather")
    terms = decode_result("infer-precondition", ["pre variable-constant n <= 4"])
    assert terms == [PreconditionTerm.var_const("n", "<=", 4)]
    with pytest.raises(ValueError):
        decode_result("weaken-precondition", [])


@pytest.mark.parametrize("kind", KINDS)
def test_every_task_kind_has_a_versioned_prompt(kind):
    text = prompt_text(kind)
    assert text.startswith("# prompt-version: 1")
    assert '"result"' in text


def test_request_is_deterministic_and_carries_protocol():
    task = SemanticTask("estimate-loop-bound", {"loop": "f.0"}, "be brief")
    a, b = build_request(task, "m"), build_request(task, "m")
    assert a == b
    assert a["temperature"] == 0
    user = json.loads(a["messages"][1]["content"])
    assert user["kind"] == "estimate-loop-bound" and "protocol" in user


def test_unknown_task_kind_is_refused():
    with pytest.raises(ValueError):
        SemanticTask("write-poetry", {}, "")
    with pytest.raises(ValueError):
        make_resolver("oracle")
    with pytest.raises(ValueError):
        make_resolver("remote")


def _opener(reply_for):
    calls = []

    def opener(req, timeout=None):
        body = json.loads(req.data.decode("utf-8"))
        kind = json.loads(body["messages"][1]["content"])["kind"]
        calls.append(kind)
        content = reply_for(kind)
        return io.BytesIO(json.dumps({"choices": [{"message": {"content": content}}]}).encode())

    opener.calls = calls
    return opener


def test_remote_reply_is_decoded():
    opener = _opener(lambda kind: '```json\n{"result": ["(n < 4)"], "rationale": "guards"}\n```')
    res = RemoteResolver("http://stub", opener=opener)
    index = index_of({"a.mc": "u32 f(u32 n) {\n  return n;\n}\n"})
    task = SemanticTask("extract-path-constraints", {"entry": "f"}, "",
                        {"proof": level0_proof(index, "f"), "index": index})
    prop = res.resolve(task)
    assert prop.source == "remote" and prop.result == ["(n < 4)"]
    assert opener.calls == ["extract-path-constraints"]


def test_transport_failure_falls_back_to_rules():
    def broken(req, timeout=None):
        raise OSError("connection refused")

    events = []
    res = RemoteResolver("http://stub", opener=broken, events=events)
    index = index_of({"a.mc": "u32 f(u32 n) {\n  return n;\n}\n"})
    task = SemanticTask("extract-path-constraints", {"entry": "f"}, "",
                        {"proof": level0_proof(index, "f"), "index": index})
    prop = res.resolve(task)
    assert prop.source == "rule-fallback"
    assert events[0]["event"] == "fallback" and "connection refused" in events[0]["reason"]


def test_bad_remote_precondition_is_gated_out(tmp_path):
    bad = '{"result": ["pre variable-constant dst_size >= 100"], "rationale": "guess"}'
    opener = _opener(lambda kind: bad if kind == "infer-precondition" else "no idea")
    remote = RemoteResolver("http://stub", opener=opener)
    res = generate(CORPUS / "record_copy", "process_record", resolver=remote, out=tmp_path / "r")
    rule = generate(CORPUS / "record_copy", "process_record", out=tmp_path / "l")
    assert "infer-precondition" in opener.calls
    rejected = [e for e in res.log.events if e["event"] == "gate" and e.get("rule") == "remote"]
    assert rejected and not any(e["accepted"] for e in rejected)
    assert res.snapshots[-1].proof == rule.snapshots[-1].proof
    assert audit(res.log.events) == []


def test_gate_rejects_lost_coverage():
    index = index_of({"a.mc": "u32 f(u32 n) {\n  if (n > 3) {\n    return 12 / n;\n  }\n  return 0;\n}\n"})
    proof = level0_proof(index, "f")
    before = verify(proof, index)
    narrowed = proof.__class__(proof.scope, proof.bounds,
                               proof.env.add_preconditions([PreconditionTerm.var_const("n", "<", 2)]),
                               proof.harness)
    after = verify(narrowed, index)
    assert gate(narrowed, before, after, index, True) == GateVerdict(False, "coverage reduced")
    assert gate(proof, before, before, index, True).accepted
    assert gate(proof, before, before, index, False).reason == "goal not met"


def test_audit_flags_ungated_mutations():
    log = StageLog()
    gid = log.gate("bounds", "estimate-loop-bound", GateVerdict(False, "goal not met"))
    log.mutation("bounds", gid, "bound f.0 = 3")
    ok = log.gate("bounds", "estimate-loop-bound", GateVerdict(True))
    log.mutation("bounds", ok, "bound f.0 = 4")
    assert [e["edit"] for e in audit(log.events)] == ["bound f.0 = 3"]
    assert json.loads(log.to_json())["schema_version"] == "soupgen.stagelog/1"


def test_rule_input_model_matches_initial_scope():
    index = index_of({"a.mc": "u32 g();\nu32 f(u8* p) {\n  return g();\n}\n"})
    scope, _, _, harness = init_scope(index, "f")
    prop = RuleResolver().resolve(SemanticTask("synthesize-input-model", {"entry": "f", "alloc_cap": 16}, "",
                                             {"index": index}))
    assert prop.result.strip() == harness.strip()
    assert scope.functions == {"f"}
