"""Semantic tasks, resolvers and the validation gate.

Workflows never edit a proof directly from a resolver's answer. They issue a
``SemanticTask``, receive a ``TaskProposal``, apply it provisionally,
re-verify, and keep the edit only if ``gate`` accepts it. Every step is
recorded in a ``StageLog``.
"""
from __future__ import annotations

import json
import logging
import os
import re
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from importlib import resources

from .proof import PreconditionTerm, check_structural_validity

log = logging.getLogger(__name__)

TASK_KINDS = (
    "synthesize-input-model",
    "model-external-callee",
    "classify-coverage-gap",
    "estimate-loop-bound",
    "infer-precondition",
    "extract-path-constraints",
    "weaken-precondition",
)

GAP_CAUSES = ("loop-dependent", "configuration-dependent", "external-function-dependent", "unclassified")

PROTOCOL_VERSION = "soupgen.agent/1"
TOKEN_ENV = "SOUPGEN_AGENT_TOKEN"
MODEL_ENV = "SOUPGEN_AGENT_MODEL"


@dataclass
class SemanticTask:
    kind: str
    payload: dict  # JSON-serializable; what a remote resolver sees
    constraints: str
    context: dict = field(default_factory=dict, repr=False, compare=False)  # in-process objects

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.kind!r}")

    def render(self) -> dict:
        return {"kind": self.kind, "payload": self.payload, "constraints": self.constraints}


@dataclass
class TaskProposal:
    kind: str
    result: object
    rationale: str = ""
    source: str = "rule"


# --- rule-based resolver ---------------------------------------------------

_HANDLERS: dict = {}


def handler(kind: str):
    """Register the rule-based logic for one task kind (used by the owning modules)."""

    def deco(fn):
        _HANDLERS[kind] = fn
        return fn

    return deco


def _load_handlers() -> None:
    from . import bounds, env, scope  # noqa: F401  (modules register their handlers)


class RuleResolver:
    name = "rule"

    def resolve(self, task: SemanticTask) -> TaskProposal:
        if not _HANDLERS:
            _load_handlers()
        fn = _HANDLERS.get(task.kind)
        if fn is None:
            _load_handlers()
            fn = _HANDLERS[task.kind]
        result, rationale = fn(task)
        return TaskProposal(task.kind, result, rationale, "rule")


# --- remote resolver -------------------------------------------------------


def prompt_text(kind: str) -> str:
    return resources.files("soupgen.prompts").joinpath(f"{kind}.txt").read_text(encoding="utf-8")


def build_request(task: SemanticTask, model: str) -> dict:
    return {
        "model": model,
        "temperature": 0,
        "messages": [
            {"role": "system", "content": prompt_text(task.kind)},
            {"role": "user", "content": json.dumps(
                {"protocol": PROTOCOL_VERSION, **task.render()}, sort_keys=True)},
        ],
    }


_FENCE = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.S)


def extract_result_block(text: str) -> dict:
    """The JSON result block of a reply: a fenced ```json block, or the whole text."""
    m = _FENCE.search(text)
    raw = m.group(1) if m else text.strip()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ValueError(f"reply has no JSON result block: {exc}") from exc
    if not isinstance(data, dict) or "result" not in data:
        raise ValueError("reply JSON lacks a 'result' field")
    return data


def decode_result(kind: str, result):
    """Turn a remote result field into the value the rule resolver would return."""
    if kind == "classify-coverage-gap":
        if result not in GAP_CAUSES:
            raise ValueError(f"unknown gap cause {result!r}")
        return result
    if kind == "estimate-loop-bound":
        if result is None:
            return None
        if not isinstance(result, int) or isinstance(result, bool) or result < 1:
            raise ValueError("bound must be a positive integer or null")
        return result
    if kind in ("infer-precondition", "weaken-precondition"):
        if not isinstance(result, list) or not result:
            raise ValueError("expected a non-empty list of preconditions")
        return [PreconditionTerm.parse(t) for t in result]
    if kind == "extract-path-constraints":
        if not isinstance(result, list) or not all(isinstance(t, str) for t in result):
            raise ValueError("expected a list of guard strings")
        return result
    if kind == "synthesize-input-model":
        if not isinstance(result, str) or "harness" not in result:
            raise ValueError("expected harness source text")
        return result
    if kind == "model-external-callee":
        if not isinstance(result, dict) or "return" not in result:
            raise ValueError("expected a model object with a 'return' field")
        return result
    raise ValueError(f"unknown task kind {kind!r}")


class RemoteResolver:
    """Chat-completions client; any failure falls back to the rule resolver."""

    name = "remote"

    def __init__(self, endpoint: str, model: str = None, token: str = None, timeout: float = 60.0,
                 fallback=None, events: list = None, opener=None):
        self.endpoint = endpoint
        self.model = model or os.environ.get(MODEL_ENV, "default")
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.timeout = timeout
        self.fallback = fallback or RuleResolver()
        self.events = events if events is not None else []
        self._open = opener or urllib.request.urlopen

    def _post(self, body: dict) -> dict:
        req = urllib.request.Request(
            self.endpoint, data=json.dumps(body).encode("utf-8"), method="POST",
            headers={"Content-Type": "application/json"},
        )
        if self.token:
            req.add_header("Authorization", f"Bearer {self.token}")
        with self._open(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode("utf-8"))

    def resolve(self, task: SemanticTask) -> TaskProposal:
        try:
            reply = self._post(build_request(task, self.model))
            text = reply["choices"][0]["message"]["content"]
            block = extract_result_block(text)
            result = decode_result(task.kind, block["result"])
            return TaskProposal(task.kind, result, str(block.get("rationale", "")), "remote")
        except (urllib.error.URLError, OSError, ValueError, KeyError, IndexError, TypeError) as exc:
            event = {"event": "fallback", "task": task.kind, "reason": f"{type(exc).__name__}: {exc}"}
            self.events.append(event)
            log.warning("remote resolver failed for %s (%s); using rule resolver", task.kind, exc)
            proposal = self.fallback.resolve(task)
            proposal.source = "rule-fallback"
            return proposal


def make_resolver(kind: str = "rule", endpoint: str = None, events: list = None):
    if kind == "rule":
        return RuleResolver()
    if kind == "remote":
        if not endpoint:
            raise ValueError("remote resolver needs an endpoint")
        return RemoteResolver(endpoint, events=events)
    raise ValueError(f"unknown resolver {kind!r}")


# --- gate ------------------------------------------------------------------


@dataclass
class GateVerdict:
    accepted: bool
    reason: str = "ok"


def scope_line_count(report) -> int:
    return sum(len([ln for ln in lines if ln in report.scope_lines.get(f, {})])
               for f, lines in report.covered_lines.items())


def gate(proof_after, report_before, report_after, index, goal_met: bool,
         exposure: bool = False) -> GateVerdict:
    """Accept a provisional edit only if nothing the proof already achieved is lost."""
    validity = check_structural_validity(proof_after, index)
    if not (validity.compiles and validity.models_well_formed):
        return GateVerdict(False, "structural invalidity: " + "; ".join(validity.errors[:3]))
    if not validity.calls_entry:
        return GateVerdict(False, "entry not called")
    if report_after.status in ("error", "inconclusive-budget"):
        return GateVerdict(False, f"inconclusive ({report_after.status})")
    if not goal_met:
        return GateVerdict(False, "goal not met")
    if scope_line_count(report_after) < scope_line_count(report_before):
        return GateVerdict(False, "coverage reduced")
    if report_after.covered_properties < report_before.covered_properties:
        return GateVerdict(False, "covered properties reduced")
    allowance = 0
    if exposure:
        allowance = len(report_after.violated_ids - report_before.violated_ids)
    if report_after.verified_properties < report_before.verified_properties - allowance:
        return GateVerdict(False, "verified properties reduced")
    return GateVerdict(True)


# --- stage log -------------------------------------------------------------


class StageLog:
    """Append-only record of proposals, gate verdicts and proof mutations."""

    def __init__(self):
        self.events: list = []
        self._gates = 0

    def add(self, stage: str, event: str, **detail) -> dict:
        entry = {"stage": stage, "event": event, **detail}
        self.events.append(entry)
        return entry

    def proposal(self, stage, proposal: TaskProposal, **detail):
        return self.add(stage, "proposal", task=proposal.kind, source=proposal.source,
                        result=_jsonable(proposal.result), rationale=proposal.rationale, **detail)

    def gate(self, stage, task: str, verdict: GateVerdict, **detail) -> int:
        self._gates += 1
        self.add(stage, "gate", gate_id=self._gates, task=task, accepted=verdict.accepted,
                 reason=verdict.reason, **detail)
        return self._gates

    def mutation(self, stage, gate_id: int, edit: str, **detail):
        return self.add(stage, "mutation", gate_id=gate_id, edit=edit, **detail)

    def note(self, stage, message: str, **detail):
        return self.add(stage, "note", message=message, **detail)

    def to_json(self) -> str:
        return json.dumps({"schema_version": "soupgen.stagelog/1", "events": self.events}, indent=2)


def audit(events: list) -> list:
    """Mutations lacking an accepted gate record (should always be empty)."""
    accepted = {e["gate_id"] for e in events if e["event"] == "gate" and e["accepted"]}
    return [e for e in events if e["event"] == "mutation" and e.get("gate_id") not in accepted]


def _jsonable(x):
    if isinstance(x, (str, int, float, bool)) or x is None:
        return x
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    return str(x)
