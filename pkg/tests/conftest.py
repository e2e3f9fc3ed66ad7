import json
import shutil
from pathlib import Path

import pytest

from soupgen.engine import DomainConfig, ResourceBudget
from soupgen.minic.index import build_index
from soupgen.minic.parser import parse_source
from soupgen.minic.typecheck import check_project
from soupgen.pipeline import generate
from soupgen.proof import assemble
from soupgen.scope import init_scope

ROOT = Path(__file__).resolve().parents[1]
CORPUS = ROOT / "corpus"

# Small domains keep brute-force enumeration cheap in unit tests.
SMALL = DomainConfig(int_cap=4, u8_max=7, alloc_cap=4)


def index_of(files: dict):
    """Index an in-memory project given as {path: source}."""
    units = [parse_source(src, path) for path, src in sorted(files.items())]
    index = build_index(units, "<mem>")
    index.type_errors = check_project(index)
    assert not index.type_errors, index.type_errors
    return index


def level0_proof(index, entry, alloc_cap=16):
    return assemble(*init_scope(index, entry, alloc_cap), index)


def write_project(root: Path, files: dict) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    for rel, src in files.items():
        p = root / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(src, encoding="utf-8")
    return root


def fixture_meta(path: Path) -> dict:
    return json.loads((path / "fixture.json").read_text(encoding="utf-8"))


def corpus_fixtures():
    return sorted(p.parent for p in CORPUS.rglob("fixture.json"))


def corpus_id(path: Path) -> str:
    return path.relative_to(CORPUS).as_posix()


class CorpusRuns:
    """Generate each corpus fixture once per session (outputs under a temp dir)."""

    def __init__(self, base: Path):
        self.base = base
        self._done = {}

    def get(self, fixture: Path, tag: str = "a"):
        key = (corpus_id(fixture), tag)
        if key not in self._done:
            meta = fixture_meta(fixture)
            out = self.base / tag / corpus_id(fixture)
            if out.exists():
                shutil.rmtree(out)
            budget = ResourceBudget(max_file_depth=meta.get("scope_depth", 3))
            res = generate(fixture, meta["entry"], budget, out=out)
            self._done[key] = (res, out)
        return self._done[key]


@pytest.fixture(scope="session")
def corpus_runs(tmp_path_factory):
    return CorpusRuns(tmp_path_factory.mktemp("corpus"))


def drop_effects(snap, index):
    """For each final precondition, what verifying without it newly exposes.

    Returns [(term, new_violated_ids, ids_with_more_violating_paths)].
    """
    from dataclasses import replace as _replace

    from soupgen.engine import verify
    from soupgen.env import with_preconditions

    terms = snap.proof.env.all_preconditions()
    base = snap.report
    base_ids = {q.id for q, _ in base.violations}
    out = []
    for t in terms:
        rest = [u for u in terms if u != t]
        rep = verify(_replace(snap.proof, env=with_preconditions(snap.proof.env, rest)), index)
        ids = {q.id for q, _ in rep.violations}
        more = {k for k, n in rep.violation_paths.items() if n > base.violation_paths.get(k, 0)}
        out.append((t, ids - base_ids, more))
    return out


# Acceptance criteria record a one-line verdict here; it is echoed at the end of the run.
ACCEPTANCE = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
