"""Project index: parsed files, function table, loop table, call graph."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from . import ast as A
from .parser import MiniCSyntaxError, parse_source

INTRINSICS = {
    "nondet_u8", "nondet_u32", "nondet_i32", "nondet_size", "nondet_int",
    "malloc", "free", "memcpy", "memset",
}


class ProjectError(Exception):
    pass


@dataclass
class ProjectIndex:
    root: str
    files: list  # SourceUnit, sorted by path
    functions: dict = field(default_factory=dict)  # (file, name) -> FunctionDef
    configs: dict = field(default_factory=dict)  # name -> ConfigDecl
    globals: dict = field(default_factory=dict)  # name -> VarDecl
    prototypes: dict = field(default_factory=dict)  # name -> FunctionDef without body
    type_errors: list = field(default_factory=list)

    def signature(self, name: str):
        """Declared signature (definition or prototype) or None."""
        defs = self.by_name(name)
        if defs:
            return defs[0]
        return self.prototypes.get(name)

    def by_name(self, name: str) -> list:
        return [fn for (f, n), fn in sorted(self.functions.items()) if n == name]

    def function(self, name: str, file: str = None) -> A.FunctionDef:
        defs = self.by_name(name)
        if file is not None:
            defs = [d for d in defs if d.file == file]
        if not defs:
            raise ProjectError(f"unknown function {name!r}")
        return defs[0]

    def unit(self, path: str) -> A.SourceUnit:
        for u in self.files:
            if u.path == path:
                return u
        raise ProjectError(f"unknown file {path!r}")

    def loop_table(self) -> dict:
        return {lp.id: (fn, lp) for fn in self.functions.values() for lp in fn.loops}


def build_index(units: list, root: str = "") -> ProjectIndex:
    units = sorted(units, key=lambda u: u.path)
    index = ProjectIndex(root, units)
    loop_ids = set()
    for u in units:
        seen = set()
        for fn in u.functions:
            if fn.name in seen:
                raise ProjectError(f"{u.path}: duplicate function {fn.name!r}")
            seen.add(fn.name)
            fn.file = u.path
            index.functions[(u.path, fn.name)] = fn
            for lp in fn.loops:
                if lp.id in loop_ids:
                    # same-named functions in two files collide on loop ids; the
                    # second copy is disambiguated by file
                    lp.id = f"{u.path}:{lp.id}"
                loop_ids.add(lp.id)
        for c in u.configs:
            index.configs[c.name] = c
        for g in u.globals:
            index.globals[g.name] = g
        for p in u.prototypes:
            p.file = u.path
            index.prototypes.setdefault(p.name, p)
    _sync_loop_ids(index)
    return index


def _sync_loop_ids(index: ProjectIndex) -> None:
    for fn in index.functions.values():
        ids = [lp.id for lp in fn.loops]
        k = 0
        for s in A.iter_stmts(fn.body):
            if isinstance(s, (A.While, A.For)):
                s.loop_id = ids[k]
                k += 1


def parse_project(root) -> ProjectIndex:
    root = Path(root)
    if not root.is_dir():
        raise ProjectError(f"not a directory: {root}")
    paths = sorted(p for p in root.rglob("*.mc") if p.is_file())
    if not paths:
        raise ProjectError("no source files")
    units = []
    for p in paths:
        rel = p.relative_to(root).as_posix()
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as exc:
            raise ProjectError(f"unreadable file {rel}: {exc}") from exc
        units.append(parse_source(text, rel))
    index = build_index(units, str(root))
    from .typecheck import check_project

    index.type_errors = check_project(index)
    return index


# --- call graph ------------------------------------------------------------


@dataclass(frozen=True, order=True)
class CallEdge:
    caller_file: str
    caller: str
    callee: str
    line: int
    col: int
    resolved: bool


@dataclass
class CallGraph:
    edges: list  # sorted CallEdge

    def callees_of(self, file: str, name: str) -> list:
        return [e for e in self.edges if e.caller_file == file and e.caller == name]

    def unresolved(self) -> list:
        return sorted({e.callee for e in self.edges if not e.resolved})

    def to_json(self) -> str:
        rows = [
            {"caller_file": e.caller_file, "caller": e.caller, "callee": e.callee,
             "line": e.line, "col": e.col, "resolved": e.resolved}
            for e in self.edges
        ]
        return json.dumps(rows, sort_keys=True)


def build_call_graph(index: ProjectIndex) -> CallGraph:
    names = {n for (_, n) in index.functions}
    edges = set()
    for (file, name), fn in index.functions.items():
        for call in A.calls_in(fn.body):
            if call.name in INTRINSICS:
                continue
            edges.add(CallEdge(file, name, call.name, call.line, call.col, call.name in names))
    return CallGraph(sorted(edges))


def callsites_of(index: ProjectIndex, fn_name: str, graph: CallGraph = None) -> list:
    """All direct callsites of ``fn_name`` as ((file, caller), (file, line, col)), file-path order."""
    if not index.by_name(fn_name):
        raise ProjectError(f"unknown function {fn_name!r}")
    graph = graph or build_call_graph(index)
    return [
        ((e.caller_file, e.caller), (e.caller_file, e.line, e.col))
        for e in graph.edges
        if e.callee == fn_name
    ]


def common_prefix_len(a: str, b: str) -> int:
    pa, pb = a.split("/")[:-1], b.split("/")[:-1]
    n = 0
    for x, y in zip(pa, pb):
        if x != y:
            break
        n += 1
    return n


def pick_definition(index: ProjectIndex, name: str, near_file: str) -> A.FunctionDef:
    """Among same-named definitions choose the one sharing the longest directory prefix."""
    defs = index.by_name(name)
    if not defs:
        raise ProjectError(f"unknown function {name!r}")
    return max(defs, key=lambda d: (common_prefix_len(d.file, near_file), [-ord(c) for c in d.file]))


def statement_lines(fn: A.FunctionDef) -> set:
    return {s.line for s in A.iter_stmts(fn.body) if not isinstance(s, (A.Block, A.Empty))}


__all__ = [
    "ProjectIndex", "ProjectError", "MiniCSyntaxError", "CallEdge", "CallGraph",
    "parse_project", "build_index", "build_call_graph", "callsites_of",
    "pick_definition", "common_prefix_len", "statement_lines", "INTRINSICS",
]
