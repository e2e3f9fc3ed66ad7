"""Unit proofs: scope, loop bounds, environment model, harness.

Proof values are frozen; stage transitions build new proofs with
``dataclasses.replace`` or the ``with_*`` helpers.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Optional

from .minic import ast as A
from .minic.index import INTRINSICS, ProjectIndex
from .minic.parser import MiniCSyntaxError, TYPE_ALIASES, parse_function_source
from .minic.typecheck import Checker

MANIFEST_VERSION = 1

CATEGORIES = ("pointer-not-null", "variable-constant", "variable-variable", "pointer-offset")
RELATIONS = ("==", "!=", "<", "<=", ">", ">=")


class ManifestError(Exception):
    pass


class ProofError(Exception):
    """Structural invalidity detected while assembling a proof."""


# --- preconditions ---------------------------------------------------------


@dataclass(frozen=True, order=True)
class PreconditionTerm:
    category: str
    subjects: tuple
    relation: str
    constant: Optional[int] = None

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown precondition category {self.category!r}")
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")
        n = len(self.subjects)
        arity = {
            "pointer-not-null": (1, False),
            "variable-constant": (1, True),
            "variable-variable": (2, False),
            "pointer-offset": (2, True),
        }[self.category]
        if n != arity[0] or (self.constant is not None) != arity[1]:
            raise ValueError(f"bad arity for {self.category}: {self.subjects} {self.constant}")
        if self.category == "pointer-not-null" and self.relation != "!=":
            raise ValueError("pointer-not-null uses '!='")
        if self.category == "pointer-offset" and self.relation != "==":
            raise ValueError("pointer-offset uses '=='")

    @classmethod
    def not_null(cls, p: str) -> "PreconditionTerm":
        return cls("pointer-not-null", (p,), "!=")

    @classmethod
    def var_const(cls, x: str, rel: str, c: int) -> "PreconditionTerm":
        return cls("variable-constant", (x,), rel, c)

    @classmethod
    def var_var(cls, x: str, rel: str, y: str) -> "PreconditionTerm":
        return cls("variable-variable", (x, y), rel)

    @classmethod
    def offset(cls, p2: str, p1: str, c: int) -> "PreconditionTerm":
        return cls("pointer-offset", (p2, p1), "==", c)

    def __str__(self) -> str:
        s = self.subjects
        if self.category == "pointer-not-null":
            return f"{s[0]} != NULL"
        if self.category == "variable-constant":
            return f"{s[0]} {self.relation} {self.constant}"
        if self.category == "variable-variable":
            return f"{s[0]} {self.relation} {s[1]}"
        sign = "+" if self.constant >= 0 else "-"
        return f"{s[0]} == {s[1]} {sign} {abs(self.constant)}"

    def manifest(self) -> str:
        s = self.subjects
        if self.category == "pointer-not-null":
            rhs = "NULL"
        elif self.category == "variable-constant":
            rhs = str(self.constant)
        elif self.category == "variable-variable":
            rhs = s[1]
        else:
            rhs = f"{s[1]}{'+' if self.constant >= 0 else '-'}{abs(self.constant)}"
        return f"pre {self.category} {s[0]} {self.relation} {rhs}"

    @classmethod
    def parse(cls, text: str) -> "PreconditionTerm":
        parts = text.split()
        if len(parts) != 5 or parts[0] != "pre":
            raise ManifestError(f"malformed precondition: {text!r}")
        _, cat, subj, rel, rhs = parts
        try:
            if cat == "pointer-not-null":
                if rhs != "NULL":
                    raise ManifestError(f"pointer-not-null must compare with NULL: {text!r}")
                return cls(cat, (subj,), rel)
            if cat == "variable-constant":
                return cls(cat, (subj,), rel, int(rhs))
            if cat == "variable-variable":
                return cls(cat, (subj, rhs), rel)
            if cat == "pointer-offset":
                m = re.fullmatch(r"(.+?)([+-])(\d+)", rhs)
                if not m:
                    raise ManifestError(f"malformed pointer offset: {text!r}")
                c = int(m.group(3)) * (1 if m.group(2) == "+" else -1)
                return cls(cat, (subj, m.group(1)), rel, c)
        except ValueError as exc:
            raise ManifestError(str(exc)) from exc
        raise ManifestError(f"unknown precondition category {cat!r}")

    def symbols(self) -> tuple:
        return self.subjects


def ret_symbol(fn_name: str) -> str:
    return f"ret_of({fn_name})"


def ret_symbol_fn(symbol: str) -> Optional[str]:
    m = re.fullmatch(r"ret_of\((\w+)\)", symbol)
    return m.group(1) if m else None


# --- environment -----------------------------------------------------------


@dataclass(frozen=True)
class InitSpec:
    """How a value is initialized: ``nondet`` over a type, or an allocation."""

    kind: str  # nondet | alloc | alloc-fixed | none
    ty: A.Ty = A.VOID  # value type (nondet) or element type (alloc)
    size_symbol: Optional[str] = None
    size: int = 0  # fixed size, or the maximum for nondet-sized allocations

    def __str__(self) -> str:
        if self.kind == "nondet":
            return f"nondet {self.ty}"
        if self.kind == "alloc":
            return f"alloc {self.ty.base} size {self.size_symbol} max {self.size}"
        if self.kind == "alloc-fixed":
            return f"alloc {self.ty.base} size {self.size}"
        return "none"

    @classmethod
    def parse(cls, text: str) -> "InitSpec":
        p = text.split()
        try:
            if p == ["none"]:
                return cls("none")
            if len(p) == 2 and p[0] == "nondet":
                return cls("nondet", _parse_ty(p[1]))
            if len(p) == 6 and p[0] == "alloc" and p[2] == "size" and p[4] == "max":
                return cls("alloc", A.Ty(TYPE_ALIASES[p[1]]), p[3], int(p[5]))
            if len(p) == 4 and p[0] == "alloc" and p[2] == "size":
                return cls("alloc-fixed", A.Ty(TYPE_ALIASES[p[1]]), None, int(p[3]))
        except (KeyError, ValueError):
            pass
        raise ManifestError(f"malformed init spec: {text!r}")


def _parse_ty(text: str) -> A.Ty:
    ptr = text.endswith("*")
    base = text.rstrip("*")
    if base not in TYPE_ALIASES:
        raise ManifestError(f"unknown type {text!r}")
    return A.Ty(TYPE_ALIASES[base], ptr)


@dataclass(frozen=True)
class FunctionModel:
    name: str
    kind: int  # 1, 2 or 3
    return_spec: InitSpec
    return_preconditions: tuple = ()
    side_effects: tuple = ()  # pointer parameter names havocked on each call
    preconditions: tuple = ()  # Type3: constraints on inputs or globals

    def expected_kind(self) -> int:
        if self.preconditions:
            return 3
        if self.return_preconditions:
            return 2
        return 1

    def with_return_pre(self, terms) -> "FunctionModel":
        pres = tuple(sorted(set(self.return_preconditions) | set(terms)))
        m = replace(self, return_preconditions=pres)
        return replace(m, kind=m.expected_kind())

    def manifest_lines(self) -> list:
        out = [f"model {self.name} : type{self.kind} {{", f"  return {self.return_spec}"]
        out += [f"  {p.manifest()}" for p in self.return_preconditions]
        out += [f"  {p.manifest()}" for p in self.preconditions]
        out += [f"  havoc {h}" for h in self.side_effects]
        out.append("}")
        return out


@dataclass(frozen=True)
class EnvironmentModel:
    input_model: tuple = ()  # ((param, InitSpec), ...) in parameter order
    function_models: tuple = ()  # FunctionModel sorted by name
    preconditions: tuple = ()  # PreconditionTerm on harness symbols
    configs: tuple = ()  # ((name, value), ...) sorted

    def model(self, name: str) -> Optional[FunctionModel]:
        for m in self.function_models:
            if m.name == name:
                return m
        return None

    @property
    def models(self) -> dict:
        return {m.name: m for m in self.function_models}

    @property
    def config_map(self) -> dict:
        return dict(self.configs)

    def all_preconditions(self) -> list:
        out = list(self.preconditions)
        for m in self.function_models:
            out += list(m.return_preconditions) + list(m.preconditions)
        return out

    def with_model(self, model: FunctionModel) -> "EnvironmentModel":
        ms = {m.name: m for m in self.function_models}
        ms[model.name] = model
        return replace(self, function_models=tuple(ms[k] for k in sorted(ms)))

    def with_config(self, name: str, value: int) -> "EnvironmentModel":
        cs = dict(self.configs)
        cs[name] = value
        return replace(self, configs=tuple(sorted(cs.items())))

    def add_preconditions(self, terms) -> "EnvironmentModel":
        """Route return-value terms into their model (Type2), the rest into the harness list."""
        env = self
        plain = set(env.preconditions)
        by_model: dict = {}
        for t in terms:
            fns = {ret_symbol_fn(s) for s in t.subjects} - {None}
            if len(fns) == 1 and all(ret_symbol_fn(s) for s in t.subjects) and env.model(next(iter(fns))):
                by_model.setdefault(next(iter(fns)), []).append(t)
            else:
                plain.add(t)
        for name, ts in by_model.items():
            env = env.with_model(env.model(name).with_return_pre(ts))
        return replace(env, preconditions=tuple(sorted(plain)))

    def remove_precondition(self, term: PreconditionTerm) -> "EnvironmentModel":
        env = replace(self, preconditions=tuple(t for t in self.preconditions if t != term))
        models = []
        for m in env.function_models:
            rp = tuple(t for t in m.return_preconditions if t != term)
            pp = tuple(t for t in m.preconditions if t != term)
            m2 = replace(m, return_preconditions=rp, preconditions=pp)
            models.append(replace(m2, kind=m2.expected_kind()))
        return replace(env, function_models=tuple(models))

    def replace_precondition(self, old: PreconditionTerm, new: PreconditionTerm) -> "EnvironmentModel":
        return self.remove_precondition(old).add_preconditions([new])


@dataclass(frozen=True)
class VerificationScope:
    entry: str
    functions: frozenset
    files: frozenset
    level: int = 0

    def __post_init__(self):
        if self.entry not in self.functions:
            raise ProofError(f"entry {self.entry!r} not in scope functions")


@dataclass(frozen=True)
class LoopBoundMap:
    bounds: tuple = ()  # ((loop_id, bound), ...) sorted
    default_bound: int = 1

    def __post_init__(self):
        if self.default_bound < 1:
            raise ProofError("bound must be >= 1")
        for k, v in self.bounds:
            if v < 1:
                raise ProofError(f"bound must be >= 1 ({k} = {v})")

    @classmethod
    def of(cls, mapping: dict = None, default: int = 1) -> "LoopBoundMap":
        return cls(tuple(sorted((mapping or {}).items())), default)

    def get(self, loop_id: str) -> int:
        return dict(self.bounds).get(loop_id, self.default_bound)

    def as_dict(self) -> dict:
        return dict(self.bounds)

    def with_bound(self, loop_id: str, bound: int) -> "LoopBoundMap":
        d = self.as_dict()
        d[loop_id] = bound
        return LoopBoundMap.of(d, self.default_bound)


@dataclass(frozen=True)
class UnitProof:
    scope: VerificationScope
    bounds: LoopBoundMap
    env: EnvironmentModel
    harness: str
    manifest_version: int = MANIFEST_VERSION

    def size(self) -> int:
        """Maintainability proxy: harness lines plus model lines."""
        harness_lines = len([ln for ln in self.harness.splitlines() if ln.strip()])
        model_lines = sum(len(m.manifest_lines()) for m in self.env.function_models)
        return harness_lines + model_lines


# --- harness helpers -------------------------------------------------------


def parse_harness(text: str) -> A.FunctionDef:
    fn = parse_function_source(text, "<harness>")
    if fn.name != "harness":
        raise MiniCSyntaxError("harness function must be named 'harness'", "<harness>", fn.line, 1)
    return fn


def harness_symbols(fn: A.FunctionDef) -> dict:
    """Top-level harness locals: name -> type."""
    return {s.name: s.ty for s in fn.body.stmts if isinstance(s, A.VarDecl)}


def entry_calls(fn: A.FunctionDef, entry: str) -> int:
    return sum(1 for c in A.calls_in(fn.body) if c.name == entry)


def assemble(scope, bounds, env, harness: str, index: ProjectIndex = None) -> UnitProof:
    try:
        hfn = parse_harness(harness)
    except MiniCSyntaxError as exc:
        raise ProofError(f"harness does not parse: {exc}") from exc
    if entry_calls(hfn, scope.entry) != 1:
        raise ProofError(f"harness must call entry {scope.entry!r} exactly once")
    for loop_id, _ in bounds.bounds:
        fname = loop_id.split(":")[-1].rsplit(".", 1)[0]
        if fname not in scope.functions:
            raise ProofError(f"bound keyed on unknown loop {loop_id!r}")
        if index is not None and loop_id not in index.loop_table():
            raise ProofError(f"bound keyed on unknown loop {loop_id!r}")
    return UnitProof(scope, bounds, env, harness)


# --- manifest --------------------------------------------------------------

SECTIONS = ("scope", "bounds", "env", "harness")
FENCE = "---harness---"


def serialize_manifest(proof: UnitProof) -> str:
    s = proof.scope
    out = [f"manifest_version = {proof.manifest_version}", "[scope]",
           f"entry = {s.entry}",
           f"functions = {', '.join(sorted(s.functions))}",
           f"files = {', '.join(sorted(s.files))}",
           f"level = {s.level}",
           "[bounds]",
           f"default = {proof.bounds.default_bound}"]
    out += [f"{k} = {v}" for k, v in proof.bounds.bounds]
    out.append("[env]")
    out += [f"input {p} = {spec}" for p, spec in proof.env.input_model]
    out += [f"config {k} = {v}" for k, v in proof.env.configs]
    out += [t.manifest() for t in proof.env.preconditions]
    for m in proof.env.function_models:
        out += m.manifest_lines()
    out += ["[harness]", FENCE]
    out += proof.harness.rstrip("\n").split("\n")
    out.append(FENCE)
    return "\n".join(out) + "\n"


def _kv(line: str, lineno: int) -> tuple:
    if "=" not in line:
        raise ManifestError(f"line {lineno}: malformed key {line!r}")
    k, v = line.split("=", 1)
    k, v = k.strip(), v.strip()
    if not k:
        raise ManifestError(f"line {lineno}: malformed key {line!r}")
    return k, v


def _list(v: str) -> list:
    return [x.strip() for x in v.split(",") if x.strip()]


def parse_manifest(text: str) -> UnitProof:
    lines = text.split("\n")
    section = None
    version = None
    scope_kv: dict = {}
    bounds: dict = {}
    default = 1
    inputs, configs, pres, models = [], [], [], []
    harness_lines = None
    i = 0
    while i < len(lines):
        raw = lines[i]
        line = raw.strip()
        lineno = i + 1
        i += 1
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1]
            if section not in SECTIONS:
                raise ManifestError(f"line {lineno}: unknown section [{section}]")
            continue
        if section is None:
            k, v = _kv(line, lineno)
            if k != "manifest_version":
                raise ManifestError(f"line {lineno}: malformed key {k!r}")
            version = int(v)
            if version != MANIFEST_VERSION:
                raise ManifestError(f"version mismatch: {version} != {MANIFEST_VERSION}")
        elif section == "scope":
            k, v = _kv(line, lineno)
            if k not in ("entry", "functions", "files", "level"):
                raise ManifestError(f"line {lineno}: malformed key {k!r}")
            scope_kv[k] = v
        elif section == "bounds":
            k, v = _kv(line, lineno)
            try:
                n = int(v)
            except ValueError as exc:
                raise ManifestError(f"line {lineno}: bound is not an integer") from exc
            if n < 1:
                raise ManifestError(f"line {lineno}: bound must be ≥ 1")
            if k == "default":
                default = n
            else:
                if not re.fullmatch(r"[\w./:-]+\.\d+", k):
                    raise ManifestError(f"line {lineno}: malformed key {k!r}")
                bounds[k] = n
        elif section == "env":
            if line.startswith("input "):
                k, v = _kv(line[len("input "):], lineno)
                inputs.append((k, InitSpec.parse(v)))
            elif line.startswith("config "):
                k, v = _kv(line[len("config "):], lineno)
                configs.append((k, int(v)))
            elif line.startswith("pre "):
                pres.append(PreconditionTerm.parse(line))
            elif line.startswith("model "):
                m = re.fullmatch(r"model (\w+) : type([123]) \{", line)
                if not m:
                    raise ManifestError(f"line {lineno}: malformed model header")
                name, kind = m.group(1), int(m.group(2))
                ret, rpres, ipres, havoc = None, [], [], []
                while True:
                    if i >= len(lines):
                        raise ManifestError(f"model {name}: missing '}}'")
                    body = lines[i].strip().rstrip(";")
                    i += 1
                    if body == "}":
                        break
                    if body.startswith("return "):
                        ret = InitSpec.parse(body[len("return "):])
                    elif body.startswith("pre "):
                        t = PreconditionTerm.parse(body)
                        if all(ret_symbol_fn(s) == name for s in t.subjects):
                            rpres.append(t)
                        else:
                            ipres.append(t)
                    elif body.startswith("havoc "):
                        havoc.append(body.split()[1])
                    elif body:
                        raise ManifestError(f"model {name}: malformed entry {body!r}")
                if ret is None:
                    raise ManifestError(f"model {name}: missing return spec")
                models.append(FunctionModel(name, kind, ret, tuple(rpres), tuple(havoc), tuple(ipres)))
            else:
                raise ManifestError(f"line {lineno}: malformed key {line!r}")
        elif section == "harness":
            if line != FENCE:
                raise ManifestError(f"line {lineno}: expected {FENCE}")
            harness_lines = []
            while True:
                if i >= len(lines):
                    raise ManifestError("unterminated harness fence")
                if lines[i].strip() == FENCE:
                    i += 1
                    break
                harness_lines.append(lines[i])
                i += 1
    if version is None:
        raise ManifestError("missing manifest_version")
    for k in ("entry", "functions", "files", "level"):
        if k not in scope_kv:
            raise ManifestError(f"[scope] missing key {k!r}")
    if harness_lines is None:
        raise ManifestError("missing harness")
    try:
        scope = VerificationScope(scope_kv["entry"], frozenset(_list(scope_kv["functions"])),
                                  frozenset(_list(scope_kv["files"])), int(scope_kv["level"]))
        lb = LoopBoundMap.of(bounds, default)
    except (ProofError, ValueError) as exc:
        raise ManifestError(str(exc)) from exc
    env = EnvironmentModel(tuple(inputs), tuple(sorted(models, key=lambda m: m.name)),
                           tuple(sorted(pres)), tuple(sorted(configs)))
    return UnitProof(scope, lb, env, "\n".join(harness_lines) + "\n", version)


# --- structural validity ---------------------------------------------------


@dataclass
class ValidityReport:
    compiles: bool
    calls_entry: bool
    models_well_formed: bool
    errors: list = field(default_factory=list)

    @property
    def valid(self) -> bool:
        return self.compiles and self.calls_entry and self.models_well_formed


def scope_functions(proof: UnitProof, index: ProjectIndex) -> dict:
    """name -> FunctionDef for in-scope functions (definitions restricted to scope files)."""
    out = {}
    for name in sorted(proof.scope.functions):
        defs = [d for d in index.by_name(name) if d.file in proof.scope.files]
        if defs:
            out[name] = defs[0]
    return out


def _model_signature(index: ProjectIndex, name: str):
    return index.signature(name)


def check_structural_validity(proof: UnitProof, index: ProjectIndex) -> ValidityReport:
    errors = []
    compiles = True
    calls_entry = True
    models_ok = True
    files = {u.path for u in index.files}
    for f in proof.scope.files:
        if f not in files:
            compiles = False
            errors.append(f"scope file {f!r} not in project")
    fns = scope_functions(proof, index)
    for name in proof.scope.functions:
        if name not in fns:
            compiles = False
            errors.append(f"scope function {name!r} not defined in scope files")
    models = proof.env.models

    def sig(name):
        if name in fns:
            return fns[name]
        if name in models:
            return _model_signature(index, name)
        return None

    type_errs = [e for e in getattr(index, "type_errors", [])
                 if any(e.startswith(f"{fn.file}:") and fn.line <= int(e.split(":")[1]) <= fn.end_line
                        for fn in fns.values())]
    if type_errs:
        compiles = False
        errors += type_errs
    for fn in fns.values():
        for call in A.calls_in(fn.body):
            if call.name in INTRINSICS:
                continue
            if call.name not in fns and call.name not in models:
                compiles = False
                errors.append(f"{fn.file}:{call.line}: callee {call.name!r} neither in scope nor modeled")
    hfn = None
    try:
        hfn = parse_harness(proof.harness)
    except MiniCSyntaxError as exc:
        compiles = False
        calls_entry = False
        errors.append(f"harness: {exc}")
    if hfn is not None:
        herrs = Checker(sig, index.globals, index.configs, "<harness>").check_function(hfn)
        if herrs:
            compiles = False
            errors += herrs
        if entry_calls(hfn, proof.scope.entry) != 1:
            calls_entry = False
            errors.append(f"harness does not call entry {proof.scope.entry!r} exactly once")
    hsyms = harness_symbols(hfn) if hfn is not None else {}
    for m in proof.env.function_models:
        msig = _model_signature(index, m.name)
        if m.name in proof.scope.functions:
            models_ok = False
            errors.append(f"model for in-scope function {m.name!r}")
        if msig is None:
            models_ok = False
            errors.append(f"model for undeclared function {m.name!r}")
            continue
        if m.kind != m.expected_kind():
            models_ok = False
            errors.append(f"model {m.name}: declared type{m.kind}, content is type{m.expected_kind()}")
        rt = msig.return_type
        spec = m.return_spec
        if rt == A.VOID:
            ok = spec.kind == "none"
        elif rt.ptr:
            ok = spec.kind in ("alloc", "alloc-fixed") and spec.ty.base == rt.base
        else:
            ok = spec.kind == "nondet" and spec.ty == rt
        if not ok:
            models_ok = False
            errors.append(f"model {m.name}: return spec {spec} does not match {rt}")
        pnames = {p.name: p.ty for p in msig.params}
        for h in m.side_effects:
            if h not in pnames or not pnames[h].ptr:
                models_ok = False
                errors.append(f"model {m.name}: havoc target {h!r} is not a pointer parameter")
    known = set(hsyms) | {ret_symbol(n) for n in models}
    for t in proof.env.all_preconditions():
        for s in t.subjects:
            if s not in known:
                models_ok = False
                errors.append(f"precondition {t} references unknown symbol {s!r}")
    for name, value in proof.env.configs:
        c = index.configs.get(name)
        if c is None:
            models_ok = False
            errors.append(f"unknown config {name!r}")
        elif c.candidates is not None and value not in c.candidates:
            models_ok = False
            errors.append(f"config {name}={value} not among candidates")
    return ValidityReport(compiles, calls_entry, models_ok, errors)
