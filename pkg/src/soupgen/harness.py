"""Type-directed harness synthesis and initial external-callee models."""
from __future__ import annotations

from .minic import ast as A
from .minic.index import INTRINSICS, ProjectIndex
from .proof import FunctionModel, InitSpec

NONDET_FN = {"u8": "nondet_u8", "u32": "nondet_u32", "i32": "nondet_i32", "size_t": "nondet_size"}


class HarnessError(Exception):
    pass


def size_symbol(param: str, taken: set) -> str:
    name = f"{param}_size"
    while name in taken:
        name += "_"
    return name


def synthesize_input_model(entry: A.FunctionDef, alloc_cap: int = 16) -> tuple:
    """Harness source plus one InitSpec per entry parameter, in parameter order.

    Primitive parameters get an unconstrained nondet value. Pointer parameters
    get a fresh allocation whose element count is a named nondet symbol in
    ``[1, alloc_cap]``, and allocation success is assumed.
    """
    taken = {p.name for p in entry.params}
    body = []
    specs = []
    for p in entry.params:
        ty = p.ty
        if ty.base not in NONDET_FN:
            raise HarnessError(f"unsupported parameter type {ty} for {p.name!r}")
        if not ty.ptr:
            body.append(f"{ty} {p.name} = {NONDET_FN[ty.base]}();")
            specs.append((p.name, InitSpec("nondet", ty)))
            continue
        sym = size_symbol(p.name, taken)
        taken.add(sym)
        width = A.WIDTH[ty.base]
        nbytes = sym if width == 1 else f"{sym} * {width}"
        body += [
            f"size_t {sym} = nondet_size();",
            f"assume({sym} >= 1);",
            f"assume({sym} <= {alloc_cap});",
            f"{ty} {p.name} = malloc({nbytes});",
            f"assume({p.name} != NULL);",
        ]
        specs.append((p.name, InitSpec("alloc", A.Ty(ty.base), sym, alloc_cap)))
    body.append(f"{entry.name}({', '.join(p.name for p in entry.params)});")
    src = "void harness() {\n" + "".join(f"  {line}\n" for line in body) + "}\n"
    return src, tuple(specs)


def type1_model(sig: A.FunctionDef, alloc_cap: int = 16) -> FunctionModel:
    rt = sig.return_type
    if rt == A.VOID:
        spec = InitSpec("none")
    elif rt.ptr:
        spec = InitSpec("alloc", A.Ty(rt.base), "nondet", alloc_cap)
    else:
        spec = InitSpec("nondet", rt)
    return FunctionModel(sig.name, 1, spec)


def external_callees(functions, scope_names) -> list:
    names = set()
    for fn in functions:
        for c in A.calls_in(fn.body):
            if c.name not in INTRINSICS and c.name not in scope_names:
                names.add(c.name)
    return sorted(names)


def model_external_callees(functions, index: ProjectIndex, alloc_cap: int = 16) -> dict:
    """Type1 model for every direct callee outside the scope."""
    scope_names = {fn.name for fn in functions}
    models = {}
    unknown = []
    for name in external_callees(functions, scope_names):
        sig = index.signature(name)
        if sig is None:
            unknown.append(name)
            continue
        models[name] = type1_model(sig, alloc_cap)
    if unknown:
        raise HarnessError(f"callees with unknown signature: {', '.join(unknown)}")
    return models
