"""Loop unrolling to a loop-free program with saturation probes.

A loop with bound ``b`` becomes ``b`` nested guarded copies of its body; the
innermost guard leads to a ``Saturate`` probe, reached only when the guard
still holds after ``b`` iterations. Expression nodes are shared with the
original tree, so property checks keep their source positions.
"""
from __future__ import annotations

from ..minic import ast as A


def unroll_stmt(s, bound_of):
    if isinstance(s, A.Block):
        return A.Block([unroll_stmt(c, bound_of) for c in s.stmts], line=s.line)
    if isinstance(s, A.If):
        return A.If(s.cond, unroll_stmt(s.then, bound_of),
                    unroll_stmt(s.else_, bound_of) if s.else_ is not None else None, line=s.line)
    if isinstance(s, A.While):
        return _expand(s, s.cond, unroll_stmt(s.body, bound_of), None, bound_of(s.loop_id))
    if isinstance(s, A.For):
        init = unroll_stmt(s.init, bound_of) if s.init is not None else None
        body = unroll_stmt(s.body, bound_of)
        loop = _expand(s, s.cond, body, s.step, bound_of(s.loop_id))
        return A.Block([init, loop] if init is not None else [loop], line=s.line)
    return s


def _expand(loop, cond, body, step, bound: int):
    if bound < 1:
        raise ValueError(f"bound for {loop.loop_id} must be >= 1")
    guard = cond if cond is not None else A.IntLit(1, line=loop.line, col=0, ty=A.I32)
    inner = A.If(guard, A.Saturate(loop.loop_id, line=loop.line), None, line=loop.line)
    for _ in range(bound):
        stmts = [body]
        if step is not None:
            stmts.append(Step(step, line=loop.line))
        stmts.append(inner)
        inner = A.If(guard, Seq(stmts, line=loop.line), None, line=loop.line)
    return inner


class Seq(A.Block):
    """Statement sequence that opens no scope (one loop iteration plus the next guard)."""


class Step(A.ExprStmt):
    """Loop step expression; evaluated without marking a statement line."""


def unroll_function(fn: A.FunctionDef, bound_of) -> A.FunctionDef:
    return A.FunctionDef(fn.name, fn.params, fn.return_type, unroll_stmt(fn.body, bound_of),
                         fn.loops, fn.file, fn.line, fn.end_line)


def unroll(functions: dict, bounds) -> dict:
    """Unroll every function under ``bounds`` (a LoopBoundMap)."""
    return {name: unroll_function(fn, bounds.get) for name, fn in functions.items()}


def is_loop_free(stmt) -> bool:
    return not any(isinstance(s, (A.While, A.For)) for s in A.iter_stmts(stmt))


__all__ = ["unroll", "unroll_function", "unroll_stmt", "is_loop_free", "Seq", "Step"]
