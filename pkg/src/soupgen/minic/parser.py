"""Tokenizer and recursive-descent parser for MiniC."""
from __future__ import annotations

import re
from dataclasses import dataclass

from . import ast as A

TYPE_ALIASES = {
    "u8": "u8",
    "uint8_t": "u8",
    "u32": "u32",
    "uint32_t": "u32",
    "i32": "i32",
    "int32_t": "i32",
    "int": "i32",
    "size_t": "size_t",
    "void": "void",
}

KEYWORDS = {
    "config", "in", "if", "else", "while", "for", "return",
    "assume", "assert", "NULL",
} | set(TYPE_ALIASES)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<int>0[xX][0-9a-fA-F]+|\d+)[uUlL]*
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op><<=|>>=|\+\+|--|<<|>>|<=|>=|==|!=|&&|\|\||\+=|-=|\*=|/=|%=|&=|\|=|\^=|[-+*/%<>=!~&|^(){}\[\];,])
    """,
    re.VERBOSE,
)


class MiniCSyntaxError(Exception):
    def __init__(self, msg: str, path: str = "", line: int = 0, col: int = 0):
        self.msg, self.path, self.line, self.col = msg, path, line, col
        super().__init__(f"{path}:{line}:{col}: syntax error: {msg}")


@dataclass
class Token:
    kind: str  # int ident op kw eof
    text: str
    line: int
    col: int


def tokenize(src: str, path: str = "<input>") -> list:
    toks = []
    line, line_start, pos = 1, 0, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise MiniCSyntaxError(f"unexpected character {src[pos]!r}", path, line, pos - line_start + 1)
        kind = m.lastgroup
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "int":
            toks.append(Token("int", m.group("int"), line, col))
        elif kind == "ident":
            text = m.group()
            toks.append(Token("kw" if text in KEYWORDS else "ident", text, line, col))
        elif kind == "op":
            toks.append(Token("op", m.group(), line, col))
        pos = m.end()
    toks.append(Token("eof", "", line, 1))
    return toks


_BINARY_PREC = [
    ("||",),
    ("&&",),
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("<<", ">>"),
    ("+", "-"),
    ("*", "/", "%"),
]

_ASSIGN_OPS = {"=", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<=", ">>="}


class Parser:
    def __init__(self, src: str, path: str = "<input>"):
        self.path = path
        self.toks = tokenize(src, path)
        self.i = 0
        self._loop_counter = 0
        self._func_name = ""
        self._loops: list = []

    # token helpers
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token = None):
        tok = tok or self.tok
        raise MiniCSyntaxError(msg, self.path, tok.line, tok.col)

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of file"
            self.error(f"expected {text!r}, found {found!r}")
        tok = self.tok
        self.i += 1
        return tok

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error(f"expected identifier, found {self.tok.text or 'end of file'!r}")
        tok = self.tok
        self.i += 1
        return tok

    def int_lit(self) -> int:
        neg = self.accept("-")
        if self.tok.kind != "int":
            self.error("expected integer literal")
        value = int(self.tok.text, 0)
        self.i += 1
        return -value if neg else value

    def at_type(self) -> bool:
        return self.tok.kind == "kw" and self.tok.text in TYPE_ALIASES

    def parse_type(self) -> A.Ty:
        if not self.at_type():
            self.error("expected type")
        base = TYPE_ALIASES[self.tok.text]
        self.i += 1
        ptr = self.accept("*")
        if self.at("*"):
            self.error("only one level of pointers is supported")
        return A.Ty(base, ptr)

    # top level
    def parse_unit(self) -> A.SourceUnit:
        functions, globals_, configs, protos = [], [], [], []
        while self.tok.kind != "eof":
            if self.at("config"):
                configs.append(self.parse_config())
                continue
            start = self.tok
            ty = self.parse_type()
            name = self.ident()
            if self.at("("):
                fn = self.parse_function(ty, name, start)
                (protos if fn.body is None else functions).append(fn)
            else:
                globals_.append(self.finish_decl(ty, name))
        line_count = self.toks[-1].line
        return A.SourceUnit(self.path, functions, globals_, configs, protos, line_count=line_count)

    def parse_config(self) -> A.ConfigDecl:
        tok = self.expect("config")
        name = self.ident().text
        candidates = None
        if self.accept("in"):
            self.expect("{")
            vals = [self.int_lit()]
            while self.accept(","):
                vals.append(self.int_lit())
            self.expect("}")
            candidates = tuple(vals)
        self.expect("=")
        default = self.int_lit()
        self.expect(";")
        if candidates is not None and default not in candidates:
            self.error(f"config {name} default {default} not among candidates", tok)
        return A.ConfigDecl(name, default, candidates, line=tok.line)

    def parse_function(self, ret: A.Ty, name_tok: Token, start: Token) -> A.FunctionDef:
        self.expect("(")
        params = []
        if self.at("void") and self.peek().text == ")":
            self.i += 1
        elif not self.at(")"):
            params.append(self.parse_param())
            while self.accept(","):
                params.append(self.parse_param())
        self.expect(")")
        if self.accept(";"):
            return A.FunctionDef(name_tok.text, params, ret, None, [], self.path,
                                 line=start.line, end_line=start.line)
        self._func_name = name_tok.text
        self._loop_counter = 0
        self._loops = []
        body = self.parse_block()
        fn = A.FunctionDef(
            name_tok.text, params, ret, body, list(self._loops), self.path,
            line=start.line, end_line=self.toks[self.i - 1].line,
        )
        return fn

    def parse_param(self) -> A.Param:
        ty = self.parse_type()
        name = self.ident().text
        array_len = None
        if self.accept("["):
            # array parameters decay to pointers
            if self.tok.kind == "int":
                array_len = self.int_lit()
            self.expect("]")
            ty = A.Ty(ty.base, True)
        return A.Param(ty, name, array_len)

    # statements
    def parse_block(self) -> A.Block:
        tok = self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unbalanced brace: missing '}'", tok)
            stmts.append(self.parse_stmt())
        self.expect("}")
        return A.Block(stmts, line=tok.line)

    def finish_decl(self, ty: A.Ty, name: Token) -> A.VarDecl:
        array_len = None
        if self.accept("["):
            array_len = self.int_lit()
            if array_len < 1:
                self.error("array length must be positive")
            self.expect("]")
        init = None
        if self.accept("="):
            init = self.parse_expr()
        self.expect(";")
        return A.VarDecl(ty, name.text, array_len, init, line=name.line, col=name.col)

    def _new_loop(self, kind: str, line: int) -> str:
        loop_id = f"{self._func_name}.{self._loop_counter}"
        self._loop_counter += 1
        info = A.LoopInfo(loop_id, line, kind)
        self._loops.append(info)
        return loop_id

    def parse_stmt(self) -> A.Stmt:
        tok = self.tok
        if self.at("{"):
            return self.parse_block()
        if self.at(";"):
            self.i += 1
            return A.Empty(line=tok.line)
        if self.at_type():
            ty = self.parse_type()
            return self.finish_decl(ty, self.ident())
        if self.accept("if"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = self.parse_stmt()
            else_ = self.parse_stmt() if self.accept("else") else None
            return A.If(cond, then, else_, line=tok.line)
        if self.accept("while"):
            loop_id = self._new_loop("while", tok.line)
            info = self._loops[-1]
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            body = self.parse_stmt()
            end = self.toks[self.i - 1].line
            info.end_line = end
            info.induction_hint = _induction_hint(None, cond, body)
            return A.While(cond, body, loop_id, line=tok.line, end_line=end)
        if self.accept("for"):
            loop_id = self._new_loop("for", tok.line)
            info = self._loops[-1]
            self.expect("(")
            init = None
            if self.at_type():
                ty = self.parse_type()
                init = self.finish_decl(ty, self.ident())
            elif not self.accept(";"):
                e = self.parse_expr()
                init = A.ExprStmt(e, line=tok.line)
                self.expect(";")
            cond = None if self.at(";") else self.parse_expr()
            self.expect(";")
            step = None if self.at(")") else self.parse_expr()
            self.expect(")")
            body = self.parse_stmt()
            end = self.toks[self.i - 1].line
            info.end_line = end
            info.induction_hint = _induction_hint(init, cond, body, step)
            return A.For(init, cond, step, body, loop_id, line=tok.line, end_line=end)
        if self.accept("return"):
            value = None if self.at(";") else self.parse_expr()
            self.expect(";")
            return A.Return(value, line=tok.line)
        if self.accept("assume"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return A.Assume(cond, line=tok.line)
        if self.accept("assert"):
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return A.Assert(cond, line=tok.line, col=tok.col)
        if self.at("}"):
            self.error("unbalanced brace: unexpected '}'")
        e = self.parse_expr()
        self.expect(";")
        return A.ExprStmt(e, line=tok.line)

    # expressions
    def parse_expr(self) -> A.Expr:
        left = self.parse_binary(0)
        if self.tok.kind == "op" and self.tok.text in _ASSIGN_OPS:
            op = self.tok
            self.i += 1
            if not isinstance(left, (A.Name, A.Index, A.Deref)):
                self.error("assignment target is not an lvalue", op)
            value = self.parse_expr()
            return A.Assign(op.text, left, value, line=op.line, col=op.col)
        return left

    def parse_binary(self, level: int) -> A.Expr:
        if level == len(_BINARY_PREC):
            return self.parse_unary()
        left = self.parse_binary(level + 1)
        while self.tok.kind == "op" and self.tok.text in _BINARY_PREC[level]:
            op = self.tok
            self.i += 1
            right = self.parse_binary(level + 1)
            left = A.Binary(op.text, left, right, line=op.line, col=op.col)
        return left

    def parse_unary(self) -> A.Expr:
        tok = self.tok
        if tok.kind == "op":
            if tok.text in ("-", "!", "~"):
                self.i += 1
                operand = self.parse_unary()
                return A.Unary(tok.text, operand, line=tok.line, col=tok.col)
            if tok.text == "*":
                self.i += 1
                return A.Deref(self.parse_unary(), line=tok.line, col=tok.col)
            if tok.text == "&":
                self.i += 1
                target = self.parse_unary()
                if not isinstance(target, (A.Name, A.Index)):
                    self.error("address-of requires a variable or element", tok)
                return A.AddrOf(target, line=tok.line, col=tok.col)
            if tok.text in ("++", "--"):
                self.i += 1
                target = self.parse_unary()
                return A.IncDec(tok.text, True, target, line=tok.line, col=tok.col)
            if tok.text == "(" and self.peek().kind == "kw" and self.peek().text in TYPE_ALIASES:
                self.i += 1
                ty = self.parse_type()
                self.expect(")")
                return A.Cast(ty, self.parse_unary(), line=tok.line, col=tok.col)
        return self.parse_postfix()

    def parse_postfix(self) -> A.Expr:
        e = self.parse_primary()
        while True:
            tok = self.tok
            if self.accept("["):
                idx = self.parse_expr()
                self.expect("]")
                e = A.Index(e, idx, line=tok.line, col=tok.col)
            elif self.at("++") or self.at("--"):
                self.i += 1
                e = A.IncDec(tok.text, False, e, line=tok.line, col=tok.col)
            else:
                return e

    def parse_primary(self) -> A.Expr:
        tok = self.tok
        if tok.kind == "int":
            self.i += 1
            return A.IntLit(int(tok.text, 0), line=tok.line, col=tok.col)
        if self.accept("NULL"):
            return A.NullLit(line=tok.line, col=tok.col)
        if tok.kind == "ident":
            self.i += 1
            if self.accept("("):
                args = []
                if not self.at(")"):
                    args.append(self.parse_expr())
                    while self.accept(","):
                        args.append(self.parse_expr())
                self.expect(")")
                return A.Call(tok.text, args, line=tok.line, col=tok.col)
            return A.Name(tok.text, line=tok.line, col=tok.col)
        if self.accept("("):
            e = self.parse_expr()
            self.expect(")")
            return e
        self.error(f"unexpected token {tok.text or 'end of file'!r}")


def _induction_hint(init, cond, body, step=None):
    """Recognize ``v = s; v < / <= / != e; v += t`` shapes; returns (var, initial, stride)."""
    var = None
    if isinstance(cond, A.Binary) and cond.op in ("<", "<=", "!=") and isinstance(cond.left, A.Name):
        var = cond.left.id
    if var is None:
        return None
    initial = None
    if isinstance(init, A.VarDecl) and init.name == var and isinstance(init.init, A.IntLit):
        initial = init.init.value
    elif isinstance(init, A.ExprStmt) and isinstance(init.expr, A.Assign) and init.expr.op == "=" \
            and isinstance(init.expr.target, A.Name) and init.expr.target.id == var \
            and isinstance(init.expr.value, A.IntLit):
        initial = init.expr.value.value
    candidates = [step] if step is not None else []
    if step is None and isinstance(body, A.Block):
        candidates = [s.expr for s in body.stmts if isinstance(s, A.ExprStmt)]
    stride = None
    for e in candidates:
        if isinstance(e, A.IncDec) and isinstance(e.target, A.Name) and e.target.id == var:
            stride = 1 if e.op == "++" else -1
        elif isinstance(e, A.Assign) and isinstance(e.target, A.Name) and e.target.id == var \
                and e.op in ("+=", "-=") and isinstance(e.value, A.IntLit):
            stride = e.value.value if e.op == "+=" else -e.value.value
    if stride is None:
        return None
    return (var, initial, stride)


def parse_source(src: str, path: str = "<input>") -> A.SourceUnit:
    return Parser(src, path).parse_unit()


def parse_function_source(src: str, path: str = "<harness>") -> A.FunctionDef:
    unit = parse_source(src, path)
    if len(unit.functions) != 1 or unit.globals or unit.configs:
        raise MiniCSyntaxError("expected exactly one function definition", path, 1, 1)
    return unit.functions[0]
