"""Parser and emitter for the mini loop-nest language.

The input language is Fortran-flavored free form: REAL/PARAM declarations,
one DO/ENDDO nest, one assignment per line, "!" comments.  Transformed
programs (precompute loops, pipelined buffers, index-rotation scalars) are
emitted in the same surface syntax; `parse_any` can read those back, while
`parse` enforces the single-perfect-nest input contract with diagnostics.
"""

from __future__ import annotations

import re

from .ir import (
    ADD,
    APPLY,
    DIV,
    INTRINSICS,
    MUL,
    SUB,
    ArrayDecl,
    ArrayRef,
    Assign,
    Binary,
    Bound,
    Call,
    Dim,
    Leaf,
    Loop,
    Nary,
    Program,
    Sub,
    const_ref,
    normalize_calls,
)


class ParseError(ValueError):
    def __init__(self, msg, line=None, col=None, token=None):
        self.line, self.col, self.token = line, col, token
        where = f" at line {line}" if line is not None else ""
        where += f", col {col}" if col is not None else ""
        tok = f" near {token!r}" if token else ""
        super().__init__(f"{msg}{where}{tok}")


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),:=]))"
)


def _tokenize(text, lineno):
    pos, out = 0, []
    while pos < len(text):
        if text[pos] == "!":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            if text[pos:].strip():
                raise ParseError("unexpected character", lineno, pos + 1, text[pos])
            break
        if m.group("num"):
            out.append(("num", m.group("num"), lineno, m.start() + 1))
        elif m.group("id"):
            out.append(("id", m.group("id"), lineno, m.start() + 1))
        else:
            out.append(("op", m.group("op"), lineno, m.start() + 1))
        pos = m.end()
    return out


class _Line:
    def __init__(self, tokens):
        self.toks = tokens
        self.pos = 0

    def peek(self, k=0):
        i = self.pos + k
        return self.toks[i] if i < len(self.toks) else ("eof", "", self.toks[0][2], 0)

    def next(self):
        t = self.peek()
        self.pos += 1
        return t

    def expect(self, value):
        t = self.next()
        if t[1].lower() != value.lower():
            raise ParseError(f"expected {value!r}", t[2], t[3], t[1])
        return t

    @property
    def done(self):
        return self.pos >= len(self.toks)


# --- raw expression AST (before affine subscript extraction) ---------------


class _Num:
    def __init__(self, v):
        self.v = v


class _Var:
    def __init__(self, n):
        self.n = n


class _Bin:
    def __init__(self, op, l, r):
        self.op, self.l, self.r = op, l, r
        self.paren = False


class _Call:
    def __init__(self, name, arg):
        self.name, self.arg = name, arg
        self.paren = False


class _Ref:
    def __init__(self, name, args):
        self.name, self.args = name, args
        self.paren = False


def _parse_expr(ln):
    return _parse_sum(ln)


def _parse_sum(ln):
    node = _parse_term(ln)
    while ln.peek()[1] in ("+", "-") and ln.peek()[0] == "op":
        op = ln.next()[1]
        node = _Bin(op, node, _parse_term(ln))
    return node


def _parse_term(ln):
    node = _parse_unary(ln)
    while ln.peek()[1] in ("*", "/") and ln.peek()[0] == "op":
        op = ln.next()[1]
        node = _Bin(op, node, _parse_unary(ln))
    return node


def _parse_unary(ln):
    if ln.peek()[0] == "op" and ln.peek()[1] == "-":
        ln.next()
        return _Bin("*", _Num("-1"), _parse_unary(ln))
    return _parse_atom(ln)


def _parse_atom(ln):
    t = ln.next()
    kind, val = t[0], t[1]
    if kind == "num":
        return _Num(val)
    if kind == "op" and val == "(":
        node = _parse_expr(ln)
        ln.expect(")")
        if isinstance(node, (_Bin, _Call, _Ref)):
            node.paren = True
        return node
    if kind == "id":
        if ln.peek()[1] == "(" and ln.peek()[0] == "op":
            ln.next()
            args = [_parse_expr(ln)]
            while ln.peek()[1] == ",":
                ln.next()
                args.append(_parse_expr(ln))
            ln.expect(")")
            return _Ref(val, args)
        return _Var(val)
    raise ParseError("expected expression", t[2], t[3], val)


def _linear_form(node, loc):
    """Reduce a raw subscript AST to {var: coef}, const; reject non-affine."""
    if isinstance(node, _Num):
        if "." in node.v or "e" in node.v.lower():
            raise ParseError("non-integer subscript", *loc, node.v)
        return {}, int(node.v)
    if isinstance(node, _Var):
        return {node.n: 1}, 0
    if isinstance(node, _Bin):
        lc, lk = _linear_form(node.l, loc)
        rc, rk = _linear_form(node.r, loc)
        if node.op == "+":
            out = dict(lc)
            for v, c in rc.items():
                out[v] = out.get(v, 0) + c
            return out, lk + rk
        if node.op == "-":
            out = dict(lc)
            for v, c in rc.items():
                out[v] = out.get(v, 0) - c
            return out, lk - rk
        if node.op == "*":
            if not lc:
                return {v: lk * c for v, c in rc.items()}, lk * rk
            if not rc:
                return {v: rk * c for v, c in lc.items()}, rk * lk
            raise ParseError("non-affine subscript", *loc)
        raise ParseError("non-affine subscript", *loc)
    raise ParseError("non-affine subscript", *loc)


class Parser:
    def __init__(self, text, strict=True):
        self.strict = strict
        self.lines = []
        for lineno, raw in enumerate(text.splitlines(), start=1):
            toks = _tokenize(raw, lineno)
            if toks:
                self.lines.append(_Line(toks))
        self.arrays = {}
        self.params = []
        self.aux_names = set()
        self.assigned_scalars = set()
        self.idx = 0

    def _line(self):
        if self.idx >= len(self.lines):
            return None
        ln = self.lines[self.idx]
        self.idx += 1
        return ln

    def _peek_word(self):
        if self.idx >= len(self.lines):
            return None
        return self.lines[self.idx].peek()[1].lower()

    def parse(self):
        while self._peek_word() in ("real", "param"):
            self._parse_decl(self._line())
        items = []
        loop_stack = []
        while True:
            word = self._peek_word()
            if word is None:
                break
            items.append(self._parse_item(loop_stack))
        prog = Program(self.arrays, self.params, items, self.aux_names)
        if self.strict:
            _validate(prog)
        return prog

    def _parse_decl(self, ln):
        kw = ln.next()[1].lower()
        name_t = ln.next()
        if name_t[0] != "id":
            raise ParseError("expected identifier", name_t[2], name_t[3], name_t[1])
        name = name_t[1]
        if kw == "param":
            self.params.append(name)
            return
        ln.expect("(")
        dims = [self._parse_range(ln)]
        while ln.peek()[1] == ",":
            ln.next()
            dims.append(self._parse_range(ln))
        ln.expect(")")
        if name in self.arrays:
            raise ParseError("duplicate declaration", name_t[2], name_t[3], name)
        self.arrays[name] = ArrayDecl(name, dims)

    def _parse_range(self, ln):
        lo = self._parse_bound(ln)
        if ln.peek()[1] == ":":
            ln.next()
            hi = self._parse_bound(ln)
            return Dim(lo, hi)
        return Dim(Bound.const(1), lo)

    def _parse_bound(self, ln):
        t = ln.peek()
        node = _parse_sum(ln)
        return _bound_form(node, (t[2], t[3]))

    def _parse_item(self, loop_stack):
        ln = self._line()
        word = ln.peek()[1].lower()
        if word == "do":
            return self._parse_loop(ln, loop_stack)
        if word == "enddo":
            t = ln.peek()
            raise ParseError("ENDDO without matching DO", t[2], t[3])
        return self._parse_stmt(ln, loop_stack)

    def _parse_loop(self, ln, loop_stack):
        ln.expect("do")
        var_t = ln.next()
        if var_t[0] != "id":
            raise ParseError("expected loop variable", var_t[2], var_t[3], var_t[1])
        var = var_t[1]
        if any(v == var for v in loop_stack):
            raise ParseError("duplicate loop index", var_t[2], var_t[3], var)
        ln.expect("=")
        lo = self._parse_bound(ln)
        ln.expect(",")
        hi = self._parse_bound(ln)
        loop_stack.append(var)
        level = len(loop_stack)
        body = []
        while True:
            word = self._peek_word()
            if word is None:
                t = ln.peek()
                raise ParseError("missing ENDDO", t[2], t[3])
            if word == "enddo":
                self._line()
                break
            if word == "do":
                body.append(self._parse_loop(self._line(), loop_stack))
            else:
                body.append(self._parse_stmt(self._line(), loop_stack))
        loop_stack.pop()
        return Loop(var, lo, hi, body, level)

    def _parse_stmt(self, ln, loop_stack):
        t = ln.peek()
        lhs = _parse_atom(ln)
        if not isinstance(lhs, (_Var, _Ref)):
            raise ParseError("expected assignment target", t[2], t[3], t[1])
        ln.expect("=")
        rhs_raw = _parse_expr(ln)
        if not ln.done:
            t2 = ln.peek()
            raise ParseError("trailing tokens after statement", t2[2], t2[3], t2[1])
        loc = (t[2], t[3])
        if isinstance(lhs, _Var):
            if lhs.n in loop_stack:
                raise ParseError("assignment to loop index", *loc, lhs.n)
            self.assigned_scalars.add(lhs.n)
            target = ArrayRef(lhs.n)
        else:
            target = self._to_ref(lhs, loop_stack, loc)
        rhs = self._convert(rhs_raw, loop_stack, loc)
        return Assign(target, normalize_calls(rhs))

    def _to_ref(self, node, loop_stack, loc):
        if node.name not in self.arrays:
            raise ParseError("undeclared array", *loc, node.name)
        if len(node.args) != len(self.arrays[node.name].dims):
            raise ParseError("wrong subscript count", *loc, node.name)
        subs = []
        for arg in node.args:
            coeffs, k = _linear_form(arg, loc)
            coeffs = {v: c for v, c in coeffs.items() if c != 0}
            if not coeffs:
                subs.append(Sub(0, 0, k))
                continue
            if len(coeffs) > 1:
                raise ParseError("non-affine subscript (two indices in one dimension)", *loc, node.name)
            (var, coef), = coeffs.items()
            if var in loop_stack:
                level = loop_stack.index(var) + 1
            elif self.strict:
                raise ParseError("subscript uses non-loop variable", *loc, var)
            else:
                level = var  # runtime scalar (pipeline slot); lenient mode only
            subs.append(Sub(coef, level, k))
        return ArrayRef(node.name, tuple(subs))

    def _convert(self, node, loop_stack, loc):
        if isinstance(node, _Num):
            return Leaf(const_ref(float(node.v)))
        if isinstance(node, _Var):
            n = node.n
            if n in self.arrays:
                raise ParseError("array used without subscripts", *loc, n)
            if self.strict and n not in self.params and n not in self.assigned_scalars and n not in loop_stack:
                raise ParseError("undeclared scalar", *loc, n)
            return Leaf(ArrayRef(n))
        if isinstance(node, _Ref):
            if node.name in self.arrays:
                leaf = Leaf(self._to_ref(node, loop_stack, loc))
                leaf.paren = node.paren
                return leaf
            if node.name in INTRINSICS:
                if len(node.args) != 1:
                    raise ParseError("intrinsic calls take one argument", *loc, node.name)
                c = Call(node.name, self._convert(node.args[0], loop_stack, loc))
                c.paren = node.paren
                return c
            raise ParseError("undeclared array", *loc, node.name)
        if isinstance(node, _Bin):
            b = Binary(node.op, self._convert(node.l, loop_stack, loc), self._convert(node.r, loop_stack, loc))
            b.paren = node.paren
            return b
        raise ParseError("bad expression", *loc)


def _bound_form(node, loc):
    """Bounds are restricted to coef*base + k over one size symbol."""
    coeffs, k = _linear_form(node, loc)
    coeffs = {v: c for v, c in coeffs.items() if c != 0}
    if not coeffs:
        return Bound(None, k)
    if len(coeffs) == 1:
        (var, coef), = coeffs.items()
        return Bound(var, k, coef)
    raise ParseError("unsupported bound expression", *loc)


def parse(text):
    """Strict parse: validated single perfect nest."""
    return Parser(text, strict=True).parse()


def parse_any(text):
    """Lenient parse for emitted (possibly transformed) programs."""
    return Parser(text, strict=False).parse()


def _validate(prog):
    nests = [it for it in prog.items if isinstance(it, Loop)]
    if not nests:
        raise ParseError("program has no loop nest")
    if len(nests) != 1 or len(prog.items) != 1:
        raise ParseError("program must contain exactly one loop nest")

    def check(loop):
        loops = [b for b in loop.body if isinstance(b, Loop)]
        stmts = [b for b in loop.body if isinstance(b, Assign)]
        if loops and stmts:
            raise ParseError("imperfect nest: statement between loop headers")
        if len(loops) > 1:
            raise ParseError("imperfect nest: sibling loops")
        if loops:
            check(loops[0])

    check(nests[0])


# ---------------------------------------------------------------------------
# Emitter


_PREC = {ADD: 1, SUB: 1, MUL: 2, DIV: 2}


def _render_ref(ref):
    if ref.literal is not None:
        v = ref.literal
        return repr(int(v)) if v == int(v) and abs(v) < 1e15 else repr(v)
    if not ref.subs:
        return ref.name
    parts = []
    for s in ref.subs:
        if s.coef == 0:
            parts.append(str(s.offset))
            continue
        var = s.level if isinstance(s.level, str) else None
        name = var if var else f"<{s.level}>"
        if s.coef == 1:
            t = name
        elif s.coef == -1:
            t = f"-{name}"
        else:
            t = f"{s.coef}*{name}"
        if s.offset > 0:
            t += f"+{s.offset}"
        elif s.offset < 0:
            t += f"-{-s.offset}"
        parts.append(t)
    return f"{ref.name}({','.join(parts)})"


def _ref_text(ref, loop_vars):
    """Render with loop-level subscripts resolved to variable names."""
    if ref.literal is not None or not ref.subs:
        return _render_ref(ref)
    parts = []
    for s in ref.subs:
        if s.coef == 0:
            parts.append(str(s.offset))
            continue
        name = s.level if isinstance(s.level, str) else loop_vars[s.level]
        if s.coef == 1:
            t = name
        elif s.coef == -1:
            t = f"-{name}"
        else:
            t = f"{s.coef}*{name}"
        if s.offset > 0:
            t += f"+{s.offset}"
        elif s.offset < 0:
            t += f"-{-s.offset}"
        parts.append(t)
    return f"{ref.name}({','.join(parts)})"


def _render_expr(expr, loop_vars, prec=0, right=False):
    from .ir import Leaf as _Leaf

    if isinstance(expr, _Leaf):
        return _ref_text(expr.ref, loop_vars)
    if isinstance(expr, Call):
        return f"{expr.name}({_render_expr(expr.arg, loop_vars)})"
    if isinstance(expr, Binary):
        if expr.op == APPLY:
            return f"{expr.left.ref.name}({_render_expr(expr.right, loop_vars)})"
        p = _PREC[expr.op]
        lt = _render_expr(expr.left, loop_vars, p, False)
        rt = _render_expr(expr.right, loop_vars, p, True)
        text = f"{lt}{expr.op}{rt}"
        need = prec > p or (prec == p and right) or expr.paren
        return f"({text})" if need else text
    if isinstance(expr, Nary):
        p = _PREC[expr.op]
        parts = []
        for k, (c, sg) in enumerate(zip(expr.children, expr.signs)):
            t = _render_expr(c, loop_vars, p, k > 0)
            if sg < 0:
                op = SUB if expr.op == ADD else DIV
                parts.append(f"{op}{t}")
            else:
                parts.append(t if k == 0 else f"{expr.op}{t}")
        text = "".join(parts)
        need = prec > p or (prec == p and right) or expr.paren
        return f"({text})" if need else text
    raise TypeError(expr)


def emit(prog):
    """Deterministic source text for a (possibly transformed) program."""
    out = []
    for p in prog.params:
        out.append(f"PARAM {p}")
    for decl in prog.arrays.values():
        dims = []
        for d in decl.dims:
            if d.lo == Bound.const(1):
                dims.append(d.hi.text())
            else:
                dims.append(f"{d.lo.text()}:{d.hi.text()}")
        out.append(f"REAL {decl.name}({','.join(dims)})")

    def emit_items(items, loop_vars, depth):
        pad = "  " * depth
        for it in items:
            if isinstance(it, Loop):
                out.append(f"{pad}DO {it.var}={it.lo.text()},{it.hi.text()}")
                level = it.level if it.level is not None else depth + 1
                inner = dict(loop_vars)
                inner[level] = it.var
                emit_items(it.body, inner, depth + 1)
                out.append(f"{pad}ENDDO")
            else:
                lhs = _ref_text(it.target, loop_vars)
                out.append(f"{pad}{lhs} = {_render_expr(it.expr, loop_vars)}")

    emit_items(prog.items, {}, 0)
    return "\n".join(out) + "\n"
