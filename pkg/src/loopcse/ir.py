"""Loop-nest intermediate representation.

Programs are lists of loops and assignments over affine array references.
Expression trees start out binary (the shape the parser produces); the
reassociating passes may flatten them into n-ary nodes.  Scalars are
zero-dimensional array references, and intrinsic calls are normalized to a
binary "apply" operator whose left operand is the function name as a scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

ADD, SUB, MUL, DIV, APPLY = "+", "-", "*", "/", "@"
COMMUTATIVE = {ADD, MUL}
ASSOCIATIVE = {ADD, MUL}
INTRINSICS = ("sin", "cos", "sqrt", "exp")


@dataclass(frozen=True)
class Sub:
    """One subscript dimension: coef*i_level + offset.

    level counts loops from the outermost (1) to the innermost (m);
    level 0 with coef 0 marks a constant-only dimension.
    """

    coef: int
    level: int
    offset: int

    def shifted(self, by):
        if self.coef == 0:
            return self
        return Sub(self.coef, self.level, self.offset + self.coef * by)


@dataclass(frozen=True)
class ArrayRef:
    """A[a1*i_{s1}+b1]...[an*i_{sn}+bn]; subs == () is a scalar."""

    name: str
    subs: tuple = ()
    literal: float | None = None  # numeric constant leaves

    @property
    def is_scalar(self):
        return not self.subs

    def translated(self, offsets):
        """Shift every subscript by offsets[level] loop iterations."""
        if not self.subs:
            return self
        return ArrayRef(
            self.name,
            tuple(s.shifted(offsets.get(s.level, 0)) for s in self.subs),
            self.literal,
        )


def const_ref(value):
    text = repr(float(value)) if isinstance(value, float) else repr(value)
    return ArrayRef(text, (), literal=float(value))


class Expr:
    """Base class for expression-tree nodes (identity-based equality)."""

    __slots__ = ("paren",)

    def __init__(self):
        self.paren = False


class Leaf(Expr):
    __slots__ = ("ref",)

    def __init__(self, ref, paren=False):
        super().__init__()
        self.ref = ref
        self.paren = paren

    def __repr__(self):
        return f"Leaf({self.ref.name})"


class Call(Expr):
    """Unary intrinsic call as produced by the parser; normalized away."""

    __slots__ = ("name", "arg")

    def __init__(self, name, arg):
        super().__init__()
        self.name = name
        self.arg = arg


class Binary(Expr):
    __slots__ = ("op", "left", "right")

    def __init__(self, op, left, right, paren=False):
        super().__init__()
        self.op = op
        self.left = left
        self.right = right
        self.paren = paren

    def __repr__(self):
        return f"Binary({self.op})"


class Nary(Expr):
    """Flattened chain of one commutative-associative operator.

    signs[k] is +1 normally; -1 marks a subtracted (for +) or reciprocal
    (for *) child introduced by subtraction/division normalization.
    """

    __slots__ = ("op", "children", "signs")

    def __init__(self, op, children, signs=None):
        super().__init__()
        self.op = op
        self.children = list(children)
        self.signs = list(signs) if signs is not None else [1] * len(children)

    def __repr__(self):
        return f"Nary({self.op},{len(self.children)})"


def walk(expr):
    yield expr
    if isinstance(expr, Binary):
        yield from walk(expr.left)
        yield from walk(expr.right)
    elif isinstance(expr, Nary):
        for c in expr.children:
            yield from walk(c)
    elif isinstance(expr, Call):
        yield from walk(expr.arg)


def leaves(expr):
    return [n for n in walk(expr) if isinstance(n, Leaf)]


def copy_expr(expr):
    if isinstance(expr, Leaf):
        return Leaf(expr.ref, expr.paren)
    if isinstance(expr, Binary):
        return Binary(expr.op, copy_expr(expr.left), copy_expr(expr.right), expr.paren)
    if isinstance(expr, Nary):
        n = Nary(expr.op, [copy_expr(c) for c in expr.children], list(expr.signs))
        n.paren = expr.paren
        return n
    if isinstance(expr, Call):
        c = Call(expr.name, copy_expr(expr.arg))
        c.paren = expr.paren
        return c
    raise TypeError(expr)


def translate_expr(expr, offsets):
    """Copy of expr with every array leaf shifted by offsets[level]."""
    out = copy_expr(expr)
    for node in walk(out):
        if isinstance(node, Leaf):
            node.ref = node.ref.translated(offsets)
    return out


def expr_equal(a, b):
    """Structural equality ignoring paren flags."""
    if isinstance(a, Leaf) and isinstance(b, Leaf):
        return a.ref == b.ref
    if isinstance(a, Binary) and isinstance(b, Binary):
        return a.op == b.op and expr_equal(a.left, b.left) and expr_equal(a.right, b.right)
    if isinstance(a, Nary) and isinstance(b, Nary):
        return (
            a.op == b.op
            and a.signs == b.signs
            and len(a.children) == len(b.children)
            and all(expr_equal(x, y) for x, y in zip(a.children, b.children))
        )
    if isinstance(a, Call) and isinstance(b, Call):
        return a.name == b.name and expr_equal(a.arg, b.arg)
    return False


def count_ops(expr):
    """Number of arithmetic operations; an n-ary node with k children is k-1."""
    n = 0
    for node in walk(expr):
        if isinstance(node, Binary):
            n += 1
        elif isinstance(node, Nary):
            n += len(node.children) - 1
        elif isinstance(node, Call):
            n += 1
    return n


def replace_child(parent, old, new):
    if isinstance(parent, Binary):
        if parent.left is old:
            parent.left = new
            return
        if parent.right is old:
            parent.right = new
            return
    elif isinstance(parent, Nary):
        for k, c in enumerate(parent.children):
            if c is old:
                parent.children[k] = new
                return
    elif isinstance(parent, Call):
        if parent.arg is old:
            parent.arg = new
            return
    raise ValueError("old is not a child of parent")


def normalize_calls(expr):
    """Rewrite every unary call f(x) into Binary(APPLY, Leaf(f), x)."""
    if isinstance(expr, Leaf):
        return expr
    if isinstance(expr, Call):
        arg = normalize_calls(expr.arg)
        node = Binary(APPLY, Leaf(ArrayRef(expr.name)), arg)
        node.paren = expr.paren
        return node
    if isinstance(expr, Binary):
        expr.left = normalize_calls(expr.left)
        expr.right = normalize_calls(expr.right)
        return expr
    if isinstance(expr, Nary):
        expr.children = [normalize_calls(c) for c in expr.children]
        return expr
    raise TypeError(expr)


# ---------------------------------------------------------------------------
# Bounds, declarations, programs


@dataclass(frozen=True)
class Bound:
    """Symbolic loop/array bound coef*base + k (base None = constant).

    Coefficients other than 1 occur only in array declarations for strided
    kernels; loop ranges and everything derived from them stay unit-coef.
    """

    base: str | None
    k: int
    coef: int = 1

    def shifted(self, by):
        return Bound(self.base, self.k + by, self.coef)

    def value(self, sizes):
        return (self.coef * sizes[self.base] if self.base else 0) + self.k

    def text(self):
        if self.base is None:
            return str(self.k)
        head = self.base if self.coef == 1 else f"{self.coef}*{self.base}"
        if self.k == 0:
            return head
        return f"{head}{'+' if self.k > 0 else '-'}{abs(self.k)}"

    @staticmethod
    def const(k):
        return Bound(None, k)


@dataclass(frozen=True)
class Dim:
    lo: Bound
    hi: Bound


@dataclass
class ArrayDecl:
    name: str
    dims: list
    role: str = "user"  # "user" or "aux"


@dataclass
class Assign:
    target: ArrayRef
    expr: Expr


@dataclass
class Loop:
    var: str
    lo: Bound
    hi: Bound
    body: list
    level: int | None = None  # loop level this var binds (1 = outermost)


@dataclass
class Program:
    """Declarations plus a list of top-level loops/assignments.

    Parsed inputs hold exactly one perfect nest; transformed programs may
    carry precompute loops, pipelined buffers and index-rotation scalars.
    """

    arrays: dict
    params: list
    items: list
    aux_names: set = field(default_factory=set)

    def copy(self):
        def copy_item(it):
            if isinstance(it, Loop):
                return Loop(it.var, it.lo, it.hi, [copy_item(x) for x in it.body])
            return Assign(it.target, copy_expr(it.expr))

        return Program(
            {k: ArrayDecl(d.name, list(d.dims), d.role) for k, d in self.arrays.items()},
            list(self.params),
            [copy_item(it) for it in self.items],
            set(self.aux_names),
        )

    def statements(self):
        def rec(items):
            for it in items:
                if isinstance(it, Loop):
                    yield from rec(it.body)
                else:
                    yield it

        return list(rec(self.items))


@dataclass
class LoopNest:
    """Analysis view of a single perfect nest: loop levels 1..m and its body."""

    indices: list  # [(var, lo: Bound, hi: Bound)] outermost first
    statements: list  # [Assign]
    program: Program

    @property
    def depth(self):
        return len(self.indices)

    def level_of(self, var):
        for k, (v, _, _) in enumerate(self.indices):
            if v == var:
                return k + 1
        raise KeyError(var)


def single_nest(program):
    """Extract the unique perfect nest from a parsed program."""
    loops = [it for it in program.items if isinstance(it, Loop)]
    if len(loops) != 1 or len(loops) != len(program.items):
        raise ValueError("program does not consist of a single loop nest")
    indices = []
    body = loops
    while len(body) == 1 and isinstance(body[0], Loop):
        lp = body[0]
        indices.append((lp.var, lp.lo, lp.hi))
        body = lp.body
    stmts = []
    for it in body:
        if isinstance(it, Loop):
            raise ValueError("imperfect nest: loop below statements")
        stmts.append(it)
    return LoopNest(indices, stmts, program)


def written_names(statements):
    """Names assigned anywhere in the body (arrays and scalar temporaries)."""
    return {st.target.name for st in statements}


def written_arrays(nest):
    return written_names(nest.statements)


def forward_substitute(statements):
    """Inline scalar-temporary definitions into their uses, in program order.

    Reassignment is honored: each use sees the definition active at that
    point.  Substituted copies are fresh nodes so every occurrence keeps its
    own identity.  Statements assigning to arrays are kept.
    """
    env = {}
    out = []
    for st in statements:
        expr = _subst(st.expr, env)
        if st.target.is_scalar:
            env[st.target.name] = expr
        else:
            out.append(Assign(st.target, expr))
    return out


def _subst(expr, env):
    if isinstance(expr, Leaf):
        if expr.ref.is_scalar and expr.ref.name in env:
            return copy_expr(env[expr.ref.name])
        return Leaf(expr.ref, expr.paren)
    if isinstance(expr, Binary):
        node = Binary(expr.op, _subst(expr.left, env), _subst(expr.right, env), expr.paren)
        return node
    if isinstance(expr, Call):
        node = Call(expr.name, _subst(expr.arg, env))
        node.paren = expr.paren
        return node
    if isinstance(expr, Nary):
        node = Nary(expr.op, [_subst(c, env) for c in expr.children], list(expr.signs))
        node.paren = expr.paren
        return node
    raise TypeError(expr)


def read_only_arrays(program):
    """Declared arrays never assigned anywhere in the program."""
    written = {st.target.name for st in program.statements() if not st.target.is_scalar}
    return {n for n in program.arrays if n not in written}
