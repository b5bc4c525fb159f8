"""Shared machinery for turning redundancy classes into auxiliary arrays.

A candidate is one two-operand expression occurrence (a binary node, or a
pair of children of an n-ary node).  Candidates with equal redundancy keys
form a class; each extracted class (or reuse subgroup of one) becomes one
auxiliary array whose representative expression anchors the class at the
midpoint of the member positions, with every member recorded as an integer
per-level offset from it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    ADD,
    DIV,
    SUB,
    ArrayRef,
    Binary,
    Expr,
    Leaf,
    Sub as IxSub,
    copy_expr,
    translate_expr,
)
from .identification import integer_offset, reference_offsets


@dataclass
class Candidate:
    """One extractable two-operand occurrence."""

    stmt: int
    order: int  # preorder position, for deterministic class ordering
    parent: object  # Nary parent, or None for a standalone binary node
    node: object  # the Binary node itself when parent is None
    op: str
    x: Leaf
    y: Leaf
    sx: int = 1
    sy: int = 1
    eri: tuple = None
    gsign: int = 1

    def __post_init__(self):
        from .identification import canonical_form, compute_eri

        self.cx, self.cy, self.csigns, self.gsign = canonical_form(
            self.op, self.x.ref, self.y.ref, self.sx, self.sy
        )
        if self.eri is None:
            self.eri, _ = compute_eri(self.op, self.x.ref, self.y.ref, sx=self.sx, sy=self.sy)

    def leaf_ids(self):
        return (id(self.x), id(self.y))

    def member_expr(self):
        """The occurrence as a standalone expression.

        Plain candidates keep their source operand order (evaluation order
        is part of the contract); sign-carrying candidates from sub/div
        normalization use the canonical form so all members of a class
        agree with one representative up to the recorded global sign.
        """
        if (self.sx, self.sy) == (1, 1):
            if self.node is not None:
                return copy_expr(self.node)
            return Binary(self.op, copy_expr(self.x), copy_expr(self.y))
        if self.csigns[1] < 0:
            op = SUB if self.op == ADD else DIV
        else:
            op = self.op
        return Binary(op, Leaf(self.cx), Leaf(self.cy))

    def ref_offsets(self, m):
        return reference_offsets(self.cx, self.cy, m)


@dataclass
class AuxArray:
    """An extracted redundancy class with its representative expression."""

    id: str
    rep: Expr
    iteration: int
    eri: tuple
    member_offsets: list = field(default_factory=list)  # dicts level -> int
    member_signs: list = field(default_factory=list)
    range_: list = None  # per level (lo, hi) Bounds, filled by codegen
    rep_ref_offsets: dict = None  # canonical-operand offsets of the rep

    @property
    def levels(self):
        return sorted(self.rep_ref_offsets)


def aux_leaf(aux, offsets, m):
    """Auxiliary-array load at the given per-level offsets.

    Dimensions run from the innermost loop level outward, matching the
    benchmarks' subscript convention.
    """
    subs = tuple(IxSub(1, lvl, offsets.get(lvl, 0)) for lvl in range(m, 0, -1))
    return Leaf(ArrayRef(aux.id, subs))


def build_aux(name, iteration, members, m):
    """Create an AuxArray from a class (or subgroup) of candidates.

    Members are positioned relative to the first occurrence via the
    canonical operand (consistent across a class).  The representative is
    the first member shifted to the truncated midpoint of those positions:
    a member at the center keeps its source subscripts verbatim, while a
    centerless symmetric pair (uses at -1 and +1) anchors on the plain
    loop indices between them.
    """
    first = members[0]
    base = first.ref_offsets(m)
    positions = [integer_offset(c.ref_offsets(m), base, m) for c in members]
    shift = {}
    for lvl in range(1, m + 1):
        vals = [p[lvl] for p in positions]
        shift[lvl] = int((max(vals) + min(vals)) / 2)  # truncate toward zero
    rep = translate_expr(first.member_expr(), shift)
    rep_off = {lvl: base[lvl] + shift[lvl] for lvl in base}
    aux = AuxArray(name, rep, iteration, first.eri, rep_ref_offsets=rep_off)
    for c, pos in zip(members, positions):
        aux.member_offsets.append({lvl: pos[lvl] - shift[lvl] for lvl in pos})
        aux.member_signs.append(c.gsign)
    return aux


def replace_candidate(c, new_leaf, root_setter):
    """Splice the auxiliary load over the candidate occurrence."""
    if c.parent is None:
        if c.gsign != 1:  # signs only arise from n-ary slots
            raise AssertionError("signed candidate outside an n-ary parent")
        root_setter(c.node, new_leaf)
        return
    kids, signs = c.parent.children, c.parent.signs
    ix = next(k for k, ch in enumerate(kids) if ch is c.x)
    iy = next(k for k, ch in enumerate(kids) if ch is c.y)
    keep, drop = min(ix, iy), max(ix, iy)
    kids[keep] = new_leaf
    signs[keep] = c.gsign
    del kids[drop]
    del signs[drop]


def viable_pair(x, y, written):
    """Scalar-with-scalar pairs and written-array reads are never extracted."""

    def loop_varying(leaf):
        return any(s.coef != 0 for s in leaf.ref.subs)

    if not (loop_varying(x) or loop_varying(y)):
        return False
    for leaf in (x, y):
        if leaf.ref.name in written:
            return False
        if any(isinstance(s.level, str) for s in leaf.ref.subs):
            return False
    return True
