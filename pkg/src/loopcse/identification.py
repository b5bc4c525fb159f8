"""Two-level redundancy identification.

Level one assigns every array reference a reference-pattern key: two
references get equal keys exactly when they touch the same infinite
sub-lattice of the array's index space.  Level two keys binary expressions
by their operand patterns, the operator, and the inter-operand offset
deltas, so that equal keys mean loop-carried redundant computation.

Keys are exact structural tuples rather than numeric hashes; a collision
would silently merge non-redundant classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .ir import COMMUTATIVE

# The "infinity" sentinel of the identification scheme is modeled as plain
# absence from the offset/delta mappings, never as a numeric value.


@dataclass(frozen=True)
class RpiInfo:
    index_list: tuple  # per dimension: loop level, or 0 for a constant dim
    index_coef: tuple  # per dimension: coefficient, or the constant itself
    first_offset: tuple  # sorted (level, Fraction b/a) for first appearances
    index_delta: tuple  # sorted (level, (Fraction, ...)) per-level delta lists

    def first_offset_map(self):
        return dict(self.first_offset)


def compute_rpi_info(ref):
    """Per-reference lattice info: index list, coefficients, offset deltas.

    The first delta entry for a level is b mod a (least nonnegative residue
    modulo |a|); later appearances record b/a minus the first offset, kept
    as exact reduced fractions.
    """
    index_list = []
    index_coef = []
    first = {}
    delta = {}
    for s in ref.subs:
        if s.coef != 0:
            index_list.append(s.level)
            index_coef.append(s.coef)
            f = Fraction(s.offset, s.coef)
            if s.level not in first:
                first[s.level] = f
                delta.setdefault(s.level, []).append(Fraction(s.offset % abs(s.coef)))
            else:
                delta.setdefault(s.level, []).append(f - first[s.level])
        else:
            index_list.append(0)
            index_coef.append(s.offset)
    return RpiInfo(
        tuple(index_list),
        tuple(index_coef),
        tuple(sorted(first.items())),
        tuple(sorted((lvl, tuple(v)) for lvl, v in delta.items())),
    )


def rpi_key(ref, written=frozenset()):
    """Structural reference-pattern key.

    References to arrays written inside the nest get a never-matching key so
    they are never grouped into a redundancy class.
    """
    if ref.literal is not None:
        return ("#lit", ref.literal)
    info = compute_rpi_info(ref)
    nonce = ("w", ref.name) if ref.name in written else ()
    return (ref.name, info.index_list, info.index_coef, info.index_delta, nonce)


@dataclass(frozen=True)
class EriKey:
    left: tuple
    op: str
    right: tuple
    delta: tuple  # sorted (level, Fraction) over shared loop levels
    signs: tuple = (1, 1)  # canonical-order operand signs (sub/div mode)

    def sort_token(self):
        return (self.op, self.left, self.right, tuple((l, str(d)) for l, d in self.delta), self.signs)


def _operand_sort_key(ref, info):
    return (ref.name, info.index_list, info.index_coef, info.index_delta, info.first_offset)


def canonical_operands(op, x_ref, y_ref, sx=1, sy=1):
    """Order operands of a commutative op; ties fall back to first offsets."""
    if op not in COMMUTATIVE:
        return (x_ref, y_ref, sx, sy, False)
    kx = _operand_sort_key(x_ref, compute_rpi_info(x_ref))
    ky = _operand_sort_key(y_ref, compute_rpi_info(y_ref))
    if (x_ref.literal is not None) != (y_ref.literal is not None):
        swap = x_ref.literal is not None  # literals sort after names
    else:
        swap = kx > ky
    if swap:
        return (y_ref, x_ref, sy, sx, True)
    return (x_ref, y_ref, sx, sy, False)


def canonical_form(op, x_ref, y_ref, sx=1, sy=1):
    """Canonically ordered operands with signs, plus the extracted global sign.

    Operands of commutative ops are sorted; if the first then carries a
    minus (or reciprocal) sign, both signs flip and the flip is reported as
    a global sign, so y+z and -y-z share one canonical form.
    """
    cx, cy, csx, csy, _ = canonical_operands(op, x_ref, y_ref, sx, sy)
    gsign = 1
    if csx < 0:
        gsign = -1
        csx, csy = -csx, -csy
    return cx, cy, (csx, csy), gsign


def compute_eri(op, x_ref, y_ref, written=frozenset(), sx=1, sy=1):
    """Expression redundancy key for a two-leaf expression x op y.

    exprDelta carries, per loop level used by both operands, the difference
    of their first offsets; levels used by only one operand stay absent
    (the infinity sentinel).  With subtraction/division normalization the
    pair of child signs is canonicalized so a globally negated expression
    matches its positive counterpart; the global sign is returned alongside.
    """
    cx, cy, signs, gsign = canonical_form(op, x_ref, y_ref, sx, sy)
    xi = compute_rpi_info(cx)
    yi = compute_rpi_info(cy)
    fx, fy = dict(xi.first_offset), dict(yi.first_offset)
    delta = tuple(sorted((lvl, fx[lvl] - fy[lvl]) for lvl in fx.keys() & fy.keys() if lvl != 0))
    key = EriKey(rpi_key(cx, written), op, rpi_key(cy, written), delta, signs)
    return key, gsign


# ---------------------------------------------------------------------------
# Lattice oracle (test-side ground truth for rpi_key equality)


def _dim_value(sub, level, v):
    """Evaluate one subscript with the given level's index at v, others 0."""
    if sub.coef == 0:
        return sub.offset
    return sub.coef * v + sub.offset if sub.level == level else sub.offset


def lattice_oracle_equal(x, y, window):
    """True iff x and y follow the same reference pattern: their generated
    sub-lattices coincide point-for-point under some integer translation of
    the loop vector, found by bounded enumeration.

    Plain set equality of the lattices would be weaker: A(-2i) touches the
    same points as A(2i) and A(i1) the same points as A(i2), yet replacing
    one with a precomputed copy of the other is wrong at almost every
    iteration.  Translation alignment is the reuse-relevant notion, and the
    window must cover the largest offset difference over the smallest
    coefficient (12 suffices for |coef| <= 4, |offset| <= 6).
    """
    if x.name != y.name or len(x.subs) != len(y.subs):
        return False
    if not x.subs:
        return True
    levels = {s.level for s in x.subs if s.coef != 0} | {
        s.level for s in y.subs if s.coef != 0
    }
    # dimensions constant on both sides never see a translation
    for sx, sy in zip(x.subs, y.subs):
        if sx.coef == 0 and sy.coef == 0 and sx.offset != sy.offset:
            return False
    probe = range(-2, 3)
    for lvl in levels:
        dims = [
            (sx, sy)
            for sx, sy in zip(x.subs, y.subs)
            if sx.level == lvl and sx.coef != 0 or sy.level == lvl and sy.coef != 0
        ]
        feasible = False
        for t in range(-window, window + 1):
            if all(
                _dim_value(sx, lvl, v) == _dim_value(sy, lvl, v + t)
                for sx, sy in dims
                for v in probe
            ):
                feasible = True
                break
        if not feasible:
            return False
    return True


# ---------------------------------------------------------------------------
# Class anchoring: integer member offsets


def reference_offsets(x_ref, y_ref, m):
    """Per-level first offsets of the canonical reference operand.

    For each level the offset comes from whichever operand uses it (the
    canonically-first one when both do), making member positions comparable
    across a redundancy class.
    """
    fx = dict(compute_rpi_info(x_ref).first_offset)
    fy = dict(compute_rpi_info(y_ref).first_offset)
    out = {}
    for lvl in range(1, m + 1):
        if lvl in fx:
            out[lvl] = fx[lvl]
        elif lvl in fy:
            out[lvl] = fy[lvl]
        else:
            out[lvl] = Fraction(0)
    return out


def integer_offset(frac_vec, base_vec, m):
    """Difference of two per-level offset vectors, asserted integral."""
    out = {}
    for lvl in range(1, m + 1):
        d = frac_vec[lvl] - base_vec[lvl]
        if d.denominator != 1:
            raise AssertionError("non-integer member offset within one class")
        out[lvl] = int(d)
    return out
