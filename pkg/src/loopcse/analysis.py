"""Static operation counting and the redundancy profit model.

Static counts follow the benchmark-table convention: every statement of the
transformed program (precompute loops included) is counted once per point,
as if all auxiliary ranges matched the original loop.  The profit model
compares the original cost of the replaced main-loop positions, obtained by
recursively expanding representatives, against the precompute cost summed
over the auxiliary ranges.
"""

from __future__ import annotations

from dataclasses import dataclass

from .ir import ADD, APPLY, DIV, MUL, SUB, Binary, Leaf, Loop, Nary, walk

_TRIG = ("sin", "cos")


def count_expr_ops(expr, counts):
    for node in walk(expr):
        if isinstance(node, Binary):
            if node.op == APPLY:
                name = node.left.ref.name
                counts["calls"][name] = counts["calls"].get(name, 0) + 1
                if name in _TRIG:
                    counts["sincos"] += 1
            else:
                counts[_OPNAME[node.op]] += 1
        elif isinstance(node, Nary):
            k = len(node.children)
            neg = sum(1 for s in node.signs if s < 0)
            if node.op == ADD:
                counts["sub"] += neg
                counts["add"] += k - 1 - neg
            else:
                counts["div"] += neg
                counts["mul"] += k - 1 - neg
    return counts


_OPNAME = {ADD: "add", SUB: "sub", MUL: "mul", DIV: "div"}


def empty_counts():
    return {"add": 0, "sub": 0, "mul": 0, "div": 0, "sincos": 0, "calls": {}}


def count_static_ops(program):
    """Per-point operator counts in the benchmark-table convention.

    Every statement running at full nest depth counts once, as if all
    auxiliary ranges matched the original loop; shallower items (prefetch
    rows, index bookkeeping) are startup cost, not steady-state work.
    """

    def depth_of(items, d):
        best = d
        for it in items:
            if isinstance(it, Loop):
                best = max(best, depth_of(it.body, d + 1))
        return best

    m = depth_of(program.items, 0)
    counts = empty_counts()

    def scan(items, d):
        for it in items:
            if isinstance(it, Loop):
                scan(it.body, d + 1)
            elif d == m:
                count_expr_ops(it.expr, counts)

    scan(program.items, 0)
    return counts


def count_nest_ops(statements):
    counts = empty_counts()
    for st in statements:
        count_expr_ops(st.expr, counts)
    return counts


# ---------------------------------------------------------------------------
# Profit model


def expand_ops(aux, table, _cache=None):
    """Operation count of the fully expanded representative.

    Auxiliary operands are replaced by their own expanded representatives,
    transitively; a call counts as one operation.
    """
    if _cache is None:
        _cache = {}
    if aux.id in _cache:
        return _cache[aux.id]
    total = 0
    for node in walk(aux.rep):
        if isinstance(node, Binary):
            total += 1
        elif isinstance(node, Nary):
            total += len(node.children) - 1
        elif isinstance(node, Leaf) and node.ref.name in table:
            total += expand_ops(table[node.ref.name], table, _cache)
    _cache[aux.id] = total
    return total


@dataclass
class ProfitReport:
    per_aux: list
    ori: int
    aft: int

    @property
    def profit(self):
        return self.ori - self.aft


def profit(result, ranges):
    """Evaluate the ori/aft reduction formulas for concrete loop extents.

    `ranges` binds every symbolic size; only the difference between lower
    and upper bounds enters, per the model.  ori multiplies the original
    loop volume by the expanded cost of each auxiliary times its main-loop
    appearance count; aft sums each auxiliary's own precompute volume.
    """
    nest = result.nest
    table = result.aux_by_name
    cache = {}

    def extent(lo, hi):
        return hi.value(ranges) - lo.value(ranges) + 1

    main_volume = 1
    for _, lo, hi in nest.indices:
        main_volume *= extent(lo, hi)

    cnt = {a.id: 0 for a in result.aux}
    for st in nest.statements:
        for node in walk(st.expr):
            if isinstance(node, Leaf) and node.ref.name in cnt:
                cnt[node.ref.name] += 1

    per_aux = []
    ori = 0
    aft = 0
    for a in result.aux:
        ops = expand_ops(a, table, cache)
        ori += ops * cnt[a.id] * main_volume
        if a.range_ is not None:
            vol = 1
            for lo, hi in a.range_:
                vol *= extent(lo, hi)
        else:
            vol = main_volume
        aft += vol
        per_aux.append({"id": a.id, "cnt": cnt[a.id], "ops": ops, "range": vol})
    return ProfitReport(per_aux, ori, aft)
