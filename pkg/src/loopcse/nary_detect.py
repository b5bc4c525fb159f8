"""Redundancy detection on n-ary trees with expression reassociation.

Binary trees are flattened by aggressiveness level (0 = binary pipeline
only, 1 = merge chains respecting parentheses, 2 = dissolve same-operator
parentheses, 3 = additionally distribute loop-invariant scalar multipliers
over additive groups).  Candidate two-operand expressions of each n-ary
node join an operand-sharing conflict graph; every legal extraction set is
an independent set of that graph.  Selection is either exact (maximum
independent set on the class-augmented graph) or the dimension-first
heuristic, which restricts to candidates whose operand delta vanishes in
the innermost dimension and relaxes outward.

Scalar-multiplier distribution is applied lazily, once the undistributed
trees reach a fixpoint, and reverted if it fails to pay for itself in
static operations; eager distribution would dissolve the very sums whose
redundancies the earlier iterations are meant to find.
"""

from __future__ import annotations

from dataclasses import dataclass

from .binary_detect import TransformResult
from .extraction import Candidate, aux_leaf, build_aux, replace_candidate, viable_pair
from .identification import compute_eri
from .ir import (
    ADD,
    APPLY,
    ASSOCIATIVE,
    DIV,
    MUL,
    SUB,
    Binary,
    Leaf,
    Nary,
    copy_expr,
    count_ops,
    walk,
    written_names,
)


class BudgetExceeded(RuntimeError):
    """Exact selection requested on a graph larger than the node budget."""


# ---------------------------------------------------------------------------
# Tree flattening


def flatten(expr, level, subdiv=False):
    """Convert a binary tree into n-ary form for the given level.

    Level 0 returns the tree unchanged.  With `subdiv`, subtraction and
    division chains normalize into signed +/* groups so negated or
    reciprocal occurrences can match their plain counterparts.
    """
    if level == 0:
        return expr
    out = _flatten_rec(expr, level, subdiv)
    if level >= 3:
        out = distribute_scalars(out, level, subdiv)
    return out


def _flatten_rec(expr, level, subdiv):
    if isinstance(expr, Leaf):
        return expr
    if isinstance(expr, Binary):
        if expr.op == APPLY:
            expr.right = _flatten_rec(expr.right, level, subdiv)
            return expr
        if expr.op in ASSOCIATIVE:
            base_op = expr.op
            sign_ops = ()
        elif subdiv and expr.op in (SUB, DIV):
            base_op = ADD if expr.op == SUB else MUL
            sign_ops = (SUB, DIV)
        else:
            node = Binary(expr.op, _flatten_rec(expr.left, level, subdiv), _flatten_rec(expr.right, level, subdiv), expr.paren)
            return node
        children, signs = [], []
        _gather(expr, base_op, 1, children, signs, level, subdiv, top=True)
        node = Nary(base_op, children, signs)
        node.paren = expr.paren
        return node
    if isinstance(expr, Nary):
        expr.children = [_flatten_rec(c, level, subdiv) for c in expr.children]
        return expr
    raise TypeError(expr)


def _gather(node, op, sign, children, signs, level, subdiv, top=False):
    """Collect the operand chain of `op`, respecting parentheses per level."""
    mergeable = isinstance(node, Binary) and (
        node.op == op
        or (subdiv and node.op in (SUB, DIV) and (ADD if node.op == SUB else MUL) == op)
    )
    if mergeable and (top or not node.paren or level >= 2):
        right_sign = sign
        if node.op in (SUB, DIV):
            right_sign = -sign
        _gather(node.left, op, sign, children, signs, level, subdiv)
        _gather(node.right, op, right_sign, children, signs, level, subdiv)
        return
    flat = _flatten_rec(node, level, subdiv)
    if isinstance(flat, Nary) and flat.op == op and (not flat.paren or level >= 2):
        for c, s in zip(flat.children, flat.signs):
            children.append(c)
            signs.append(s * sign)
        return
    children.append(flat)
    signs.append(sign)


def _is_invariant_scalar(node):
    return isinstance(node, Leaf) and (node.ref.literal is not None or node.ref.is_scalar)


def distribute_scalars(expr, level=3, subdiv=False):
    """Apply the distributive law for scalar (loop-invariant) multipliers.

    Only a lone scalar or constant times an additive group is rewritten;
    distributing array factors would destroy existing redundancies and
    inflate the operation count.
    """
    out, _ = _distribute(expr)
    return out


def _distribute(expr):
    changed = [False]

    def rec(node):
        if isinstance(node, Leaf):
            return node
        if isinstance(node, Binary):
            node.left = rec(node.left)
            node.right = rec(node.right)
            return node
        node.children = [rec(c) for c in node.children]
        if node.op == MUL and len(node.children) == 2 and 1 == node.signs[0] == node.signs[1]:
            for si, gi in ((0, 1), (1, 0)):
                s, g = node.children[si], node.children[gi]
                if _is_invariant_scalar(s) and isinstance(g, Nary) and g.op == ADD:
                    terms = []
                    for c in g.children:
                        terms.append(Nary(MUL, [copy_expr(s), c]))
                    out = Nary(ADD, terms, list(g.signs))
                    changed[0] = True
                    return out
        return node

    out = rec(expr)
    if changed[0]:
        out = _remerge(out)
    return out, changed[0]


def _remerge(expr):
    """Merge unparenthesized same-op n-ary children into their parents."""
    if isinstance(expr, Leaf):
        return expr
    if isinstance(expr, Binary):
        expr.left = _remerge(expr.left)
        expr.right = _remerge(expr.right)
        return expr
    kids, signs = [], []
    for c, s in zip(expr.children, expr.signs):
        c = _remerge(c)
        if isinstance(c, Nary) and c.op == expr.op and not c.paren:
            kids.extend(c.children)
            if expr.op == ADD:
                signs.extend(x * s for x in c.signs)
            else:
                signs.extend(x * s for x in c.signs)
        else:
            kids.append(c)
            signs.append(s)
    expr.children, expr.signs = kids, signs
    return expr


def normalize_sub_div(expr, enabled=True):
    """Standalone subtraction/division normalization entry point."""
    return flatten(expr, 1, subdiv=enabled) if enabled else expr


# ---------------------------------------------------------------------------
# Conflict graph


@dataclass
class CNode:
    cand: Candidate
    index: int
    alive: bool = True


class ConflictGraph:
    """Candidates plus operand-occurrence conflicts.

    Conflicts are per leaf occurrence: two candidates clash only when they
    share one of the same leaf objects, so equal references in different
    parents never conflict.  Removed pairs are never regenerated.
    """

    def __init__(self):
        self.nodes = []
        self.by_leaf = {}
        self.pair_seen = set()
        self._keep = []  # strong refs so ids stay unique

    def seen(self, x, y):
        return (min(id(x), id(y)), max(id(x), id(y))) in self.pair_seen

    def add(self, cand):
        key = (min(id(cand.x), id(cand.y)), max(id(cand.x), id(cand.y)))
        self.pair_seen.add(key)
        self._keep.append((cand.x, cand.y))
        node = CNode(cand, len(self.nodes))
        self.nodes.append(node)
        for lid in cand.leaf_ids():
            self.by_leaf.setdefault(lid, []).append(node)
        return node

    def alive_nodes(self):
        return [n for n in self.nodes if n.alive]

    def neighbors(self, node):
        out = []
        for lid in node.cand.leaf_ids():
            for other in self.by_leaf.get(lid, []):
                if other is not node and other.alive:
                    out.append(other)
        return out

    def kill_leaves(self, leaf_objs):
        for leaf in leaf_objs:
            for node in self.by_leaf.get(id(leaf), []):
                node.alive = False

    def clear(self):
        self.nodes = []
        self.by_leaf = {}
        self.pair_seen = set()


def build_conflict_graph(trees, written, m):
    """Fresh conflict graph over whole flattened trees (test/inspection)."""
    g = ConflictGraph()
    evals = [0]
    _generate(trees, written, g, None, evals)
    return g


def _generate(trees, written, g, only_new, evals):
    """Add candidate pairs touching `only_new` leaves (or all when None)."""
    for si, root in enumerate(trees):
        order = 0
        for node in walk(root):
            order += 1
            if isinstance(node, Binary) and node.op != APPLY:
                pairs = []
                if isinstance(node.left, Leaf) and isinstance(node.right, Leaf):
                    pairs.append((node.left, node.right, 1, 1, node, None))
            elif isinstance(node, Binary) and node.op == APPLY:
                pairs = []
                if isinstance(node.right, Leaf):
                    pairs.append((node.left, node.right, 1, 1, node, None))
            elif isinstance(node, Nary):
                idx = [k for k, c in enumerate(node.children) if isinstance(c, Leaf)]
                pairs = []
                for a in range(len(idx)):
                    for b in range(a + 1, len(idx)):
                        ia, ib = idx[a], idx[b]
                        pairs.append(
                            (node.children[ia], node.children[ib], node.signs[ia], node.signs[ib], None, node)
                        )
            else:
                continue
            for x, y, sx, sy, bin_node, parent in pairs:
                if only_new is not None and id(x) not in only_new and id(y) not in only_new:
                    continue
                if g.seen(x, y):
                    continue
                if not viable_pair(x, y, written):
                    continue
                op = node.op
                key, gsign = compute_eri(op, x.ref, y.ref, written, sx, sy)
                evals[0] += 1
                g.add(Candidate(si, order, parent, bin_node, op, x, y, sx, sy, key, gsign))


# ---------------------------------------------------------------------------
# Selection


def _delta_passes(cand, d):
    for lvl, v in cand.eri.delta:
        if lvl == d:
            return v == 0
    return True  # absent delta (infinity) does not constrain the dimension


def _class_groups(nodes):
    groups = {}
    for n in nodes:
        groups.setdefault(n.cand.eri, []).append(n)
    ordered = sorted(groups.items(), key=lambda kv: (-len(kv[1]), kv[0].sort_token()))
    return ordered


def select_extraction_dimension_first(graph, m, nodes=None):
    """Try-until selection preferring reuse along the innermost dimension.

    At dimension d only candidates with zero (or undefined) operand delta
    at d are considered.  Within each key class, members are partitioned by
    their integer position (relative to the class's first occurrence) in
    every dimension but d; each such reuse subgroup of two or more
    compatible members is selected as one extraction unit, so the resulting
    arrays are reused along d only and stay compressible.  Failing every
    class at d, the next-outer dimension is tried.
    """
    alive = graph.alive_nodes() if nodes is None else nodes
    for d in range(m, 0, -1):
        sub = [n for n in alive if _delta_passes(n.cand, d)]
        units = _greedy_parts(sub, d, m)
        if units:
            return units
    return []


def _greedy_parts(sub, d, m):
    from .identification import integer_offset

    units = []
    used = set()
    for key, members in _class_groups(sub):
        members = sorted(members, key=lambda n: (n.cand.stmt, n.cand.order, n.index))
        base = members[0].cand.ref_offsets(m)
        parts = {}
        for n in members:
            pos = integer_offset(n.cand.ref_offsets(m), base, m)
            pkey = tuple((lvl, pos[lvl]) for lvl in sorted(pos) if lvl != d)
            parts.setdefault(pkey, []).append(n)
        part_list = sorted(
            parts.items(),
            key=lambda kv: (-len(kv[1]), sum(abs(p) for _, p in kv[0]), kv[0]),
        )
        for pkey, group in part_list:
            chosen = []
            for n in group:
                if used & set(n.cand.leaf_ids()):
                    continue
                if any(set(n.cand.leaf_ids()) & set(c.cand.leaf_ids()) for c in chosen):
                    continue
                chosen.append(n)
            if len(chosen) >= 2:
                units.append(chosen)
                for n in chosen:
                    used.update(n.cand.leaf_ids())
    return units


def select_extraction_exact(graph, budget, m=None, nodes=None):
    """Objective-optimal selection via MIS on the class-augmented graph.

    One extra vertex per key class, adjacent to all its members, makes the
    plain maximum independent set realize argmax |S| - |classes(S)|.
    Size-one classes in the winner carry no profit and are dropped.
    """
    alive = graph.alive_nodes() if nodes is None else nodes
    groups = dict(_class_groups(alive))
    keys = list(groups)
    n_aux = len(alive) + len(keys)
    if n_aux > budget:
        raise BudgetExceeded(f"{n_aux} auxiliary-graph nodes exceed budget {budget}")

    index = {id(n): k for k, n in enumerate(alive)}
    adj = [set() for _ in range(n_aux)]
    for k, n in enumerate(alive):
        for nb in graph.neighbors(n):
            if id(nb) in index:
                adj[k].add(index[id(nb)])
    for ck, key in enumerate(keys):
        v = len(alive) + ck
        for n in groups[key]:
            adj[v].add(index[id(n)])
            adj[index[id(n)]].add(v)

    best = [-1, None]

    def bb(candidates, chosen):
        if len(chosen) + len(candidates) <= best[0]:
            return
        if not candidates:
            if len(chosen) > best[0]:
                best[0] = len(chosen)
                best[1] = list(chosen)
            return
        v = candidates[0]
        rest = candidates[1:]
        # include v
        chosen.append(v)
        bb([u for u in rest if u not in adj[v]], chosen)
        chosen.pop()
        # exclude v
        bb(rest, chosen)

    bb(list(range(n_aux)), [])
    chosen = [alive[v] for v in best[1] if v < len(alive)]
    out = {}
    for n in sorted(chosen, key=lambda n: (n.cand.stmt, n.cand.order, n.index)):
        out.setdefault(n.cand.eri, []).append(n)
    units = [g for g in out.values() if len(g) >= 2]
    units.sort(key=lambda g: (g[0].cand.stmt, g[0].cand.order))
    return units


# ---------------------------------------------------------------------------
# Algorithm: detection on n-ary trees


def detect_nary(nest, level, strategy="auto", budget=40, subdiv=False):
    """Run flattening plus iterative conflict-graph extraction on a nest."""
    if level < 1:
        from .binary_detect import detect_binary

        return detect_binary(nest)

    m = nest.depth
    written = written_names(nest.statements)
    for st in nest.statements:
        st.expr = flatten(st.expr, min(level, 2), subdiv)

    g = ConflictGraph()
    known = {}
    aux_list = []
    evals = [0]
    productive = 0
    iteration = 0
    distributed = False
    snapshot = None

    while True:
        new_ids = set()
        for st in nest.statements:
            for node in walk(st.expr):
                if isinstance(node, Leaf) and id(node) not in known:
                    known[id(node)] = node
                    new_ids.add(id(node))
        if iteration > 0 and not new_ids:
            break

        _generate([st.expr for st in nest.statements], written, g, new_ids if iteration > 0 else None, evals)

        units = _select(g, strategy, budget, m)
        if units:
            _extract_units(units, aux_list, iteration, m, g, nest)
            _cleanup(nest)
            productive += 1
            iteration += 1
            continue

        if level >= 3 and not distributed:
            distributed = True
            snapshot = _snapshot(nest, aux_list)
            changed = False
            for st in nest.statements:
                st.expr, ch = _distribute(st.expr)
                changed = changed or ch
            if changed:
                # distribution rebuilt subtrees; stale candidates are dropped
                g.clear()
                known = {}
                iteration += 1
                continue
        break

    if distributed and snapshot is not None:
        if _total_ops(nest, aux_list) > snapshot["ops"]:
            _restore(nest, aux_list, snapshot)

    result = TransformResult(nest, aux_list, max(1, productive), evals[0])
    result.aux_by_name = {a.id: a for a in aux_list}
    return result


def _select(g, strategy, budget, m):
    alive = g.alive_nodes()
    if not alive:
        return []
    if strategy == "heuristic":
        return select_extraction_dimension_first(g, m, alive)
    if strategy == "exact":
        return select_extraction_exact(g, budget, m, alive)
    n_aux = len(alive) + len({n.cand.eri for n in alive})
    if n_aux <= budget:
        return select_extraction_exact(g, budget, m, alive)
    return select_extraction_dimension_first(g, m, alive)


def _extract_units(units, aux_list, iteration, m, g, nest):
    units = sorted(units, key=lambda u: (u[0].cand.stmt, u[0].cand.order))
    for ordinal, unit in enumerate(units):
        members = [n.cand for n in unit]
        target = build_aux(f"aa_{iteration}_{ordinal}", iteration, members, m)
        aux_list.append(target)
        consumed = []
        for cand, off in zip(members, target.member_offsets):
            leaf = aux_leaf(target, off, m)
            replace_candidate(cand, leaf, _root_setter(nest, cand.stmt))
            consumed.extend((cand.x, cand.y))
        g.kill_leaves(consumed)


def _root_setter(nest, stmt_idx):
    def setter(old, new):
        st = nest.statements[stmt_idx]
        if st.expr is old:
            st.expr = new
            return
        if not _replace_in(st.expr, old, new):
            raise AssertionError("candidate node not found in statement")

    return setter


def _replace_in(tree, old, new):
    if isinstance(tree, Binary):
        for attr in ("left", "right"):
            child = getattr(tree, attr)
            if child is old:
                setattr(tree, attr, new)
                return True
            if _replace_in(child, old, new):
                return True
        return False
    if isinstance(tree, Nary):
        for k, child in enumerate(tree.children):
            if child is old:
                tree.children[k] = new
                return True
            if _replace_in(child, old, new):
                return True
    return False


def _cleanup(nest):
    """Collapse single-child n-ary nodes left over after pair replacement."""

    def rec(node):
        if isinstance(node, Binary):
            node.left = rec(node.left)
            node.right = rec(node.right)
            return node
        if isinstance(node, Nary):
            node.children = [rec(c) for c in node.children]
            if len(node.children) == 1 and node.signs[0] == 1:
                return node.children[0]
            return node
        return node

    for st in nest.statements:
        st.expr = rec(st.expr)


def _total_ops(nest, aux_list):
    return sum(count_ops(st.expr) for st in nest.statements) + sum(count_ops(a.rep) for a in aux_list)


def _snapshot(nest, aux_list):
    return {
        "ops": _total_ops(nest, aux_list),
        "trees": [copy_expr(st.expr) for st in nest.statements],
        "naux": len(aux_list),
        "members": [(len(a.member_offsets)) for a in aux_list],
    }


def _restore(nest, aux_list, snap):
    for st, tree in zip(nest.statements, snap["trees"]):
        st.expr = tree
    for a, k in zip(aux_list, snap["members"]):
        del a.member_offsets[k:]
        del a.member_signs[k:]
    del aux_list[snap["naux"]:]
