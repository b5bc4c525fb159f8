"""Hierarchical redundancy detection on binary expression trees.

The do-while scheme: key the leaves, key every binary node whose children
are both leaves, group equal expression keys across the whole body, extract
each group of two or more occurrences into an auxiliary array, splice the
loads in, and repeat on the newly created leaves.  Each node is keyed at
most once, so total key evaluations stay linear in tree size.  The residual
program evaluates in exactly the original order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .extraction import Candidate, aux_leaf, build_aux, replace_candidate, viable_pair
from .identification import compute_eri
from .ir import Binary, Leaf, LoopNest, written_names


@dataclass
class TransformResult:
    nest: LoopNest
    aux: list
    iterations: int
    eri_evaluations: int
    aux_by_name: dict = field(default_factory=dict)

    @property
    def aux_names(self):
        return [a.id for a in self.aux]


def detect_binary(nest):
    """Run the bottom-up detection loop over a (preprocessed) nest."""
    m = nest.depth
    written = written_names(nest.statements)
    eri_cache = {}  # id -> (node, key, gsign); holds nodes so ids stay unique
    eri_evals = 0
    known_leaves = {}  # id -> leaf, same reason
    aux_list = []
    productive = 0
    iteration = 0

    while True:
        new_leaf_seen = False
        for st in nest.statements:
            for node in _walk(st.expr):
                if isinstance(node, Leaf) and id(node) not in known_leaves:
                    known_leaves[id(node)] = node
                    new_leaf_seen = True
        if iteration > 0 and not new_leaf_seen:
            break

        candidates = []
        order = 0
        for si, st in enumerate(nest.statements):
            for node in _walk(st.expr):
                order += 1
                if not (
                    isinstance(node, Binary)
                    and isinstance(node.left, Leaf)
                    and isinstance(node.right, Leaf)
                ):
                    continue
                if not viable_pair(node.left, node.right, written):
                    continue
                if id(node) not in eri_cache:
                    eri_cache[id(node)] = (node, *compute_eri(node.op, node.left.ref, node.right.ref, written))
                    eri_evals += 1
                _, key, gsign = eri_cache[id(node)]
                candidates.append(
                    Candidate(si, order, None, node, node.op, node.left, node.right, eri=key, gsign=gsign)
                )

        groups = {}
        for c in candidates:
            groups.setdefault(c.eri, []).append(c)
        classes = [g for g in groups.values() if len(g) >= 2]
        classes.sort(key=lambda g: (g[0].stmt, g[0].order))

        if classes:
            for ordinal, members in enumerate(classes):
                aux = build_aux(f"aa_{iteration}_{ordinal}", iteration, members, m)
                aux_list.append(aux)
                for c, off in zip(members, aux.member_offsets):
                    leaf = aux_leaf(aux, off, m)
                    replace_candidate(c, leaf, _root_setter(nest, c.stmt))
            productive += 1
        elif iteration > 0:
            break
        iteration += 1

    result = TransformResult(nest, aux_list, max(1, productive), eri_evals)
    result.aux_by_name = {a.id: a for a in aux_list}
    return result


def _walk(expr):
    yield expr
    if isinstance(expr, Binary):
        yield from _walk(expr.left)
        yield from _walk(expr.right)


def _root_setter(nest, stmt_idx):
    def setter(old, new):
        st = nest.statements[stmt_idx]
        if st.expr is old:
            st.expr = new
        else:
            _replace_in(st.expr, old, new)

    return setter


def _replace_in(tree, old, new):
    if isinstance(tree, Binary):
        if tree.left is old:
            tree.left = new
            return True
        if tree.right is old:
            tree.right = new
            return True
        return _replace_in(tree.left, old, new) or _replace_in(tree.right, old, new)
    return False


def coordinate_offsets(members, m):
    """Member offset vectors relative to the first member's zero form."""
    aux = build_aux("tmp", 0, members, m)
    return aux.member_offsets


def expand_aux_leaves(expr, aux_by_name, m):
    """Textually expand auxiliary loads through their representatives.

    Recursing through nested auxiliaries reconstructs the pre-detection
    tree; used by the order-preservation check and by operation counting.
    """
    from .ir import Nary, copy_expr, translate_expr

    def rec(node):
        if isinstance(node, Leaf):
            a = aux_by_name.get(node.ref.name)
            if a is None:
                return copy_expr(node)
            offs = {s.level: s.offset for s in node.ref.subs if s.coef != 0}
            return rec_tree(translate_expr(a.rep, offs))
        if isinstance(node, Binary):
            return Binary(node.op, rec(node.left), rec(node.right), node.paren)
        if isinstance(node, Nary):
            out = Nary(node.op, [rec(c) for c in node.children], list(node.signs))
            out.paren = node.paren
            return out
        raise TypeError(node)

    def rec_tree(t):
        return rec(t)

    return rec(expr)
