"""Code generation for auxiliary arrays: dependency graph, loop ranges,
range circles, straightforward precompute loops, and array contraction.

Contraction applies, in order: single-use inlining, scalar replacement for
arrays whose every use stays inside their own circle, then a per-circle
descent over the loop insert positions.  A dimension whose range matches
the enclosing loop is eliminated; on a mismatch the circle splits into a
prefetch part and a pipelined body whose buffer keeps only the reuse extent
in that dimension, rotated through index variables.  The innermost
dimension is always retained to keep the stores vectorizable.  Precompute
loops landing on the same insert position with identical headers are fused.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import (
    ArrayDecl,
    ArrayRef,
    Assign,
    Binary,
    Bound,
    Dim,
    Leaf,
    Loop,
    Nary,
    Sub,
    const_ref,
    copy_expr,
    translate_expr,
    walk,
)


def _bound_min(a, b):
    if a.base != b.base or a.coef != b.coef:
        raise ValueError(f"incomparable bounds {a.text()} / {b.text()}")
    return a if a.k <= b.k else b


def _bound_max(a, b):
    if a.base != b.base or a.coef != b.coef:
        raise ValueError(f"incomparable bounds {a.text()} / {b.text()}")
    return a if a.k >= b.k else b


@dataclass
class DepNode:
    key: str
    aux: object = None  # AuxArray for auxiliary nodes, None for statements
    range_: list = None  # per level 1..m: (lo, hi) Bounds


class DependencyGraph:
    """Statement targets on top, auxiliaries below; an edge parent->child
    with its use offsets means the child is read to compute the parent."""

    def __init__(self, m):
        self.m = m
        self.nodes = {}
        self.edges = []  # (parent_key, child_key, offsets dict)

    def add_node(self, node):
        self.nodes[node.key] = node

    def add_edge(self, parent, child, offsets):
        self.edges.append((parent, child, offsets))

    def in_edges(self, key):
        return [(p, o) for p, c, o in self.edges if c == key]

    def out_edges(self, key):
        return [(c, o) for p, c, o in self.edges if p == key]

    def topo_aux(self):
        """Auxiliary keys ordered so every parent precedes its children."""
        pending = {k for k, n in self.nodes.items() if n.aux is not None}
        done = {k for k, n in self.nodes.items() if n.aux is None}
        order = []
        while pending:
            ready = sorted(
                k for k in pending if all(p in done for p, _ in self.in_edges(k))
            )
            if not ready:
                raise AssertionError("cycle in auxiliary dependency graph")
            for k in ready:
                order.append(k)
                done.add(k)
                pending.discard(k)
        return order


def _aux_uses(result):
    """Every auxiliary load with its owner ('stmt:<i>' or parent aux id)."""
    table = result.aux_by_name
    uses = []
    for si, st in enumerate(result.nest.statements):
        for node in walk(st.expr):
            if isinstance(node, Leaf) and node.ref.name in table:
                uses.append((f"stmt:{si}", node))
    for a in result.aux:
        for node in walk(a.rep):
            if isinstance(node, Leaf) and node.ref.name in table:
                uses.append((a.id, node))
    return uses


def _leaf_offsets(leaf, m):
    ref = leaf.ref if isinstance(leaf, Leaf) else leaf
    offs = {lvl: 0 for lvl in range(1, m + 1)}
    for s in ref.subs:
        if s.coef != 0 and isinstance(s.level, int):
            offs[s.level] = s.offset
    return offs


def build_dependency_graph(result, nest):
    m = nest.depth
    g = DependencyGraph(m)
    main_range = [(lo, hi) for _, lo, hi in nest.indices]
    for si in range(len(nest.statements)):
        g.add_node(DepNode(f"stmt:{si}", None, list(main_range)))
    for a in result.aux:
        g.add_node(DepNode(a.id, a, None))
    for owner, leaf in _aux_uses(result):
        g.add_edge(owner, leaf.ref.name, _leaf_offsets(leaf, m))
    g.topo_aux()  # asserts acyclicity
    return g


def propagate_ranges(g):
    """Each child's range per level is the hull of its parents' ranges
    shifted by the use offsets."""
    for key in g.topo_aux():
        rng = None
        for parent, offs in g.in_edges(key):
            prange = g.nodes[parent].range_
            shifted = [
                (prange[l - 1][0].shifted(offs[l]), prange[l - 1][1].shifted(offs[l]))
                for l in range(1, g.m + 1)
            ]
            if rng is None:
                rng = shifted
            else:
                rng = [
                    (_bound_min(a[0], b[0]), _bound_max(a[1], b[1]))
                    for a, b in zip(rng, shifted)
                ]
        if rng is None:
            raise AssertionError(f"auxiliary {key} is never used")
        g.nodes[key].range_ = rng
        g.nodes[key].aux.range_ = rng
    return g


@dataclass
class RangeCircle:
    range_: list
    members: list = field(default_factory=list)  # node keys
    is_main: bool = False


def form_circles(g, creation_index):
    """Group nodes sharing a propagated range; order circles so that every
    circle appears after the circles it depends on.  The circle holding the
    original statements comes last (it is the main nest)."""
    by_key = {}
    for key, node in g.nodes.items():
        rk = tuple(node.range_)
        by_key.setdefault(rk, RangeCircle(node.range_)).members.append(key)
    circles = list(by_key.values())
    member_of = {}
    for c in circles:
        c.members.sort(key=lambda k: creation_index.get(k, -1))
        c.is_main = any(k.startswith("stmt:") for k in c.members)
        for k in c.members:
            member_of[k] = c

    order = []
    placed = set()
    remaining = [c for c in circles if not c.is_main]
    while remaining:
        ready = []
        for c in remaining:
            ok = True
            for k in c.members:
                for child, _ in g.out_edges(k):
                    cc = member_of[child]
                    if cc is not c and not cc.is_main and id(cc) not in placed:
                        ok = False
            if ok:
                ready.append(c)
        if not ready:
            raise AssertionError("cycle between range circles")
        ready.sort(key=lambda c: min(creation_index.get(k, 0) for k in c.members))
        for c in ready:
            order.append(c)
            placed.add(id(c))
            remaining.remove(c)
    main = next((c for c in circles if c.is_main), None)
    return order + ([main] if main else [])


# ---------------------------------------------------------------------------
# Straightforward code generation


def _full_levels(m):
    return list(range(m, 0, -1))


def _aux_decl(aux, levels, slot=None):
    dims = []
    for l in levels:
        if slot is not None and l == slot[0]:
            dims.append(Dim(Bound.const(1), Bound.const(slot[1])))
        else:
            lo, hi = aux.range_[l - 1]
            dims.append(Dim(lo, hi))
    return ArrayDecl(aux.id, dims, role="aux")


def generate_straightforward(nest, result, g=None):
    """One precompute nest per non-main range circle, in topological order,
    followed by the original nest with the transformed bodies."""
    if g is None:
        g = propagate_ranges(build_dependency_graph(result, nest))
    prog = nest.program.copy()
    m = nest.depth
    creation = {a.id: k for k, a in enumerate(result.aux)}
    circles = form_circles(g, creation)
    var_of = {l + 1: v for l, (v, _, _) in enumerate(nest.indices)}
    items = []
    for c in circles:
        aux_keys = [k for k in c.members if not k.startswith("stmt:")]
        body = []
        for k in aux_keys:
            a = result.aux_by_name[k]
            target = ArrayRef(k, tuple(Sub(1, l, 0) for l in _full_levels(m)))
            body.append(Assign(target, copy_expr(a.rep)))
            prog.arrays[k] = _aux_decl(a, _full_levels(m))
            prog.aux_names.add(k)
        if c.is_main:
            body += [Assign(st.target, copy_expr(st.expr)) for st in nest.statements]
            loop = body
            for l in range(m, 0, -1):
                var, lo, hi = nest.indices[l - 1]
                loop = [Loop(var, lo, hi, loop, level=l)]
            items.extend(loop)
        elif body:
            loop = body
            for l in range(m, 0, -1):
                lo, hi = c.range_[l - 1]
                loop = [Loop(var_of[l], lo, hi, loop, level=l)]
            items.extend(loop)
    prog.items = items
    return prog


# ---------------------------------------------------------------------------
# Array contraction


@dataclass
class AuxShape:
    """How a contracted auxiliary is stored and addressed."""

    kind: str  # "array" or "scalar"
    levels: list = None  # kept dims, innermost first (array kind)
    split_level: int = None
    slot_vars: list = None
    min_off: int = 0
    extent: int = 0
    scalar_name: str = None


def _inline_single_use(result, m):
    """Replace auxiliaries with exactly one load by their representative."""
    changed = True
    while changed:
        changed = False
        uses = _aux_uses(result)
        counts = {a.id: 0 for a in result.aux}
        for _, leaf in uses:
            counts[leaf.ref.name] += 1
        for a in result.aux:
            if counts[a.id] != 1:
                continue
            ((owner, leaf),) = [u for u in uses if u[1].ref.name == a.id]
            offs = _leaf_offsets(leaf, m)
            body = translate_expr(a.rep, offs)
            if not isinstance(body, Leaf):
                body.paren = True
            _splice(result, owner, leaf, body)
            result.aux = [x for x in result.aux if x.id != a.id]
            result.aux_by_name = {x.id: x for x in result.aux}
            changed = True
            break
    return result


def _splice(result, owner, old_leaf, new_expr):
    if owner.startswith("stmt:"):
        st = result.nest.statements[int(owner.split(":")[1])]
        if st.expr is old_leaf:
            st.expr = new_expr
            return
        _replace_node(st.expr, old_leaf, new_expr)
    else:
        a = result.aux_by_name[owner]
        if a.rep is old_leaf:
            a.rep = new_expr
            return
        _replace_node(a.rep, old_leaf, new_expr)


def _replace_node(tree, old, new):
    if isinstance(tree, Binary):
        for attr in ("left", "right"):
            c = getattr(tree, attr)
            if c is old:
                setattr(tree, attr, new)
                return True
            if _replace_node(c, old, new):
                return True
        return False
    if isinstance(tree, Nary):
        for k, c in enumerate(tree.children):
            if c is old:
                tree.children[k] = new
                return True
            if _replace_node(c, old, new):
                return True
    return False


@dataclass
class _Placement:
    circle: object
    pos: int
    kind: str  # "dump" or "split"
    split_level: int = None
    min_off: int = 0
    max_off: int = 0
    extent: int = 0
    slot_vars: list = None


def contract(nest, result):
    """Full contraction pipeline; returns the transformed Program."""
    m = nest.depth
    _inline_single_use(result, m)
    g = propagate_ranges(build_dependency_graph(result, nest))
    creation = {a.id: k for k, a in enumerate(result.aux)}
    circles = form_circles(g, creation)
    member_circle = {k: c for c in circles for k in c.members}
    var_of = {l + 1: v for l, (v, _, _) in enumerate(nest.indices)}
    main_lo = {l: nest.indices[l - 1][1] for l in range(1, m + 1)}
    main_hi = {l: nest.indices[l - 1][2] for l in range(1, m + 1)}

    shapes = {}
    all_uses = _aux_uses(result)
    for a in result.aux:
        uses = [(o, leaf) for o, leaf in all_uses if leaf.ref.name == a.id]
        own = member_circle[a.id]
        if uses and all(member_circle[o] is own for o, _ in uses):
            for o, leaf in uses:
                if any(v != 0 for v in _leaf_offsets(leaf, m).values()):
                    raise AssertionError("same-circle use with nonzero offset")
            name = a.id + "_" + "_".join(var_of[l] for l in _full_levels(m))
            shapes[a.id] = AuxShape("scalar", scalar_name=name)

    placements = []
    split_count = {}
    for c in circles:
        if c.is_main:
            continue
        arrays = [k for k in c.members if k not in shapes]
        if not arrays and not any(k in shapes for k in c.members):
            continue
        eliminated = []
        pos = 0
        placement = None
        while placement is None:
            l = pos + 1
            if l == m:
                placement = _Placement(c, pos, "dump")
                break
            lo, hi = c.range_[l - 1]
            if lo == main_lo[l] and hi == main_hi[l]:
                eliminated.append(l)
                pos += 1
                continue
            splittable = (
                lo.base == main_lo[l].base
                and hi.base == main_hi[l].base
                and hi.coef == main_hi[l].coef
                and main_lo[l].base is None
            )
            if not splittable:
                placement = _Placement(c, pos, "dump")
                break
            mn = lo.k - main_lo[l].k
            mx = hi.k - main_hi[l].k
            idx = split_count.get(l, 0)
            split_count[l] = idx + 1
            suffix = "" if idx == 0 else f"_{idx}"
            slots = [f"{var_of[l]}{k}{suffix}" for k in range(mx - mn + 1)]
            placement = _Placement(c, pos, "split", l, mn, mx, mx - mn + 1, slots)
        placements.append(placement)
        kept = [l for l in _full_levels(m) if l not in eliminated]
        for k in arrays:
            if placement.kind == "split":
                shapes[k] = AuxShape(
                    "array",
                    levels=kept,
                    split_level=placement.split_level,
                    slot_vars=placement.slot_vars,
                    min_off=placement.min_off,
                    extent=placement.extent,
                )
            else:
                shapes[k] = AuxShape("array", levels=kept)

    for a in result.aux:  # main-circle arrays that could not be scalarized
        shapes.setdefault(a.id, AuxShape("array", levels=_full_levels(m)))

    return _assemble(nest, result, circles, shapes, placements, var_of, main_lo, creation)


def _rewrite_reads(expr, shapes, m, main_lo, pin=None):
    """Rewrite auxiliary loads for contracted shapes.

    `pin` maps a split level to a constant row during prefetch emission;
    otherwise split-level subscripts address the rotating slot variables.
    """
    expr = copy_expr(expr)

    def pin_ref(ref):
        subs = []
        for s in ref.subs:
            if pin and isinstance(s.level, int) and s.level in pin and s.coef != 0:
                subs.append(Sub(0, 0, s.coef * pin[s.level] + s.offset))
            else:
                subs.append(s)
        return ArrayRef(ref.name, tuple(subs), ref.literal)

    def rec(node):
        if isinstance(node, Leaf):
            shape = shapes.get(node.ref.name)
            if shape is None:
                node.ref = pin_ref(node.ref)
                return node
            if shape.kind == "scalar":
                return Leaf(ArrayRef(shape.scalar_name))
            offs = _leaf_offsets(node.ref, m)
            subs = []
            for l in shape.levels:
                if shape.split_level == l:
                    if pin and l in pin:
                        row = pin[l] + offs[l]
                        slot = row - (main_lo[l].k + shape.min_off)
                    else:
                        slot = offs[l] - shape.min_off
                    if not 0 <= slot < shape.extent:
                        raise AssertionError(f"{node.ref.name}: use outside pipeline window")
                    subs.append(Sub(1, shape.slot_vars[slot], 0))
                elif pin and l in pin:
                    subs.append(Sub(0, 0, pin[l] + offs[l]))
                else:
                    subs.append(Sub(1, l, offs[l]))
            return Leaf(ArrayRef(node.ref.name, tuple(subs)))
        if isinstance(node, Binary):
            node.left = rec(node.left)
            node.right = rec(node.right)
            return node
        if isinstance(node, Nary):
            node.children = [rec(c) for c in node.children]
            return node
        raise TypeError(node)

    return rec(expr)


def _circle_assigns(circle, result, shapes, m, creation):
    """Ordered (target, rep) pairs for one circle's stores and scalars."""
    out = []
    for k in sorted(
        (k for k in circle.members if not k.startswith("stmt:")),
        key=lambda k: creation[k],
    ):
        a = result.aux_by_name[k]
        shape = shapes[k]
        if shape.kind == "scalar":
            out.append((Assign(ArrayRef(shape.scalar_name), a.rep)))
            continue
        subs = []
        for l in shape.levels:
            if shape.split_level == l:
                subs.append(Sub(1, shape.slot_vars[shape.extent - 1], 0))
            else:
                subs.append(Sub(1, l, 0))
        out.append(Assign(ArrayRef(k, tuple(subs)), a.rep))
    return out


def _assemble(nest, result, circles, shapes, placements, var_of, main_lo, creation):
    m = nest.depth
    prog = nest.program.copy()

    for a in result.aux:
        shape = shapes[a.id]
        if shape.kind == "scalar":
            continue
        slot = (shape.split_level, shape.extent) if shape.split_level else None
        prog.arrays[a.id] = _aux_decl(a, shape.levels, slot)
        prog.aux_names.add(a.id)

    pre_items = {p: [] for p in range(m)}
    init_stmts = []
    rotate_stmts = {}

    for pl in placements:
        assigns = _circle_assigns(pl.circle, result, shapes, m, creation)
        if not assigns:
            continue
        if pl.kind == "dump":
            body = [
                Assign(st.target, _rewrite_reads(st.expr, shapes, m, main_lo))
                for st in assigns
            ]
            loop = body
            for l in range(m, pl.pos, -1):
                lo, hi = pl.circle.range_[l - 1]
                loop = [Loop(var_of[l], lo, hi, loop, level=l)]
            pre_items[pl.pos].extend(loop)
            continue

        l = pl.split_level
        base_row = main_lo[l].k + pl.min_off
        for k, v in enumerate(pl.slot_vars):
            init_stmts.append(Assign(ArrayRef(v), Leaf(const_ref(k + 1))))
        for row in range(base_row, main_lo[l].k + pl.max_off):
            pin = {l: row}
            slot_idx = row - base_row
            body = []
            for st in assigns:
                target = st.target
                if target.subs:
                    subs = [
                        Sub(1, pl.slot_vars[slot_idx], 0)
                        if isinstance(s.level, str) and s.level in pl.slot_vars
                        else s
                        for s in target.subs
                    ]
                    target = ArrayRef(target.name, tuple(subs))
                body.append(Assign(target, _rewrite_reads(st.expr, shapes, m, main_lo, pin)))
            loop = body
            for ll in range(m, l, -1):
                lo, hi = pl.circle.range_[ll - 1]
                loop = [Loop(var_of[ll], lo, hi, loop, level=ll)]
            pre_items[pl.pos].extend(loop)
        # the pipelined body computes the leading row j+max_off
        lead = {l: pl.max_off}
        body = [
            Assign(st.target, _rewrite_reads(translate_expr(st.expr, lead), shapes, m, main_lo))
            for st in assigns
        ]
        loop = body
        for ll in range(m, l, -1):
            lo, hi = pl.circle.range_[ll - 1]
            loop = [Loop(var_of[ll], lo, hi, loop, level=ll)]
        pre_items[pl.pos + 1].extend(loop)
        if pl.extent > 1:
            rot = rotate_stmts.setdefault(l, [])
            tmp = f"{var_of[l]}t" + ("" if not rot else f"_{len(rot)}")
            rot.append(Assign(ArrayRef(tmp), Leaf(ArrayRef(pl.slot_vars[0]))))
            for k in range(pl.extent - 1):
                rot.append(Assign(ArrayRef(pl.slot_vars[k]), Leaf(ArrayRef(pl.slot_vars[k + 1]))))
            rot.append(Assign(ArrayRef(pl.slot_vars[-1]), Leaf(ArrayRef(tmp))))

    for p in pre_items:
        pre_items[p] = _fuse(pre_items[p])

    main_circle = next(c for c in circles if c.is_main)
    main_stmts = [
        Assign(st.target, _rewrite_reads(st.expr, shapes, m, main_lo))
        for st in _circle_assigns(main_circle, result, shapes, m, creation)
    ]
    main_stmts += [
        Assign(st.target, _rewrite_reads(st.expr, shapes, m, main_lo))
        for st in nest.statements
    ]

    def build(level):
        if level > m:
            return main_stmts
        var, lo, hi = nest.indices[level - 1]
        body = list(pre_items.get(level, [])) + build(level + 1)
        if level in rotate_stmts:
            body = body + rotate_stmts[level]
        return [Loop(var, lo, hi, body, level=level)]

    prog.items = init_stmts + list(pre_items.get(0, [])) + build(1)
    return prog


def _fuse(items):
    out = []
    for it in items:
        if (
            out
            and isinstance(it, Loop)
            and isinstance(out[-1], Loop)
            and out[-1].var == it.var
            and out[-1].lo == it.lo
            and out[-1].hi == it.hi
        ):
            merged = _fuse_bodies(out[-1].body, it.body)
            if merged is not None:
                out[-1].body = merged
                continue
        out.append(it)
    return out


def _fuse_bodies(a, b):
    a_loops = [x for x in a if isinstance(x, Loop)]
    b_loops = [x for x in b if isinstance(x, Loop)]
    if not a_loops and not b_loops:
        return a + b
    if (
        len(a) == len(b) == 1
        and a_loops
        and b_loops
        and a_loops[0].var == b_loops[0].var
        and a_loops[0].lo == b_loops[0].lo
        and a_loops[0].hi == b_loops[0].hi
    ):
        inner = _fuse_bodies(a_loops[0].body, b_loops[0].body)
        if inner is not None:
            a_loops[0].body = inner
            return a
    return None
