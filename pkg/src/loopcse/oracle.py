"""Reference interpreter and randomized equivalence checking.

The interpreter executes programs over dense float64 grids with
left-to-right, parenthesization-faithful evaluation, and it polices every
array access: reads or writes outside declared bounds are hard faults, and
auxiliary arrays additionally track read-before-write.

Two independent vectorizations keep trial counts cheap without changing
the math: arrays carry a leading batch axis so every trial with the same
extents runs at once, and loops whose bodies are plain assignments with no
loop-carried dependence evaluate with the loop variable as a vector.  Both
paths perform the same IEEE operations per element as the sequential
fallback, so results are bit-identical to it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ir import (
    ADD,
    APPLY,
    DIV,
    MUL,
    SUB,
    Assign,
    Binary,
    Leaf,
    Loop,
    Nary,
    walk,
)

_FUNCS = {"sin": np.sin, "cos": np.cos, "sqrt": np.sqrt, "exp": np.exp}


class InterpreterFault(RuntimeError):
    pass


@dataclass
class Environment:
    """Batched execution state: every array is (trials,) + declared shape.

    Data scalars are (trials, 1) columns; index bookkeeping scalars stay
    plain integers (their values never depend on array data).
    """

    sizes: dict
    batch: int = 1
    arrays: dict = field(default_factory=dict)  # name -> (ndarray, lo tuple)
    scalars: dict = field(default_factory=dict)
    masks: dict = field(default_factory=dict)  # aux name -> written mask
    levels: dict = field(default_factory=dict)  # loop level -> current value

    def grid(self, name, trial=0):
        return self.arrays[name][0][trial]


def make_env(program, sizes, rng=None, batch=1, inputs=None, params=None):
    """Materialize every declared array; inputs random in [-1, 1], outputs
    zeroed, auxiliaries zeroed with write-tracking masks."""
    from .ir import read_only_arrays

    env = Environment(dict(sizes), batch)
    ro = read_only_arrays(program)
    for name in sorted(program.arrays):
        decl = program.arrays[name]
        lo = tuple(d.lo.value(sizes) for d in decl.dims)
        hi = tuple(d.hi.value(sizes) for d in decl.dims)
        shape = (batch,) + tuple(max(0, h - l + 1) for l, h in zip(lo, hi))
        if name in ro and name not in program.aux_names:
            if inputs is not None and name in inputs:
                data = inputs[name].copy()
            else:
                data = rng.uniform(-1.0, 1.0, size=shape)
        else:
            data = np.zeros(shape)
        env.arrays[name] = (data, lo)
        if name in program.aux_names:
            env.masks[name] = np.zeros(shape, dtype=bool)
    for p in sorted(program.params):
        if params is not None and p in params:
            env.scalars[p] = params[p]
        else:
            env.scalars[p] = rng.uniform(0.5, 1.5, size=(batch, 1))
    return env


def _sub_value(sub, env, vec_var=None, vec_vals=None):
    if sub.coef == 0:
        return sub.offset
    if isinstance(sub.level, str):
        idx = int(env.scalars[sub.level])
    elif vec_var is not None and sub.level == vec_var:
        return sub.coef * vec_vals + sub.offset
    else:
        idx = env.levels[sub.level]
    return sub.coef * idx + sub.offset


def _indices(ref, env, vec_var=None, vec_vals=None):
    return tuple(_sub_value(s, env, vec_var, vec_vals) for s in ref.subs)


def _check_bounds(name, arr, lo, idx, write=False):
    for d, i in enumerate(idx):
        low, size = lo[d], arr.shape[d + 1]
        vals = np.atleast_1d(np.asarray(i))
        bad = (vals < low) | (vals > low + size - 1)
        if np.any(bad):
            kind = "write" if write else "read"
            raise InterpreterFault(
                f"out-of-bounds {kind} of {name} dim {d + 1} at subscript "
                f"{int(vals[bad][0])}"
            )


def _positions(idx, lo):
    return tuple(np.asarray(i) - l if not isinstance(i, int) else i - l for i, l in zip(idx, lo))


def _load(ref, env, vec_var=None, vec_vals=None):
    if ref.literal is not None:
        return ref.literal
    if not ref.subs:
        v = env.scalars.get(ref.name)
        if v is None:
            raise InterpreterFault(f"unbound scalar {ref.name}")
        return v
    arr, lo = env.arrays[ref.name]
    idx = _indices(ref, env, vec_var, vec_vals)
    _check_bounds(ref.name, arr, lo, idx)
    pos = _positions(idx, lo)
    if ref.name in env.masks:
        if not np.all(env.masks[ref.name][(slice(None),) + pos]):
            raise InterpreterFault(f"read-before-write of auxiliary {ref.name}")
    out = arr[(slice(None),) + pos]
    if out.ndim == 1:
        out = out[:, None]
    return out


def _eval(expr, env, vec_var=None, vec_vals=None):
    if isinstance(expr, Leaf):
        return _load(expr.ref, env, vec_var, vec_vals)
    if isinstance(expr, Binary):
        if expr.op == APPLY:
            fn = _FUNCS[expr.left.ref.name]
            return fn(_eval(expr.right, env, vec_var, vec_vals))
        a = _eval(expr.left, env, vec_var, vec_vals)
        b = _eval(expr.right, env, vec_var, vec_vals)
        return _apply(expr.op, a, b)
    if isinstance(expr, Nary):
        acc = None
        for child, sign in zip(expr.children, expr.signs):
            v = _eval(child, env, vec_var, vec_vals)
            if acc is None:
                if sign < 0:
                    v = -v if expr.op == ADD else _apply(DIV, 1.0, v)
                acc = v
            elif expr.op == ADD:
                acc = acc + v if sign > 0 else acc - v
            else:
                acc = acc * v if sign > 0 else _apply(DIV, acc, v)
        return acc
    raise TypeError(expr)


def _apply(op, a, b):
    if op == ADD:
        return a + b
    if op == SUB:
        return a - b
    if op == MUL:
        return a * b
    if op == DIV:
        if np.any(np.asarray(b) == 0):
            raise InterpreterFault("division by zero")
        return a / b
    raise ValueError(op)


def _store(target, value, env, vec_var=None, vec_vals=None):
    if not target.subs:
        env.scalars[target.name] = value
        return
    arr, lo = env.arrays[target.name]
    idx = _indices(target, env, vec_var, vec_vals)
    _check_bounds(target.name, arr, lo, idx, write=True)
    pos = _positions(idx, lo)
    vectored = any(not isinstance(p, (int, np.integer)) for p in pos)
    val = value
    if isinstance(val, np.ndarray) and not vectored and val.ndim == 2:
        val = val[:, 0]
    arr[(slice(None),) + pos] = val
    if target.name in env.masks:
        env.masks[target.name][(slice(None),) + pos] = True


def _vectorizable(loop):
    """A loop of plain assignments is safe to evaluate with the loop
    variable as a vector when no statement reads an array element the body
    writes under a different subscript tuple (a loop-carried dependence)
    and no scalar assigned in the body is read before its first
    assignment."""
    if any(not isinstance(it, Assign) for it in loop.body):
        return False
    written_arrays = {}
    for it in loop.body:
        if it.target.subs:
            if it.target.name in written_arrays:
                return False  # double store, keep the sequential order
            written_arrays[it.target.name] = it.target.subs
    assigned_scalars = set()
    body_scalars = {it.target.name for it in loop.body if not it.target.subs}
    for it in loop.body:
        for node in walk(it.expr):
            if not isinstance(node, Leaf):
                continue
            ref = node.ref
            if ref.literal is not None:
                continue
            if not ref.subs:
                if ref.name in body_scalars and ref.name not in assigned_scalars:
                    return False
                continue
            if ref.name in written_arrays and ref.subs != written_arrays[ref.name]:
                return False
        if not it.target.subs:
            assigned_scalars.add(it.target.name)
    return True


def _run_items(items, env):
    for it in items:
        if isinstance(it, Loop):
            _run_loop(it, env)
        else:
            value = _eval(it.expr, env)
            if not it.target.subs and isinstance(value, float):
                # index bookkeeping (slot inits, rotations) stays integral
                if value == int(value):
                    value = int(value)
            _store(it.target, value, env)


def _run_loop(loop, env):
    lo = loop.lo.value(env.sizes)
    hi = loop.hi.value(env.sizes)
    if hi < lo:
        return
    level = loop.level if loop.level is not None else max(env.levels, default=0) + 1
    if _vectorizable(loop):
        vec = np.arange(lo, hi + 1)
        vector_scalars = set()
        for it in loop.body:
            val = _eval(it.expr, env, vec_var=level, vec_vals=vec)
            if not it.target.subs:
                env.scalars[it.target.name] = val
                vector_scalars.add(it.target.name)
            else:
                _store(it.target, val, env, vec_var=level, vec_vals=vec)
        for name in vector_scalars:  # keep the last iteration's value
            v = env.scalars[name]
            if isinstance(v, np.ndarray) and v.ndim == 2 and v.shape[1] > 1:
                env.scalars[name] = v[:, -1:].copy()
        return
    for v in range(lo, hi + 1):
        env.levels[level] = v
        _run_items(loop.body, env)
    env.levels.pop(level, None)


def interpret(program, env):
    """Execute the program, mutating and returning the environment."""
    _run_items(program.items, env)
    return env


# ---------------------------------------------------------------------------
# Equivalence checking


def size_symbols(program):
    syms = set()
    for decl in program.arrays.values():
        for d in decl.dims:
            for b in (d.lo, d.hi):
                if b.base:
                    syms.add(b.base)

    def scan(items):
        for it in items:
            if isinstance(it, Loop):
                for b in (it.lo, it.hi):
                    if b.base:
                        syms.add(b.base)
                scan(it.body)

    scan(program.items)
    return syms


def output_arrays(program):
    return sorted(
        {
            st.target.name
            for st in program.statements()
            if st.target.subs and st.target.name not in program.aux_names
        }
    )


def check_equivalence(p1, p2, trials=100, tol=0.0, seed=0, sizes=(5, 8, 13)):
    """Run both programs on shared random inputs and compare the arrays the
    original program writes.  tol == 0 demands bit-identical results (NaNs
    match NaNs); otherwise elementwise relative error must stay within tol.

    Trials sharing an extent run as one batch; failures are reported by
    trial index.  Returns a report dict with "ok" False on any divergence
    or interpreter fault in either program.
    """
    rng = np.random.default_rng(seed)
    outputs = output_arrays(p1)
    syms = size_symbols(p1) | size_symbols(p2)
    report = {"trials": trials, "maxRelError": 0.0, "failures": []}

    groups = {}
    for t in range(trials):
        groups.setdefault(sizes[t % len(sizes)], []).append(t)

    for n in sorted(groups):
        tlist = groups[n]
        batch = len(tlist)
        bind = {s: n for s in syms}
        draw = np.random.default_rng(rng.integers(0, 2**63))
        env1 = make_env(p1, bind, draw, batch=batch)
        inputs = {
            name: env1.arrays[name][0]
            for name in p1.arrays
            if name not in p1.aux_names and name in env1.arrays
        }
        params = dict(env1.scalars)
        env2 = make_env(p2, bind, None, batch=batch, inputs=inputs, params=params)
        try:
            interpret(p1, env1)
            interpret(p2, env2)
        except InterpreterFault as e:
            report["failures"].append({"trial": tlist[0], "fault": str(e)})
            continue
        for name in outputs:
            a = env1.arrays[name][0]
            b = env2.arrays[name][0]
            if tol == 0.0:
                same = (a == b) | (np.isnan(a) & np.isnan(b))
                if not np.all(same):
                    where = tuple(int(x) for x in np.argwhere(~same)[0])
                    report["failures"].append(
                        {
                            "trial": tlist[where[0]],
                            "array": name,
                            "index": where[1:],
                            "lhs": float(a[where]),
                            "rhs": float(b[where]),
                        }
                    )
            else:
                scale = np.maximum(np.abs(a), np.abs(b))
                diff = np.abs(a - b)
                with np.errstate(invalid="ignore", divide="ignore"):
                    rel = np.where(scale > 0, diff / scale, 0.0)
                rel = np.where(np.isnan(a) & np.isnan(b), 0.0, rel)
                worst = float(np.max(rel)) if rel.size else 0.0
                report["maxRelError"] = max(report["maxRelError"], worst)
                if worst > tol:
                    where = tuple(int(x) for x in np.argwhere(rel == worst)[0])
                    report["failures"].append(
                        {
                            "trial": tlist[where[0]],
                            "array": name,
                            "index": where[1:],
                            "lhs": float(a[where]),
                            "rhs": float(b[where]),
                        }
                    )
    report["failures"].sort(key=lambda f: f["trial"])
    report["ok"] = not report["failures"]
    return report
