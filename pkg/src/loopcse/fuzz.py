"""Random affine loop-nest programs for differential testing.

Generated programs have one perfect nest of up to three loops, a handful
of read-only input arrays with margin for ghost offsets, and statement
bodies built from random affine trees (optionally through scalar
temporaries) so the transformer's whole surface gets exercised.
"""

from __future__ import annotations

import random

from .frontend import parse

_OPS = ("+", "+", "-", "*")
_CALLS = ("sin", "cos")


def random_program(seed, max_depth=6, max_loops=3):
    rng = random.Random(seed)
    m = rng.randint(1, max_loops)
    loop_vars = ["i", "j", "k"][:m]
    n_inputs = rng.randint(2, 4)
    inputs = [f"a{k}" for k in range(n_inputs)]
    n_outputs = rng.randint(1, 3)
    outputs = [f"o{k}" for k in range(n_outputs)]
    params = ["c0", "c1"]

    lines = []
    for p in params:
        lines.append(f"PARAM {p}")
    dims = ",".join("-5:2*n+5" for _ in range(m))  # margin for strides
    for a in inputs:
        lines.append(f"REAL {a}({dims})")
    out_dims = ",".join("n" for _ in range(m))
    for o in outputs:
        lines.append(f"REAL {o}({out_dims})")
    for k, v in enumerate(loop_vars):
        lines.append("  " * k + f"DO {v}=1,n")

    temps = []

    def ref(depth):
        r = rng.random()
        if r < 0.12:
            return rng.choice(params)
        if r < 0.2 and temps:
            return rng.choice(temps)
        if r < 0.25:
            return f"{rng.uniform(0.25, 2.0):.2f}"
        name = rng.choice(inputs)
        subs = []
        for v in loop_vars:
            off = rng.randint(-2, 2)
            head = f"2*{v}" if rng.random() < 0.12 else v
            if off > 0:
                subs.append(f"{head}+{off}")
            elif off < 0:
                subs.append(f"{head}-{-off}")
            else:
                subs.append(head)
        return f"{name}({','.join(subs)})"

    def tree(depth):
        if depth <= 0 or rng.random() < 0.25:
            return ref(depth)
        if rng.random() < 0.12:
            return f"{rng.choice(_CALLS)}({tree(depth - 1)})"
        op = rng.choice(_OPS)
        left = tree(depth - 1)
        right = tree(depth - 1)
        body = f"{left}{op}{right}"
        return f"({body})" if rng.random() < 0.5 else body

    pad = "  " * m
    n_temps = rng.randint(0, 2)
    for t in range(n_temps):
        name = f"t{t}"
        lines.append(f"{pad}{name} = {tree(rng.randint(1, max_depth - 2))}")
        temps.append(name)
    for o in outputs:
        target = f"{o}({','.join(loop_vars)})"
        lines.append(f"{pad}{target} = {tree(rng.randint(2, max_depth))}")
    for k in range(m - 1, -1, -1):
        lines.append("  " * k + "ENDDO")
    return "\n".join(lines) + "\n"


def parse_random(seed, **kw):
    return parse(random_program(seed, **kw))
