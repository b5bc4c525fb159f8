"""End-to-end driver: parse, detect, generate, contract, analyze, verify."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import frontend
from .analysis import count_static_ops, expand_ops, profit
from .binary_detect import detect_binary
from .codegen import contract, generate_straightforward
from .ir import Leaf, forward_substitute, single_nest, walk
from .nary_detect import detect_nary
from .oracle import check_equivalence


@dataclass
class Config:
    reassoc: int = 3
    strategy: str = "auto"  # exact | heuristic | auto
    mis_budget: int = 40
    contract: bool = True
    normalize_subdiv: bool = False
    check: tuple = None  # (trials, tol)
    seed: int = 0
    sizes: dict = field(default_factory=dict)
    report_format: str = "text"


@dataclass
class PipelineOutput:
    original: object
    transformed: object
    straightforward: object
    result: object
    report: dict
    check_report: dict = None


def run_pipeline(text, config):
    """Transform one source program and assemble its report."""
    original = frontend.parse(text)
    work = frontend.parse(text)
    nest = single_nest(work)
    nest.statements = forward_substitute(nest.statements)

    if config.reassoc == 0:
        result = detect_binary(nest)
    else:
        result = detect_nary(
            nest,
            level=config.reassoc,
            strategy=config.strategy,
            budget=config.mis_budget,
            subdiv=config.normalize_subdiv,
        )

    straightforward = generate_straightforward(nest, result)

    report = {
        "aux": [],
        "iterations": result.iterations,
        "eriEvaluations": result.eri_evaluations,
        "ori": None,
        "aft": None,
        "profit": None,
    }
    cache = {}
    cnt = {a.id: 0 for a in result.aux}
    trees = [st.expr for st in nest.statements] + [a.rep for a in result.aux]
    for tree in trees:
        for node in walk(tree):
            if isinstance(node, Leaf) and node.ref.name in cnt:
                cnt[node.ref.name] += 1
    for a in result.aux:
        report["aux"].append(
            {
                "id": a.id,
                "cnt": cnt[a.id],
                "ops": expand_ops(a, result.aux_by_name, cache),
                "range": [[lo.text(), hi.text()] for lo, hi in (a.range_ or [])],
            }
        )
    if config.sizes:
        try:
            p = profit(result, config.sizes)
            report["ori"], report["aft"] = p.ori, p.aft
            report["profit"] = p.profit
        except KeyError as e:
            raise ValueError(f"missing size binding for {e}") from e

    transformed = contract(nest, result) if config.contract else straightforward
    before = count_static_ops(original)
    after = count_static_ops(transformed)
    report["staticOps"] = {
        k: [before[k], after[k]] for k in ("add", "sub", "mul", "div", "sincos")
    }

    check_report = None
    if config.check is not None:
        trials, tol = config.check
        check_report = check_equivalence(
            original, transformed, trials=trials, tol=tol, seed=config.seed
        )
        report["check"] = {
            "trials": check_report["trials"],
            "maxRelError": check_report["maxRelError"],
            "failures": check_report["failures"][:10],
            "ok": check_report["ok"],
        }

    return PipelineOutput(original, transformed, straightforward, result, report, check_report)


def report_text(report):
    lines = []
    ops = report["staticOps"]
    lines.append(
        "static ops (before -> after): "
        + ", ".join(f"{k} {b}->{a}" for k, (b, a) in ops.items() if b or a)
    )
    lines.append(
        f"auxiliary arrays: {len(report['aux'])}  "
        f"iterations: {report['iterations']}  eri evaluations: {report['eriEvaluations']}"
    )
    for a in report["aux"]:
        rng = "".join(f"[{lo},{hi}]" for lo, hi in a["range"]) or "-"
        lines.append(f"  {a['id']}: cnt={a['cnt']} ops={a['ops']} range={rng}")
    if report.get("profit") is not None:
        lines.append(f"profit: ori={report['ori']} aft={report['aft']} profit={report['profit']}")
    if "check" in report:
        c = report["check"]
        status = "pass" if c["ok"] else "FAIL"
        lines.append(
            f"equivalence check: {status} over {c['trials']} trials, "
            f"max relative error {c['maxRelError']:.3e}"
        )
    return "\n".join(lines) + "\n"


def report_json(report):
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
