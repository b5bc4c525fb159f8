from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
BENCH = ROOT / "benchmarks"


@pytest.fixture(scope="session")
def bench_text():
    def load(name):
        return (BENCH / f"{name}.loop").read_text()

    return load


def load_bench(name):
    return (BENCH / f"{name}.loop").read_text()


def fresh_detection(text, level=0, strategy="auto", budget=40, subdiv=False):
    """Parse, substitute temporaries and run detection on a fresh copy."""
    from loopcse.binary_detect import detect_binary
    from loopcse.frontend import parse
    from loopcse.ir import forward_substitute, single_nest
    from loopcse.nary_detect import detect_nary

    prog = parse(text)
    nest = single_nest(prog)
    nest.statements = forward_substitute(nest.statements)
    if level == 0:
        result = detect_binary(nest)
    else:
        result = detect_nary(nest, level=level, strategy=strategy, budget=budget, subdiv=subdiv)
    return nest, result
