import pytest

from loopcse.frontend import ParseError, emit, parse, parse_any
from loopcse.ir import Binary, Loop, Sub, single_nest

from conftest import load_bench

MINI = "REAL A(0:n+1)\nREAL B(n)\nDO i=1,n\n  B(i) = A(i)+A(i+1)\nENDDO\n"


def test_parse_minimal():
    prog = parse(MINI)
    nest = single_nest(prog)
    assert nest.depth == 1
    assert len(nest.statements) == 1
    st = nest.statements[0]
    assert st.target.name == "B" and st.target.subs == (Sub(1, 1, 0),)
    refs = [n.ref for n in [st.expr.left, st.expr.right]]
    assert [r.name for r in refs] == ["A", "A"]
    assert refs[1].subs == (Sub(1, 1, 1),)


def test_parse_pop_kernel():
    prog = parse(load_bench("pop"))
    nest = single_nest(prog)
    assert nest.depth == 2
    assert [v for v, _, _ in nest.indices] == ["j", "i"]
    targets = [st.target.name for st in nest.statements]
    for t in ("tx", "ty", "tz", "zsw", "zc"):
        assert t in targets
    assert len([t for t in targets if t in ("tx", "ty", "tz")]) == 3


@pytest.mark.parametrize(
    "text, message",
    [
        ("REAL A(n)\nREAL B(n)\nDO i=1,n\n  B(i) = A(i*i)\nENDDO\n", "non-affine"),
        (
            "REAL A(n,n)\nREAL B(n,n)\nDO i=1,n\nDO j=1,n\n  B(i,j) = A(i+j,j)\nENDDO\nENDDO\n",
            "non-affine",
        ),
        ("REAL B(n)\nDO i=1,n\n  B(i) = A(i)\nENDDO\n", "undeclared array"),
        ("REAL B(n)\nDO i=1,n\n  B(i) = q\nENDDO\n", "undeclared scalar"),
        ("REAL B(n,n)\nDO i=1,n\n  B(i,1) = 0.5\nDO j=1,n\n  B(i,j) = 1.0\nENDDO\nENDDO\n", "imperfect"),
        ("REAL B(n)\nDO i=1,n\n  i = 3\nENDDO\n", "loop index"),
        ("REAL B(n)\nDO i=1,n\n  B(i) = 1.0\n", "missing ENDDO"),
        ("REAL B(n)\nDO i=1,n\nDO i=1,n\n  B(i) = 1.0\nENDDO\nENDDO\n", "duplicate loop index"),
    ],
)
def test_diagnostics(text, message):
    with pytest.raises(ParseError, match=message):
        parse(text)


def test_error_positions_reported():
    try:
        parse("REAL B(n)\nDO i=1,n\n  B(i) = A(i)\nENDDO\n")
    except ParseError as e:
        assert e.line == 3 and e.token == "A"
    else:
        raise AssertionError("expected ParseError")


@pytest.mark.parametrize("name", ["pop", "psinv", "resid", "poisson", "j3d27pt", "gaussian"])
def test_corpus_round_trip(name):
    text = load_bench(name)
    once = emit(parse(text))
    twice = emit(parse(once))
    assert once == twice
    # and the reparse is structurally identical statement-for-statement
    p1, p2 = parse(once), parse(twice)
    from loopcse.ir import expr_equal

    s1, s2 = single_nest(p1).statements, single_nest(p2).statements
    assert len(s1) == len(s2)
    for a, b in zip(s1, s2):
        assert a.target == b.target and expr_equal(a.expr, b.expr)


def test_parens_preserved_through_round_trip():
    text = "REAL A(0:n+2)\nREAL B(n)\nDO i=1,n\n  B(i) = A(i)+(A(i+1)+A(i+2))\nENDDO\n"
    st = single_nest(parse(text)).statements[0]
    assert isinstance(st.expr.right, Binary) and st.expr.right.paren
    st2 = single_nest(parse(emit(parse(text)))).statements[0]
    assert isinstance(st2.expr.right, Binary) and st2.expr.right.paren


def test_emit_empty_body_nest():
    from loopcse.ir import Bound, Program

    prog = Program({}, [], [Loop("i", Bound.const(1), Bound("n", 0), [], level=1)])
    assert emit(prog) == "DO i=1,n\nENDDO\n"


def test_parse_any_reads_transformed_output():
    from loopcse.binary_detect import detect_binary
    from loopcse.codegen import contract
    from loopcse.ir import forward_substitute

    prog = parse(load_bench("pop"))
    nest = single_nest(prog)
    nest.statements = forward_substitute(nest.statements)
    res = detect_binary(nest)
    out = emit(contract(nest, res))
    reparsed = parse_any(out)
    assert emit(reparsed) == out  # emitted text is a fixpoint
    with pytest.raises(ParseError):
        parse(out)  # strict mode rejects the multi-nest pipeline form


def test_intrinsic_arity_rejected():
    with pytest.raises(ParseError, match="one argument"):
        parse("REAL A(n)\nREAL B(n)\nDO i=1,n\n  B(i) = sin(A(i),A(i))\nENDDO\n")


def test_fuzz_corpus_round_trip():
    from loopcse.fuzz import random_program
    from loopcse.ir import expr_equal

    for seed in range(25):
        text = random_program(seed)
        once = emit(parse(text))
        assert once == emit(parse(once))
        s1 = single_nest(parse(text)).statements
        s2 = single_nest(parse(once)).statements
        assert len(s1) == len(s2)
        for a, b in zip(s1, s2):
            assert a.target == b.target and expr_equal(a.expr, b.expr)
