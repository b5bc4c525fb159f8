from loopcse.analysis import count_static_ops, expand_ops, profit
from loopcse.binary_detect import expand_aux_leaves
from loopcse.codegen import contract, generate_straightforward
from loopcse.frontend import parse
from loopcse.ir import Binary, count_ops, forward_substitute, single_nest, walk

from conftest import fresh_detection, load_bench


def test_expand_ops_mgrid_levels():
    nest, res = fresh_detection(load_bench("psinv"), level=3)
    table = res.aux_by_name
    by = {a.id: a for a in res.aux}
    four_term = [a for a in res.aux if a.iteration == 1]
    assert [expand_ops(a, table) for a in four_term] == [3, 3]
    top = res.aux[-1]
    assert expand_ops(top, table) == 11  # 3 muls + 2 adds + two expanded sums


def test_expand_ops_leaf_pair():
    text = "REAL A(0:n+2)\nREAL B(n)\nREAL C(n)\nDO i=1,n\n  B(i) = A(i)*A(i+1)\n  C(i) = A(i)*A(i+1)\nENDDO\n"
    nest, res = fresh_detection(text)
    assert expand_ops(res.aux[0], res.aux_by_name) == 1


def test_expand_ops_matches_replaced_subtrees():
    text = load_bench("pop")
    nest0 = single_nest(parse(text))
    originals = forward_substitute(nest0.statements)
    nest, res = fresh_detection(text)
    for orig, st in zip(originals, nest.statements):
        expanded = expand_aux_leaves(st.expr, res.aux_by_name, nest.depth)
        assert count_ops(expanded) == count_ops(orig.expr)


def test_profit_unit_case():
    text = "REAL A(0:n+2)\nREAL B(n)\nREAL C(n)\nDO i=1,n\n  B(i) = A(i)*A(i+1)\n  C(i) = A(i)*A(i+1)\nENDDO\n"
    nest, res = fresh_detection(text)
    generate_straightforward(nest, res)  # fills propagated ranges
    # cnt = 2, ops = 1, ranges collapse to extent 10 in a depth-1 nest
    rep = profit(res, {"n": 10})
    assert rep.ori == 10 * (1 * 2)
    assert rep.aft == 10
    assert rep.profit == 10


def test_profit_no_aux():
    text = "REAL A(n)\nREAL B(n)\nDO i=1,n\n  B(i) = A(i)+A(i)\nENDDO\n"
    nest, res = fresh_detection(text)
    rep = profit(res, {"n": 10})
    assert rep.ori == rep.aft == 0


def test_profit_pop_positive():
    nest, res = fresh_detection(load_bench("pop"))
    generate_straightforward(nest, res)
    rep = profit(res, {"nx": 100, "ny": 100})
    assert rep.profit > 0


def test_static_ops_pop():
    before = count_static_ops(parse(load_bench("pop")))
    assert (before["sincos"], before["mul"], before["add"]) == (16, 11, 9)
    nest, res = fresh_detection(load_bench("pop"))
    after = count_static_ops(contract(nest, res))
    assert (after["sincos"], after["mul"], after["add"]) == (4, 5, 6)


def test_static_ops_empty_body():
    from loopcse.ir import Bound, Loop, Program

    prog = Program({}, [], [Loop("i", Bound.const(1), Bound("n", 0), [], level=1)])
    counts = count_static_ops(prog)
    assert all(v == 0 for k, v in counts.items() if k != "calls")


def test_steady_state_convention_skips_prefetch():
    # the POP prefetch row recomputes four intrinsics; they are startup
    # cost, not per-iteration work, and must not be double counted
    nest, res = fresh_detection(load_bench("pop"))
    prog = contract(nest, res)
    flat_calls = sum(
        1
        for st in prog.statements()
        for n in walk(st.expr)
        if isinstance(n, Binary) and n.op == "@"
    )
    assert flat_calls == 8  # 4 steady-state + 4 prefetch copies
    assert count_static_ops(prog)["sincos"] == 4
