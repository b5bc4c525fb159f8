import pytest

from loopcse.codegen import (
    build_dependency_graph,
    contract,
    form_circles,
    generate_straightforward,
    propagate_ranges,
)
from loopcse.frontend import emit
from loopcse.ir import Bound, Loop
from loopcse.oracle import check_equivalence

from conftest import fresh_detection, load_bench


def pop_graph():
    nest, res = fresh_detection(load_bench("pop"))
    g = propagate_ranges(build_dependency_graph(res, nest))
    return nest, res, g


def rng_text(node_range):
    return [(lo.text(), hi.text()) for lo, hi in node_range]


def test_pop_dependency_graph_shape():
    nest, res, g = pop_graph()
    # tx reads aa_2_0 twice, at the current and previous inner iteration
    tx_edges = [(c, o) for c, o in g.out_edges("stmt:0")]
    assert sorted(c for c, _ in tx_edges) == ["aa_2_0", "aa_2_0"]
    offs = sorted(tuple(sorted(o.items())) for _, o in tx_edges)
    assert offs == [(((1, 0)), (2, -1)), ((1, 0), (2, 0))]
    assert {c for c, _ in g.out_edges("stmt:2")} == {"aa_1_2"}
    assert {c for c, _ in g.out_edges("aa_1_0")} == {"aa_0_0", "aa_0_1"}
    assert {c for c, _ in g.out_edges("aa_1_1")} == {"aa_0_2", "aa_0_1"}
    assert {c for c, _ in g.out_edges("aa_1_2")} == {"aa_0_3", "aa_0_3"}


def test_pop_propagated_ranges():
    nest, res, g = pop_graph()
    assert rng_text(g.nodes["aa_2_0"].range_) == [("2", "ny"), ("1", "nx")]
    assert rng_text(g.nodes["aa_1_2"].range_) == [("2", "ny"), ("1", "nx")]
    assert rng_text(g.nodes["aa_1_0"].range_) == [("1", "ny"), ("1", "nx")]
    assert rng_text(g.nodes["aa_0_3"].range_) == [("1", "ny"), ("1", "nx")]
    assert rng_text(g.nodes["aa_0_0"].range_) == [("1", "ny"), ("1", "nx")]


def test_zero_offset_child_keeps_parent_range():
    text = (
        "REAL A(n)\nREAL B(n)\nREAL C(n)\n"
        "DO i=2,n-1\n  B(i) = sin(A(i))*sin(A(i))\n  C(i) = sin(A(i))+sin(A(i))\nENDDO\n"
    )
    nest, res = fresh_detection(text)
    g = propagate_ranges(build_dependency_graph(res, nest))
    a = res.aux[0]
    assert rng_text(g.nodes[a.id].range_) == [("2", "n-1")]


def test_pop_range_circles():
    nest, res, g = pop_graph()
    creation = {a.id: k for k, a in enumerate(res.aux)}
    circles = form_circles(g, creation)
    parts = [sorted(c.members) for c in circles]
    assert parts[0] == ["aa_0_0", "aa_0_1", "aa_0_2", "aa_0_3", "aa_1_0", "aa_1_1"]
    assert parts[1] == ["aa_1_2", "aa_2_0", "aa_2_1"]
    assert parts[2] == ["stmt:0", "stmt:1", "stmt:2"]
    assert circles[-1].is_main


def test_pop_straightforward_matches_hand_structure():
    nest, res, g = pop_graph()
    text = emit(generate_straightforward(nest, res, g))
    assert "DO j=1,ny" in text and "DO j=2,ny" in text
    assert "aa_1_2(i,j) = (aa_0_3(i,j)+aa_0_3(i,j-1))" in text
    assert "tx(i,j) = (aa_2_0(i,j)+aa_2_0(i-1,j))*p25" in text
    assert "REAL aa_2_0(nx,2:ny)" in text


def test_pop_contraction_shapes():
    nest, res = fresh_detection(load_bench("pop"))
    prog = contract(nest, res)
    text = emit(prog)
    for name in ("aa_0_3", "aa_1_0", "aa_1_1"):
        assert f"REAL {name}(nx,2)" in text  # pipelined nx*2 buffers
    for name in ("aa_1_2", "aa_2_0", "aa_2_1"):
        assert f"REAL {name}(nx)" in text  # one-dimensional
    assert "aa_0_1_i_j = cos(ulat(i,1))" in text  # scalar replacement
    assert "cos(ulon(i,j))*aa_0_1_i_j" in text  # single-use inlining
    assert "jt = j0" in text and "j1 = jt" in text  # index rotation
    # prefetch of the row below the main lower bound
    assert "aa_0_3(i,j0) = sin(ulat(i,1))" in text


def test_contraction_fuses_pipeline_and_dumped_loops():
    nest, res = fresh_detection(load_bench("pop"))
    prog = contract(nest, res)
    jloop = next(it for it in prog.items if isinstance(it, Loop) and it.var == "j")
    inner = [it for it in jloop.body if isinstance(it, Loop)]
    assert len(inner) == 2  # fused precompute i-loop plus the main i-loop
    assert (inner[0].lo, inner[0].hi) == (Bound.const(1), Bound("nx", 0))
    names = [st.target.name for st in inner[0].body]
    assert names == ["aa_0_1_i_j", "aa_0_3", "aa_1_0", "aa_1_1", "aa_1_2", "aa_2_0", "aa_2_1"]


def test_all_zero_offsets_collapse_to_scalar():
    text = (
        "REAL A(n)\nREAL B(n)\nREAL C(n)\n"
        "DO i=2,n-1\n  B(i) = sin(A(i))*sin(A(i))\n  C(i) = sin(A(i))+sin(A(i))\nENDDO\n"
    )
    nest, res = fresh_detection(text)
    prog = contract(nest, res)
    text_out = emit(prog)
    assert "aa_0_0_i = sin(A(i))" in text_out
    assert "REAL aa_0_0" not in text_out


@pytest.mark.parametrize("name", ["pop", "psinv", "poisson", "gaussian"])
def test_contracted_bit_exact_vs_straightforward(name):
    nest, res = fresh_detection(load_bench(name), level=0)
    sf = generate_straightforward(nest, res)
    ct = contract(nest, res)
    r = check_equivalence(sf, ct, trials=24, tol=0.0, seed=5)
    assert r["ok"], r["failures"][:3]


def elements(prog, sizes):
    total = 0
    for name in prog.aux_names:
        decl = prog.arrays.get(name)
        if decl is None:
            continue
        n = 1
        for d in decl.dims:
            n *= max(0, d.hi.value(sizes) - d.lo.value(sizes) + 1)
        total += n
    return total


@pytest.mark.parametrize("name", ["pop", "psinv", "poisson", "j3d27pt", "gaussian", "resid"])
def test_memory_monotonicity(name):
    for level in (0, 3):
        nest, res = fresh_detection(load_bench(name), level=level)
        sf = generate_straightforward(nest, res)
        ct = contract(nest, res)
        sizes = {s: 12 for s in ("n", "nx", "ny")}
        assert elements(ct, sizes) <= elements(sf, sizes)


def test_mgrid_contraction_one_dimensional_inside_plane_loops():
    nest, res = fresh_detection(load_bench("psinv"), level=2)
    prog = contract(nest, res)
    text = emit(prog)
    assert "REAL aa_1_0(n)" in text and "REAL aa_1_1(n)" in text
    assert "aa_1_0(i) = (R(i,k-1,j)+R(i,k+1,j))+(R(i,k,j-1)+R(i,k,j+1))" in text
    # exactly the two four-term arrays survive contraction
    assert sorted(prog.aux_names & set(prog.arrays)) == ["aa_1_0", "aa_1_1"]


@pytest.mark.parametrize("name", ["pop", "psinv", "poisson", "j3d27pt", "gaussian", "resid"])
def test_emitted_text_is_reparse_fixpoint(name):
    from loopcse.frontend import emit, parse_any
    from loopcse.pipeline import Config, run_pipeline

    from conftest import load_bench as load

    for level in (0, 3):
        out = run_pipeline(load(name), Config(reassoc=level))
        text = emit(out.transformed)
        assert text == emit(parse_any(text))


def test_strided_kernel_end_to_end():
    text = (
        "PARAM w\nREAL fine(-1:2*n+3)\nREAL c1(n)\nREAL c2(n)\n"
        "DO i=1,n\n"
        "  c1(i) = w*(fine(2*i-1)+fine(2*i+1))\n"
        "  c2(i) = fine(2*i+1)+fine(2*i+3)\n"
        "ENDDO\n"
    )
    from loopcse.pipeline import Config, run_pipeline

    out = run_pipeline(text, Config(reassoc=0, check=(30, 0.0), seed=6))
    assert out.check_report["ok"]
    assert [a["id"] for a in out.report["aux"]] == ["aa_0_0"]
    emitted = emit(out.transformed)
    assert "aa_0_0(i) = (fine(2*i-1)+fine(2*i+1))" in emitted
    assert "c2(i) = aa_0_0(i+1)" in emitted
