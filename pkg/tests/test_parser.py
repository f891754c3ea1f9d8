import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcoarsen.errors import ParseError, UnsupportedConstructError
from tcoarsen.nodes import (
    Assign, Barrier, Binary, Block, Call, Cast, Decl, FloatLit, For, If, Index,
    IntLit, Kernel, Param, Store, Unary, Var,
)
from tcoarsen.parser import parse
from tcoarsen.printer import print_kernel

from conftest import DATA, load


def test_fig3_top_shape(mult):
    assert mult.name == "multiplication"
    assert [p.name for p in mult.params] == ["in0", "in1", "N", "out0"]
    loop = mult.body.stmts[0]
    assert isinstance(loop, For)
    r0, r1, r2, store = loop.body.stmts
    assert r0 == Decl("float", "r0", Index("in1", Var("gid")))
    assert r1 == Decl("float", "r1", Index("in0", Var("gid")))
    assert r2 == Decl("float", "r2", Binary("*", Var("r1"), Var("r0")))
    assert store == Store("out0", Var("gid"), Var("r2"))


def test_empty_kernel():
    k = parse("__kernel void k(){}")
    assert k.body == Block(())
    assert k.params == ()


def test_attributes_and_doc():
    k = parse("// hello\n__attribute__((num_simd_work_items(4)))\n"
              "__attribute__((num_compute_units(2)))\n__kernel void k() {}")
    assert (k.simd, k.compute_units, k.doc) == (4, 2, ("hello",))


def test_statements_and_types():
    src = """
    kernel void k(__global const uint *a, __local float *tmp, unsigned int n, float s) {
        __local int buf[16];
        int i = get_local_id(0);
        uint u = 3u;
        float f = (float)i * 2.5f + s;
        for (int j = 0; j < 4; j++) {
            if (i < 2 && !(j == 1)) { f += 1.0f; } else if (i > 8) f = -f; else { f = min(f, 1.0f); }
        }
        buf[i] = i % 3;
        barrier(CLK_LOCAL_MEM_FENCE | CLK_GLOBAL_MEM_FENCE);
        tmp[i] = f;
    }
    """
    k = parse(src)
    a, tmp, n, s = k.params
    assert a == Param("a", "uint", True, "global", True)
    assert tmp.space == "local" and n.type == "uint" and not s.pointer
    assert k.body.stmts[0] == Decl("int", "buf", None, 16, "local")
    assert k.body.stmts[2].init == IntLit(3, True)
    assert isinstance(k.body.stmts[3].init.left.left, Cast)
    loop = k.body.stmts[4]
    assert loop.step == Assign("j", "++")
    branch = loop.body.stmts[0]
    assert isinstance(branch.orelse, If)
    assert branch.orelse.then.stmts == (Assign("f", "=", Unary("-", Var("f"))),)
    assert k.body.stmts[6] == Barrier(("CLK_LOCAL_MEM_FENCE", "CLK_GLOBAL_MEM_FENCE"))


@pytest.mark.parametrize("src, line, col", [
    ("__kernel void k() {\n  int x = ;\n}", 2, 11),
    ("__kernel void k() {\n  y = 1;\n}", 2, 3),
    ("__kernel void k() { int x = 1 }", 1, 31),
    ("__kernel void k() { int x = 1; int x = 2; }", 1, 36),
    ("__kernel void k(__global float *a) { a[get_global_id(x)] = 1.0f; }", 1, 54),
    ("__kernel void k() { int a = 1 $ 2; }", 1, 31),
])
def test_syntax_errors_carry_position(src, line, col):
    with pytest.raises(ParseError) as info:
        parse(src, "t.cl")
    assert (info.value.line, info.value.col) == (line, col)
    assert info.value.diagnostic().startswith(f"t.cl:{line}:{col}: ")


@pytest.mark.parametrize("body, construct", [
    ("goto end;", "goto"),
    ("struct s x;", "struct"),
    ("while (1) {}", "while"),
    ("int x = 1 << 2;", "bitwise"),
    ("int x = 1 ? 2 : 3;", "conditional"),
    ("a = a + 1;", "pointer arithmetic"),
    ("float v = *a;", "dereference"),
    ("int p[4];", "private array"),
    ("int x = 1, y = 2;", "multiple declarators"),
])
def test_unsupported_constructs_are_named(body, construct):
    src = "__kernel void k(__global float *a) { " + body + " }"
    with pytest.raises(UnsupportedConstructError) as info:
        parse(src)
    assert construct in str(info.value)


def test_preprocessor_rejected():
    with pytest.raises(UnsupportedConstructError, match="preprocessor"):
        parse("#define N 4\n__kernel void k() {}")


def test_two_kernels_rejected():
    with pytest.raises(UnsupportedConstructError):
        parse("__kernel void a() {}\n__kernel void b() {}")


@pytest.mark.parametrize("name", sorted(p.name for p in DATA.glob("*.cl")))
def test_data_kernels_round_trip(name):
    k = load(name)
    text = print_kernel(k)
    assert parse(text) == k
    assert print_kernel(parse(text)) == text


def test_simd_attribute_printed():
    k = parse("__kernel void k() {}")
    from dataclasses import replace
    assert "num_simd_work_items(4)" in print_kernel(replace(k, simd=4))


def test_garbage_never_crashes():
    for text in ["", "__kernel", "__kernel void", "__kernel void k(", "}}}", "@@@",
                 "__kernel void k() { for (;;) }", "__kernel void k() { if }"]:
        with pytest.raises(ParseError):
            parse(text)


# -- generated round trips --------------------------------------------------------------

PARAMS = (Param("a", "float", True, "global"), Param("n", "int"), Param("x", "float"),
          Param("out", "float", True, "global"))

leaves = st.one_of(
    st.integers(0, 2**31 - 1).map(IntLit),
    st.integers(0, 1000).map(lambda v: IntLit(v, True)),
    st.floats(0, 1e6, allow_nan=False, width=32).map(FloatLit),
    st.sampled_from([Var("n"), Var("x"), Var("v"), Call("get_global_id", (IntLit(0),))]),
)


def _extend(children):
    ops = ["+", "-", "*", "/", "%", "<", "<=", ">", ">=", "==", "!=", "&&", "||"]
    return st.one_of(
        st.builds(Binary, st.sampled_from(ops), children, children),
        st.builds(Unary, st.sampled_from(["-", "!"]), children),
        st.builds(Cast, st.sampled_from(["int", "uint", "float"]), children),
        st.builds(lambda e: Index("a", e), children),
        st.builds(lambda f, e: Call(f, (e,)), st.sampled_from(["fabs", "sqrt"]), children),
        st.builds(lambda f, l, r: Call(f, (l, r)), st.sampled_from(["min", "max"]),
                  children, children),
    )


exprs = st.recursive(leaves, _extend, max_leaves=12)


def _stmts(depth):
    simple = st.one_of(
        st.builds(lambda e: Assign("v", "=", e), exprs),
        st.builds(lambda op, e: Assign("v", op, e), st.sampled_from(["+=", "-=", "*=", "/="]), exprs),
        st.builds(lambda i, e: Store("out", i, e), exprs, exprs),
    )
    if depth == 0:
        return simple
    inner = st.lists(_stmts(depth - 1), max_size=3).map(lambda s: Block(tuple(s)))
    return st.one_of(
        simple,
        st.builds(If, exprs, inner, st.one_of(st.none(), inner)),
        st.builds(lambda c, b: For(Decl("int", f"i{depth}", IntLit(0)), c,
                                   Assign(f"i{depth}", "++"), b), exprs, inner),
    )


kernels = st.lists(_stmts(2), max_size=5).map(
    lambda body: Kernel("k", PARAMS, Block((Decl("float", "v", FloatLit(0.0)),) + tuple(body))))


@settings(max_examples=200, deadline=None)
@given(kernels)
def test_print_parse_identity(k):
    text = print_kernel(k)
    assert parse(text) == k
    assert print_kernel(parse(text)) == text
