import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcoarsen.analysis import count_ops
from tcoarsen.benchgen import DIVERGENCE_CONFIGS, BenchSpec, generate, make_buffers
from tcoarsen.coarsen import (
    CoarsenConfig, coarsen, coarsening_obligation, emit_replication,
)
from tcoarsen.errors import TransformError
from tcoarsen.interp import BufferSet, LaunchConfig, interpret
from tcoarsen.nodes import For, If, walk_stmts
from tcoarsen.parser import parse
from tcoarsen.printer import print_kernel
from tcoarsen.verify import verify

from conftest import load, swap_loads

CONSEC = "consecutive"
GAPPED = "gapped"


def same_output(k1, g1, k2, g2, bufs, pointer="out0"):
    a = interpret(k1, LaunchConfig(g1, _local(g1)), bufs).buffers[pointer]
    b = interpret(k2, LaunchConfig(g2, _local(g2)), bufs).buffers[pointer]
    return np.array_equal(a.view(np.uint32), b.view(np.uint32))


def _local(g):
    return max(d for d in range(1, min(g, 256) + 1) if g % d == 0)


def fig3_buffers(n, seed=0):
    rng = np.random.default_rng(seed)
    return BufferSet({"in0": rng.random(n, dtype=np.float32),
                      "in1": rng.random(n, dtype=np.float32),
                      "out0": np.zeros(n, np.float32)}, {"N": n})


# -- templates --------------------------------------------------------------------------

def test_consecutive_template(mult):
    got = coarsen(mult, CoarsenConfig(CONSEC, 2))
    want = load("multiplication_consecutive_c2.cl")
    # the reference kernel loads in0 into r0 where the original loads in1
    assert got == swap_loads(want, "in0", "in1")
    assert swap_loads(got, "in0", "in1") == want


def test_gapped_template(mult):
    got = coarsen(mult, CoarsenConfig(GAPPED, 2, extent="N"))
    want = load("multiplication_gapped_c2.cl")
    assert got == swap_loads(want, "in0", "in1")
    text = print_kernel(got)
    assert "int gapped_length = N / 2;" in text
    assert "int gid_1 = gid + gapped_length * 1;" in text


def test_literal_templates_are_equivalent_to_the_original(mult):
    bufs = fig3_buffers(1024)
    assert same_output(mult, 1024, load("multiplication_consecutive_c2.cl"), 512, bufs)
    assert same_output(mult, 1024, load("multiplication_gapped_c2.cl"), 512, bufs)


def test_degree_one_is_identity(mult):
    assert coarsen(mult, CoarsenConfig(CONSEC, 1)) is mult
    assert coarsen(mult, CoarsenConfig(GAPPED, 1, extent="N")) is mult


def test_obligation_recorded(mult):
    k = coarsen(mult, CoarsenConfig(GAPPED, 4, extent="N"))
    assert coarsening_obligation(k) == {"kind": GAPPED, "degree": 4,
                                        "tail": "require-divisible", "extent": "N"}
    assert coarsening_obligation(parse(print_kernel(k))) == coarsening_obligation(k)
    assert coarsening_obligation(mult) is None


def test_attributes_carry_over(mult):
    k = coarsen(dataclasses.replace(mult, simd=4, compute_units=2), CoarsenConfig(CONSEC, 2))
    assert (k.simd, k.compute_units) == (4, 2)


def test_coarsen_then_replicate(mult):
    k = emit_replication(coarsen(mult, CoarsenConfig(CONSEC, 4)), 2)
    text = print_kernel(k)
    assert "num_compute_units(2)" in text and "get_global_id(0) * 4" in text


# -- partition laws ------------------------------------------------------------------------

@pytest.mark.parametrize("g", [8, 16, 64])
@pytest.mark.parametrize("c", [1, 2, 4, 8])
def test_partition_formulas(g, c):
    n = g
    consecutive = sorted(i * c + k for i in range(g // c) for k in range(c))
    gapped = sorted(i + (n // c) * k for i in range(n // c) for k in range(c))
    assert consecutive == list(range(n))
    assert gapped == list(range(n))


MARK = """__kernel void mark(__global int *hits, __global int *lane, int N) {
    for (int gid = get_global_id(0); gid < N; gid += get_global_size(0)) {
        hits[gid] = hits[gid] + 1;
        lane[gid] = gid;
    }
}"""


@pytest.mark.parametrize("g", [8, 16, 64])
@pytest.mark.parametrize("c", [1, 2, 4, 8])
@pytest.mark.parametrize("kind", [CONSEC, GAPPED])
def test_partition_by_execution(g, c, kind):
    k = coarsen(parse(MARK), CoarsenConfig(kind, c, extent="N"))
    bufs = BufferSet({"hits": np.zeros(g, np.int32), "lane": np.full(g, -1, np.int32)},
                     {"N": g})
    res = interpret(k, LaunchConfig(g // c), bufs)
    assert res.buffers["hits"].tolist() == [1] * g
    assert res.buffers["lane"].tolist() == list(range(g))
    writers = res.writers["lane"]
    if kind == CONSEC:
        assert writers.tolist() == [i // c for i in range(g)]
    else:
        assert writers.tolist() == [i % (g // c) for i in range(g)]


# -- accounting and equivalence ------------------------------------------------------------

@pytest.mark.parametrize("c", [2, 4, 8])
@pytest.mark.parametrize("kind", [CONSEC, GAPPED])
def test_statement_accounting(c, kind):
    spec = BenchSpec(n=256)
    base = count_ops(generate(spec))
    got = count_ops(coarsen(generate(spec), CoarsenConfig(kind, c, extent="N")))
    assert (got.loads, got.arith, got.stores, got.barriers) == \
        (c * base.loads, c * base.arith, c * base.stores, base.barriers)


def test_baseline_consecutive_four():
    k = coarsen(generate(BenchSpec(n=256)), CoarsenConfig(CONSEC, 4))
    counts = count_ops(k)
    assert (counts.loads, counts.stores) == (32, 4)
    assert counts.arith == 4 * 54
    spec = BenchSpec(n=1024)
    assert same_output(generate(spec), 1024, k, 256, make_buffers(spec))


BARRIER = """__kernel void twostep(__global float *a, __global float *t, __global float *o) {
    int i = get_global_id(0);
    t[i] = a[i] * 2.0f;
    barrier(CLK_GLOBAL_MEM_FENCE);
    o[i] = t[i] + 1.0f;
}"""


@pytest.mark.parametrize("c", [2, 4])
def test_barriers_are_not_replicated(c):
    k = parse(BARRIER)
    out = coarsen(k, CoarsenConfig(CONSEC, c))
    assert count_ops(out).barriers == 1
    assert count_ops(out).stores == 2 * c
    n = 512
    bufs = BufferSet({"a": np.arange(n, dtype=np.float32), "t": np.zeros(n, np.float32),
                      "o": np.zeros(n, np.float32)})
    assert same_output(k, n, out, n // c, bufs, pointer="o")


def test_composition_matches_degree_four():
    spec = BenchSpec(n=1024, divergence="if-in", seed=5)
    k = generate(spec)
    twice = coarsen(coarsen(k, CoarsenConfig(CONSEC, 2)), CoarsenConfig(CONSEC, 2))
    once = coarsen(k, CoarsenConfig(CONSEC, 4))
    assert twice != once
    bufs = make_buffers(spec)
    assert same_output(twice, 256, once, 256, bufs)
    assert same_output(k, 1024, once, 256, bufs)


def test_divergent_regions_replicated_per_lane():
    k = coarsen(generate(BenchSpec(n=64, divergence="if-in")), CoarsenConfig(CONSEC, 2))
    loop = k.body.stmts[0]
    ifs = [s for s in loop.body.stmts if isinstance(s, If)]
    assert [s.cond.left.left.name for s in ifs] == ["c0_0", "c0_1"]


def test_uniform_loop_stays_shared():
    k = coarsen(generate(BenchSpec(n=64, divergence="for-constant+if-id")),
                CoarsenConfig(CONSEC, 4))
    loops = [s for s in walk_stmts(k.body) if isinstance(s, For)]
    assert len(loops) == 2  # grid loop plus one shared i0 loop
    inner = loops[1]
    assert inner.init.name == "i0"
    assert sum(isinstance(s, If) for s in inner.body.stmts) == 4


def test_rename_collision_escalates_separator():
    src = """__kernel void k(__global float *a, __global float *o) {
        int gid = get_global_id(0);
        float x_1 = a[gid];
        float x = x_1 * 2.0f;
        o[gid] = x;
    }"""
    text = print_kernel(coarsen(parse(src), CoarsenConfig(CONSEC, 2)))
    assert "float x__1 = x_1__1 * 2.0f;" in text
    assert "int gid__0 = gid + 0;" in text


@settings(max_examples=25, deadline=None)
@given(
    config=st.sampled_from(DIVERGENCE_CONFIGS),
    ai=st.sampled_from([1, 4, 6, 10]),
    access=st.sampled_from(["direct", "indirect"]),
    kind=st.sampled_from([CONSEC, GAPPED]),
    c=st.sampled_from([2, 4, 8]),
    seed=st.integers(0, 2**16),
)
def test_equivalence_on_microbenchmarks(config, ai, access, kind, c, seed):
    div, deg = config
    irregularity = 3 if access == "indirect" else None
    spec = BenchSpec(ai=ai, access=access, irregularity=irregularity, divergence=div,
                     divergence_degree=deg, n=512, seed=seed)
    k = generate(spec)
    out = coarsen(k, CoarsenConfig(kind, c, extent="N"))
    assert same_output(k, 512, out, 512 // c, make_buffers(spec, trial=seed))


# -- tails -----------------------------------------------------------------------------------

@pytest.mark.parametrize("kind", [CONSEC, GAPPED])
@pytest.mark.parametrize("n", [1000, 1001, 1023])
def test_guard_tails_handle_any_size(mult, kind, n):
    k = coarsen(mult, CoarsenConfig(kind, 8, extent="N", tail_policy="guard-tails"))
    assert verify(mult, k, n, 8, trials=2).ok


def test_guard_tails_on_declaration_anchor():
    src = "__kernel void k(__global float *a, int N) { int i = get_global_id(0); a[i] = a[i] + 1.0f; }"
    k = parse(src)
    for kind in (CONSEC, GAPPED):
        out = coarsen(k, CoarsenConfig(kind, 4, extent="N", tail_policy="guard-tails"))
        assert verify(k, out, 1001, 4, trials=1).ok


# -- rejections ------------------------------------------------------------------------------

@pytest.mark.parametrize("src, config, message", [
    ("__kernel void k(__global float *a) { int i = get_global_id(1); a[i] = 1.0f; }",
     CoarsenConfig(CONSEC, 2), "1-D"),
    ("__kernel void k(__global float *a, int N, int M) {"
     " for (int g = get_global_id(0); g < M + 0; g += get_global_size(0)) { a[g] = 1.0f; } }",
     CoarsenConfig(GAPPED, 2, extent="N"), "bare extent"),
    ("__kernel void k(__global float *a) { float s = 0.0f; int i = get_global_id(0);"
     " s = a[i]; a[i] = s; }", CoarsenConfig(CONSEC, 2), "shared by all work-items"),
    ("__kernel void k(__global float *a) { int i = get_global_id(0);"
     " if (a[i] > 0.0f) { barrier(CLK_GLOBAL_MEM_FENCE); } a[i] = 1.0f; }",
     CoarsenConfig(CONSEC, 2), "barrier inside a divergent region"),
    ("__kernel void k(__global float *a) { __local float t[4]; int i = get_global_id(0);"
     " t[0] = a[i]; }", CoarsenConfig(CONSEC, 2), "local memory"),
    ("__kernel void k(__global float *a, int N) { int i = get_global_id(0);"
     " a[i] = 1.0f; barrier(CLK_GLOBAL_MEM_FENCE); a[i] = 2.0f; }",
     CoarsenConfig(CONSEC, 2, extent="N", tail_policy="guard-tails"), "barriers"),
    ("__kernel void k(__global float *a) { int i = get_global_id(0);"
     " a[i] = (float)get_local_id(0); }", CoarsenConfig(CONSEC, 2), "inside the coarsened"),
    ("__kernel void k(__global float *a) { a[0] = 1.0f; }",
     CoarsenConfig(CONSEC, 2), "no work-item anchor"),
    ("__kernel void k(__global float *a, float N) { int i = get_global_id(0); a[i] = 1.0f; }",
     CoarsenConfig(GAPPED, 2, extent="N"), "int parameter"),
])
def test_rejections(src, config, message):
    with pytest.raises(TransformError, match=message):
        coarsen(parse(src), config)


def test_config_validation():
    with pytest.raises(ValueError):
        CoarsenConfig("diagonal", 2)
    with pytest.raises(ValueError):
        CoarsenConfig(CONSEC, 0)
    with pytest.raises(ValueError, match="extent"):
        CoarsenConfig(GAPPED, 2)
    with pytest.raises(ValueError):
        CoarsenConfig(CONSEC, 2, tail_policy="pad")
