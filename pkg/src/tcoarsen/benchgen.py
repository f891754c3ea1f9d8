"""Microbenchmark kernels: a load phase, an arithmetic chain and one store.

Kernels live in a grid-stride loop over ``gid``. Loaded registers are
``r0 = in{n-1}[gid]`` down to ``r{n-1} = in0[gid]``; the chain then extends
register by register, ``r{t} = r{t-1} <op> r{j}``, and its last value is
stored to ``out0[gid]``. Divergent variants move part of the chain into
branches that update an accumulator.

Arithmetic intensity counts every data-dependent arithmetic node, branch
conditions included, against every global load and store. The generator
sizes the chain so the ratio is exact.
"""

from __future__ import annotations

import functools
import random
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from .analysis import count_ops
from .cache import CacheModel, calibrate, generate_indices
from .interp import BufferSet
from .nodes import (
    Assign, Binary, Block, Call, Decl, For, If, Index, IntLit, Kernel, Param, Store, Var,
)

DIVERGENCE_KINDS = ("none", "if-id", "if-in", "for-constant+if-id", "for-in+if-in")
ACCESS_MODES = ("direct", "indirect")
AI_VALUES = (1, 4, 6, 10)
HIT_RATE_TARGETS = (0.0, 0.4, 0.6, 0.7, 0.8, 0.9)
DEFAULT_HIT_RATE = 0.854
DEFAULT_N = 1 << 20
FULL_N = 64 << 20
CHAIN_OPS = ("+", "-", "*", "/")
FOR_CONSTANT_TRIPS = 5

_DEFAULT_LOADS = {0: 8, 2: 9, 4: 10}


@dataclass(frozen=True)
class BenchSpec:
    num_loads: Optional[int] = None  # None: 8, or 9/10 for divergence degree 2/4
    ai: int = 6
    access: str = "direct"
    irregularity: Optional[int] = None  # indirect only; None calibrates to 85.4% hits
    divergence: str = "none"
    divergence_degree: int = 0
    n: int = DEFAULT_N
    seed: int = 0

    def __post_init__(self):
        if self.num_loads is None:
            object.__setattr__(self, "num_loads", _DEFAULT_LOADS.get(self.divergence_degree, 8))
        if not isinstance(self.ai, int) or self.ai < 1:
            raise ValueError("arithmetic intensity must be a positive integer")
        if self.access not in ACCESS_MODES:
            raise ValueError(f"access mode must be one of {ACCESS_MODES}")
        if self.divergence not in DIVERGENCE_KINDS:
            raise ValueError(f"divergence must be one of {DIVERGENCE_KINDS}")
        if self.divergence_degree not in (0, 2, 4):
            raise ValueError("divergence degree must be 0, 2 or 4")
        if self.divergence_degree and self.divergence != "if-in":
            raise ValueError("a divergence degree needs the if-in pattern")
        if self.num_loads < self.selectors + 1:
            raise ValueError(f"need at least {self.selectors + 1} loads for this divergence")
        if self.n < 1:
            raise ValueError("array length must be positive")
        if self.irregularity is not None:
            if self.access != "indirect":
                raise ValueError("irregularity degree applies to indirect access only")
            if not 1 <= self.irregularity <= self.n:
                raise ValueError("irregularity degree must lie in [1, n]")

    @property
    def selectors(self):
        if self.divergence_degree == 4:
            return 2
        return 1 if self.divergence in ("if-in", "for-in+if-in") else 0

    @property
    def data_loads(self):
        return self.num_loads - self.selectors

    @property
    def total_memory_ops(self):
        return self.num_loads + (self.access == "indirect") + 1

    @property
    def arith_ops(self):
        return self.ai * self.total_memory_ops

    @property
    def name(self):
        slug = {"none": "none", "if-id": "if_id", "if-in": "if_in",
                "for-constant+if-id": "for_const_if_id",
                "for-in+if-in": "for_in_if_in"}[self.divergence]
        name = f"mb_ai{self.ai}_{self.access}_{slug}"
        if self.divergence_degree:
            name += f"_deg{self.divergence_degree}"
        if self.num_loads != _DEFAULT_LOADS.get(self.divergence_degree, 8):
            name += f"_l{self.num_loads}"
        return name

    def to_dict(self):
        return asdict(self)


def _mod(name, k):
    return Binary("%", Var(name), IntLit(k))


def _is_even(name):
    return Binary("==", _mod(name, 2), IntLit(0))


class _Chain:
    """Emits chain arithmetic, consuming every loaded register before reuse."""

    def __init__(self, rng, registers, first):
        self.rng = rng
        self.registers = registers
        pending = [r for r in registers if r != first]
        rng.shuffle(pending)
        self.pending = pending
        self.next_reg = len(registers)
        self.current = first

    def operand(self):
        if self.pending:
            return Var(self.pending.pop())
        return Var(self.rng.choice(self.registers))

    def op(self):
        return self.rng.choice(CHAIN_OPS)

    def registers_stmts(self, count):
        out = []
        for _ in range(count):
            name = f"r{self.next_reg}"
            self.next_reg += 1
            out.append(Decl("float", name, Binary(self.op(), Var(self.current), self.operand())))
            self.current = name
        return out

    def acc_stmts(self, count):
        return [Assign("acc", "=", Binary(self.op(), Var("acc"), self.operand()))
                for _ in range(count)]


def _split(total, parts):
    """``total`` ops over ``parts`` segments; the first segment takes the rest."""
    share = max(1, total // (2 * parts)) if parts else 0
    sizes = [share] * parts
    head = total - sum(sizes)
    if head < 1 or any(s < 1 for s in sizes):
        raise ValueError(f"arithmetic budget {total} too small for {parts} branch bodies")
    return [head] + sizes


def generate(spec: BenchSpec) -> Kernel:
    """Build the microbenchmark kernel described by ``spec``."""
    rng = random.Random(spec.seed)
    nd = spec.data_loads
    indirect = spec.access == "indirect"
    idx_expr = Var("ix") if indirect else Var("gid")

    params = [Param(f"in{i}", "float", True, "global") for i in range(nd)]
    params += [Param(f"sel{i}", "int", True, "global") for i in range(spec.selectors)]
    if indirect:
        params.append(Param("idx", "int", True, "global"))
    params += [Param("N", "int"), Param("out0", "float", True, "global")]

    body = []
    if indirect:
        body.append(Decl("int", "ix", Index("idx", Var("gid"))))
    for i in range(spec.selectors):
        body.append(Decl("int", f"c{i}", Index(f"sel{i}", idx_expr)))
    registers = [f"r{j}" for j in range(nd)]
    for j in range(nd):
        body.append(Decl("float", registers[j], Index(f"in{nd - 1 - j}", idx_expr)))

    chain = _Chain(rng, registers, registers[-1])
    total = spec.arith_ops
    div, deg = spec.divergence, spec.divergence_degree

    if div == "none":
        body += chain.registers_stmts(total)
        result = chain.current
    else:
        if div == "if-in" and deg == 2:
            cond_ops, segments = 1, 2
        elif div == "if-in" and deg == 4:
            cond_ops, segments = 4, 4  # c0 && c1, c0, c1 tests
        elif div == "if-in":
            cond_ops, segments = 1, 1
        elif div == "if-id":
            cond_ops, segments = 0, 1
        elif div == "for-constant+if-id":
            cond_ops, segments = 0, 2
        else:  # for-in+if-in: the loop bound and the branch test
            cond_ops, segments = 2, 2
        sizes = _split(total - cond_ops, segments)
        body += chain.registers_stmts(sizes[0])
        body.append(Decl("float", "acc", Var(chain.current)))
        segs = [Block(tuple(chain.acc_stmts(s))) for s in sizes[1:]]
        if div == "if-id":
            body.append(If(_is_even("gid"), segs[0]))
        elif div == "if-in" and deg == 0:
            body.append(If(_is_even("c0"), segs[0]))
        elif div == "if-in" and deg == 2:
            body.append(If(_is_even("c0"), segs[0], segs[1]))
        elif div == "if-in":
            chained = If(_is_even("c0"), segs[1], If(_is_even("c1"), segs[2], segs[3]))
            body.append(If(Binary("&&", _is_even("c0"), _is_even("c1")), segs[0], chained))
        else:
            test = "gid" if div == "for-constant+if-id" else "c0"
            bound = IntLit(FOR_CONSTANT_TRIPS) if div == "for-constant+if-id" \
                else _mod("c0", FOR_CONSTANT_TRIPS)
            inner = segs[0].stmts + (If(_is_even(test), segs[1]),)
            body.append(For(Decl("int", "i0", IntLit(0)), Binary("<", Var("i0"), bound),
                            Assign("i0", "++"), Block(inner)))
        result = "acc"
    body.append(Store("out0", Var("gid"), Var(result)))

    loop = For(Decl("int", "gid", _call("get_global_id")),
               Binary("<", Var("gid"), Var("N")),
               Assign("gid", "+=", _call("get_global_size")),
               Block(tuple(body)))
    doc = (f"microbenchmark: loads={spec.num_loads} ai={spec.ai} access={spec.access} "
           f"divergence={spec.divergence} degree={spec.divergence_degree} seed={spec.seed}",)
    kernel = Kernel(spec.name, tuple(params), Block((loop,)), doc=doc)
    counts = count_ops(kernel)
    assert counts.arith == spec.ai * counts.memory, (counts, spec)
    return kernel


def _call(name):
    return Call(name, (IntLit(0),))


# -- inputs -----------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def default_irregularity(n: int, seed: int = 0, target: float = DEFAULT_HIT_RATE) -> int:
    """Irregularity degree that gives the default cache hit rate."""
    return calibrate(target, CacheModel(), n, seed).degree


def resolved_irregularity(spec: BenchSpec) -> Optional[int]:
    if spec.access != "indirect":
        return None
    if spec.irregularity is not None:
        return spec.irregularity
    return default_irregularity(spec.n, spec.seed)


def buffer_manifest(spec: BenchSpec) -> list:
    """What each kernel argument holds, in parameter order."""
    out = []
    for i in range(spec.data_loads):
        out.append({"name": f"in{i}", "dtype": "float32", "length": spec.n,
                    "init": "uniform[0.5,1.5)"})
    for i in range(spec.selectors):
        out.append({"name": f"sel{i}", "dtype": "int32", "length": spec.n,
                    "init": "uniform-int[0,n)"})
    if spec.access == "indirect":
        out.append({"name": "idx", "dtype": "int32", "length": spec.n,
                    "init": f"index-runs D={resolved_irregularity(spec)}"})
    out.append({"name": "N", "dtype": "int32", "value": spec.n})
    out.append({"name": "out0", "dtype": "float32", "length": spec.n, "init": "zeros"})
    return out


def make_buffers(spec: BenchSpec, trial: int = 0) -> BufferSet:
    """Random inputs for one trial; the index array is fixed by ``spec.seed``."""
    rng = np.random.default_rng([spec.seed, trial])
    arrays = {}
    for i in range(spec.data_loads):
        arrays[f"in{i}"] = (rng.random(spec.n, dtype=np.float32) + np.float32(0.5))
    for i in range(spec.selectors):
        arrays[f"sel{i}"] = rng.integers(0, spec.n, spec.n, dtype=np.int32)
    if spec.access == "indirect":
        arrays["idx"] = generate_indices(spec.n, resolved_irregularity(spec), spec.seed).values
    arrays["out0"] = np.zeros(spec.n, dtype=np.float32)
    return BufferSet(arrays, {"N": spec.n})


# -- grids -----------------------------------------------------------------

DIVERGENCE_CONFIGS = (
    ("none", 0), ("if-id", 0), ("if-in", 0), ("for-constant+if-id", 0),
    ("for-in+if-in", 0), ("if-in", 2), ("if-in", 4),
)


def full_grid(n: int = DEFAULT_N, seed: int = 0) -> list:
    """Every AI value x access mode x divergence configuration (56 specs)."""
    return [BenchSpec(ai=ai, access=access, divergence=div, divergence_degree=deg,
                      n=n, seed=seed)
            for ai in AI_VALUES for access in ACCESS_MODES
            for div, deg in DIVERGENCE_CONFIGS]


def sweep_grid(n: int = DEFAULT_N, seed: int = 0) -> list:
    """One-factor sweeps around the default: AI, divergence, degree, hit rate.

    Returns ``(spec, hit_rate_target)`` pairs; the target is None except for
    the cache sweep, whose specs carry the calibrated irregularity degree.
    """
    base = BenchSpec(n=n, seed=seed)
    out = [(replace(base, ai=ai), None) for ai in AI_VALUES]
    out += [(replace(base, divergence=d), None) for d in DIVERGENCE_KINDS[1:]]
    out += [(BenchSpec(divergence="if-in", divergence_degree=g, n=n, seed=seed), None)
            for g in (0, 2, 4)]
    for target in HIT_RATE_TARGETS:
        d = calibrate(target, CacheModel(), n, seed).degree
        out.append((replace(base, access="indirect", irregularity=d), target))
    return out
