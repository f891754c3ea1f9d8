"""Reference NDRange interpreter.

Work-items run in lockstep over numpy lane vectors with per-lane activity
masks. A batch always holds whole work-groups, so at a barrier every item of
a group has finished the previous phase before any item starts the next one.
For race-free kernels this is observably identical to running each item in
ascending id order up to the barrier.

Arithmetic follows OpenCL-C: ``float`` is IEEE single precision (numpy
float32, round-to-nearest-even), ``int``/``uint`` are 32-bit with wrap-around,
integer ``/`` and ``%`` truncate toward zero and division by zero is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import Taint, is_counted_arith, memory_pointers
from .errors import (
    BarrierDivergenceError, DataRaceError, ExecutionError, OutOfBoundsError,
)
from .nodes import (
    Assign, Barrier, Binary, Block, Call, Cast, Decl, FloatLit, For, If, Index,
    IntLit, Kernel, Store, Unary, Var, walk_stmts,
)

DTYPES = {"int": np.dtype(np.int32), "uint": np.dtype(np.uint32), "float": np.dtype(np.float32)}
DEFAULT_MAX_LOCAL = 256
DEFAULT_BATCH = 1 << 16
MAX_LOOP_ITERATIONS = 10_000_000


@dataclass(frozen=True)
class LaunchConfig:
    global_size: int
    local_size: Optional[int] = None

    def __post_init__(self):
        if self.global_size < 1:
            raise ValueError("global size must be positive")
        if self.local_size is None:
            object.__setattr__(self, "local_size", min(self.global_size, DEFAULT_MAX_LOCAL))
        if self.local_size < 1 or self.global_size % self.local_size:
            raise ValueError(
                f"local size {self.local_size} must divide global size {self.global_size}")

    @property
    def num_groups(self):
        return self.global_size // self.local_size


@dataclass
class BufferSet:
    """Global arrays keyed by pointer-param name plus scalar argument values.

    ``local_sizes`` gives element counts for ``__local`` pointer params.
    """
    arrays: dict = field(default_factory=dict)
    scalars: dict = field(default_factory=dict)
    local_sizes: dict = field(default_factory=dict)

    def copy(self):
        return BufferSet({k: np.array(v, copy=True) for k, v in self.arrays.items()},
                         dict(self.scalars), dict(self.local_sizes))


@dataclass
class ExecStats:
    work_items: int = 0
    loads: int = 0
    stores: int = 0
    arith: int = 0
    barriers: int = 0
    branches_taken: int = 0

    def as_dict(self):
        return dict(self.__dict__)


@dataclass
class ExecResult:
    buffers: dict
    stats: ExecStats
    writers: dict  # pointer -> last writing work-item per element (-1 if none)


# -- masks ---------------------------------------------------------------

class Active:
    """Lane activity: ``mask`` is None when every lane of the batch is active."""
    __slots__ = ("mask", "count", "_bits")

    def __init__(self, mask, count):
        self.mask = mask
        self.count = count
        self._bits = None

    @property
    def bits(self):
        """The mask as uint32 all-ones / zeros, for bitwise blending."""
        if self._bits is None:
            self._bits = (-self.mask.view(np.uint8).astype(np.int32)).view(np.uint32)
        return self._bits

    def narrow(self, cond):
        """Lanes that are active and where ``cond`` is non-zero."""
        if np.ndim(cond) == 0:
            return self if cond else None
        c = cond != 0
        if self.mask is not None:
            c &= self.mask
        n = int(np.count_nonzero(c))
        if n == 0:
            return None
        if n == c.size:
            return Active(None, n)
        return Active(c, n)

    def minus(self, cond):
        if np.ndim(cond) == 0:
            return None if cond else self
        c = cond == 0
        if self.mask is not None:
            c &= self.mask
        n = int(np.count_nonzero(c))
        if n == 0:
            return None
        return Active(None if n == c.size else c, n)


# -- typed arithmetic ------------------------------------------------------

def _promote(ta, tb):
    if "float" in (ta, tb):
        return "float"
    if "uint" in (ta, tb):
        return "uint"
    return "int"


def _cast(v, ty):
    dt = DTYPES[ty]
    if isinstance(v, np.ndarray):
        return v if v.dtype == dt else v.astype(dt)
    return dt.type(v)


def _safe_divisor(b, act, lanes):
    """Raise on a zero divisor in an active lane; neutralize inactive ones."""
    if np.ndim(b) == 0:
        if b == 0:
            raise ExecutionError("integer division by zero")
        return b
    zero = b == 0
    if act.mask is not None:
        bad = zero & act.mask
    else:
        bad = zero
    if bad.any():
        lane = int(np.argmax(bad))
        raise ExecutionError(f"integer division by zero in work-item {int(lanes.gids[lane])}")
    if zero.any():
        b = np.where(zero, np.ones_like(b), b)
    return b


def _int_div(a, b, ty):
    if ty == "uint":
        return a // b
    q = np.abs(a) // np.abs(b)
    neg = (a < 0) != (b < 0)
    return _cast(np.where(neg, -q, q), "int")


def _int_mod(a, b, ty):
    if ty == "uint":
        return a % b
    return _cast(a - b * _int_div(a, b, ty), "int")


# -- lane context ----------------------------------------------------------

class Lanes:
    """Per-batch lane identities; lanes are laid out group by group."""

    def __init__(self, gids, launch, groups):
        self.gids = gids  # int64 global ids
        self.n = gids.size
        self.gid32 = gids.astype(np.int32)
        self.lid32 = (gids % launch.local_size).astype(np.int32)
        self.group = gids // launch.local_size
        self.groups = np.asarray(groups, dtype=np.int64)
        self.group_slot = np.arange(self.n, dtype=np.int64) // launch.local_size
        self.launch = launch


class Frame:
    __slots__ = ("slots",)

    def __init__(self, nslots):
        self.slots = [None] * nslots


# -- compiler -------------------------------------------------------------

class _Scope:
    def __init__(self):
        self.stack = [{}]
        self.nslots = 0
        self.types = []

    def push(self):
        self.stack.append({})

    def pop(self):
        self.stack.pop()

    def declare(self, name, ty):
        slot = self.nslots
        self.nslots += 1
        self.types.append(ty)
        self.stack[-1][name] = slot
        return slot

    def lookup(self, name):
        for d in reversed(self.stack):
            if name in d:
                return d[name]
        return None


class Program:
    """A kernel compiled to closures; reusable across launches."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        self.taint = Taint(kernel)
        self.mem = memory_pointers(kernel)
        self.scope = _Scope()
        self.params = {p.name: p for p in kernel.params}
        self.local_arrays = {}  # name -> (type, size or None for pointer params)
        for p in kernel.params:
            if p.pointer and p.space == "local":
                self.local_arrays[p.name] = (p.type, None)
        # scalar params that are written become private per-lane variables
        written = {s.name for s in walk_stmts(kernel.body) if isinstance(s, Assign)}
        self.param_slots = {}
        for p in kernel.params:
            if not p.pointer and p.name in written:
                self.param_slots[p.name] = self.scope.declare(p.name, p.type)
        self.body = self.block(kernel.body)

    def enter(self, run, frame):
        for name, slot in self.param_slots.items():
            frame.slots[slot] = run.scalars[name]

    # expressions return (fn(run, frame, act, lanes) -> value, type)

    def expr(self, e, in_index=False):
        fn, ty = self._expr(e, in_index)
        if not in_index and is_counted_arith(e, self.taint):
            inner = fn

            def fn(run, fr, act, lanes, inner=inner):
                run.stats.arith += act.count
                return inner(run, fr, act, lanes)
        return fn, ty

    def _expr(self, e, in_index):
        if isinstance(e, IntLit):
            ty = "uint" if e.unsigned else "int"
            v = DTYPES[ty].type(e.value)
            return (lambda run, fr, act, lanes: v), ty
        if isinstance(e, FloatLit):
            v = np.float32(e.value)
            return (lambda run, fr, act, lanes: v), "float"
        if isinstance(e, Var):
            slot = self.scope.lookup(e.name)
            if slot is not None:
                ty = self.scope.types[slot]

                def read(run, fr, act, lanes, slot=slot, ty=ty):
                    v = fr.slots[slot]
                    if v is None:
                        return DTYPES[ty].type(0)
                    return v
                return read, ty
            p = self.params.get(e.name)
            if p is None or p.pointer:
                raise ExecutionError(f"unknown scalar '{e.name}'")
            name = e.name
            return (lambda run, fr, act, lanes: run.scalars[name]), p.type
        if isinstance(e, Index):
            return self._load(e)
        if isinstance(e, Call):
            return self._call(e, in_index)
        if isinstance(e, Cast):
            inner, _ = self.expr(e.operand, in_index)
            ty = e.type
            return (lambda run, fr, act, lanes: _cast(inner(run, fr, act, lanes), ty)), ty
        if isinstance(e, Unary):
            inner, ty = self.expr(e.operand, in_index)
            if e.op == "-":
                return (lambda run, fr, act, lanes: _cast(-inner(run, fr, act, lanes), ty)), ty
            return (lambda run, fr, act, lanes:
                    _cast(inner(run, fr, act, lanes) == 0, "int")), "int"
        if isinstance(e, Binary):
            return self._binary(e, in_index)
        raise ExecutionError(f"cannot evaluate {e!r}")

    def _binary(self, e, in_index):
        op = e.op
        lf, lt = self.expr(e.left, in_index)
        rf, rt = self.expr(e.right, in_index)
        if op in ("&&", "||"):
            def logic(run, fr, act, lanes):
                a = lf(run, fr, act, lanes) != 0
                sub = act.narrow(a) if op == "&&" else act.minus(a)
                if sub is None:
                    return _cast(a, "int")
                b = rf(run, fr, sub, lanes) != 0
                return _cast((a & b) if op == "&&" else (a | b), "int")
            return logic, "int"
        ty = _promote(lt, rt)
        if op in ("<", "<=", ">", ">=", "==", "!="):
            cmp = {"<": np.less, "<=": np.less_equal, ">": np.greater,
                   ">=": np.greater_equal, "==": np.equal, "!=": np.not_equal}[op]

            def compare(run, fr, act, lanes):
                a = _cast(lf(run, fr, act, lanes), ty)
                b = _cast(rf(run, fr, act, lanes), ty)
                return _cast(cmp(a, b), "int")
            return compare, "int"
        if op == "%" and ty == "float":
            raise ExecutionError("'%' is not defined for float operands")
        if ty != "float" and op in ("/", "%"):
            fdiv = _int_div if op == "/" else _int_mod

            def intdiv(run, fr, act, lanes):
                a = _cast(lf(run, fr, act, lanes), ty)
                b = _safe_divisor(_cast(rf(run, fr, act, lanes), ty), act, lanes)
                return fdiv(a, b, ty)
            return intdiv, ty
        ufunc = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}[op]

        def arith(run, fr, act, lanes):
            a = _cast(lf(run, fr, act, lanes), ty)
            b = _cast(rf(run, fr, act, lanes), ty)
            return _cast(ufunc(a, b), ty)
        return arith, ty

    def _call(self, e, in_index):
        f = e.func
        if f.startswith("get_"):
            dim = e.args[0].value
            if f == "get_global_id":
                return ((lambda run, fr, act, lanes: lanes.gid32) if dim == 0 else
                        (lambda run, fr, act, lanes: np.int32(0))), "int"
            if f == "get_local_id":
                return ((lambda run, fr, act, lanes: lanes.lid32) if dim == 0 else
                        (lambda run, fr, act, lanes: np.int32(0))), "int"
            if f == "get_group_id":
                return ((lambda run, fr, act, lanes: lanes.group.astype(np.int32)) if dim == 0
                        else (lambda run, fr, act, lanes: np.int32(0))), "int"
            if f == "get_global_size":
                return ((lambda run, fr, act, lanes: np.int32(lanes.launch.global_size))
                        if dim == 0 else (lambda run, fr, act, lanes: np.int32(1))), "int"
            if f == "get_local_size":
                return ((lambda run, fr, act, lanes: np.int32(lanes.launch.local_size))
                        if dim == 0 else (lambda run, fr, act, lanes: np.int32(1))), "int"
        args = [self.expr(a, in_index) for a in e.args]
        if f in ("min", "max"):
            (af, at), (bf, bt) = args
            ty = _promote(at, bt)
            u = np.minimum if f == "min" else np.maximum
            return (lambda run, fr, act, lanes:
                    u(_cast(af(run, fr, act, lanes), ty), _cast(bf(run, fr, act, lanes), ty))), ty
        (af, at), = args
        if f == "fabs":
            return (lambda run, fr, act, lanes: np.abs(_cast(af(run, fr, act, lanes), "float"))), "float"
        if f == "sqrt":
            return (lambda run, fr, act, lanes: np.sqrt(_cast(af(run, fr, act, lanes), "float"))), "float"
        raise ExecutionError(f"unsupported call {f}")

    def _load(self, e):
        name = e.array
        idx_fn, _ = self.expr(e.index, in_index=True)
        counted = name in self.mem
        if name in self.local_arrays or self.scope.lookup(name) is not None:
            def load_local(run, fr, act, lanes):
                arr = run.local[name]
                idx = _cast(idx_fn(run, fr, act, lanes), "int").astype(np.int64)
                idx = _check_bounds(idx, arr.shape[1], act, lanes, name)
                return arr[lanes.group_slot, idx]
            return load_local, self._array_type(name)
        if name not in self.params:
            raise ExecutionError(f"unknown array '{name}'")

        def load(run, fr, act, lanes):
            arr = run.buffers[name]
            idx = _cast(idx_fn(run, fr, act, lanes), "int")
            idx = _check_bounds(idx, arr.size, act, lanes, name)
            if counted:
                run.stats.loads += act.count
            return arr[idx]
        return load, self.params[name].type

    def _array_type(self, name):
        if name in self.local_arrays:
            return self.local_arrays[name][0]
        raise ExecutionError(f"unknown array '{name}'")

    # statements return fn(run, frame, act, lanes) -> None

    def block(self, b: Block, new_scope=True):
        if new_scope:
            self.scope.push()
        fns = [self.stmt(s) for s in b.stmts]
        if new_scope:
            self.scope.pop()

        def run_block(run, fr, act, lanes):
            for f in fns:
                f(run, fr, act, lanes)
        return run_block

    def stmt(self, s):
        if isinstance(s, Decl):
            return self._decl(s)
        if isinstance(s, Assign):
            return self._assign(s)
        if isinstance(s, Store):
            return self._store(s)
        if isinstance(s, Block):
            return self.block(s)
        if isinstance(s, If):
            return self._if(s)
        if isinstance(s, For):
            return self._for(s)
        if isinstance(s, Barrier):
            return _barrier
        raise ExecutionError(f"unsupported statement {s!r}")

    def _decl(self, s):
        if s.array_size is not None:
            self.local_arrays[s.name] = (s.type, s.array_size)
            self.scope.stack[-1][s.name] = None
            return lambda run, fr, act, lanes: None
        init = self.expr(s.init)[0] if s.init is not None else None
        slot = self.scope.declare(s.name, s.type)
        ty = s.type
        return _make_write(slot, ty, init)

    def _assign(self, s):
        slot = self.scope.lookup(s.name)
        if slot is None:
            raise ExecutionError(f"assignment to unknown variable '{s.name}'")
        ty = self.scope.types[slot]
        if s.op == "=":
            return _make_write(slot, ty, self.expr(s.value)[0])
        op = {"+=": "+", "-=": "-", "*=": "*", "/=": "/", "%=": "%", "++": "+", "--": "-"}[s.op]
        value = s.value if s.value is not None else IntLit(1)
        fn, _ = self.expr(Binary(op, Var(s.name), value))
        return _make_write(slot, ty, fn)

    def _store(self, s):
        name = s.array
        idx_fn, _ = self.expr(s.index, in_index=True)
        val_fn, _ = self.expr(s.value)
        if name in self.local_arrays:
            ty = self.local_arrays[name][0]

            def store_local(run, fr, act, lanes):
                arr = run.local[name]
                idx = _cast(idx_fn(run, fr, act, lanes), "int").astype(np.int64)
                val = _cast(val_fn(run, fr, act, lanes), ty)
                idx = _check_bounds(idx, arr.shape[1], act, lanes, name)
                rows = lanes.group_slot
                idx = np.broadcast_to(idx, (lanes.n,))
                val = np.broadcast_to(val, (lanes.n,))
                if act.mask is not None:
                    rows, idx, val = rows[act.mask], idx[act.mask], val[act.mask]
                arr[rows, idx] = val
            return store_local
        p = self.params.get(name)
        if p is None or not p.pointer:
            raise ExecutionError(f"unknown array '{name}'")
        if p.space == "constant":
            raise ExecutionError(f"store to __constant pointer '{name}'")
        ty = p.type
        counted = name in self.mem

        def store(run, fr, act, lanes):
            arr = run.buffers[name]
            idx = _cast(idx_fn(run, fr, act, lanes), "int")
            val = _cast(val_fn(run, fr, act, lanes), ty)
            idx = _check_bounds(idx, arr.size, act, lanes, name)
            ids = lanes.gids
            idx = np.broadcast_to(idx, (lanes.n,))
            val = np.broadcast_to(val, (lanes.n,))
            if act.mask is not None:
                ids, idx, val = ids[act.mask], idx[act.mask], val[act.mask]
            groups = ids // lanes.launch.local_size
            owner = run.group_writer[name]
            prev_group = owner[idx]
            foreign = (prev_group >= 0) & (prev_group != groups)
            if foreign.any():
                k = int(np.argmax(foreign))
                raise DataRaceError(name, int(idx[k]), int(run.last_writer[name][idx[k]]),
                                    int(ids[k]))
            owner[idx] = groups
            writer = run.phase_writer[name]
            prev = writer[idx]
            clash = (prev >= 0) & (prev != ids)
            if clash.any():
                k = int(np.argmax(clash))
                raise DataRaceError(name, int(idx[k]), int(prev[k]), int(ids[k]))
            writer[idx] = ids
            back = writer[idx]
            dup = back != ids
            if dup.any():
                k = int(np.argmax(dup))
                raise DataRaceError(name, int(idx[k]), int(ids[k]), int(back[k]))
            arr[idx] = val
            run.last_writer[name][idx] = ids
            if counted:
                run.stats.stores += act.count
        return store

    def _if(self, s):
        cond, _ = self.expr(s.cond)
        then = self.block(s.then)
        if s.orelse is None:
            other = None
        elif isinstance(s.orelse, If):
            other = self._if(s.orelse)
        else:
            other = self.block(s.orelse)

        def run_if(run, fr, act, lanes):
            c = cond(run, fr, act, lanes)
            taken = act.narrow(c)
            if taken is not None:
                run.stats.branches_taken += taken.count
                then(run, fr, taken, lanes)
            if other is not None:
                rest = act.minus(c)
                if rest is not None:
                    other(run, fr, rest, lanes)
        return run_if

    def _for(self, s):
        self.scope.push()
        init = self.stmt(s.init) if s.init is not None else None
        cond = self.expr(s.cond)[0] if s.cond is not None else None
        step = self.stmt(s.step) if s.step is not None else None
        body = self.block(s.body)
        self.scope.pop()

        def run_for(run, fr, act, lanes):
            if init is not None:
                init(run, fr, act, lanes)
            live = act
            for _ in range(MAX_LOOP_ITERATIONS):
                if cond is not None:
                    live = live.narrow(cond(run, fr, live, lanes))
                    if live is None:
                        return
                body(run, fr, live, lanes)
                if step is not None:
                    step(run, fr, live, lanes)
            raise ExecutionError("loop iteration limit exceeded")
        return run_for


def _make_write(slot, ty, value_fn):
    dt = DTYPES[ty]

    def write(run, fr, act, lanes):
        if value_fn is None:
            new = dt.type(0)
        else:
            new = _cast(value_fn(run, fr, act, lanes), ty)
        if act.mask is None:
            fr.slots[slot] = new
            return
        old = fr.slots[slot]
        if old is None:
            old = dt.type(0)
        fr.slots[slot] = _blend(act.bits, new, old, dt)
    return write


def _blend(bits, new, old, dt):
    """Bitwise select: ``new`` where ``bits`` is all-ones, else ``old``.

    Branch-free, so much faster than ``np.where`` on irregular masks; every
    scalar type is 32 bits wide.
    """
    ov = np.asarray(old, dtype=dt).view(np.uint32)
    r = np.asarray(new, dtype=dt).view(np.uint32) ^ ov
    r = r & bits
    r ^= ov
    return r.view(dt)


def _check_bounds(idx, length, act, lanes, name):
    if np.ndim(idx) == 0:
        if not 0 <= int(idx) < length:
            lane = 0 if act.mask is None else int(np.argmax(act.mask))
            raise OutOfBoundsError(int(lanes.gids[lane]), name, int(idx), length)
        return idx
    bad = (idx < 0) | (idx >= length)
    if act.mask is not None:
        bad &= act.mask
    if bad.any():
        lane = int(np.argmax(bad))
        raise OutOfBoundsError(int(lanes.gids[lane]), name, int(idx[lane]), length)
    if act.mask is not None:
        idx = np.where(act.mask, idx, 0)
    return idx


def _barrier(run, fr, act, lanes):
    size = lanes.launch.local_size
    if act.mask is None:
        arrived_groups = lanes.groups
    else:
        counts = np.bincount(lanes.group_slot[act.mask], minlength=lanes.groups.size)
        partial = (counts != 0) & (counts != size)
        if partial.any():
            g = int(np.argmax(partial))
            raise BarrierDivergenceError(int(lanes.groups[g]), int(counts[g]), size)
        arrived_groups = lanes.groups[counts == size]
    run.stats.barriers += act.count
    for writer in run.phase_writer.values():
        owner = writer // size
        writer[(writer >= 0) & np.isin(owner, arrived_groups)] = -1


# -- driver -----------------------------------------------------------------

class _Run:
    def __init__(self, buffers, scalars):
        self.buffers = buffers
        self.scalars = scalars
        self.stats = ExecStats()
        sizes = {k: v.size for k, v in buffers.items()}
        self.phase_writer = _WriterMap(sizes)
        self.last_writer = _WriterMap(sizes)
        self.group_writer = _WriterMap(sizes)
        self.local = {}


class _WriterMap(dict):
    """Per-buffer work-item ids (-1: none), allocated on first use."""

    def __init__(self, sizes):
        super().__init__()
        self.sizes = sizes

    def __missing__(self, name):
        arr = np.full(self.sizes[name], -1, dtype=np.int64)
        self[name] = arr
        return arr


def _prepare(kernel, bufs):
    arrays, scalars = {}, {}
    for p in kernel.params:
        if p.pointer and p.space == "local":
            if p.name not in bufs.local_sizes:
                raise ExecutionError(f"no local size given for __local pointer '{p.name}'")
            continue
        if p.pointer:
            if p.name not in bufs.arrays:
                raise ExecutionError(f"missing buffer for pointer parameter '{p.name}'")
            a = np.asarray(bufs.arrays[p.name])
            if a.ndim != 1:
                raise ExecutionError(f"buffer '{p.name}' must be one-dimensional")
            want = DTYPES[p.type]
            if a.dtype != want:
                if a.dtype.kind != want.kind and not (a.dtype.kind in "iu" and want.kind in "iu"):
                    raise ExecutionError(
                        f"buffer '{p.name}' has dtype {a.dtype}, expected {want}")
            arrays[p.name] = np.array(a, dtype=want, copy=True)
        else:
            if p.name not in bufs.scalars:
                raise ExecutionError(f"missing value for scalar parameter '{p.name}'")
            scalars[p.name] = _cast(bufs.scalars[p.name], p.type)
    return arrays, scalars


def interpret(kernel: Kernel, launch: LaunchConfig, buffers: BufferSet, *,
              group_order="forward", batch_size=DEFAULT_BATCH, program=None) -> ExecResult:
    """Execute every work-item of a 1-D NDRange launch.

    ``group_order`` is ``"forward"``, ``"reverse"`` or an explicit sequence of
    group ids; batches of whole groups are processed in that order.
    """
    prog = program if program is not None else Program(kernel)
    arrays, scalars = _prepare(kernel, buffers)
    run = _Run(arrays, scalars)
    ngroups = launch.num_groups
    L = launch.local_size
    if isinstance(group_order, str):
        if group_order == "forward":
            order = np.arange(ngroups, dtype=np.int64)
        elif group_order == "reverse":
            order = np.arange(ngroups, dtype=np.int64)[::-1]
        else:
            raise ValueError(f"unknown group order {group_order!r}")
    else:
        order = np.asarray(list(group_order), dtype=np.int64)
        if sorted(order.tolist()) != list(range(ngroups)):
            raise ValueError("group order must be a permutation of all group ids")
    per_batch = max(1, batch_size // L)
    offsets = np.arange(L, dtype=np.int64)
    with np.errstate(all="ignore"):
        for start in range(0, ngroups, per_batch):
            groups = order[start:start + per_batch]
            gids = (groups[:, None] * L + offsets[None, :]).ravel()
            lanes = Lanes(gids, launch, groups)
            run.local = _alloc_local(prog, buffers, groups.size)
            frame = Frame(prog.scope.nslots)
            prog.enter(run, frame)
            prog.body(run, frame, Active(None, lanes.n), lanes)
            run.stats.work_items += lanes.n
    return ExecResult(run.buffers, run.stats, run.last_writer)


def _alloc_local(prog, buffers, ngroups):
    local = {}
    for name, (ty, size) in prog.local_arrays.items():
        if size is None:
            size = int(buffers.local_sizes[name])
        local[name] = np.zeros((ngroups, size), dtype=DTYPES[ty])
    return local
