"""Dataflow facts shared by the transforms, the LSU model and the interpreter.

Taint is tracked flow-insensitively: a variable carries ``DIRECT`` if any
value assigned to it derives from a work-item id builtin, and ``INDIRECT``
if any derives from a memory load. Index taint does not flow into the
loaded value, so ``in[gid]`` is INDIRECT only.
"""

from __future__ import annotations

from dataclasses import dataclass

from .nodes import (
    ARITH_OPS, MATH_FUNCTIONS, Assign, Barrier, Binary, Call, Cast, Decl, For,
    If, Index, IntLit, Kernel, Store, Unary, Var, all_exprs, walk_stmts,
)
from .printer import expr_str

DIRECT = "direct"
INDIRECT = "indirect"
NONE = "none"

ID_BUILTINS = ("get_global_id", "get_local_id", "get_group_id")

EMPTY = frozenset()


class Taint:
    """Per-variable taint sets for one kernel."""

    def __init__(self, kernel: Kernel):
        self.kernel = kernel
        self.vars: dict = {}
        self._solve()

    def expr(self, e) -> frozenset:
        if isinstance(e, Var):
            return self.vars.get(e.name, EMPTY)
        if isinstance(e, Index):
            return frozenset((INDIRECT,))
        if isinstance(e, Call):
            if e.func in ID_BUILTINS:
                return frozenset((DIRECT,))
            if e.func in MATH_FUNCTIONS:
                return frozenset().union(*(self.expr(a) for a in e.args))
            return EMPTY
        if isinstance(e, Binary):
            return self.expr(e.left) | self.expr(e.right)
        if isinstance(e, (Unary, Cast)):
            return self.expr(e.operand)
        return EMPTY

    def _solve(self):
        assigns = []
        for s in walk_stmts(self.kernel.body):
            if isinstance(s, Decl) and s.init is not None:
                assigns.append((s.name, s.init))
            elif isinstance(s, Assign) and s.value is not None:
                assigns.append((s.name, s.value))
        changed = True
        while changed:
            changed = False
            for name, value in assigns:
                old = self.vars.get(name, EMPTY)
                new = old | self.expr(value)
                if new != old:
                    self.vars[name] = new
                    changed = True


def label_of(taint: frozenset) -> str:
    if INDIRECT in taint:
        return INDIRECT
    if DIRECT in taint:
        return DIRECT
    return NONE


def _is_builtin(e, func, dim=0):
    return (isinstance(e, Call) and e.func == func and len(e.args) == 1
            and isinstance(e.args[0], IntLit) and e.args[0].value == dim)


def id_multiplier(e):
    """``c`` if ``e`` is ``get_global_id(0)`` (c=1) or ``get_global_id(0) * c``."""
    if _is_builtin(e, "get_global_id"):
        return 1
    if (isinstance(e, Binary) and e.op == "*" and _is_builtin(e.left, "get_global_id")
            and isinstance(e.right, IntLit) and e.right.value >= 1):
        return e.right.value
    return None


def size_multiplier(e):
    if _is_builtin(e, "get_global_size"):
        return 1
    if (isinstance(e, Binary) and e.op == "*" and _is_builtin(e.left, "get_global_size")
            and isinstance(e.right, IntLit) and e.right.value >= 1):
        return e.right.value
    return None


@dataclass(frozen=True)
class GridLoop:
    """A grid-stride work-distribution loop ``for (v = id*c; ...; v += size*c)``."""
    var: str
    multiplier: int


def grid_loop(s):
    if not isinstance(s, For) or s.init is None or s.step is None:
        return None
    init = s.init
    if isinstance(init, Decl):
        name, value = init.name, init.init
    elif isinstance(init, Assign) and init.op == "=":
        name, value = init.name, init.value
    else:
        return None
    if value is None:
        return None
    c = id_multiplier(value)
    if c is None:
        return None
    step = s.step
    if step.name != name or step.op != "+=" or size_multiplier(step.value) != c:
        return None
    return GridLoop(name, c)


@dataclass(frozen=True)
class BranchLabel:
    kind: str  # "if" or "for"
    condition: str
    label: str
    taint: frozenset


def classify_divergence(kernel: Kernel) -> list:
    """Label every if/for condition as none, direct or indirect.

    Grid-stride work-distribution loops are labelled ``none``: under the
    coarsening divisibility obligation every work-item runs the same trip
    count.
    """
    taint = Taint(kernel)
    out = []

    def visit_if(s):
        t = taint.expr(s.cond)
        out.append(BranchLabel("if", expr_str(s.cond), label_of(t), t))

    for s in walk_stmts(kernel.body):
        if isinstance(s, If):
            visit_if(s)
        elif isinstance(s, For):
            cond = expr_str(s.cond) if s.cond is not None else ""
            if grid_loop(s) is not None:
                out.append(BranchLabel("for", cond, NONE, EMPTY))
                continue
            t = taint.expr(s.cond) if s.cond is not None else EMPTY
            out.append(BranchLabel("for", cond, label_of(t), t))
    return out


def kernel_divergence(kernel: Kernel) -> str:
    labels = {b.label for b in classify_divergence(kernel)}
    if INDIRECT in labels:
        return INDIRECT
    if DIRECT in labels:
        return DIRECT
    return NONE


def memory_pointers(kernel: Kernel) -> set:
    return {p.name for p in kernel.params if p.pointer and p.space in ("global", "constant")}


@dataclass(frozen=True)
class OpCounts:
    loads: int
    stores: int
    arith: int
    barriers: int

    @property
    def memory(self):
        return self.loads + self.stores


def is_counted_arith(e, taint: Taint) -> bool:
    """Data arithmetic: an arithmetic node whose operands carry loaded data.

    Index/address computations (builtins, params, lane offsets) are excluded,
    as are nodes inside array subscripts.
    """
    if isinstance(e, Binary) and e.op in ARITH_OPS:
        return INDIRECT in taint.expr(e)
    if isinstance(e, Unary) and e.op == "-":
        return INDIRECT in taint.expr(e)
    if isinstance(e, Call) and e.func in MATH_FUNCTIONS:
        return INDIRECT in taint.expr(e)
    return False


def count_ops(kernel: Kernel) -> OpCounts:
    """Static counts of global loads, global stores, data arithmetic, barriers."""
    taint = Taint(kernel)
    mem = memory_pointers(kernel)
    loads = stores = arith = barriers = 0

    def visit(e, in_index):
        nonlocal loads, arith
        if isinstance(e, Index):
            if e.array in mem:
                loads += 1
            visit(e.index, True)
            return
        if not in_index and is_counted_arith(e, taint):
            arith += 1
        if isinstance(e, Binary):
            visit(e.left, in_index)
            visit(e.right, in_index)
        elif isinstance(e, (Unary, Cast)):
            visit(e.operand, in_index)
        elif isinstance(e, Call):
            for a in e.args:
                visit(a, in_index)

    for s in walk_stmts(kernel.body):
        if isinstance(s, Decl) and s.init is not None:
            visit(s.init, False)
        elif isinstance(s, Assign) and s.value is not None:
            visit(s.value, False)
        elif isinstance(s, Store):
            if s.array in mem:
                stores += 1
            visit(s.index, True)
            visit(s.value, False)
        elif isinstance(s, If):
            visit(s.cond, False)
        elif isinstance(s, For) and s.cond is not None:
            visit(s.cond, False)
        elif isinstance(s, Barrier):
            barriers += 1
    return OpCounts(loads, stores, arith, barriers)


def assigned_names(block) -> set:
    names = set()
    for s in walk_stmts(block):
        if isinstance(s, Assign):
            names.add(s.name)
    return names


def declared_names(block) -> set:
    return {s.name for s in walk_stmts(block) if isinstance(s, Decl)}


def uses_builtin(node, funcs) -> list:
    """Calls to any of ``funcs`` anywhere inside a statement or block."""
    return [e for e in all_exprs(node) if isinstance(e, Call) and e.func in funcs]


__all__ = [
    "DIRECT", "INDIRECT", "NONE", "Taint", "BranchLabel", "GridLoop", "OpCounts",
    "classify_divergence", "kernel_divergence", "count_ops", "grid_loop",
    "id_multiplier", "size_multiplier", "memory_pointers", "label_of",
    "assigned_names", "declared_names", "uses_builtin",
]
