"""Thread coarsening as AST-to-AST transforms, plus SIMD/replication attributes.

A coarsenable kernel has a work-item *anchor*: either a grid-stride loop

    for (int gid = get_global_id(0); gid < B; gid += get_global_size(0)) { ... }

or a declaration ``int i = get_global_id(0);`` whose following statements
form the per-work-item region. Statements before the anchor are uniform
(identical for every work-item) and stay untouched.

Inside the region every original work-item becomes a *lane* ``k`` in
``[0, C)`` with its own copy of each variable (suffix ``_k``). Straight-line
runs are phase-clustered: each maximal run of loads, of arithmetic or of
stores is emitted for lane 0, then lane 1, and so on. Within a lane the
original statement order is preserved, so no arithmetic is reassociated.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .analysis import Taint, grid_loop, id_multiplier, memory_pointers
from .errors import IdDependentBranchError, TransformError
from .nodes import (
    WORK_ITEM_BUILTINS, Assign, Barrier, Binary, Block, Call, Cast, Decl, For,
    If, Index, IntLit, Kernel, Store, Unary, Var, all_exprs, identifiers,
    walk_expr, walk_stmts,
)
from .printer import expr_str

CONSECUTIVE = "consecutive"
GAPPED = "gapped"
REQUIRE_DIVISIBLE = "require-divisible"
GUARD_TAILS = "guard-tails"

SUPPORTED_DEGREES = (1, 2, 4, 8)
GAPPED_LENGTH = "gapped_length"


@dataclass(frozen=True)
class CoarsenConfig:
    kind: str = CONSECUTIVE
    degree: int = 1
    extent: Optional[str] = None
    tail_policy: str = REQUIRE_DIVISIBLE

    def __post_init__(self):
        if self.kind not in (CONSECUTIVE, GAPPED):
            raise ValueError(f"unknown coarsening kind {self.kind!r}")
        if not isinstance(self.degree, int) or self.degree < 1:
            raise ValueError("coarsening degree must be a positive integer")
        if self.tail_policy not in (REQUIRE_DIVISIBLE, GUARD_TAILS):
            raise ValueError(f"unknown tail policy {self.tail_policy!r}")
        if self.kind == GAPPED and not self.extent:
            raise ValueError("gapped coarsening needs the extent parameter (e.g. extent='N')")

    def describe(self):
        parts = [f"kind={self.kind}", f"degree={self.degree}", f"tail={self.tail_policy}"]
        if self.extent:
            parts.append(f"extent={self.extent}")
        return "coarsen: " + " ".join(parts)


# -- renaming ---------------------------------------------------------------

def rename_expr(e, names):
    if not names:
        return e
    if isinstance(e, Var):
        return Var(names.get(e.name, e.name))
    if isinstance(e, Index):
        return Index(names.get(e.array, e.array), rename_expr(e.index, names))
    if isinstance(e, Binary):
        return Binary(e.op, rename_expr(e.left, names), rename_expr(e.right, names))
    if isinstance(e, Unary):
        return Unary(e.op, rename_expr(e.operand, names))
    if isinstance(e, Cast):
        return Cast(e.type, rename_expr(e.operand, names))
    if isinstance(e, Call):
        return Call(e.func, tuple(rename_expr(a, names) for a in e.args))
    return e


def rename_stmt(s, names):
    if isinstance(s, Decl):
        init = rename_expr(s.init, names) if s.init is not None else None
        return replace(s, name=names.get(s.name, s.name), init=init)
    if isinstance(s, Assign):
        value = rename_expr(s.value, names) if s.value is not None else None
        return Assign(names.get(s.name, s.name), s.op, value)
    if isinstance(s, Store):
        return Store(names.get(s.array, s.array), rename_expr(s.index, names),
                     rename_expr(s.value, names))
    if isinstance(s, Block):
        return Block(tuple(rename_stmt(t, names) for t in s.stmts))
    if isinstance(s, If):
        orelse = rename_stmt(s.orelse, names) if s.orelse is not None else None
        return If(rename_expr(s.cond, names), rename_stmt(s.then, names), orelse)
    if isinstance(s, For):
        return For(rename_stmt(s.init, names) if s.init is not None else None,
                   rename_expr(s.cond, names) if s.cond is not None else None,
                   rename_stmt(s.step, names) if s.step is not None else None,
                   rename_stmt(s.body, names))
    return s


def _pick_separator(renamed, degree, taken):
    """``_`` unless that collides with an existing name, then ``__``, ``___``..."""
    sep = "_"
    while True:
        generated = {f"{v}{sep}{k}" for v in renamed for k in range(degree)}
        if len(generated) == len(renamed) * degree and not generated & taken:
            return sep
        sep += "_"


# -- region checks ------------------------------------------------------------

def _check_one_dimensional(kernel):
    for e in all_exprs(kernel.body):
        if isinstance(e, Call) and e.func in WORK_ITEM_BUILTINS and e.args[0].value != 0:
            raise TransformError(
                f"only 1-D kernels can be coarsened; found {expr_str(e)}")


def _find_anchor(stmts):
    for i, s in enumerate(stmts):
        if grid_loop(s) is not None:
            return i, "loop"
        if isinstance(s, Decl) and s.init is not None and id_multiplier(s.init) is not None:
            return i, "decl"
        if any(isinstance(e, Call) and e.func in WORK_ITEM_BUILTINS for e in _stmt_all_exprs(s)):
            raise TransformError(
                "work-item builtin used outside a recognizable work-item anchor "
                f"(statement: {_brief(s)})")
    raise TransformError("no work-item anchor found: expected a grid-stride loop over "
                         "get_global_id(0) or a declaration initialized from it")


def _stmt_all_exprs(s):
    return list(all_exprs(s))


def _brief(s):
    from .printer import print_kernel
    text = print_kernel(Kernel("k", (), Block((s,)))).splitlines()
    return text[1].strip() if len(text) > 1 else ""


def _uses_local_memory(kernel, region_stmts):
    local = {p.name for p in kernel.params if p.pointer and p.space == "local"}
    for s in walk_stmts(kernel.body):
        if isinstance(s, Decl) and s.space == "local":
            local.add(s.name)
    for s in region_stmts:
        for t in walk_stmts(s):
            if isinstance(t, Decl) and t.space == "local":
                return True
            if isinstance(t, Store) and t.array in local:
                return True
        for e in all_exprs(s):
            if isinstance(e, Index) and e.array in local:
                return True
    return False


# -- the transform ----------------------------------------------------------

class _Fuser:
    def __init__(self, kernel, degree, renamed, sep, lane_names):
        self.kernel = kernel
        self.degree = degree
        self.taint = Taint(kernel)
        self.mem = memory_pointers(kernel)
        self.renamed = renamed
        self.maps = [{v: f"{v}{sep}{k}" for v in renamed} for k in range(degree)]
        for k, m in enumerate(self.maps):
            m.update(lane_names[k])

    def uniform(self, e):
        return not self.taint.expr(e)

    def lane(self, s, k):
        return rename_stmt(s, self.maps[k])

    def phase(self, s):
        if isinstance(s, Store):
            return "store"
        value = s.init if isinstance(s, Decl) else s.value
        if value is not None and any(isinstance(e, Index) and e.array in self.mem
                                     for e in walk_expr(value)):
            return "load"
        return "compute"

    def fuse(self, stmts):
        out = []
        run = []

        def flush():
            if run:
                for k in range(self.degree):
                    out.extend(self.lane(s, k) for s in run)
                run.clear()

        prev_phase = None
        for s in stmts:
            if isinstance(s, (Decl, Assign, Store)):
                ph = self.phase(s)
                if ph != prev_phase:
                    flush()
                    prev_phase = ph
                run.append(s)
                continue
            flush()
            prev_phase = None
            if isinstance(s, Barrier):
                out.append(s)
            elif isinstance(s, Block):
                out.append(Block(tuple(self.fuse(s.stmts))))
            elif isinstance(s, If):
                out.extend(self.fuse_if(s))
            elif isinstance(s, For):
                out.extend(self.fuse_for(s))
            else:
                raise TransformError(f"cannot coarsen statement {s!r}")
        flush()
        return out

    def _divergent(self, s):
        if any(isinstance(t, Barrier) for t in walk_stmts(s)):
            raise TransformError(
                "barrier inside a divergent region cannot be coarsened")
        return [self.lane(s, k) for k in range(self.degree)]

    def _if_uniform(self, s):
        while s is not None:
            if not self.uniform(s.cond):
                return False
            s = s.orelse if isinstance(s.orelse, If) else None
        return True

    def fuse_if(self, s):
        if not self._if_uniform(s):
            return self._divergent(s)
        return [self._fuse_uniform_if(s)]

    def _fuse_uniform_if(self, s):
        # uniform conditions read lane 0's copy; all lanes hold the same value
        cond = rename_expr(s.cond, self.maps[0])
        then = Block(tuple(self.fuse(s.then.stmts)))
        if s.orelse is None:
            orelse = None
        elif isinstance(s.orelse, If):
            orelse = self._fuse_uniform_if(s.orelse)
        else:
            orelse = Block(tuple(self.fuse(s.orelse.stmts)))
        return If(cond, then, orelse)

    def fuse_for(self, s):
        parts = [s.cond] if s.cond is not None else []
        init_value = None
        if isinstance(s.init, Decl):
            init_value = s.init.init
        elif isinstance(s.init, Assign):
            init_value = s.init.value
        if init_value is not None:
            parts.append(init_value)
        if s.step is not None and s.step.value is not None:
            parts.append(s.step.value)
        counter = s.init.name if s.init is not None else None
        loop_vars_uniform = counter is None or not self.taint.vars.get(counter)
        if not (all(self.uniform(p) for p in parts) and loop_vars_uniform):
            return self._divergent(s)
        if counter is not None and counter in self.renamed:
            raise TransformError(f"loop counter '{counter}' is shared with lane variables")
        m0 = self.maps[0]
        init = rename_stmt(s.init, m0) if s.init is not None else None
        cond = rename_expr(s.cond, m0) if s.cond is not None else None
        step = rename_stmt(s.step, m0) if s.step is not None else None
        return [For(init, cond, step, Block(tuple(self.fuse(s.body.stmts))))]


def _uniform_loop_counters(stmts, taint):
    out = set()
    for s in stmts:
        for t in walk_stmts(s):
            if isinstance(t, For) and isinstance(t.init, Decl):
                parts = [p for p in (t.cond, t.init.init,
                                     t.step.value if t.step is not None else None)
                         if p is not None]
                if all(not taint.expr(p) for p in parts) and not taint.vars.get(t.init.name):
                    out.add(t.init.name)
    return out


def coarsen(kernel: Kernel, config: CoarsenConfig) -> Kernel:
    """Merge ``config.degree`` work-items into one.

    The result must be launched with ``global_size / degree`` work-items.
    ``degree == 1`` returns the kernel unchanged.
    """
    C = config.degree
    if C == 1:
        return kernel
    _check_one_dimensional(kernel)
    if config.extent is not None:
        p = kernel.param(config.extent)
        if p is None or p.pointer or p.type not in ("int", "uint"):
            raise TransformError(
                f"extent parameter '{config.extent}' must be an int parameter of the kernel")
    stmts = list(kernel.body.stmts)
    pos, form = _find_anchor(stmts)
    prefix, anchor, suffix = stmts[:pos], stmts[pos], stmts[pos + 1:]

    if form == "loop":
        loop = grid_loop(anchor)
        var, mult = loop.var, loop.multiplier
        if suffix:
            raise TransformError("statements after the work-distribution loop are not supported")
        if isinstance(anchor.init, Assign):
            raise TransformError("the work-distribution loop must declare its index variable")
        region = list(anchor.body.stmts)
        anchor_type = anchor.init.type
    else:
        var, mult = anchor.name, id_multiplier(anchor.init)
        region = suffix
        anchor_type = anchor.type

    for e in (e for s in region for e in all_exprs(s)):
        if isinstance(e, Call) and e.func in WORK_ITEM_BUILTINS:
            raise TransformError(
                f"work-item builtin {expr_str(e)} inside the coarsened region is not supported; "
                f"use the index variable '{var}'")
    if _uses_local_memory(kernel, region):
        raise TransformError("local memory inside the coarsened region is not supported")

    declared_in_region = {t.name for s in region for t in walk_stmts(s) if isinstance(t, Decl)}
    for s in region:
        for t in walk_stmts(s):
            if isinstance(t, Assign) and t.name not in declared_in_region:
                raise TransformError(
                    f"assignment to '{t.name}', which is shared by all work-items, "
                    "inside the coarsened region")

    guard = config.tail_policy == GUARD_TAILS
    bound = None
    if form == "loop":
        cond = anchor.cond
        is_lt = isinstance(cond, Binary) and cond.op == "<" and cond.left == Var(var)
        if config.kind == GAPPED:
            if not (is_lt and cond.right == Var(config.extent)):
                raise TransformError(
                    f"gapped coarsening needs the loop bound to be the bare extent parameter "
                    f"'{config.extent}' (found '{expr_str(cond)}')")
        if guard:
            if not is_lt:
                raise TransformError("guard-tails needs a loop condition of the form 'i < bound'")
            bound = cond.right
    elif guard or config.kind == GAPPED:
        if config.extent is None:
            raise TransformError("guard-tails needs the extent parameter")
        bound = Var(config.extent)
    if guard and any(isinstance(t, Barrier) for s in region for t in walk_stmts(s)):
        raise TransformError("guard-tails cannot be combined with barriers in the region")

    taint = Taint(kernel)
    shared_counters = _uniform_loop_counters(region, taint) if not guard else set()
    renamed = ({var} | declared_in_region) - shared_counters
    taken = identifiers(kernel)
    gl_name = GAPPED_LENGTH
    while gl_name in taken:
        gl_name += "_"
    taken = taken | {gl_name}
    sep = _pick_separator(renamed, C, taken)

    fuser = _Fuser(kernel, C, renamed, sep, [{} for _ in range(C)])
    lane_var = [fuser.maps[k][var] for k in range(C)]

    if config.kind == CONSECUTIVE:
        offsets = [IntLit(mult * k) for k in range(C)]
        lane_decls = [Decl(anchor_type, lane_var[k], Binary("+", Var(var), offsets[k]))
                      for k in range(C)]
    else:
        lane_decls = [Decl(anchor_type, lane_var[k],
                           Binary("+", Var(var), Binary("*", Var(gl_name), IntLit(k))))
                      for k in range(C)]

    if guard:
        # whole-lane copies, each behind its own bounds check: divergent by design
        body = []
        for k in range(C):
            lane_body = tuple(rename_stmt(s, fuser.maps[k]) for s in region)
            check = Binary("<", Var(lane_var[k]), bound)
            if form == "decl" and config.kind == GAPPED:
                # surplus work-items from a rounded-up launch must not alias lane k+1
                check = Binary("&&", Binary("<", Var(var), Var(gl_name)), check)
            body.append(If(check, Block(lane_body)))
    else:
        body = fuser.fuse(region)
    new_region = lane_decls + body

    pre = []
    if config.kind == GAPPED:
        n = Var(config.extent)
        if guard:
            length = Binary("/", Binary("+", n, IntLit(C - 1)), IntLit(C))
        else:
            length = Binary("/", n, IntLit(C))
        pre.append(Decl("int", gl_name, length))

    if form == "loop":
        if config.kind == CONSECUTIVE:
            init = replace(anchor.init, init=_scaled("get_global_id", mult * C))
            step = Assign(var, "+=", _scaled("get_global_size", mult * C))
            cond = anchor.cond
        else:
            init, step = anchor.init, anchor.step
            cond = Binary("<", Var(var), Var(gl_name))
        new_stmts = pre + prefix + [For(init, cond, step, Block(tuple(new_region)))]
    else:
        if config.kind == CONSECUTIVE:
            new_anchor = replace(anchor, init=_scaled("get_global_id", mult * C))
        else:
            new_anchor = anchor
        new_stmts = pre + prefix + [new_anchor] + new_region

    suffix_letter = "c" if config.kind == CONSECUTIVE else "g"
    doc = tuple(kernel.doc) + (config.describe(),)
    if config.tail_policy == REQUIRE_DIVISIBLE:
        size = config.extent or "global size"
        doc += (f"requires: {size} % {C} == 0; launch with global size / {C} work-items",)
    return replace(kernel, name=f"thc_{kernel.name}_{suffix_letter}",
                   body=Block(tuple(new_stmts)), doc=doc)


def _scaled(builtin, factor):
    call = Call(builtin, (IntLit(0),))
    return call if factor == 1 else Binary("*", call, IntLit(factor))


def coarsening_obligation(kernel: Kernel) -> Optional[dict]:
    """Parse the ``coarsen:`` line a transform left in the kernel's doc comment."""
    for line in kernel.doc:
        line = line.strip()
        if line.startswith("coarsen:"):
            fields = dict(part.split("=", 1) for part in line[len("coarsen:"):].split())
            fields["degree"] = int(fields["degree"])
            return fields
    return None


# -- attributes ---------------------------------------------------------------

def id_dependent_branches(kernel: Kernel) -> list:
    """Conditions of if/for statements whose value depends on a work-item id."""
    from .analysis import DIRECT, classify_divergence
    return [b.condition for b in classify_divergence(kernel) if DIRECT in b.taint]


def emit_simd(kernel: Kernel, lanes: int) -> Kernel:
    """Set ``num_simd_work_items``; rejects kernels with id-dependent branches."""
    if lanes < 1:
        raise ValueError("SIMD lanes must be positive")
    bad = id_dependent_branches(kernel)
    if bad:
        raise IdDependentBranchError(bad)
    return replace(kernel, simd=lanes)


def emit_replication(kernel: Kernel, units: int) -> Kernel:
    """Set ``num_compute_units``; a single unit is the default and is omitted."""
    if units < 1:
        raise ValueError("compute units must be positive")
    return replace(kernel, compute_units=None if units == 1 else units)
