"""Predict the load-store units an OpenCL-to-FPGA compiler would build.

Every global/constant access site gets an affine view of its index in terms
of the work-item base, uniform loop counters and uniform symbols. Sites are
then grouped per (pointer, direction, divergent region) and classified:

* one site indexed by the work-item base: a 32-bit burst-coalesced LSU;
* ``n`` sites at consecutive constant offsets from the same base (what
  consecutive coarsening produces): one burst-coalesced LSU of
  ``min(512, 64 * n)`` bits, split into several 512-bit units beyond that;
* sites that differ by a uniform symbolic stride (gapped coarsening): one
  32-bit cached burst-coalesced LSU each;
* data-dependent indices: one 32-bit cached burst-coalesced LSU per site;
* stride-1 reads driven only by a uniform loop counter outside divergence:
  a prefetching LSU.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Optional

from .analysis import INDIRECT, Taint, grid_loop, memory_pointers
from .nodes import (
    Assign, Binary, Block, Call, Cast, Decl, For, If, Index, IntLit, Kernel,
    Store, Var, stmt_exprs, walk_expr, walk_stmts,
)
from .printer import expr_str

MODEL_VERSION = "tcoarsen-lsu/1"
DEFAULT_CACHE_BITS = 512 * 1024
MAX_WIDTH = 512
ELEMENT_BITS = 32

BURST = "burst-coalesced"
PREFETCH = "prefetching"

_BASE = "@wi"  # the work-item base: get_global_id(0) or a grid-loop variable


@dataclass(frozen=True)
class LsuEntry:
    pointer: str
    direction: str  # "load" or "store"
    kind: str
    count: int
    width_bits: int
    cached: bool
    cache_bits: Optional[int]


@dataclass(frozen=True)
class LsuReport:
    kernel: str
    entries: tuple
    model_version: str = MODEL_VERSION

    def for_pointer(self, pointer, direction=None):
        return [e for e in self.entries
                if e.pointer == pointer and (direction is None or e.direction == direction)]

    def to_dict(self):
        return {"model_version": self.model_version, "kernel": self.kernel,
                "entries": [asdict(e) for e in self.entries]}

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"


@dataclass(frozen=True)
class _Site:
    pointer: str
    direction: str
    index: object
    region: tuple


# -- affine index forms -------------------------------------------------------

class _Affine:
    def __init__(self, kernel, taint):
        self.taint = taint
        self.defs = defaultdict(list)
        self.counters = set()
        self.grid_vars = set()
        for s in walk_stmts(kernel.body):
            if isinstance(s, For):
                if grid_loop(s) is not None:
                    self.grid_vars.add(grid_loop(s).var)
                elif isinstance(s.init, Decl) and not taint.vars.get(s.init.name):
                    self.counters.add(s.init.name)
            if isinstance(s, Decl):
                self.defs[s.name].append(s.init)
            elif isinstance(s, Assign):
                self.defs[s.name].append(None)

    def of(self, e):
        """``{term: coeff}`` with the constant under key ``1``."""
        form = self._eval(e, 0)
        return {k: v for k, v in form.items() if v != 0}

    def _var(self, name, depth):
        if name in self.grid_vars:
            return {_BASE: 1}
        if name in self.counters:
            return {"loop:" + name: 1}
        defs = self.defs.get(name)
        if defs and len(defs) == 1 and defs[0] is not None and depth < 32:
            return self._eval(defs[0], depth + 1)
        return {"sym:" + name: 1}

    def _eval(self, e, depth):
        if isinstance(e, IntLit):
            return {1: e.value}
        if isinstance(e, Var):
            return self._var(e.name, depth)
        if isinstance(e, Cast) and e.type in ("int", "uint"):
            return self._eval(e.operand, depth)
        if isinstance(e, Call) and isinstance(e.args[0], IntLit):
            if e.func == "get_global_id" and e.args[0].value == 0:
                return {_BASE: 1}
            return {f"sym:{e.func}({e.args[0].value})": 1}
        if isinstance(e, Binary) and e.op in ("+", "-"):
            left, right = self._eval(e.left, depth), self._eval(e.right, depth)
            sign = 1 if e.op == "+" else -1
            out = dict(left)
            for k, v in right.items():
                out[k] = out.get(k, 0) + sign * v
            return out
        if isinstance(e, Binary) and e.op == "*":
            left, right = self._eval(e.left, depth), self._eval(e.right, depth)
            for a, b in ((left, right), (right, left)):
                if set(a) <= {1}:
                    c = a.get(1, 0)
                    return {k: c * v for k, v in b.items()}
        # anything else is one opaque term; it moves with the work-item iff tainted
        tag = "opaque-id:" if self.taint.expr(e) else "sym:"
        return {tag + expr_str(e): 1}


def _is_moving(term):
    return term == _BASE or (isinstance(term, str) and term.startswith(("loop:", "opaque-id:")))


# -- site collection ------------------------------------------------------------

def _collect_sites(kernel, taint):
    mem = memory_pointers(kernel)
    sites = []
    counter = [0]

    def exprs_sites(e, region):
        for sub in walk_expr(e):
            if isinstance(sub, Index) and sub.array in mem:
                sites.append(_Site(sub.array, "load", sub.index, region))

    def divergent(cond):
        return cond is not None and bool(taint.expr(cond))

    def visit(s, region):
        if isinstance(s, Block):
            for t in s.stmts:
                visit(t, region)
        elif isinstance(s, If):
            exprs_sites(s.cond, region)
            if divergent(s.cond):
                counter[0] += 1
                rid = counter[0]
                visit(s.then, region + ((rid, "then"),))
                if s.orelse is not None:
                    visit(s.orelse, region + ((rid, "else"),))
            else:
                visit(s.then, region)
                if s.orelse is not None:
                    visit(s.orelse, region)
        elif isinstance(s, For):
            inner = region
            if grid_loop(s) is None and divergent(s.cond):
                counter[0] += 1
                inner = region + ((counter[0], "loop"),)
            for part in (s.init, s.step):
                if part is not None:
                    visit(part, region)
            if s.cond is not None:
                exprs_sites(s.cond, inner)
            visit(s.body, inner)
        elif isinstance(s, Store):
            if s.array in mem:
                sites.append(_Site(s.array, "store", s.index, region))
            for e in stmt_exprs(s):
                exprs_sites(e, region)
        else:
            for e in stmt_exprs(s):
                exprs_sites(e, region)

    visit(kernel.body, ())
    return sites


# -- classification ---------------------------------------------------------

def _cluster_units(n):
    """LSUs for ``n`` lane-clustered contiguous elements: list of widths."""
    total = 2 * ELEMENT_BITS * n
    units = []
    while total > 0:
        units.append(min(MAX_WIDTH, total))
        total -= MAX_WIDTH
    return units


def _classify_group(sites, forms, taint):
    """Yield (kind, width, cached) for each LSU built for one site group."""
    out = []
    regular = []
    for site in sites:
        if INDIRECT in taint.expr(site.index):
            out.append((BURST, ELEMENT_BITS, True))
        else:
            regular.append(site)

    buckets = defaultdict(list)
    for site in regular:
        form = forms[site]
        key = tuple(sorted((k, v) for k, v in form.items() if _is_moving(k)))
        buckets[key].append(site)

    for key, members in buckets.items():
        symbolic = {tuple(sorted((k, v) for k, v in forms[m].items()
                                 if k != 1 and not _is_moving(k)))
                    for m in members}
        if len(symbolic) > 1:
            # lanes a symbolic stride apart: one cached unit per site
            out.extend((BURST, ELEMENT_BITS, True) for _ in members)
            continue
        moving = dict(key)
        offsets = sorted(forms[m].get(1, 0) for m in members)
        runs = _runs(offsets)
        loads = members[0].direction == "load"
        sequential = (loads and not members[0].region and _BASE not in moving
                      and len(moving) == 1 and next(iter(moving)).startswith("loop:")
                      and next(iter(moving.values())) == 1)
        for run in runs:
            if sequential:
                out.append((PREFETCH, min(MAX_WIDTH, ELEMENT_BITS * run), False))
            elif run == 1:
                out.append((BURST, ELEMENT_BITS, False))
            else:
                out.extend((BURST, w, False) for w in _cluster_units(run))
    return out


def _runs(offsets):
    """Lengths of maximal runs of consecutive distinct offsets (repeats split)."""
    runs = []
    seen = Counter(offsets)
    while seen:
        start = min(seen)
        n = 0
        while seen.get(start + n, 0) > 0:
            seen[start + n] -= 1
            if seen[start + n] == 0:
                del seen[start + n]
            n += 1
        runs.append(n)
    return runs


def analyze(kernel: Kernel, cache_bits: int = DEFAULT_CACHE_BITS) -> LsuReport:
    """Predicted LSU instances per (pointer, direction)."""
    taint = Taint(kernel)
    affine = _Affine(kernel, taint)
    sites = _collect_sites(kernel, taint)
    forms = {s: affine.of(s.index) for s in sites}

    groups = defaultdict(list)
    for s in sites:
        groups[(s.pointer, s.direction, s.region)].append(s)

    tally = Counter()
    for (pointer, direction, _), members in groups.items():
        for kind, width, cached in _classify_group(members, forms, taint):
            tally[(pointer, direction, kind, width, cached)] += 1

    entries = [LsuEntry(p, d, kind, n, w, cached, cache_bits if cached else None)
               for (p, d, kind, w, cached), n in tally.items()]
    entries.sort(key=lambda e: (e.pointer, e.direction, e.kind, e.width_bits, e.cached))
    return LsuReport(kernel.name, tuple(entries))


def report_from_json(text: str) -> LsuReport:
    data = json.loads(text)
    entries = tuple(LsuEntry(**e) for e in data["entries"])
    return LsuReport(data["kernel"], entries, data["model_version"])
