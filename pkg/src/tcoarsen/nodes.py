"""Syntax tree for the supported OpenCL-C kernel subset.

All nodes are frozen dataclasses holding tuples, so trees are hashable,
compare structurally with ``==`` and can be shared freely.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Optional, Union

SCALAR_TYPES = ("int", "uint", "float")
ADDRESS_SPACES = ("global", "local", "constant", "private")

WORK_ITEM_BUILTINS = (
    "get_global_id",
    "get_global_size",
    "get_local_id",
    "get_local_size",
    "get_group_id",
)
MATH_FUNCTIONS = ("min", "max", "fabs", "sqrt")
BARRIER_FLAGS = ("CLK_LOCAL_MEM_FENCE", "CLK_GLOBAL_MEM_FENCE")

ARITH_OPS = ("+", "-", "*", "/", "%")
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")
ASSIGN_OPS = ("=", "+=", "-=", "*=", "/=", "%=", "++", "--")


# -- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class IntLit:
    value: int
    unsigned: bool = False


@dataclass(frozen=True)
class FloatLit:
    value: float  # always a float32-representable value


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Index:
    """``array[index]``; ``array`` names a pointer param or local array."""
    array: str
    index: "Expr"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "!"
    operand: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


@dataclass(frozen=True)
class Cast:
    type: str
    operand: "Expr"


Expr = Union[IntLit, FloatLit, Var, Index, Binary, Unary, Call, Cast]


# -- statements -------------------------------------------------------------

@dataclass(frozen=True)
class Decl:
    type: str
    name: str
    init: Optional[Expr] = None
    array_size: Optional[int] = None  # only for __local arrays
    space: str = "private"


@dataclass(frozen=True)
class Assign:
    name: str
    op: str
    value: Optional[Expr] = None  # None for ++ / --


@dataclass(frozen=True)
class Store:
    array: str
    index: Expr
    value: Expr


@dataclass(frozen=True)
class Block:
    stmts: tuple = ()


@dataclass(frozen=True)
class If:
    cond: Expr
    then: Block
    orelse: Optional[Union[Block, "If"]] = None


@dataclass(frozen=True)
class For:
    init: Optional[Union[Decl, Assign]]
    cond: Optional[Expr]
    step: Optional[Assign]
    body: Block


@dataclass(frozen=True)
class Barrier:
    flags: tuple = ("CLK_LOCAL_MEM_FENCE",)


Stmt = Union[Decl, Assign, Store, Block, If, For, Barrier]


# -- kernel -----------------------------------------------------------------

@dataclass(frozen=True)
class Param:
    name: str
    type: str
    pointer: bool = False
    space: str = "private"
    const: bool = False


@dataclass(frozen=True)
class Kernel:
    name: str
    params: tuple
    body: Block
    simd: Optional[int] = None
    compute_units: Optional[int] = None
    # leading ``//`` comment lines; comments are not part of the structure
    doc: tuple = field(default=(), compare=False)

    def param(self, name: str) -> Optional[Param]:
        for p in self.params:
            if p.name == name:
                return p
        return None

    def with_body(self, body: Block) -> "Kernel":
        return replace(self, body=body)


# -- traversal helpers ------------------------------------------------------

def child_exprs(e: Expr) -> tuple:
    if isinstance(e, Index):
        return (e.index,)
    if isinstance(e, Binary):
        return (e.left, e.right)
    if isinstance(e, (Unary, Cast)):
        return (e.operand,)
    if isinstance(e, Call):
        return e.args
    return ()


def walk_expr(e: Expr) -> Iterator[Expr]:
    """Pre-order walk over an expression tree."""
    yield e
    for c in child_exprs(e):
        yield from walk_expr(c)


def stmt_exprs(s: Stmt) -> tuple:
    """Expressions directly owned by a statement (not nested statements)."""
    if isinstance(s, Decl):
        return (s.init,) if s.init is not None else ()
    if isinstance(s, Assign):
        return (s.value,) if s.value is not None else ()
    if isinstance(s, Store):
        return (s.index, s.value)
    if isinstance(s, If):
        return (s.cond,)
    if isinstance(s, For):
        return (s.cond,) if s.cond is not None else ()
    return ()


def walk_stmts(s) -> Iterator[Stmt]:
    """Pre-order walk over statements, including for-loop init/step."""
    if isinstance(s, Block):
        yield s
        for t in s.stmts:
            yield from walk_stmts(t)
    elif isinstance(s, If):
        yield s
        yield from walk_stmts(s.then)
        if s.orelse is not None:
            yield from walk_stmts(s.orelse)
    elif isinstance(s, For):
        yield s
        if s.init is not None:
            yield s.init
        if s.step is not None:
            yield s.step
        yield from walk_stmts(s.body)
    else:
        yield s


def all_exprs(s) -> Iterator[Expr]:
    for t in walk_stmts(s):
        for e in stmt_exprs(t):
            yield from walk_expr(e)


def identifiers(kernel: Kernel) -> set:
    """Every identifier used or declared anywhere in the kernel."""
    names = {p.name for p in kernel.params}
    for s in walk_stmts(kernel.body):
        if isinstance(s, Decl):
            names.add(s.name)
        elif isinstance(s, Assign):
            names.add(s.name)
        elif isinstance(s, Store):
            names.add(s.array)
    for e in all_exprs(kernel.body):
        if isinstance(e, Var):
            names.add(e.name)
        elif isinstance(e, Index):
            names.add(e.array)
    return names
