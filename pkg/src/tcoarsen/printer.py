"""Canonical pretty-printer: one statement per line, explicit braces."""

import numpy as np

from .nodes import (
    Assign, Barrier, Binary, Block, Call, Cast, Decl, FloatLit, For, If,
    Index, IntLit, Kernel, Store, Unary, Var,
)

INDENT = "    "

_PREC = {
    "||": 1, "&&": 2, "==": 3, "!=": 3,
    "<": 4, "<=": 4, ">": 4, ">=": 4,
    "+": 5, "-": 5, "*": 6, "/": 6, "%": 6,
}
_UNARY_PREC = 7


def format_float(value):
    text = np.format_float_positional(np.float32(value), unique=True, trim="0")
    if "inf" in text or "nan" in text:
        raise ValueError(f"non-finite float literal {value!r}")
    if len(text) > 24:
        text = np.format_float_scientific(np.float32(value), unique=True, trim="0")
    if "." not in text and "e" not in text:
        text += ".0"
    return text + "f"


def _prec(e):
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, (Unary, Cast)):
        return _UNARY_PREC
    return 99


def expr_str(e) -> str:
    if isinstance(e, IntLit):
        return f"{e.value}u" if e.unsigned else str(e.value)
    if isinstance(e, FloatLit):
        return format_float(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Index):
        return f"{e.array}[{expr_str(e.index)}]"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(expr_str(a) for a in e.args)})"
    if isinstance(e, Unary):
        inner = expr_str(e.operand)
        if _prec(e.operand) < _UNARY_PREC or isinstance(e.operand, Unary):
            inner = f"({inner})"
        return f"{e.op}{inner}"
    if isinstance(e, Cast):
        inner = expr_str(e.operand)
        if _prec(e.operand) < _UNARY_PREC:
            inner = f"({inner})"
        return f"({e.type}){inner}"
    if isinstance(e, Binary):
        p = _PREC[e.op]
        left = expr_str(e.left)
        right = expr_str(e.right)
        if _prec(e.left) < p:
            left = f"({left})"
        # left-associative: equal precedence on the right needs parens
        if _prec(e.right) <= p:
            right = f"({right})"
        return f"{left} {e.op} {right}"
    raise TypeError(f"not an expression: {e!r}")


def _simple(s) -> str:
    if isinstance(s, Decl):
        prefix = "__local " if s.space == "local" else ""
        text = f"{prefix}{s.type} {s.name}"
        if s.array_size is not None:
            text += f"[{s.array_size}]"
        if s.init is not None:
            text += f" = {expr_str(s.init)}"
        return text
    if isinstance(s, Assign):
        if s.op in ("++", "--"):
            return f"{s.name}{s.op}"
        return f"{s.name} {s.op} {expr_str(s.value)}"
    if isinstance(s, Store):
        return f"{s.array}[{expr_str(s.index)}] = {expr_str(s.value)}"
    raise TypeError(f"not a simple statement: {s!r}")


def _stmt_lines(s, depth, out):
    pad = INDENT * depth
    if isinstance(s, (Decl, Assign, Store)):
        out.append(f"{pad}{_simple(s)};")
    elif isinstance(s, Barrier):
        out.append(f"{pad}barrier({' | '.join(s.flags)});")
    elif isinstance(s, Block):
        out.append(f"{pad}{{")
        _block_lines(s, depth + 1, out)
        out.append(f"{pad}}}")
    elif isinstance(s, If):
        out.append(f"{pad}if ({expr_str(s.cond)}) {{")
        _if_tail(s, depth, out)
    elif isinstance(s, For):
        init = _simple(s.init) if s.init is not None else ""
        cond = expr_str(s.cond) if s.cond is not None else ""
        step = _simple(s.step) if s.step is not None else ""
        out.append(f"{pad}for ({init}; {cond}; {step}) {{")
        _block_lines(s.body, depth + 1, out)
        out.append(f"{pad}}}")
    else:
        raise TypeError(f"not a statement: {s!r}")


def _if_tail(s, depth, out):
    pad = INDENT * depth
    _block_lines(s.then, depth + 1, out)
    if s.orelse is None:
        out.append(f"{pad}}}")
    elif isinstance(s.orelse, If):
        out.append(f"{pad}}} else if ({expr_str(s.orelse.cond)}) {{")
        _if_tail(s.orelse, depth, out)
    else:
        out.append(f"{pad}}} else {{")
        _block_lines(s.orelse, depth + 1, out)
        out.append(f"{pad}}}")


def _block_lines(block, depth, out):
    for s in block.stmts:
        _stmt_lines(s, depth, out)


def _param_str(p):
    if p.pointer:
        const = "const " if p.const else ""
        return f"__{p.space} {const}{p.type} *{p.name}"
    return f"{'const ' if p.const else ''}{p.type} {p.name}"


def print_kernel(kernel: Kernel) -> str:
    """Render a kernel as canonical source text (ends with a newline)."""
    out = [f"// {line}".rstrip() for line in kernel.doc]
    if kernel.simd is not None:
        out.append(f"__attribute__((num_simd_work_items({kernel.simd})))")
    if kernel.compute_units is not None and kernel.compute_units > 1:
        out.append(f"__attribute__((num_compute_units({kernel.compute_units})))")
    params = ", ".join(_param_str(p) for p in kernel.params)
    out.append(f"__kernel void {kernel.name}({params}) {{")
    _block_lines(kernel.body, 1, out)
    out.append("}")
    return "\n".join(out) + "\n"
