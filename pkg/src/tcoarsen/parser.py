"""Recursive-descent parser for the kernel subset.

The accepted grammar is documented in ``docs/grammar.md``. Anything outside
it produces a :class:`ParseError` (or the more specific
:class:`UnsupportedConstructError`) carrying a line and column.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, UnsupportedConstructError
from .nodes import (
    BARRIER_FLAGS, MATH_FUNCTIONS, WORK_ITEM_BUILTINS,
    Assign, Barrier, Binary, Block, Call, Cast, Decl, FloatLit, For, If,
    Index, IntLit, Kernel, Param, Store, Unary, Var,
)

KEYWORDS = {
    "__kernel", "kernel", "void", "int", "uint", "unsigned", "float", "const",
    "__global", "global", "__local", "local", "__constant", "constant",
    "__private", "private", "if", "else", "for", "barrier", "__attribute__",
}

# Recognizable C/OpenCL constructs outside the subset, reported by name.
UNSUPPORTED_WORDS = {
    "struct", "union", "goto", "while", "do", "switch", "case", "default",
    "return", "break", "continue", "typedef", "enum", "sizeof", "double",
    "char", "short", "long", "half", "bool", "size_t", "volatile", "restrict",
    "static", "inline", "image2d_t", "sampler_t", "atomic_add", "atomic_inc",
}

SPACES = {
    "__global": "global", "global": "global",
    "__local": "local", "local": "local",
    "__constant": "constant", "constant": "constant",
    "__private": "private", "private": "private",
}

TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r\n]+)
  | (?P<linecomment>//[^\n]*)
  | (?P<blockcomment>/\*.*?\*/)
  | (?P<float>(?:\d+\.\d*|\.\d+)(?:[eE][+-]?\d+)?[fF]?|\d+[eE][+-]?\d+[fF]?|\d+[fF])
  | (?P<int>0[xX][0-9a-fA-F]+[uU]?|\d+[uU]?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>\+\+|--|\+=|-=|\*=|/=|%=|&&|\|\||==|!=|<=|>=|<<|>>|->|[-+*/%<>=!(){}\[\];,&|^~?:.\#])
""", re.VERBOSE | re.DOTALL)

INT32_MAX = 2**31 - 1
UINT32_MAX = 2**32 - 1


@dataclass
class Token:
    kind: str  # ident, int, float, op, eof
    text: str
    line: int
    col: int


def tokenize(text):
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            if text.startswith("/*", pos):
                raise ParseError("unterminated block comment", line, col)
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind not in ("ws", "linecomment", "blockcomment"):
            if kind == "op" and value == "#":
                raise UnsupportedConstructError("preprocessor directive", line, col)
            tokens.append(Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


def leading_doc(text):
    """Leading ``//`` comment lines before the kernel, slashes stripped."""
    doc = []
    for raw in text.splitlines():
        s = raw.strip()
        if not s:
            if doc:
                break
            continue
        if not s.startswith("//"):
            break
        body = s[2:]
        doc.append(body[1:] if body.startswith(" ") else body)
    return tuple(doc)


def float32_value(text):
    return float(np.float32(float(text.rstrip("fF"))))


# Binary operator precedence, loosest first.
PRECEDENCE = [
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
]


class Parser:
    def __init__(self, text, filename=None):
        self.filename = filename
        try:
            self.tokens = tokenize(text)
        except ParseError as exc:
            exc.filename = exc.filename or filename
            raise
        self.pos = 0
        self.doc = leading_doc(text)
        self.scopes = []
        self.pointers = set()
        self.local_arrays = set()

    # -- token helpers --------------------------------------------------

    @property
    def tok(self):
        return self.tokens[self.pos]

    def peek(self, k=1):
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def advance(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def error(self, message, tok=None):
        tok = tok or self.tok
        return ParseError(message, tok.line, tok.col, self.filename)

    def unsupported(self, construct, tok=None):
        tok = tok or self.tok
        return UnsupportedConstructError(construct, tok.line, tok.col, self.filename)

    def at(self, text):
        t = self.tok
        return t.kind in ("op", "ident") and t.text == text

    def expect(self, text):
        if not self.at(text):
            self.check_unsupported()
            shown = self.tok.text or "end of input"
            raise self.error(f"expected '{text}' but found '{shown}'")
        return self.advance()

    def check_unsupported(self):
        t = self.tok
        if t.kind == "ident" and t.text in UNSUPPORTED_WORDS:
            raise self.unsupported(t.text)
        if t.kind == "op":
            if t.text in ("<<", ">>", "^", "~", "|"):
                raise self.unsupported(f"bitwise operator '{t.text}'")
            if t.text in ("?", ":"):
                raise self.unsupported("conditional operator")
            if t.text in ("->", "."):
                raise self.unsupported("member access")
            if t.text == "&":
                raise self.unsupported("address-of or bitwise and")

    def ident(self, what="identifier"):
        t = self.tok
        if t.kind != "ident":
            self.check_unsupported()
            raise self.error(f"expected {what} but found '{t.text or 'end of input'}'")
        if t.text in UNSUPPORTED_WORDS:
            raise self.unsupported(t.text)
        if t.text in KEYWORDS:
            raise self.error(f"expected {what} but found keyword '{t.text}'")
        return self.advance().text

    # -- scopes ---------------------------------------------------------

    def declare(self, name, tok):
        scope = self.scopes[-1]
        if name in scope:
            raise self.error(f"redeclaration of '{name}'", tok)
        if name in WORK_ITEM_BUILTINS or name in MATH_FUNCTIONS:
            raise self.error(f"'{name}' shadows a builtin", tok)
        scope.add(name)

    def resolve(self, name, tok):
        for scope in reversed(self.scopes):
            if name in scope:
                return
        raise self.error(f"use of undeclared identifier '{name}'", tok)

    # -- kernel ---------------------------------------------------------

    def parse_kernel(self):
        simd = units = None
        while self.at("__attribute__"):
            name, value, tok = self.attribute()
            if name == "num_simd_work_items":
                simd = value
            elif name == "num_compute_units":
                units = value
            else:
                raise self.unsupported(f"attribute '{name}'", tok)
        if not (self.at("__kernel") or self.at("kernel")):
            self.check_unsupported()
            raise self.error("expected '__kernel'")
        self.advance()
        self.expect("void")
        name = self.ident("kernel name")
        self.scopes.append(set())
        self.expect("(")
        params = []
        if not self.at(")"):
            params.append(self.param())
            while self.at(","):
                self.advance()
                params.append(self.param())
        self.expect(")")
        body = self.block(new_scope=True)
        if self.tok.kind != "eof":
            if self.at("__kernel") or self.at("kernel") or self.at("__attribute__"):
                raise self.unsupported("multiple kernels in one translation unit")
            raise self.error(f"unexpected '{self.tok.text}' after kernel body")
        self.scopes.pop()
        if units == 1:
            units = None
        return Kernel(name, tuple(params), body, simd, units, self.doc)

    def attribute(self):
        tok = self.expect("__attribute__")
        self.expect("(")
        self.expect("(")
        name = self.ident("attribute name")
        self.expect("(")
        vt = self.tok
        if vt.kind != "int":
            raise self.error("attribute value must be an integer literal")
        self.advance()
        value = int(vt.text.rstrip("uU"), 0)
        if value < 1:
            raise self.error("attribute value must be positive", vt)
        self.expect(")")
        self.expect(")")
        self.expect(")")
        return name, value, tok

    def scalar_type(self):
        t = self.tok
        if self.at("unsigned"):
            self.advance()
            if self.at("int"):
                self.advance()
            return "uint"
        if t.kind == "ident" and t.text in ("int", "uint", "float"):
            self.advance()
            return t.text
        self.check_unsupported()
        raise self.error(f"expected a type but found '{t.text or 'end of input'}'")

    def param(self):
        start = self.tok
        const = False
        space = None
        while True:
            if self.at("const"):
                self.advance()
                const = True
            elif self.tok.text in SPACES and self.tok.kind == "ident":
                space = SPACES[self.advance().text]
            else:
                break
        ty = self.scalar_type()
        if self.at("const"):
            self.advance()
            const = True
        pointer = False
        if self.at("*"):
            self.advance()
            pointer = True
            if self.at("*"):
                raise self.unsupported("pointer to pointer")
        tok = self.tok
        name = self.ident("parameter name")
        if self.at("["):
            raise self.unsupported("array parameter")
        if pointer:
            if space is None or space == "private":
                raise self.error("pointer parameter needs an explicit address space", start)
            self.pointers.add(name)
        else:
            if space not in (None, "private"):
                raise self.error("scalar parameters are private", start)
            space = "private"
        self.declare(name, tok)
        return Param(name, ty, pointer, space, const)

    # -- statements -----------------------------------------------------

    def block(self, new_scope=True):
        self.expect("{")
        if new_scope:
            self.scopes.append(set())
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                raise self.error("expected '}' before end of input")
            stmts.append(self.statement())
        self.advance()
        if new_scope:
            self.scopes.pop()
        return Block(tuple(stmts))

    def body(self):
        """Loop/branch body: a braced block or a single statement."""
        if self.at("{"):
            return self.block()
        self.scopes.append(set())
        stmt = self.statement()
        self.scopes.pop()
        return Block((stmt,))

    def is_decl_start(self):
        t = self.tok
        if t.kind != "ident":
            return False
        return t.text in ("int", "uint", "float", "unsigned", "const") or t.text in SPACES

    def statement(self):
        t = self.tok
        if self.at("{"):
            return self.block()
        if self.at("if"):
            return self.if_stmt()
        if self.at("for"):
            return self.for_stmt()
        if self.at("barrier"):
            s = self.barrier()
            self.expect(";")
            return s
        if self.at(";"):
            raise self.error("empty statement")
        if t.kind == "ident" and t.text in UNSUPPORTED_WORDS:
            raise self.unsupported(t.text)
        if self.at("*"):
            raise self.unsupported("pointer dereference")
        if self.is_decl_start():
            s = self.declaration()
        else:
            s = self.simple_assignment(allow_store=True)
        self.expect(";")
        return s

    def declaration(self):
        start = self.tok
        space = "private"
        if self.at("const"):
            raise self.unsupported("const local variable")
        if self.tok.text in SPACES:
            space = SPACES[self.advance().text]
        ty = self.scalar_type()
        if self.at("*"):
            raise self.unsupported("pointer variable")
        tok = self.tok
        name = self.ident("variable name")
        size = None
        if self.at("["):
            self.advance()
            st = self.tok
            if st.kind != "int":
                raise self.error("array size must be an integer literal")
            self.advance()
            size = int(st.text.rstrip("uU"), 0)
            if size < 1:
                raise self.error("array size must be positive", st)
            self.expect("]")
        if space == "local" and size is None:
            raise self.unsupported("__local scalar variable", start)
        if size is not None and space != "local":
            raise self.unsupported("private array", start)
        if space in ("global", "constant"):
            raise self.unsupported(f"__{space} variable declaration", start)
        init = None
        if self.at("="):
            if size is not None:
                raise self.unsupported("array initializer")
            self.advance()
            init = self.expr()
        if self.at(","):
            raise self.unsupported("multiple declarators")
        self.declare(name, tok)
        if size is not None:
            self.local_arrays.add(name)
        return Decl(ty, name, init, size, space)

    def simple_assignment(self, allow_store=False):
        tok = self.tok
        if self.at("++") or self.at("--"):
            raise self.unsupported("prefix increment")
        name = self.ident("assignment target")
        self.resolve(name, tok)
        if self.at("["):
            if not allow_store:
                raise self.error("array store not allowed here")
            if name not in self.pointers and name not in self.local_arrays:
                raise self.error(f"'{name}' is not an array", tok)
            self.advance()
            index = self.expr()
            self.expect("]")
            if not self.at("="):
                if self.tok.text in ("+=", "-=", "*=", "/=", "%=", "++", "--"):
                    raise self.unsupported("compound assignment to array element")
                raise self.error("expected '=' in array store")
            self.advance()
            return Store(name, index, self.expr())
        if name in self.pointers or name in self.local_arrays:
            raise self.unsupported("pointer arithmetic", tok)
        op_tok = self.tok
        if op_tok.text in ("++", "--"):
            self.advance()
            return Assign(name, op_tok.text, None)
        if op_tok.text in ("=", "+=", "-=", "*=", "/=", "%="):
            self.advance()
            return Assign(name, op_tok.text, self.expr())
        self.check_unsupported()
        raise self.error(f"expected assignment but found '{op_tok.text}'")

    def if_stmt(self):
        self.expect("if")
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        then = self.body()
        orelse = None
        if self.at("else"):
            self.advance()
            if self.at("if"):
                orelse = self.if_stmt()
            else:
                orelse = self.body()
        return If(cond, then, orelse)

    def for_stmt(self):
        self.expect("for")
        self.expect("(")
        self.scopes.append(set())
        init = None
        if not self.at(";"):
            init = self.declaration() if self.is_decl_start() else self.simple_assignment()
            if isinstance(init, Decl) and init.array_size is not None:
                raise self.error("array declaration in for-init")
        if self.at(","):
            raise self.unsupported("comma operator")
        self.expect(";")
        cond = None if self.at(";") else self.expr()
        self.expect(";")
        step = None if self.at(")") else self.simple_assignment()
        if self.at(","):
            raise self.unsupported("comma operator")
        self.expect(")")
        body = self.body()
        self.scopes.pop()
        return For(init, cond, step, body)

    def barrier(self):
        self.expect("barrier")
        self.expect("(")
        flags = []
        while True:
            t = self.tok
            if t.kind != "ident" or t.text not in BARRIER_FLAGS:
                raise self.error("barrier flag must be CLK_LOCAL_MEM_FENCE or CLK_GLOBAL_MEM_FENCE")
            self.advance()
            flags.append(t.text)
            if self.at("|"):
                self.advance()
                continue
            break
        self.expect(")")
        return Barrier(tuple(flags))

    # -- expressions ----------------------------------------------------

    def expr(self, level=0):
        if level == len(PRECEDENCE):
            return self.unary()
        ops = PRECEDENCE[level]
        left = self.expr(level + 1)
        while self.tok.kind == "op" and self.tok.text in ops:
            op = self.advance().text
            right = self.expr(level + 1)
            left = Binary(op, left, right)
        if level == 0:
            self.check_trailing_operator()
        return left

    def check_trailing_operator(self):
        t = self.tok
        if t.kind == "op" and t.text in ("=", "+=", "-=", "*=", "/=", "%="):
            raise self.unsupported("assignment inside expression")
        if t.kind == "op" and t.text in ("++", "--"):
            raise self.unsupported("increment inside expression")
        if t.kind == "op" and t.text in ("<<", ">>", "^", "~", "|", "&", "?", ":", "->", "."):
            self.check_unsupported()

    def unary(self):
        if self.at("-"):
            self.advance()
            return Unary("-", self.unary())
        if self.at("!"):
            self.advance()
            return Unary("!", self.unary())
        if self.at("+"):
            raise self.unsupported("unary plus")
        if self.at("*"):
            raise self.unsupported("pointer dereference")
        if self.at("&"):
            raise self.unsupported("address-of operator")
        if self.at("++") or self.at("--"):
            raise self.unsupported("increment inside expression")
        if self.at("(") and self.peek().kind == "ident" and self.peek().text in (
                "int", "uint", "float", "unsigned"):
            self.advance()
            ty = self.scalar_type()
            if self.at("*"):
                raise self.unsupported("pointer cast")
            self.expect(")")
            return Cast(ty, self.unary())
        return self.postfix()

    def postfix(self):
        t = self.tok
        if t.kind == "int":
            self.advance()
            text = t.text
            unsigned = text[-1] in "uU"
            value = int(text.rstrip("uU"), 0)
            if value > (UINT32_MAX if unsigned else INT32_MAX):
                raise self.error("integer literal out of 32-bit range", t)
            return IntLit(value, unsigned)
        if t.kind == "float":
            self.advance()
            return FloatLit(float32_value(t.text))
        if self.at("("):
            self.advance()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            if t.text in UNSUPPORTED_WORDS:
                raise self.unsupported(t.text)
            if t.text in KEYWORDS:
                raise self.error(f"unexpected keyword '{t.text}' in expression")
            name = self.advance().text
            if self.at("("):
                return self.call(name, t)
            if name in BARRIER_FLAGS:
                raise self.error(f"'{name}' is only valid inside barrier()", t)
            self.resolve(name, t)
            if self.at("["):
                if name not in self.pointers and name not in self.local_arrays:
                    raise self.error(f"'{name}' is not an array", t)
                self.advance()
                index = self.expr()
                self.expect("]")
                if self.at("["):
                    raise self.unsupported("multi-dimensional indexing")
                return Index(name, index)
            if name in self.pointers or name in self.local_arrays:
                raise self.unsupported("pointer arithmetic", t)
            return Var(name)
        self.check_unsupported()
        raise self.error(f"expected an expression but found '{t.text or 'end of input'}'")

    def call(self, name, tok):
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.expr())
            while self.at(","):
                self.advance()
                args.append(self.expr())
        self.expect(")")
        if name in WORK_ITEM_BUILTINS:
            if len(args) != 1 or not isinstance(args[0], IntLit):
                raise self.error(f"{name} needs one integer-literal dimension", tok)
            if args[0].value > 2:
                raise self.error(f"{name} dimension must be 0, 1 or 2", tok)
        elif name in MATH_FUNCTIONS:
            arity = 2 if name in ("min", "max") else 1
            if len(args) != arity:
                raise self.error(f"{name} takes {arity} argument(s)", tok)
        else:
            raise self.unsupported(f"call to '{name}'", tok)
        return Call(name, tuple(args))


def parse(text, filename=None):
    """Parse one kernel from source text."""
    return Parser(text, filename).parse_kernel()


def parse_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), filename=str(path))
