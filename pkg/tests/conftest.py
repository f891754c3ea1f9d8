import dataclasses
from pathlib import Path

import pytest

from tcoarsen.nodes import Block, Decl, For, Index
from tcoarsen.parser import parse_file

DATA = Path(__file__).parent / "data"
GOLDEN = Path(__file__).parent / "golden"


def load(name):
    return parse_file(DATA / name)


@pytest.fixture
def mult():
    return load("multiplication.cl")


def swap_loads(kernel, a, b):
    """Exchange pointers ``a`` and ``b`` in every load."""
    def fix(e):
        if isinstance(e, Index) and e.array in (a, b):
            return Index(b if e.array == a else a, e.index)
        return e

    def stmt(s):
        if isinstance(s, Decl) and s.init is not None:
            return dataclasses.replace(s, init=fix(s.init))
        if isinstance(s, For):
            return dataclasses.replace(s, body=Block(tuple(stmt(t) for t in s.body.stmts)))
        return s
    return kernel.with_body(Block(tuple(stmt(s) for s in kernel.body.stmts)))


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[key])
