"""Shared fixtures: parsed sample programs and small CFG builders."""

import os

import pytest

from peepvec.ir import (BasicBlock, IrFunction, IntConst, OpApply, Program,
                        PutReg, Tmp, TmpAssign)
from peepvec.irtext import parse_program

FIXTURES = os.path.join(os.path.dirname(__file__), os.pardir, "fixtures")


def fixture_path(name: str) -> str:
    return os.path.join(FIXTURES, name)


def read_fixture(name: str) -> str:
    with open(fixture_path(name)) as fh:
        return fh.read()


@pytest.fixture(scope="session")
def sample_program() -> Program:
    return parse_program(read_fixture("a.vexir"))


@pytest.fixture(scope="session")
def fib_program() -> Program:
    return parse_program(read_fixture("fib.vexir"))


@pytest.fixture(scope="session")
def loop_program() -> Program:
    return parse_program(read_fixture("loop4.vexir"))


def chain_function(n_blocks: int, name: str = "chain") -> IrFunction:
    """Linear CFG 0 -> 1 -> ... -> n-1, one trivial statement per block."""
    blocks = []
    for i in range(n_blocks):
        stmts = [TmpAssign(i, "I64", OpApply("Add64", (IntConst(i, "I64"),
                                                       IntConst(1, "I64")))),
                 PutReg(16, Tmp(i))]
        succ = [i + 1] if i + 1 < n_blocks else []
        blocks.append(BasicBlock(i, stmts, succ))
    return IrFunction(name, 0x1000, blocks, [], [], entry=0)


def cfg_function(edges: dict[int, list[int]], name: str = "g") -> IrFunction:
    """Function with the given successor map and one statement per block."""
    n = max(edges) + 1
    blocks = []
    for i in range(n):
        stmts = [PutReg(16, IntConst(i, "I64"))]
        blocks.append(BasicBlock(i, stmts, list(edges.get(i, []))))
    return IrFunction(name, 0x1000, blocks, [], [], entry=0)
