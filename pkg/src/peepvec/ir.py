"""In-memory IR: programs, functions, basic blocks, statements.

The IR is a small VEX-flavored SSA language.  Tmp values (tN) are
assigned at most once per function in raw form; registers (rN) and
symbolic memory slots (MN) are the mutable machine state.  Control flow
lives only in the per-block successor lists; statements are straight-line.

All nodes are frozen dataclasses so structural equality is derived and
values can be shared freely across worker processes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Union

# Types are plain strings.  Raw widths survive until canonicalization,
# which rewrites every type to its class.
RAW_TYPES = ("I8", "I16", "I32", "I64", "F32", "F64", "V128", "V256")
CLASS_TYPES = ("INT", "FLOAT", "DOUBLE", "VECTOR")
ALL_TYPES = frozenset(RAW_TYPES) | frozenset(CLASS_TYPES)

TYPE_CLASS = {
    "I8": "INT", "I16": "INT", "I32": "INT", "I64": "INT",
    "F32": "FLOAT", "F64": "DOUBLE",
    "V128": "VECTOR", "V256": "VECTOR",
    "INT": "INT", "FLOAT": "FLOAT", "DOUBLE": "DOUBLE", "VECTOR": "VECTOR",
}

ABSTRACT_TOKENS = ("VAR", "CONST", "REG", "MEM", "FUNC")

# IntConst values must stay negatable without overflow; the parser and
# constructors enforce a signed 128-bit range.
INT_CONST_MIN = -(1 << 127)
INT_CONST_MAX = (1 << 127) - 1


# ---------------------------------------------------------------- operands

@dataclass(frozen=True)
class Tmp:
    ident: int


@dataclass(frozen=True)
class IntConst:
    value: int
    ty: str = "I64"

    def __post_init__(self):
        if not (INT_CONST_MIN <= self.value <= INT_CONST_MAX):
            raise ValueError(f"integer constant out of range: {self.value}")
        if TYPE_CLASS.get(self.ty) != "INT":
            raise ValueError(f"bad integer constant type {self.ty}")


@dataclass(frozen=True, eq=False)
class FloatConst:
    """64-bit IEEE constant.  Equality and hashing are bit-pattern based
    so NaN payloads round-trip and expression keys stay well-defined."""

    value: float

    def bits(self) -> bytes:
        return struct.pack("<d", self.value)

    def __eq__(self, other):
        return isinstance(other, FloatConst) and self.bits() == other.bits()

    def __hash__(self):
        return hash(self.bits())


@dataclass(frozen=True)
class Reg:
    ident: int


@dataclass(frozen=True)
class Mem:
    ident: int


@dataclass(frozen=True)
class Abstract:
    token: str

    def __post_init__(self):
        if self.token not in ABSTRACT_TOKENS:
            raise ValueError(f"bad abstract token {self.token}")


Operand = Union[Tmp, IntConst, FloatConst, Reg, Mem, Abstract]


# -------------------------------------------------------------- expressions

@dataclass(frozen=True)
class GetReg:
    reg: int
    ty: str


@dataclass(frozen=True)
class GetRegI:
    reg: int
    ty: str


@dataclass(frozen=True)
class Load:
    addr: Operand
    ty: str


@dataclass(frozen=True)
class OpApply:
    """UnOp/BinOp/TriOp collapsed into one node; arity is len(args)."""

    opcode: str
    args: tuple[Operand, ...]

    def __post_init__(self):
        if not 1 <= len(self.args) <= 3:
            raise ValueError(f"{self.opcode}: arity {len(self.args)} not in 1..3")


@dataclass(frozen=True)
class ConstExpr:
    """Bare-operand right-hand side: a copy or constant initialization."""

    value: Operand


Expression = Union[GetReg, GetRegI, Load, OpApply, ConstExpr]


# --------------------------------------------------------------- statements

@dataclass(frozen=True)
class TmpAssign:
    tmp: int
    ty: str
    expr: Expression


@dataclass(frozen=True)
class PutReg:
    reg: int
    value: Operand


@dataclass(frozen=True)
class PutRegI:
    reg: int
    value: Operand


@dataclass(frozen=True)
class Store:
    addr: Operand
    value: Operand


@dataclass(frozen=True)
class Call:
    target: str
    external: bool
    args: tuple[Operand, ...]
    tmp: int | None = None
    ty: str | None = None


Statement = Union[TmpAssign, PutReg, PutRegI, Store, Call]


# --------------------------------------------------------------- containers

@dataclass
class BasicBlock:
    ident: int
    statements: list[Statement] = field(default_factory=list)
    successors: list[int] = field(default_factory=list)


@dataclass
class IrFunction:
    name: str
    address: int = 0
    blocks: list[BasicBlock] = field(default_factory=list)
    strings: list[str] = field(default_factory=list)
    extern_calls: list[str] = field(default_factory=list)
    entry: int = 0

    def block_map(self) -> dict[int, BasicBlock]:
        return {b.ident: b for b in self.blocks}

    def statement_count(self) -> int:
        return sum(len(b.statements) for b in self.blocks)


@dataclass
class Program:
    name: str = ""
    functions: list[IrFunction] = field(default_factory=list)

    def function(self, name: str) -> IrFunction | None:
        for f in self.functions:
            if f.name == name:
                return f
        return None


# --------------------------------------------------------------- statement
# accessors shared by several passes

def stmt_operands(s: Statement) -> tuple[Operand, ...]:
    """Source operands of a statement, in syntactic order."""
    if isinstance(s, TmpAssign):
        e = s.expr
        if isinstance(e, Load):
            return (e.addr,)
        if isinstance(e, OpApply):
            return e.args
        if isinstance(e, ConstExpr):
            return (e.value,)
        return ()
    if isinstance(s, (PutReg, PutRegI)):
        return (s.value,)
    if isinstance(s, Store):
        return (s.addr, s.value)
    if isinstance(s, Call):
        return s.args
    raise TypeError(f"not a statement: {s!r}")


def assigned_tmp(s: Statement) -> int | None:
    if isinstance(s, TmpAssign):
        return s.tmp
    if isinstance(s, Call):
        return s.tmp
    return None


# --------------------------------------------------------------- validation

def validate_cfg(f: IrFunction) -> list[str]:
    """Structural diagnostics for one function; [] means well-formed."""
    out: list[str] = []
    ids = [b.ident for b in f.blocks]
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            out.append(f"{f.name}: duplicate block id {i}")
        seen.add(i)
    if sorted(seen) != list(range(len(seen))):
        out.append(f"{f.name}: block ids not dense from 0: {sorted(seen)}")
    if f.entry not in seen:
        out.append(f"{f.name}: missing entry block {f.entry}")
    for b in f.blocks:
        for s in b.successors:
            if s not in seen:
                out.append(f"{f.name}: bb {b.ident}: dangling successor {s}")
    return out


def check_ssa(f: IrFunction) -> list[str]:
    """Diagnostics for tmp ids assigned more than once (raw-form rule)."""
    out: list[str] = []
    seen: set[int] = set()
    for b in f.blocks:
        for s in b.statements:
            t = assigned_tmp(s)
            if t is None:
                continue
            if t in seen:
                out.append(f"{f.name}: bb {b.ident}: duplicate assignment to t{t}")
            seen.add(t)
    return out


def validate_program(p: Program) -> list[str]:
    """CFG + SSA diagnostics for every function, plus program-level rules."""
    out: list[str] = []
    names: set[str] = set()
    for f in p.functions:
        if f.name in names:
            out.append(f"duplicate function name {f.name!r}")
        names.add(f.name)
    for f in p.functions:
        out.extend(validate_cfg(f))
        out.extend(check_ssa(f))
        for b in f.blocks:
            for s in b.statements:
                if isinstance(s, Call) and not s.external and s.target not in names:
                    out.append(
                        f"{f.name}: bb {b.ident}: internal call target "
                        f"{s.target!r} not defined in program")
    return out
