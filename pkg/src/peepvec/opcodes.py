"""Opcode inventory: the data-driven raw -> canonical opcode table.

The table ships as data (data/opcodes.tbl) so the inventory can grow
without code changes.  `unk` is the synthetic canonical opcode assigned
to anything outside the inventory during canonicalization; it is also a
valid opcode token in input text so lifters can emit it directly.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .ir import CLASS_TYPES

# Canonical opcodes that encode integer width casts; canonicalization
# deletes these statements and forwards their operand.
INT_CAST_OPS = frozenset({"ext", "trunc"})

UNKNOWN_OP = "unk"

# Statement-form entities that are not expression opcodes but participate
# in triplets and the vocabulary.
STMT_OPS = ("get", "geti", "put", "puti", "load", "store", "call", "mov")


@dataclass(frozen=True)
class OpInfo:
    canonical: str
    ty_class: str
    commutative: bool
    foldable: bool


class OpcodeTable:
    def __init__(self, rows: list[tuple[str, OpInfo]]):
        self.raw: dict[str, OpInfo] = {}
        for name, info in rows:
            if name in self.raw:
                raise ValueError(f"duplicate raw opcode {name}")
            self.raw[name] = info
        self.canonical: set[str] = {i.canonical for i in self.raw.values()}
        self._comm = {i.canonical: i.commutative for i in self.raw.values()}
        self._fold = {i.canonical: i.foldable for i in self.raw.values()}
        for name, info in self.raw.items():
            if self._comm[info.canonical] != info.commutative:
                raise ValueError(f"inconsistent commutative flag for {info.canonical}")
            if self._fold[info.canonical] != info.foldable:
                raise ValueError(f"inconsistent foldable flag for {info.canonical}")

    def is_known(self, opcode: str) -> bool:
        return opcode in self.raw or opcode in self.canonical or opcode == UNKNOWN_OP

    def canonical_of(self, opcode: str) -> str:
        """Canonical spelling; anything outside the inventory becomes unk."""
        info = self.raw.get(opcode)
        if info is not None:
            return info.canonical
        if opcode in self.canonical:
            return opcode
        return UNKNOWN_OP

    def commutative(self, canonical: str) -> bool:
        return self._comm.get(canonical, False)

    def foldable(self, canonical: str) -> bool:
        return self._fold.get(canonical, False)


def _parse_table(text: str) -> OpcodeTable:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"opcodes.tbl:{lineno}: expected 5 columns")
        name, canon, ty, comm, fold = parts
        if ty not in CLASS_TYPES:
            raise ValueError(f"opcodes.tbl:{lineno}: bad type class {ty}")
        if comm not in "01" or fold not in "01":
            raise ValueError(f"opcodes.tbl:{lineno}: flags must be 0 or 1")
        rows.append((name, OpInfo(canon, ty, comm == "1", fold == "1")))
    return OpcodeTable(rows)


_table: OpcodeTable | None = None


def opcode_table() -> OpcodeTable:
    global _table
    if _table is None:
        text = resources.files("peepvec.data").joinpath("opcodes.tbl").read_text()
        _table = _parse_table(text)
    return _table
