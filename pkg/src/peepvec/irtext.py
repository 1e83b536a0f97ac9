"""Textual .vexir format: parser and serializer.

Line-oriented; `#` starts a comment outside string literals.  The
serializer emits one fixed formatting, so serialize(parse(s)) is
idempotent and parse(serialize(p)) is the identity on valid programs.

Integer constants accept an optional width suffix (`0x1` means
`0x1:I64`); the serializer always writes the explicit form.
"""

from __future__ import annotations

import re

from .ir import (
    ALL_TYPES, Abstract, BasicBlock, Call, ConstExpr, FloatConst, GetReg,
    GetRegI, IntConst, IrFunction, Load, Mem, OpApply, Operand, Program,
    PutReg, PutRegI, Reg, Statement, Store, Tmp, TmpAssign, validate_program,
)
from .opcodes import opcode_table


class ParseError(Exception):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        super().__init__(message)
        self.message = message
        self.line = line
        self.col = col

    def __str__(self):
        if self.line:
            return f"line {self.line}, col {self.col}: {self.message}"
        return self.message


# ----------------------------------------------------------------- strings

_ESCAPES = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}
_UNESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}


def unescape_string(raw: str, line: int = 0) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        if i + 1 >= len(raw):
            raise ParseError("dangling backslash in string", line, i + 1)
        nxt = raw[i + 1]
        if nxt in _ESCAPES:
            out.append(_ESCAPES[nxt])
            i += 2
        elif nxt == "x":
            if i + 3 >= len(raw):
                raise ParseError("truncated \\xHH escape", line, i + 1)
            try:
                out.append(chr(int(raw[i + 2:i + 4], 16)))
            except ValueError:
                raise ParseError(f"bad \\x escape {raw[i:i+4]!r}", line, i + 1)
            i += 4
        else:
            raise ParseError(f"unknown escape \\{nxt}", line, i + 1)
    return "".join(out)


def escape_string(s: str) -> str:
    out = []
    for ch in s:
        if ch in _UNESCAPES:
            out.append(_UNESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "".join(out)


# ------------------------------------------------------------------ parser

_TY = r"I8|I16|I32|I64|F32|F64|V128|V256|INT|FLOAT|DOUBLE|VECTOR"
_STR = r'"((?:[^"\\]|\\.)*)"'

_RE_PROGRAM = re.compile(rf"^program\s+{_STR}\s*$")
_RE_FN = re.compile(rf"^fn\s+{_STR}\s+addr=0x([0-9a-fA-F]+)\s*$")
_RE_META_STR = re.compile(rf"^str\s+{_STR}\s*$")
_RE_META_CALL = re.compile(rf"^call\s+{_STR}\s*$")
_RE_BB = re.compile(r"^bb\s+(\d+)\s*$")
_RE_SUCC = re.compile(r"^succ((?:\s+\d+)*)\s*$")

_RE_TMP_ASSIGN = re.compile(rf"^t(\d+):({_TY})\s*=\s*(.+)$")
_RE_PUT = re.compile(r"^put\(r(\d+)\)\s*=\s*(.+)$")
_RE_PUTI = re.compile(r"^puti\(r(\d+)\)\s*=\s*(.+)$")
_RE_STORE = re.compile(r"^store\(([^()]+)\)\s*=\s*(.+)$")
_RE_CALL = re.compile(rf"^call\s+(int|ext)\s+{_STR}\s*\((.*)\)\s*$")

_RE_GET = re.compile(rf"^get\(r(\d+)\):({_TY})$")
_RE_GETI = re.compile(rf"^geti\(r(\d+)\):({_TY})$")
_RE_LOAD = re.compile(rf"^load\(([^()]+)\):({_TY})$")
_RE_APPLY = re.compile(r"^([A-Za-z0-9_]+)\((.*)\)$")

_RE_INT = re.compile(rf"^0x([0-9a-fA-F]+)(?::({_TY}))?$")
_RE_NEG = re.compile(rf"^-(\d+)(?::({_TY}))?$")


def _parse_operand(tok: str, line: int) -> Operand:
    tok = tok.strip()
    if not tok:
        raise ParseError("empty operand", line)
    if tok[0] == "t" and tok[1:].isdigit():
        return Tmp(int(tok[1:]))
    if tok[0] == "r" and tok[1:].isdigit():
        return Reg(int(tok[1:]))
    if tok[0] == "M" and tok[1:].isdigit():
        return Mem(int(tok[1:]))
    if tok in ("VAR", "CONST", "REG", "MEM", "FUNC"):
        return Abstract(tok)
    m = _RE_INT.match(tok)
    if m:
        try:
            return IntConst(int(m.group(1), 16), m.group(2) or "I64")
        except ValueError as e:
            raise ParseError(str(e), line)
    m = _RE_NEG.match(tok)
    if m:
        try:
            return IntConst(-int(m.group(1)), m.group(2) or "I64")
        except ValueError as e:
            raise ParseError(str(e), line)
    if tok[0] == "f":
        try:
            return FloatConst(float(tok[1:]))
        except ValueError:
            raise ParseError(f"bad float constant {tok!r}", line)
    raise ParseError(f"bad operand {tok!r}", line)


def _split_operands(text: str, line: int) -> tuple[Operand, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(_parse_operand(t, line) for t in text.split(","))


def _parse_rhs(text: str, line: int):
    text = text.strip()
    m = _RE_GET.match(text)
    if m:
        return GetReg(int(m.group(1)), m.group(2))
    m = _RE_GETI.match(text)
    if m:
        return GetRegI(int(m.group(1)), m.group(2))
    m = _RE_LOAD.match(text)
    if m:
        return Load(_parse_operand(m.group(1), line), m.group(2))
    m = _RE_APPLY.match(text)
    if m:
        opcode = m.group(1)
        if not opcode_table().is_known(opcode):
            raise ParseError(f"unknown opcode token {opcode!r}", line)
        args = _split_operands(m.group(2), line)
        if not 1 <= len(args) <= 3:
            raise ParseError(f"{opcode}: expected 1..3 operands, got {len(args)}", line)
        return OpApply(opcode, args)
    return ConstExpr(_parse_operand(text, line))


def _strip_comment(line: str) -> str:
    """Drop `# ...` unless the hash sits inside a string literal."""
    if "#" not in line:
        return line
    in_str = False
    i = 0
    while i < len(line):
        ch = line[i]
        if in_str:
            if ch == "\\":
                i += 1
            elif ch == '"':
                in_str = False
        elif ch == '"':
            in_str = True
        elif ch == "#":
            return line[:i]
        i += 1
    return line


def parse_program(text: str) -> Program:
    prog = Program()
    fn: IrFunction | None = None
    block: BasicBlock | None = None
    block_ids: set[int] = set()
    assigned: dict[int, int] = {}  # tmp id -> line of first assignment
    saw_fn = False
    saw_header = False

    def close_block(line_no: int):
        nonlocal block
        if block is not None:
            raise ParseError(f"bb {block.ident} not closed by succ", line_no)

    def close_fn(line_no: int):
        nonlocal fn
        close_block(line_no)
        fn = None

    def statement_target(s: Statement, line_no: int):
        t = s.tmp if isinstance(s, (TmpAssign, Call)) else None
        if t is not None:
            if t in assigned:
                raise ParseError(
                    f"duplicate tmp assignment t{t} (first at line {assigned[t]})",
                    line_no)
            assigned[t] = line_no

    for line_no, raw_line in enumerate(text.splitlines(), 1):
        line = _strip_comment(raw_line).strip()
        if not line:
            continue

        if line.startswith("program"):
            m = _RE_PROGRAM.match(line)
            if not m:
                raise ParseError("malformed program header", line_no)
            if saw_header or saw_fn:
                raise ParseError("program header must come first, once", line_no)
            prog.name = unescape_string(m.group(1), line_no)
            saw_header = True
            continue

        if line.startswith("fn "):
            m = _RE_FN.match(line)
            if not m:
                raise ParseError("malformed fn header", line_no)
            close_fn(line_no)
            fn = IrFunction(unescape_string(m.group(1), line_no),
                            int(m.group(2), 16))
            prog.functions.append(fn)
            block_ids = set()
            assigned = {}
            saw_fn = True
            continue

        if fn is None:
            raise ParseError(f"statement outside function: {line!r}", line_no)

        if line.startswith("bb"):
            m = _RE_BB.match(line)
            if m:
                close_block(line_no)
                ident = int(m.group(1))
                if ident in block_ids:
                    raise ParseError(f"duplicate block id {ident}", line_no)
                block_ids.add(ident)
                block = BasicBlock(ident)
                fn.blocks.append(block)
                continue

        if line.startswith("succ"):
            m = _RE_SUCC.match(line)
            if m:
                if block is None:
                    raise ParseError("succ outside a block", line_no)
                block.successors = [int(t) for t in m.group(1).split()]
                block = None
                continue

        if block is None:
            # function metadata zone
            m = _RE_META_STR.match(line)
            if m:
                fn.strings.append(unescape_string(m.group(1), line_no))
                continue
            m = _RE_META_CALL.match(line)
            if m:
                fn.extern_calls.append(unescape_string(m.group(1), line_no))
                continue
            raise ParseError(f"expected meta or bb, got {line!r}", line_no)

        stmt = _parse_statement(line, line_no)
        statement_target(stmt, line_no)
        block.statements.append(stmt)

    close_fn(len(text.splitlines()) + 1)

    issues = validate_program(prog)
    if issues:
        raise ParseError("; ".join(issues))
    return prog


def _parse_statement(line: str, line_no: int) -> Statement:
    m = _RE_TMP_ASSIGN.match(line)
    if m:
        tmp, ty, rhs = int(m.group(1)), m.group(2), m.group(3)
        cm = _RE_CALL.match(rhs.strip())
        if cm:
            return Call(unescape_string(cm.group(2), line_no),
                        cm.group(1) == "ext",
                        _split_operands(cm.group(3), line_no),
                        tmp=tmp, ty=ty)
        return TmpAssign(tmp, ty, _parse_rhs(rhs, line_no))
    m = _RE_PUT.match(line)
    if m:
        return PutReg(int(m.group(1)), _parse_operand(m.group(2), line_no))
    m = _RE_PUTI.match(line)
    if m:
        return PutRegI(int(m.group(1)), _parse_operand(m.group(2), line_no))
    m = _RE_STORE.match(line)
    if m:
        return Store(_parse_operand(m.group(1), line_no),
                     _parse_operand(m.group(2), line_no))
    m = _RE_CALL.match(line)
    if m:
        return Call(unescape_string(m.group(2), line_no),
                    m.group(1) == "ext",
                    _split_operands(m.group(3), line_no))
    raise ParseError(f"cannot parse statement {line!r}", line_no)


# -------------------------------------------------------------- serializer

def operand_text(op: Operand) -> str:
    if isinstance(op, Tmp):
        return f"t{op.ident}"
    if isinstance(op, Reg):
        return f"r{op.ident}"
    if isinstance(op, Mem):
        return f"M{op.ident}"
    if isinstance(op, Abstract):
        return op.token
    if isinstance(op, IntConst):
        if op.value < 0:
            return f"-{-op.value}:{op.ty}"
        return f"0x{op.value:x}:{op.ty}"
    if isinstance(op, FloatConst):
        return f"f{op.value!r}"
    raise TypeError(f"not an operand: {op!r}")


def _rhs_text(e) -> str:
    if isinstance(e, GetReg):
        return f"get(r{e.reg}):{e.ty}"
    if isinstance(e, GetRegI):
        return f"geti(r{e.reg}):{e.ty}"
    if isinstance(e, Load):
        return f"load({operand_text(e.addr)}):{e.ty}"
    if isinstance(e, OpApply):
        return f"{e.opcode}({', '.join(operand_text(a) for a in e.args)})"
    if isinstance(e, ConstExpr):
        return operand_text(e.value)
    raise TypeError(f"not an expression: {e!r}")


def statement_text(s: Statement) -> str:
    if isinstance(s, TmpAssign):
        return f"t{s.tmp}:{s.ty} = {_rhs_text(s.expr)}"
    if isinstance(s, PutReg):
        return f"put(r{s.reg}) = {operand_text(s.value)}"
    if isinstance(s, PutRegI):
        return f"puti(r{s.reg}) = {operand_text(s.value)}"
    if isinstance(s, Store):
        return f"store({operand_text(s.addr)}) = {operand_text(s.value)}"
    if isinstance(s, Call):
        kind = "ext" if s.external else "int"
        args = ", ".join(operand_text(a) for a in s.args)
        call = f'call {kind} "{escape_string(s.target)}" ({args})'
        if s.tmp is not None:
            return f"t{s.tmp}:{s.ty} = {call}"
        return call
    raise TypeError(f"not a statement: {s!r}")


def serialize_program(p: Program) -> str:
    lines: list[str] = []
    if p.name:
        lines.append(f'program "{escape_string(p.name)}"')
    for f in p.functions:
        lines.append(f'fn "{escape_string(f.name)}" addr=0x{f.address:x}')
        for s in f.strings:
            lines.append(f'  str "{escape_string(s)}"')
        for c in f.extern_calls:
            lines.append(f'  call "{escape_string(c)}"')
        for b in f.blocks:
            lines.append(f"  bb {b.ident}")
            for s in b.statements:
                lines.append(f"    {statement_text(s)}")
            succ = " ".join(str(x) for x in b.successors)
            lines.append(f"    succ {succ}".rstrip())
    return "\n".join(lines) + "\n"
