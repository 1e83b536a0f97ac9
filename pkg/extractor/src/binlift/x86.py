"""x86-64 instruction decoder.

Covers the integer subset that compilers emit for ordinary control and
data flow: moves, loads/stores, ALU ops, shifts, pushes/pops, calls,
jumps, conditional branches, setcc/cmovcc, widening moves, and the
common padding forms.  SSE and system instructions are out of scope; an
unrecognized opcode raises DecodeError and the surrounding function is
skipped by the caller.

Decoding is table-free on purpose: each encoding family is a short
branch, which keeps the supported subset auditable.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

CC_NAMES = ("o", "no", "b", "ae", "e", "ne", "be", "a",
            "s", "ns", "p", "np", "l", "ge", "le", "g")

_GROUP1 = ("add", "or", "adc", "sbb", "and", "sub", "xor", "cmp")
_GROUP2 = ("rol", "ror", "rcl", "rcr", "shl", "shr", "shl", "sar")
_GROUP3 = ("test", "test", "not", "neg", "mul1", "imul1", "div1", "idiv1")

# legacy prefixes we accept and mostly ignore
_PREFIXES = frozenset({0x66, 0x67, 0xF2, 0xF3,
                       0x2E, 0x3E, 0x26, 0x64, 0x65, 0x36})


class DecodeError(Exception):
    def __init__(self, addr: int, why: str):
        super().__init__(f"0x{addr:x}: {why}")
        self.addr = addr
        self.why = why


@dataclass(frozen=True)
class R:
    idx: int
    w: int


@dataclass(frozen=True)
class M:
    base: int | None      # register index, or None
    index: int | None
    scale: int
    disp: int
    w: int
    abs: int | None = None  # resolved absolute address for RIP-relative


@dataclass(frozen=True)
class I:
    val: int
    w: int


@dataclass(frozen=True)
class Insn:
    addr: int
    size: int
    op: str
    ops: tuple = ()
    cc: str | None = None
    target: int | None = None
    # seq | call | jump | ijump | branch | ret | term
    kind: str = "seq"


def _sx(val: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (val & (sign - 1)) - (val & sign)


class _Cursor:
    def __init__(self, data: bytes, pos: int, addr: int):
        self.data = data
        self.pos = pos
        self.addr = addr

    def u8(self) -> int:
        if self.pos >= len(self.data):
            raise DecodeError(self.addr, "truncated instruction")
        b = self.data[self.pos]
        self.pos += 1
        return b

    def bytes_le(self, n: int) -> int:
        if self.pos + n > len(self.data):
            raise DecodeError(self.addr, "truncated instruction")
        v = int.from_bytes(self.data[self.pos:self.pos + n], "little")
        self.pos += n
        return v

    def imm(self, n: int) -> int:
        return _sx(self.bytes_le(n), n * 8)


def _modrm(cur: _Cursor, rex_r: int, rex_x: int, rex_b: int, w: int):
    """Returns (reg_index, rm operand).  RIP-relative leaves base=-1."""
    byte = cur.u8()
    mod = byte >> 6
    reg = ((byte >> 3) & 7) | (rex_r << 3)
    rm = byte & 7

    if mod == 3:
        return reg, R(rm | (rex_b << 3), w)

    base: int | None
    index = None
    scale = 1
    if rm == 4:
        sib = cur.u8()
        scale = 1 << (sib >> 6)
        idx = ((sib >> 3) & 7) | (rex_x << 3)
        if idx != 4:
            index = idx
        base = (sib & 7) | (rex_b << 3)
        if (sib & 7) == 5 and mod == 0:
            base = None
            disp = cur.imm(4)
            return reg, M(base, index, scale, disp, w)
    elif rm == 5 and mod == 0:
        disp = cur.imm(4)
        return reg, M(-1, None, 1, disp, w)   # RIP-relative, fixed up later
    else:
        base = rm | (rex_b << 3)

    if mod == 1:
        disp = cur.imm(1)
    elif mod == 2:
        disp = cur.imm(4)
    else:
        disp = 0
    return reg, M(base, index, scale, disp, w)


def decode(data: bytes, pos: int, addr: int) -> Insn:
    """Decode one instruction at data[pos], which sits at vaddr addr."""
    cur = _Cursor(data, pos, addr)

    p66 = pf2 = pf3 = False
    rex = 0
    while True:
        b = cur.u8()
        if b in _PREFIXES:
            p66 |= b == 0x66
            pf2 |= b == 0xF2
            pf3 |= b == 0xF3
            continue
        if 0x40 <= b <= 0x4F:
            rex = b
            continue
        break

    rex_w, rex_r = (rex >> 3) & 1, (rex >> 2) & 1
    rex_x, rex_b = (rex >> 1) & 1, rex & 1
    w = 64 if rex_w else (16 if p66 else 32)

    def done(op, ops=(), cc=None, target=None, kind="seq") -> Insn:
        size = cur.pos - pos
        fixed = []
        for o in ops:
            if isinstance(o, M) and o.base == -1:
                fixed.append(M(None, None, 1, o.disp, o.w,
                               abs=(addr + size + o.disp) & 0xFFFFFFFFFFFFFFFF))
            else:
                fixed.append(o)
        return Insn(addr, size, op, tuple(fixed), cc, target, kind)

    def rel_target(n: int) -> int:
        d = cur.imm(n)
        return (addr + (cur.pos - pos) + d) & 0xFFFFFFFFFFFFFFFF

    # --- one-byte opcodes -------------------------------------------------
    if 0x50 <= b <= 0x57:
        return done("push", (R((b - 0x50) | (rex_b << 3), 64),))
    if 0x58 <= b <= 0x5F:
        return done("pop", (R((b - 0x58) | (rex_b << 3), 64),))
    if b == 0x68:
        return done("push", (I(cur.imm(4), 64),))
    if b == 0x6A:
        return done("push", (I(cur.imm(1), 64),))

    if b in (0x88, 0x89, 0x8A, 0x8B):
        ww = 8 if b in (0x88, 0x8A) else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        r = R(reg, ww)
        return done("mov", (rm, r) if b in (0x88, 0x89) else (r, rm))
    if b == 0x8D:
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, w)
        if not isinstance(rm, M):
            raise DecodeError(addr, "lea with register source")
        return done("lea", (R(reg, w), rm))
    if 0xB0 <= b <= 0xB7:
        return done("mov", (R((b - 0xB0) | (rex_b << 3), 8), I(cur.imm(1), 8)))
    if 0xB8 <= b <= 0xBF:
        n = 8 if rex_w else (2 if p66 else 4)
        return done("mov", (R((b - 0xB8) | (rex_b << 3), w), I(cur.imm(n), w)))
    if b in (0xC6, 0xC7):
        ww = 8 if b == 0xC6 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        if reg & 7 != 0:
            raise DecodeError(addr, f"unsupported group-11 op {reg & 7}")
        imm = cur.imm(1 if b == 0xC6 else (2 if ww == 16 else 4))
        return done("mov", (rm, I(imm, ww)))

    if b < 0x40 and (b & 7) <= 5:
        name = _GROUP1[b >> 3]
        form = b & 7
        if form in (0, 1, 2, 3):
            ww = 8 if form in (0, 2) else w
            reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
            r = R(reg, ww)
            return done(name, (rm, r) if form in (0, 1) else (r, rm))
        if form == 4:
            return done(name, (R(0, 8), I(cur.imm(1), 8)))
        return done(name, (R(0, w), I(cur.imm(2 if w == 16 else 4), w)))
    if b in (0x80, 0x81, 0x83):
        ww = 8 if b == 0x80 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        n = 1 if b in (0x80, 0x83) else (2 if ww == 16 else 4)
        return done(_GROUP1[reg & 7], (rm, I(cur.imm(n), ww)))

    if b in (0x84, 0x85):
        ww = 8 if b == 0x84 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        return done("test", (rm, R(reg, ww)))
    if b in (0xA8, 0xA9):
        ww = 8 if b == 0xA8 else w
        return done("test", (R(0, ww), I(cur.imm(1 if ww == 8 else 4), ww)))

    if b in (0xF6, 0xF7):
        ww = 8 if b == 0xF6 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        name = _GROUP3[reg & 7]
        if name == "test":
            return done("test", (rm, I(cur.imm(1 if ww == 8 else 4), ww)))
        return done(name, (rm,))

    if b in (0xC0, 0xC1):
        ww = 8 if b == 0xC0 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        return done(_GROUP2[reg & 7], (rm, I(cur.imm(1), 8)))
    if b in (0xD0, 0xD1):
        ww = 8 if b == 0xD0 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        return done(_GROUP2[reg & 7], (rm, I(1, 8)))
    if b in (0xD2, 0xD3):
        ww = 8 if b == 0xD2 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        return done(_GROUP2[reg & 7], (rm, R(1, 8)))

    if b == 0x63:
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, 32)
        return done("movsxd", (R(reg, 64), rm))
    if b in (0x69, 0x6B):
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, w)
        imm = cur.imm(1 if b == 0x6B else (2 if w == 16 else 4))
        return done("imul", (R(reg, w), rm, I(imm, w)))
    if b in (0x86, 0x87):
        ww = 8 if b == 0x86 else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        return done("xchg", (rm, R(reg, ww)))

    if b == 0xE8:
        return done("call", target=rel_target(4), kind="call")
    if b == 0xE9:
        return done("jmp", target=rel_target(4), kind="jump")
    if b == 0xEB:
        return done("jmp", target=rel_target(1), kind="jump")
    if 0x70 <= b <= 0x7F:
        return done("jcc", cc=CC_NAMES[b - 0x70], target=rel_target(1),
                    kind="branch")

    if b == 0xC3:
        return done("ret", kind="ret")
    if b == 0xC2:
        cur.bytes_le(2)
        return done("ret", kind="ret")
    if b == 0xC9:
        return done("leave")
    if b == 0xF4:
        return done("hlt", kind="term")
    if b == 0xCC:
        return done("int3", kind="term")
    if b == 0x90:
        return done("nop")
    if b == 0x98:
        return done("cdqe" if rex_w else "cwde")
    if b == 0x99:
        return done("cqo" if rex_w else "cdq")

    if b in (0xFE, 0xFF):
        ww = 8 if b == 0xFE else w
        reg, rm = _modrm(cur, rex_r, rex_x, rex_b, ww)
        sel = reg & 7
        if sel == 0:
            return done("inc", (rm,))
        if sel == 1:
            return done("dec", (rm,))
        if b == 0xFF and sel in (2, 4, 6):
            # call/jmp/push operate on full pointers regardless of REX.W
            rm = replace(rm, w=64)
            if sel == 2:
                return done("call", (rm,), kind="call")
            if sel == 4:
                return done("jmp", (rm,), kind="ijump")
            return done("push", (rm,))
        raise DecodeError(addr, f"unsupported group-5 op {sel}")

    if b in (0xAA, 0xAB) and pf3:
        return done("repstos")
    if b in (0xA4, 0xA5) and pf3:
        return done("repmovs")

    # --- two-byte opcodes -------------------------------------------------
    if b == 0x0F:
        b2 = cur.u8()
        if b2 == 0x05:
            return done("syscall")
        if b2 == 0x0B:
            return done("ud2", kind="term")
        if b2 == 0x1E and pf3:
            nxt = cur.u8()
            if nxt in (0xFA, 0xFB):
                return done("endbr")
            raise DecodeError(addr, f"unsupported 0f1e form {nxt:#x}")
        if b2 == 0x1F:
            _reg, _rm = _modrm(cur, rex_r, rex_x, rex_b, w)
            return done("nop")
        if 0x40 <= b2 <= 0x4F:
            reg, rm = _modrm(cur, rex_r, rex_x, rex_b, w)
            return done("cmovcc", (R(reg, w), rm), cc=CC_NAMES[b2 - 0x40])
        if 0x80 <= b2 <= 0x8F:
            return done("jcc", cc=CC_NAMES[b2 - 0x80], target=rel_target(4),
                        kind="branch")
        if 0x90 <= b2 <= 0x9F:
            _reg, rm = _modrm(cur, rex_r, rex_x, rex_b, 8)
            return done("setcc", (rm,), cc=CC_NAMES[b2 - 0x90])
        if b2 == 0xAF:
            reg, rm = _modrm(cur, rex_r, rex_x, rex_b, w)
            return done("imul", (R(reg, w), rm))
        if b2 in (0xB6, 0xB7, 0xBE, 0xBF):
            srcw = 8 if b2 in (0xB6, 0xBE) else 16
            reg, rm = _modrm(cur, rex_r, rex_x, rex_b, srcw)
            op = "movzx" if b2 in (0xB6, 0xB7) else "movsx"
            return done(op, (R(reg, w), rm))
        raise DecodeError(addr, f"unsupported opcode 0f {b2:02x}")

    raise DecodeError(addr, f"unsupported opcode {b:02x}")
