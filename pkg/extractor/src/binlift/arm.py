"""AArch64 instruction decoder.

Fixed-width A64 subset: procedure prologue/epilogue pairs, immediate
and register ALU forms, wide-immediate moves, page-address
materialization, loads/stores with unsigned or pre/post-indexed
offsets, and the usual branch family.  Anything else raises
DecodeError, which skips the enclosing function.

Register numbers are raw: 0..30 are x0..x30 and 31 is SP or XZR
depending on position; the lifter resolves that per operand.
"""

from __future__ import annotations

from dataclasses import dataclass

COND_NAMES = ("eq", "ne", "hs", "lo", "mi", "pl", "vs", "vc",
              "hi", "ls", "ge", "lt", "gt", "le", "al", "nv")


class DecodeError(Exception):
    def __init__(self, addr: int, why: str):
        super().__init__(f"0x{addr:x}: {why}")
        self.addr = addr
        self.why = why


@dataclass(frozen=True)
class AInsn:
    addr: int
    op: str
    rd: int = -1
    rn: int = -1
    rm: int = -1
    rt: int = -1
    rt2: int = -1
    ra: int = -1
    imm: int = 0
    hw: int = 0             # wide-move half-word index
    mode: str = ""          # ldp/stp/ldri/stri: off | pre | post
    width: int = 8          # memory access bytes
    sf: int = 1             # 1 = 64-bit operation
    cc: str | None = None
    target: int | None = None
    kind: str = "seq"       # seq | call | jump | ijump | branch | ret | term

    size: int = 4


def _sx(val: int, bits: int) -> int:
    sign = 1 << (bits - 1)
    return (val & (sign - 1)) - (val & sign)


def decode(word: int, addr: int) -> AInsn:
    u = word & 0xFFFFFFFF
    sf = u >> 31

    if (u & 0xFFFFF000) == 0xD5032000:   # hint space: nop, bti, pac...
        return AInsn(addr, "nop")
    if (u & 0xFFE0001F) == 0xD4000001:
        return AInsn(addr, "svc", imm=(u >> 5) & 0xFFFF)

    if (u & 0xFFFFFC1F) == 0xD65F0000:
        return AInsn(addr, "ret", rn=(u >> 5) & 31, kind="ret")
    if (u & 0xFFFFFC1F) == 0xD61F0000:
        return AInsn(addr, "br", rn=(u >> 5) & 31, kind="ijump")
    if (u & 0xFFFFFC1F) == 0xD63F0000:
        return AInsn(addr, "blr", rn=(u >> 5) & 31, kind="call")

    if (u & 0xFC000000) in (0x14000000, 0x94000000):
        t = (addr + _sx(u & 0x3FFFFFF, 26) * 4) & 0xFFFFFFFFFFFFFFFF
        if u >> 26 == 0x25:
            return AInsn(addr, "bl", target=t, kind="call")
        return AInsn(addr, "b", target=t, kind="jump")
    if (u & 0xFF000010) == 0x54000000:
        t = (addr + _sx((u >> 5) & 0x7FFFF, 19) * 4) & 0xFFFFFFFFFFFFFFFF
        return AInsn(addr, "b.cond", cc=COND_NAMES[u & 15], target=t,
                     kind="branch")
    if (u & 0x7F000000) in (0x34000000, 0x35000000):
        t = (addr + _sx((u >> 5) & 0x7FFFF, 19) * 4) & 0xFFFFFFFFFFFFFFFF
        op = "cbz" if (u >> 24) & 1 == 0 else "cbnz"
        return AInsn(addr, op, rt=u & 31, sf=sf, target=t, kind="branch")

    if (u & 0x9F000000) == 0x90000000:
        immlo = (u >> 29) & 3
        immhi = (u >> 5) & 0x7FFFF
        page = (addr & ~0xFFF) + (_sx((immhi << 2) | immlo, 21) << 12)
        return AInsn(addr, "adrp", rd=u & 31,
                     imm=page & 0xFFFFFFFFFFFFFFFF)
    if (u & 0x9F000000) == 0x10000000:
        immlo = (u >> 29) & 3
        immhi = (u >> 5) & 0x7FFFF
        return AInsn(addr, "adr", rd=u & 31,
                     imm=(addr + _sx((immhi << 2) | immlo, 21))
                     & 0xFFFFFFFFFFFFFFFF)

    if (u & 0x7F800000) in (0x52800000, 0x12800000, 0x72800000):
        hw = (u >> 21) & 3
        imm = ((u >> 5) & 0xFFFF) << (16 * hw)
        op = {2: "movz", 0: "movn", 3: "movk"}.get((u >> 29) & 3)
        if op is None:
            raise DecodeError(addr, "bad wide-move opc")
        return AInsn(addr, op, rd=u & 31, imm=imm, hw=hw, sf=sf)

    if (u & 0x7F800000) in (0x11000000, 0x51000000, 0x31000000, 0x71000000):
        imm = (u >> 10) & 0xFFF
        if (u >> 22) & 1:
            imm <<= 12
        fam = (u >> 29) & 3
        op = {0: "addi", 2: "subi", 1: "addsi", 3: "subsi"}[fam]
        return AInsn(addr, op, rd=u & 31, rn=(u >> 5) & 31, imm=imm, sf=sf)

    if (u & 0x7F200000) in (0x0B000000, 0x4B000000, 0x2B000000, 0x6B000000):
        if (u >> 10) & 0x3F:
            raise DecodeError(addr, "shifted register operand")
        fam = (u >> 29) & 3
        op = {0: "addr", 2: "subr", 1: "addsr", 3: "subsr"}[fam]
        return AInsn(addr, op, rd=u & 31, rn=(u >> 5) & 31, rm=(u >> 16) & 31,
                     sf=sf)
    if (u & 0x7F200000) in (0x0A000000, 0x2A000000, 0x4A000000, 0x6A000000):
        if (u >> 10) & 0x3F:
            raise DecodeError(addr, "shifted register operand")
        fam = (u >> 29) & 3
        op = {0: "andr", 1: "orrr", 2: "eorr", 3: "andsr"}[fam]
        return AInsn(addr, op, rd=u & 31, rn=(u >> 5) & 31, rm=(u >> 16) & 31,
                     sf=sf)

    if (u & 0x7FE08000) == 0x1B000000:
        return AInsn(addr, "madd", rd=u & 31, rn=(u >> 5) & 31,
                     rm=(u >> 16) & 31, ra=(u >> 10) & 31, sf=sf)
    if (u & 0x7FE0FC00) in (0x1AC00800, 0x1AC00C00):
        op = "udiv" if (u >> 10) & 1 == 0 else "sdiv"
        return AInsn(addr, op, rd=u & 31, rn=(u >> 5) & 31, rm=(u >> 16) & 31,
                     sf=sf)
    if (u & 0x7F800000) in (0x53000000, 0x13000000):
        op = "ubfm" if (u >> 29) & 3 == 2 else "sbfm"
        return AInsn(addr, op, rd=u & 31, rn=(u >> 5) & 31,
                     imm=(u >> 10) & 0xFFF, sf=sf)

    # load/store pair, 64-bit registers
    if (u & 0xFE400000) in (0xA8000000, 0xA8400000):
        load = (u >> 22) & 1
        mode = {1: "post", 2: "off", 3: "pre"}.get((u >> 23) & 3)
        if mode is None:
            raise DecodeError(addr, "bad pair addressing mode")
        return AInsn(addr, "ldp" if load else "stp",
                     rt=u & 31, rt2=(u >> 10) & 31, rn=(u >> 5) & 31,
                     imm=_sx((u >> 15) & 0x7F, 7) * 8, mode=mode)

    # load/store register, unsigned immediate offset
    fam = u & 0xFFC00000
    if fam in (0xF9000000, 0xF9400000, 0xB9000000, 0xB9400000,
               0x39000000, 0x39400000, 0x79000000, 0x79400000):
        width = {0xF9: 8, 0xB9: 4, 0x79: 2, 0x39: 1}[u >> 24]
        load = (u >> 22) & 1
        return AInsn(addr, "ldri" if load else "stri",
                     rt=u & 31, rn=(u >> 5) & 31,
                     imm=((u >> 10) & 0xFFF) * width, mode="off", width=width)
    # pre/post-indexed forms (writeback), 64-bit registers
    if (u & 0xFF200400) == 0xF8000400:
        load = (u >> 22) & 1
        mode = "post" if (u >> 11) & 1 == 0 else "pre"
        return AInsn(addr, "ldri" if load else "stri",
                     rt=u & 31, rn=(u >> 5) & 31,
                     imm=_sx((u >> 12) & 0x1FF, 9), mode=mode, width=8)

    if (u & 0xFF000000) == 0x58000000:
        t = (addr + _sx((u >> 5) & 0x7FFFF, 19) * 4) & 0xFFFFFFFFFFFFFFFF
        return AInsn(addr, "ldrlit", rt=u & 31, target=t)

    raise DecodeError(addr, f"unsupported instruction {u:08x}")
