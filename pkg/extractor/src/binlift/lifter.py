"""Instruction semantics and the extraction driver.

Each decoded function is rewritten as typed three-address statements
over a flat temporary namespace, with architectural registers accessed
through get/put at fixed byte offsets.  Machine flags live at a
dedicated offset and are written as opaque `unk` applications; at a
conditional branch the condition is reconstructed from the most recent
flag-setting instruction in the block (compare fusion), falling back to
an opaque read when the producer is unknown.

Known approximations, chosen to keep the emitted IR small and honest:
  - writes to 8/16-bit subregisters zero-extend instead of merging
  - widening multiply high halves, remainders, and rotates are `unk`
  - the string ops model one representative store per run
Structure (blocks, edges, calls) is exact for the supported subset.
"""

from __future__ import annotations

import os
from bisect import bisect_right, insort
from collections import deque
from dataclasses import dataclass, field

from . import arm, x86
from .cfgscan import FuncCFG, ScanError, scan_function
from .elf import EM_AARCH64, EM_X86_64, BadBinary, ElfFile
from .emit import FnOut, render
from .manifest import ExtractionManifest

M64 = (1 << 64) - 1

# register file byte offsets; 16 leaves room for machine-status slots
X86_OFF = {i: 16 + 8 * i for i in range(16)}
X86_FLAGS = 16 + 8 * 16

ARM_OFF = {i: 16 + 8 * i for i in range(31)}   # x0..x30
ARM_SP = 16 + 8 * 31
ARM_NZCV = 16 + 8 * 32

_RAX, _RCX, _RDX, _RSP, _RSI, _RDI = 0, 1, 2, 4, 6, 7

_WIDEN_U = {8: "8Uto64", 16: "16Uto64", 32: "32Uto64"}
_WIDEN_S = {8: "8Sto64", 16: "16Sto64", 32: "32Sto64"}
_NARROW = {8: "64to8", 16: "64to16", 32: "64to32"}


class Build:
    """Per-function statement accumulator with a fresh tmp namespace."""

    def __init__(self):
        self.n = 0
        self.lines: list[str] = []
        self.strings: list[str] = []
        self.extern_calls: list[str] = []

    def tmp(self) -> int:
        k = self.n
        self.n += 1
        return k

    def emit(self, line: str):
        self.lines.append(line)

    def take_lines(self) -> list[str]:
        out = self.lines
        self.lines = []
        return out

    def const(self, val: int) -> int:
        t = self.tmp()
        self.emit(f"t{t}:I64 = 0x{val & M64:x}:I64")
        return t

    def get(self, off: int) -> int:
        t = self.tmp()
        self.emit(f"t{t}:I64 = get(r{off}):I64")
        return t

    def put(self, off: int, t: int):
        self.emit(f"put(r{off}) = t{t}")

    def op(self, name: str, *args: int, ty: str = "I64") -> int:
        t = self.tmp()
        ops = ", ".join(f"t{a}" for a in args)
        self.emit(f"t{t}:{ty} = {name}({ops})")
        return t

    def narrow(self, t: int, w: int) -> int:
        return self.op(_NARROW[w], t, ty=f"I{w}")

    def widen(self, t: int, w: int, signed: bool = False) -> int:
        table = _WIDEN_S if signed else _WIDEN_U
        return self.op(table[w], t)

    def load(self, taddr: int, w: int, signed: bool = False) -> int:
        t = self.tmp()
        self.emit(f"t{t}:I{w} = load(t{taddr}):I{w}")
        if w == 64:
            return t
        return self.widen(t, w, signed)

    def store(self, taddr: int, tval: int, w: int):
        if w != 64:
            tval = self.narrow(tval, w)
        self.emit(f"store(t{taddr}) = t{tval}")

    def call(self, kind: str, name: str, targ: int) -> int:
        t = self.tmp()
        self.emit(f't{t}:I64 = call {kind} "{name}"(t{targ})')
        if kind == "ext" and name not in self.extern_calls:
            self.extern_calls.append(name)
        return t

    def note_string(self, s: str):
        if s not in self.strings:
            self.strings.append(s)


def _cond_from_cmp(b: Build, cc: str, ta: int, tb: int) -> int | None:
    table = {
        "e": ("CmpEQ64", ta, tb), "eq": ("CmpEQ64", ta, tb),
        "ne": ("CmpNE64", ta, tb),
        "l": ("CmpLT64S", ta, tb), "lt": ("CmpLT64S", ta, tb),
        "ge": ("CmpLE64S", tb, ta),
        "le": ("CmpLE64S", ta, tb),
        "g": ("CmpLT64S", tb, ta), "gt": ("CmpLT64S", tb, ta),
        "b": ("CmpLT64U", ta, tb), "lo": ("CmpLT64U", ta, tb),
        "ae": ("CmpLE64U", tb, ta), "hs": ("CmpLE64U", tb, ta),
        "be": ("CmpLE64U", ta, tb), "ls": ("CmpLE64U", ta, tb),
        "a": ("CmpLT64U", tb, ta), "hi": ("CmpLT64U", tb, ta),
    }
    if cc in table:
        op, x, y = table[cc]
        return b.op(op, x, y)
    if cc in ("s", "mi"):
        return b.op("CmpLT64S", b.op("Sub64", ta, tb), b.const(0))
    if cc in ("ns", "pl"):
        return b.op("CmpLE64S", b.const(0), b.op("Sub64", ta, tb))
    return None


class _Flags:
    """Tracks the producer of the live flag state within one block."""

    def __init__(self):
        self.state: tuple | None = None

    def set_cmp(self, ta, tb):
        self.state = ("cmp", ta, tb)

    def set_test(self, ta, tb):
        self.state = ("test", ta, tb)

    def set_op(self, tres):
        self.state = ("op", tres)


def _cond_value(b: Build, flags: _Flags, cc: str, flags_off: int) -> int:
    st = flags.state
    if st is None:
        return b.op("unk", b.get(flags_off))
    if st[0] == "cmp":
        t = _cond_from_cmp(b, cc, st[1], st[2])
        return t if t is not None else b.op("unk", st[1], st[2])
    if st[0] == "test":
        ta, tb = st[1], st[2]
        masked = ta if ta == tb else b.op("And64", ta, tb)
        if cc in ("e", "eq"):
            return b.op("CmpEQ64", masked, b.const(0))
        if cc == "ne":
            return b.op("CmpNE64", masked, b.const(0))
        if cc in ("s", "mi"):
            return b.op("CmpLT64S", masked, b.const(0))
        return b.op("unk", masked)
    tres = st[1]
    if cc in ("e", "eq"):
        return b.op("CmpEQ64", tres, b.const(0))
    if cc == "ne":
        return b.op("CmpNE64", tres, b.const(0))
    if cc in ("s", "mi"):
        return b.op("CmpLT64S", tres, b.const(0))
    return b.op("unk", tres)


# --------------------------------------------------------------------- x86

class X86Fn:
    def __init__(self, ctx: "_Ctx", b: Build):
        self.ctx = ctx
        self.b = b
        self.flags = _Flags()

    def _flags_write(self, *args: int):
        self.b.put(X86_FLAGS, self.b.op("unk", *args[:3]))

    def addr_of(self, m: x86.M) -> int:
        b = self.b
        if m.abs is not None:
            self.ctx.probe(b, m.abs)
            return b.const(m.abs)
        t = None
        if m.base is not None:
            t = b.get(X86_OFF[m.base])
        if m.index is not None:
            ti = b.get(X86_OFF[m.index])
            if m.scale > 1:
                ti = b.op("Shl64", ti, b.const(m.scale.bit_length() - 1))
            t = ti if t is None else b.op("Add64", t, ti)
        if t is None:
            return b.const(m.disp)
        if m.disp:
            t = b.op("Add64", t, b.const(m.disp))
        return t

    def read(self, o, signed: bool = False) -> int:
        b = self.b
        if isinstance(o, x86.R):
            t = b.get(X86_OFF[o.idx])
            if o.w == 64:
                return t
            return b.widen(b.narrow(t, o.w), o.w, signed)
        if isinstance(o, x86.I):
            self.ctx.probe(b, o.val & M64)
            return b.const(o.val)
        return b.load(self.addr_of(o), o.w, signed)

    def write(self, o, t: int):
        b = self.b
        if isinstance(o, x86.R):
            if o.w != 64:
                t = b.widen(b.narrow(t, o.w), o.w)
            b.put(X86_OFF[o.idx], t)
        else:
            b.store(self.addr_of(o), t, o.w)

    def _push(self, tval: int):
        b = self.b
        sp = b.get(X86_OFF[_RSP])
        sp2 = b.op("Sub64", sp, b.const(8))
        b.put(X86_OFF[_RSP], sp2)
        b.store(sp2, tval, 64)

    def stmt(self, insn: x86.Insn):
        b = self.b
        op = insn.op
        if op in ("nop", "endbr", "int3", "hlt", "ud2", "ret"):
            return
        if op == "mov":
            self.write(insn.ops[0], self.read(insn.ops[1]))
            return
        if op == "lea":
            m = insn.ops[1]
            self.write(insn.ops[0], self.addr_of(m))
            return
        if op in ("movzx", "movsx", "movsxd"):
            v = self.read(insn.ops[1], signed=op != "movzx")
            self.write(insn.ops[0], v)
            return
        if op in ("add", "sub", "and", "or", "xor", "adc", "sbb"):
            a = self.read(insn.ops[0])
            c = self.read(insn.ops[1])
            name = {"add": "Add64", "sub": "Sub64", "and": "And64",
                    "or": "Or64", "xor": "Xor64"}.get(op)
            res = b.op(name, a, c) if name else b.op("unk", a, c)
            self.write(insn.ops[0], res)
            self._flags_write(a, c)
            if op == "sub":
                self.flags.set_cmp(a, c)
            elif op in ("and", "or", "xor"):
                self.flags.set_test(res, res)
            else:
                self.flags.set_op(res)
            return
        if op == "cmp":
            a = self.read(insn.ops[0])
            c = self.read(insn.ops[1])
            self._flags_write(a, c)
            self.flags.set_cmp(a, c)
            return
        if op == "test":
            a = self.read(insn.ops[0])
            c = self.read(insn.ops[1])
            self._flags_write(a, c)
            self.flags.set_test(a, c)
            return
        if op in ("inc", "dec"):
            a = self.read(insn.ops[0])
            res = b.op("Add64" if op == "inc" else "Sub64", a, b.const(1))
            self.write(insn.ops[0], res)
            self._flags_write(a)
            self.flags.set_op(res)
            return
        if op == "neg":
            a = self.read(insn.ops[0])
            z = b.const(0)
            res = b.op("Sub64", z, a)
            self.write(insn.ops[0], res)
            self._flags_write(a)
            self.flags.set_cmp(z, a)
            return
        if op == "not":
            self.write(insn.ops[0], b.op("Not64", self.read(insn.ops[0])))
            return
        if op in ("shl", "shr", "sar"):
            a = self.read(insn.ops[0])
            cnt = self.read(insn.ops[1])
            res = b.op({"shl": "Shl64", "shr": "Shr64", "sar": "Sar64"}[op],
                       a, cnt)
            self.write(insn.ops[0], res)
            self._flags_write(a, cnt)
            self.flags.set_op(res)
            return
        if op in ("rol", "ror", "rcl", "rcr"):
            a = self.read(insn.ops[0])
            cnt = self.read(insn.ops[1])
            res = b.op("unk", a, cnt)
            self.write(insn.ops[0], res)
            self._flags_write(a, cnt)
            self.flags.set_op(res)
            return
        if op == "imul":
            a = self.read(insn.ops[1])
            c = self.read(insn.ops[2]) if len(insn.ops) > 2 \
                else self.read(insn.ops[0])
            res = b.op("Mul64", a, c)
            self.write(insn.ops[0], res)
            self._flags_write(a, c)
            self.flags.set_op(res)
            return
        if op in ("mul1", "imul1"):
            a = b.get(X86_OFF[_RAX])
            c = self.read(insn.ops[0])
            lo = b.op("Mul64", a, c)
            hi = b.op("unk", a, c)
            b.put(X86_OFF[_RAX], lo)
            b.put(X86_OFF[_RDX], hi)
            self._flags_write(a, c)
            self.flags.set_op(lo)
            return
        if op in ("div1", "idiv1"):
            a = b.get(X86_OFF[_RAX])
            c = self.read(insn.ops[0])
            q = b.op("DivS64" if op == "idiv1" else "DivU64", a, c)
            r = b.op("unk", a, c)
            b.put(X86_OFF[_RAX], q)
            b.put(X86_OFF[_RDX], r)
            self._flags_write(a, c)
            return
        if op == "push":
            self._push(self.read(insn.ops[0]))
            return
        if op == "pop":
            sp = b.get(X86_OFF[_RSP])
            v = b.load(sp, 64)
            b.put(X86_OFF[_RSP], b.op("Add64", sp, b.const(8)))
            self.write(insn.ops[0], v)
            return
        if op == "leave":
            bp = b.get(X86_OFF[5])
            v = b.load(bp, 64)
            b.put(X86_OFF[_RSP], b.op("Add64", bp, b.const(8)))
            b.put(X86_OFF[5], v)
            return
        if op == "cdqe":
            a = b.get(X86_OFF[_RAX])
            b.put(X86_OFF[_RAX], b.widen(b.narrow(a, 32), 32, signed=True))
            return
        if op == "cwde":
            a = b.get(X86_OFF[_RAX])
            t = b.op("16Sto32", b.narrow(a, 16), ty="I32")
            b.put(X86_OFF[_RAX], b.op("32Uto64", t))
            return
        if op == "cqo":
            a = b.get(X86_OFF[_RAX])
            b.put(X86_OFF[_RDX], b.op("Sar64", a, b.const(63)))
            return
        if op == "cdq":
            a = b.get(X86_OFF[_RAX])
            s = b.widen(b.narrow(a, 32), 32, signed=True)
            self.write(x86.R(_RDX, 32), b.op("Sar64", s, b.const(31)))
            return
        if op == "setcc":
            tc = _cond_value(b, self.flags, insn.cc, X86_FLAGS)
            self.write(insn.ops[0], tc)
            return
        if op == "cmovcc":
            cur = self.read(insn.ops[0])
            alt = self.read(insn.ops[1])
            tc = _cond_value(b, self.flags, insn.cc, X86_FLAGS)
            self.write(insn.ops[0], b.op("unk", tc, cur, alt))
            return
        if op == "xchg":
            a = self.read(insn.ops[0])
            c = self.read(insn.ops[1])
            self.write(insn.ops[0], c)
            self.write(insn.ops[1], a)
            return
        if op == "syscall":
            a = b.get(X86_OFF[_RAX])
            b.put(X86_OFF[_RAX], b.op("unk", a))
            return
        if op == "repstos":
            cnt = b.get(X86_OFF[_RCX])
            dst = b.get(X86_OFF[_RDI])
            b.store(dst, b.get(X86_OFF[_RAX]), 64)
            b.put(X86_OFF[_RCX], b.op("unk", cnt))
            b.put(X86_OFF[_RDI], b.op("unk", dst, cnt))
            return
        if op == "repmovs":
            cnt = b.get(X86_OFF[_RCX])
            src = b.get(X86_OFF[_RSI])
            dst = b.get(X86_OFF[_RDI])
            b.store(dst, b.load(src, 64), 64)
            b.put(X86_OFF[_RCX], b.op("unk", cnt))
            b.put(X86_OFF[_RSI], b.op("unk", src, cnt))
            b.put(X86_OFF[_RDI], b.op("unk", dst, cnt))
            return
        if op == "call":
            self._call(insn)
            return
        if op in ("jmp", "jcc"):
            return  # handled by the block driver
        raise ScanError(insn.addr, f"no semantics for {op}")

    def _call(self, insn: x86.Insn):
        b = self.b
        if insn.target is not None:
            kind, name = self.ctx.classify(insn.target)
        else:
            name = None
            if insn.ops and isinstance(insn.ops[0], x86.M) \
                    and insn.ops[0].abs is not None:
                name = self.ctx.slot_symbol(insn.ops[0].abs)
            kind, name = "ext", name or "indirect"
        targ = b.get(X86_OFF[_RDI])
        res = b.call(kind, name, targ)
        b.put(X86_OFF[_RAX], res)

    def block_close(self, insn: x86.Insn):
        """Statements for a block-final control instruction."""
        b = self.b
        if insn.kind == "branch":
            tc = _cond_value(b, self.flags, insn.cc, X86_FLAGS)
            b.put(X86_FLAGS, tc)
        elif insn.kind == "ijump":
            m = insn.ops[0] if insn.ops else None
            if isinstance(m, x86.M) and m.abs is not None:
                name = self.ctx.slot_symbol(m.abs)
                if name:
                    res = b.call("ext", name, b.get(X86_OFF[_RDI]))
                    b.put(X86_OFF[_RAX], res)

    def tail_call(self, target: int):
        kind, name = self.ctx.classify(target)
        res = self.b.call(kind, name, self.b.get(X86_OFF[_RDI]))
        self.b.put(X86_OFF[_RAX], res)


# --------------------------------------------------------------------- arm

class ConstTrack:
    """Block-local constant propagation for address materialization."""

    def __init__(self):
        self.vals: dict[int, int] = {}

    def feed(self, insn) -> int | None:
        op = insn.op
        if op in ("adrp", "adr", "movz"):
            self.vals[insn.rd] = insn.imm
            return insn.imm
        if op == "movn":
            v = ~insn.imm & M64
            self.vals[insn.rd] = v
            return v
        if op == "movk" and insn.rd in self.vals:
            mask = 0xFFFF << (16 * insn.hw)
            v = (self.vals[insn.rd] & ~mask) | insn.imm
            self.vals[insn.rd] = v
            return v
        if op == "addi" and insn.rn in self.vals:
            v = (self.vals[insn.rn] + insn.imm) & M64
            self.vals[insn.rd] = v
            return v
        for r in (insn.rd, insn.rt, insn.rt2):
            if r >= 0:
                self.vals.pop(r, None)
        if op in ("bl", "blr", "svc"):
            self.vals.clear()
        return None


class A64Fn:
    def __init__(self, ctx: "_Ctx", b: Build):
        self.ctx = ctx
        self.b = b
        self.flags = _Flags()
        self.track = ConstTrack()

    def xval(self, i: int, sp: bool = False) -> int:
        if i == 31:
            return self.b.get(ARM_SP) if sp else self.b.const(0)
        return self.b.get(ARM_OFF[i])

    def xput(self, i: int, t: int, sp: bool = False):
        if i == 31:
            if sp:
                self.b.put(ARM_SP, t)
            return
        self.b.put(ARM_OFF[i], t)

    def _ea(self, insn) -> tuple[int, int | None]:
        """Effective address tmp, plus writeback tmp for the base."""
        b = self.b
        base = self.xval(insn.rn, sp=True)
        if insn.mode == "pre":
            ea = b.op("Add64", base, b.const(insn.imm))
            return ea, ea
        if insn.mode == "post":
            wb = b.op("Add64", base, b.const(insn.imm))
            return base, wb
        if insn.imm:
            return b.op("Add64", base, b.const(insn.imm)), None
        return base, None

    def stmt(self, insn):
        b = self.b
        op = insn.op
        mat = self.track.feed(insn)
        if mat is not None:
            self.ctx.probe(b, mat)
        if op in ("nop", "ret", "b", "b.cond", "cbz", "cbnz", "br"):
            return
        if op in ("adrp", "adr", "movz"):
            self.xput(insn.rd, b.const(insn.imm))
            return
        if op == "movn":
            self.xput(insn.rd, b.const(~insn.imm & M64))
            return
        if op == "movk":
            old = self.xval(insn.rd)
            mask = 0xFFFF << (16 * insn.hw)
            cleared = b.op("And64", old, b.const(~mask & M64))
            self.xput(insn.rd, b.op("Or64", cleared, b.const(insn.imm)))
            return
        if op in ("addi", "subi"):
            base = self.xval(insn.rn, sp=True)
            res = b.op("Add64" if op == "addi" else "Sub64",
                       base, b.const(insn.imm))
            self.xput(insn.rd, res, sp=True)
            return
        if op in ("addsi", "subsi"):
            base = self.xval(insn.rn, sp=True)
            timm = b.const(insn.imm)
            res = b.op("Add64" if op == "addsi" else "Sub64", base, timm)
            b.put(ARM_NZCV, b.op("unk", base, timm))
            if op == "subsi":
                self.flags.set_cmp(base, timm)
            else:
                self.flags.set_op(res)
            self.xput(insn.rd, res)
            return
        if op in ("addr", "subr", "addsr", "subsr",
                  "andr", "orrr", "eorr", "andsr"):
            a = self.xval(insn.rn)
            c = self.xval(insn.rm)
            name = {"addr": "Add64", "addsr": "Add64", "subr": "Sub64",
                    "subsr": "Sub64", "andr": "And64", "andsr": "And64",
                    "orrr": "Or64", "eorr": "Xor64"}[op]
            res = b.op(name, a, c)
            if op in ("addsr", "subsr", "andsr"):
                b.put(ARM_NZCV, b.op("unk", a, c))
                if op == "subsr":
                    self.flags.set_cmp(a, c)
                elif op == "andsr":
                    self.flags.set_test(a, c)
                else:
                    self.flags.set_op(res)
            self.xput(insn.rd, res)
            return
        if op == "madd":
            t = b.op("Mul64", self.xval(insn.rn), self.xval(insn.rm))
            if insn.ra != 31:
                t = b.op("Add64", self.xval(insn.ra), t)
            self.xput(insn.rd, t)
            return
        if op in ("udiv", "sdiv"):
            res = b.op("DivU64" if op == "udiv" else "DivS64",
                       self.xval(insn.rn), self.xval(insn.rm))
            self.xput(insn.rd, res)
            return
        if op in ("ubfm", "sbfm"):
            res = b.op("unk", self.xval(insn.rn), b.const(insn.imm))
            self.xput(insn.rd, res)
            return
        if op in ("stp", "ldp"):
            ea, wb = self._ea(insn)
            hi = b.op("Add64", ea, b.const(8))
            if op == "stp":
                b.store(ea, self.xval(insn.rt), 64)
                b.store(hi, self.xval(insn.rt2), 64)
            else:
                self.xput(insn.rt, b.load(ea, 64))
                self.xput(insn.rt2, b.load(hi, 64))
            if wb is not None:
                self.xput(insn.rn, wb, sp=True)
            return
        if op in ("stri", "ldri"):
            ea, wb = self._ea(insn)
            w = insn.width * 8
            if op == "stri":
                b.store(ea, self.xval(insn.rt), w)
            else:
                self.xput(insn.rt, b.load(ea, w))
            if wb is not None:
                self.xput(insn.rn, wb, sp=True)
            return
        if op == "ldrlit":
            self.xput(insn.rt, b.load(b.const(insn.target), 64))
            return
        if op == "svc":
            b.put(ARM_OFF[0], b.op("unk", b.get(ARM_OFF[8])))
            return
        if op in ("bl", "blr"):
            self._call(insn)
            return
        raise ScanError(insn.addr, f"no semantics for {op}")

    def _call(self, insn):
        b = self.b
        if insn.target is not None:
            kind, name = self.ctx.classify(insn.target)
        else:
            kind, name = "ext", "indirect"
        res = b.call(kind, name, self.xval(0))
        self.xput(0, res)

    def block_close(self, insn):
        b = self.b
        if insn.op == "b.cond":
            tc = _cond_value(b, self.flags, insn.cc, ARM_NZCV)
            b.put(ARM_NZCV, tc)
        elif insn.op in ("cbz", "cbnz"):
            val = self.xval(insn.rt)
            name = "CmpEQ64" if insn.op == "cbz" else "CmpNE64"
            b.put(ARM_NZCV, b.op(name, val, b.const(0)))

    def tail_call(self, target: int):
        kind, name = self.ctx.classify(target)
        res = self.b.call(kind, name, self.xval(0))
        self.xput(0, res)


# ------------------------------------------------------------------ driver

def probe_string(elf: ElfFile, addr: int) -> str | None:
    sec = elf.section_at(addr)
    if sec is None or sec.executable or not sec.data:
        return None
    raw = elf.vread(addr, 256)
    end = raw.find(b"\x00")
    if end < 2:
        return None
    chunk = raw[:end]
    if all(0x20 <= c <= 0x7E or c in (9, 10, 13) for c in chunk):
        return chunk.decode("latin-1")
    return None


def _plt_symbol(elf: ElfFile, insn_at, addr: int) -> str | None:
    """Resolve a stub in a .plt-style section to its dynamic symbol."""
    sec = elf.section_at(addr)
    if sec is None or not sec.name.startswith(".plt"):
        return None
    if elf.machine == EM_X86_64:
        a = addr
        for _ in range(4):
            try:
                insn = insn_at(a)
            except Exception:
                return None
            for o in insn.ops:
                if isinstance(o, x86.M) and o.abs is not None \
                        and insn.kind in ("ijump", "call", "jump"):
                    return elf.slot_names.get(o.abs)
            if insn.kind not in ("seq",):
                return None
            a += insn.size
        return None
    track = ConstTrack()
    a = addr
    for _ in range(4):
        try:
            insn = insn_at(a)
        except Exception:
            return None
        if insn.op == "ldri" and insn.rn in track.vals:
            slot = (track.vals[insn.rn] + insn.imm) & M64
            return elf.slot_names.get(slot)
        track.feed(insn)
        if insn.kind not in ("seq",):
            return None
        a += insn.size
    return None


@dataclass
class _Ctx:
    elf: ElfFile
    insn_at: object
    ok: dict[int, FuncCFG] = field(default_factory=dict)
    names: dict[int, str] = field(default_factory=dict)

    def classify(self, target: int) -> tuple[str, str]:
        if target in self.ok:
            return "int", self.names[target]
        name = _plt_symbol(self.elf, self.insn_at, target) \
            or self.elf.func_name_at(target) or f"sub_{target:x}"
        return "ext", name

    def slot_symbol(self, slot: int) -> str | None:
        return self.elf.slot_names.get(slot)

    def probe(self, b: Build, addr: int):
        s = probe_string(self.elf, addr)
        if s is not None:
            b.note_string(s)


def _x86_refs(cfg: FuncCFG) -> list[int]:
    out = []
    for blk in cfg.blocks:
        for insn in blk.insns:
            for o in insn.ops:
                if isinstance(o, x86.M) and o.abs is not None:
                    out.append(o.abs)
                elif isinstance(o, x86.I):
                    out.append(o.val & M64)
    return out


def _arm_refs(cfg: FuncCFG, elf: ElfFile) -> list[int]:
    out = []
    for blk in cfg.blocks:
        track = ConstTrack()
        for insn in blk.insns:
            v = track.feed(insn)
            if v is not None:
                out.append(v)
            if insn.op == "ldrlit":
                raw = elf.vread(insn.target, 8)
                if len(raw) == 8:
                    out.append(int.from_bytes(raw, "little"))
    return out


def _lift_function(ctx: _Ctx, cfg: FuncCFG, name: str, arch: str) -> FnOut:
    b = Build()
    sem = X86Fn(ctx, b) if arch == "x86" else A64Fn(ctx, b)
    addr2id = {blk.start: i for i, blk in enumerate(cfg.blocks)}
    out = FnOut(name, cfg.start)
    for blk in cfg.blocks:
        sem.flags = _Flags()
        if arch == "arm":
            sem.track = ConstTrack()
        for insn in blk.insns:
            sem.stmt(insn)
        last = blk.insns[-1]
        sem.block_close(last)
        if blk.tail_target is not None:
            sem.tail_call(blk.tail_target)
        out.blocks.append((b.take_lines(),
                           [addr2id[t] for t in blk.succ_addrs]))
    out.strings = b.strings
    out.extern_calls = b.extern_calls
    return out


def extract_program(elf: ElfFile, path: str) -> tuple[str, ExtractionManifest]:
    if elf.machine == EM_X86_64:
        arch = "x86"
    elif elf.machine == EM_AARCH64:
        arch = "arm"
    else:
        raise BadBinary(f"unsupported machine {elf.machine}")
    if elf.et_type not in (2, 3):  # ET_EXEC, ET_DYN
        raise BadBinary(f"unsupported object type {elf.et_type}")

    def liftable(addr: int) -> bool:
        sec = elf.section_at(addr)
        return (sec is not None and sec.executable and bool(sec.data)
                and not sec.name.startswith(".plt"))

    if arch == "x86":
        def insn_at(addr: int):
            sec = elf.section_at(addr)
            if sec is None or not sec.executable:
                raise x86.DecodeError(addr, "outside executable sections")
            return x86.decode(sec.data, addr - sec.addr, addr)
    else:
        def insn_at(addr: int):
            raw = elf.vread(addr, 4)
            if len(raw) < 4:
                raise arm.DecodeError(addr, "outside executable sections")
            return arm.decode(int.from_bytes(raw, "little"), addr)

    strong: list[int] = []

    def add_strong(a: int):
        if a not in strong_set:
            strong_set.add(a)
            insort(strong, a)

    strong_set: set[int] = set()
    if liftable(elf.entry):
        add_strong(elf.entry)
    for sec in elf.sections:
        if sec.sh_type in (14, 15):  # INIT_ARRAY, FINI_ARRAY
            for off in range(0, len(sec.data) - len(sec.data) % 8, 8):
                a = int.from_bytes(sec.data[off:off + 8], "little")
                if liftable(a):
                    add_strong(a)

    ctx = _Ctx(elf, insn_at)
    failed: dict[int, str] = {}
    weak_seen: set[int] = set()
    queue = deque(sorted(strong_set))
    weak_queue: deque[int] = deque()

    def sec_limit(addr: int) -> int:
        sec = elf.section_at(addr)
        end = sec.addr + sec.size
        i = bisect_right(strong, addr)
        if i < len(strong) and sec.contains(strong[i]):
            return strong[i]
        return end

    def scan_one(a: int, is_strong: bool):
        if a in ctx.ok or a in failed or (not is_strong and a in weak_seen):
            return
        if not is_strong:
            weak_seen.add(a)
        try:
            cfg = scan_function(insn_at, a, sec_limit(a))
        except ScanError as e:
            if is_strong:
                failed[a] = e.why if e.addr == a else str(e)
            return
        ctx.ok[a] = cfg
        for t in sorted(set(cfg.call_targets())):
            if liftable(t) and t not in ctx.ok and t not in failed:
                if t not in strong_set:
                    add_strong(t)
                    queue.append(t)
        refs = _x86_refs(cfg) if arch == "x86" else _arm_refs(cfg, elf)
        for r in sorted(set(refs)):
            if liftable(r) and r not in ctx.ok and r not in weak_seen \
                    and r not in strong_set:
                if arch == "arm" and r % 4:
                    continue
                weak_queue.append(r)

    while queue or weak_queue:
        while queue:
            scan_one(queue.popleft(), True)
        if weak_queue:
            scan_one(weak_queue.popleft(), False)

    used: set[str] = set()
    for a in sorted(ctx.ok):
        base = elf.func_name_at(a) or f"sub_{a:x}"
        name = base if base not in used else f"{base}_{a:x}"
        used.add(name)
        ctx.names[a] = name

    fns = [_lift_function(ctx, ctx.ok[a], ctx.names[a], arch)
           for a in sorted(ctx.ok)]

    manifest = ExtractionManifest(path, arch, len(fns))
    for a in sorted(failed):
        display = elf.func_name_at(a) or f"sub_{a:x}"
        manifest.skipped.append((display, failed[a]))
    for sym in sorted({(s.value, s.name) for s in elf.symbols
                       if s.is_func and s.size and s.name}):
        if liftable(sym[0]) and sym[0] not in ctx.ok and sym[0] not in failed:
            manifest.skipped.append((sym[1], "not reachable from entry"))

    text = render(os.path.basename(path), fns)
    return text, manifest
