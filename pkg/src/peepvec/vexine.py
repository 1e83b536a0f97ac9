"""Peephole normalization engine and its interpreter oracle.

Levels stack compiler-style passes over straight-line canonical
peepholes:

  N0  nothing
  N1  register promotion, redundant write elimination, copy propagation
  N2  N1 + constant propagation/folding + common subexpression elimination
  N3  N2 + load-store elimination + store-store elimination
          + dead tmp elimination

Two scope rules make the passes sound per peephole while being unsound
whole-program: values read before any local definition are parameters
and must be preserved; values defined locally but never used locally are
dead.  Observables are the final register and memory states.

The interpreter gives every opcode a deterministic meaning: 64-bit
wrapping two's-complement integers, IEEE doubles, and an opaque keyed
hash for vector ops, `unk`, and anything size-dependent.  Constant
folding calls the same apply_op used at runtime, so folded and executed
values agree bit for bit by construction.

Alias model: distinct M slots never alias; a store through a non-M
address is treated as clobbering all memory facts.  Calls are barriers:
never removed, never reordered, and they kill every register and memory
fact (tmp facts survive; calls define only their result tmp).
"""

from __future__ import annotations

import math
import struct
from enum import IntEnum

from .ir import (
    Call, ConstExpr, FloatConst, GetReg, GetRegI, IntConst, Load, Mem,
    OpApply, Operand, PutReg, PutRegI, Reg, Statement, Store, Tmp, TmpAssign,
    assigned_tmp,
)
from .opcodes import opcode_table
from .peephole import Peephole
from .rng import MASK64, stable_hash



class NormLevel(IntEnum):
    N0 = 0
    N1 = 1
    N2 = 2
    N3 = 3


# =====================================================================
# interpreter
# =====================================================================

def _u64(x: int) -> int:
    return x & MASK64


def _s64(u: int) -> int:
    u &= MASK64
    return u - (1 << 64) if u >= (1 << 63) else u


def _int_of(v) -> int:
    if isinstance(v, float):
        return struct.unpack("<Q", struct.pack("<d", v))[0]
    return _u64(v)


def _float_of(v) -> float:
    if isinstance(v, float):
        return v
    return float(_s64(v))


def _opaque(*parts) -> int:
    return stable_hash(*parts)


def _value_part(v):
    return struct.pack("<d", v) if isinstance(v, float) else _u64(v)


def _ieee_div(a: float, b: float) -> float:
    if b == 0.0:
        if math.isnan(a) or a == 0.0:
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    try:
        return a / b
    except OverflowError:
        return math.copysign(math.inf, a) * math.copysign(1.0, b)


def _ieee_sqrt(a: float) -> float:
    if math.isnan(a) or a < 0.0:
        return math.nan if a != 0.0 else a
    return math.sqrt(a)


def _round_even(a: float) -> float:
    if math.isnan(a) or math.isinf(a) or abs(a) >= 2.0 ** 52:
        return a
    return float(round(a))


def _f32(a: float) -> float:
    return struct.unpack("<f", struct.pack("<f", a))[0]


def apply_op(opcode: str, args: list) -> int | float:
    """Evaluate one canonical opcode; shared by runtime and folder."""
    n = len(args)
    if opcode in ("ext", "trunc") and n == 1:
        # width casts are identity under the width-agnostic semantics
        return _int_of(args[0])
    if opcode in ("add", "sub", "mul", "mull", "and", "or", "xor",
                  "shl", "shr", "sar", "cmpeq", "cmpne", "cmplt", "cmple",
                  "div") and n == 2:
        a, b = _int_of(args[0]), _int_of(args[1])
        if opcode == "add":
            return _u64(a + b)
        if opcode == "sub":
            return _u64(a - b)
        if opcode in ("mul", "mull"):
            return _u64(a * b)
        if opcode == "and":
            return a & b
        if opcode == "or":
            return a | b
        if opcode == "xor":
            return a ^ b
        if opcode == "shl":
            return _u64(a << (b & 63))
        if opcode == "shr":
            return a >> (b & 63)
        if opcode == "sar":
            return _u64(_s64(a) >> (b & 63))
        if opcode == "cmpeq":
            return 1 if a == b else 0
        if opcode == "cmpne":
            return 1 if a != b else 0
        if opcode == "cmplt":
            return 1 if _s64(a) < _s64(b) else 0
        if opcode == "cmple":
            return 1 if _s64(a) <= _s64(b) else 0
        if opcode == "div":
            if b == 0:
                return _opaque("div0", a)
            q = abs(_s64(a)) // abs(_s64(b))
            if (_s64(a) < 0) != (_s64(b) < 0):
                q = -q
            return _u64(q)
    if opcode in ("not", "clz", "ctz") and n == 1:
        a = _int_of(args[0])
        if opcode == "not":
            return a ^ MASK64
        if opcode == "clz":
            return 64 - a.bit_length()
        if opcode == "ctz":
            return (a & -a).bit_length() - 1 if a else 64
    if opcode in ("addf", "subf", "mulf", "divf", "minf", "maxf") and n == 2:
        a, b = _float_of(args[0]), _float_of(args[1])
        if opcode == "addf":
            return a + b
        if opcode == "subf":
            return a - b
        if opcode == "mulf":
            try:
                return a * b
            except OverflowError:
                return math.copysign(math.inf, a) * math.copysign(1.0, b)
        if opcode == "divf":
            return _ieee_div(a, b)
        if math.isnan(a) or math.isnan(b):
            return math.nan
        if opcode == "minf":
            return min(a, b)
        return max(a, b)
    if opcode in ("negf", "absf", "sqrtf", "roundf", "extf", "truncf",
                  "i2f", "f2i", "reinterp") and n == 1:
        v = args[0]
        if opcode == "negf":
            return -_float_of(v)
        if opcode == "absf":
            return abs(_float_of(v))
        if opcode == "sqrtf":
            return _ieee_sqrt(_float_of(v))
        if opcode == "roundf":
            return _round_even(_float_of(v))
        if opcode == "extf":
            return _float_of(v)
        if opcode == "truncf":
            return _f32(_float_of(v))
        if opcode == "i2f":
            return float(_s64(_int_of(v)))
        if opcode == "f2i":
            f = _float_of(v)
            if math.isnan(f) or math.isinf(f):
                return _opaque("f2i", struct.pack("<d", f))
            return _u64(int(f))
        if opcode == "reinterp":
            if isinstance(v, float):
                return struct.unpack("<Q", struct.pack("<d", v))[0]
            return struct.unpack("<d", struct.pack("<Q", _u64(v)))[0]
    if opcode == "cmpf" and n == 2:
        # the four-way IEEE comparison result code
        a, b = _float_of(args[0]), _float_of(args[1])
        if math.isnan(a) or math.isnan(b):
            return 0x45
        if a == b:
            return 0x40
        return 0x01 if a < b else 0x00
    # vector ops, divmod, unk, arity mismatches: opaque but deterministic
    return _opaque("op", opcode, *[_value_part(a) for a in args])


def env_value(env_seed: int, kind: str, ident: int | str | bytes) -> int:
    """Parameter value for a location never locally defined."""
    return stable_hash(env_seed, "env", kind, ident)


def const_value(op: Operand):
    if isinstance(op, IntConst):
        return _u64(op.value)
    if isinstance(op, FloatConst):
        return op.value
    raise TypeError(f"not a constant: {op!r}")


class MachineState:
    """Registers, memory slots and tmps; reads of untouched locations
    draw deterministic parameter values from the environment seed."""

    def __init__(self, env_seed: int):
        self.env_seed = env_seed
        self.regs: dict[int, int | float] = {}
        self.mem: dict = {}
        self.tmps: dict[int, int | float] = {}

    def read_reg(self, k: int):
        if k not in self.regs:
            self.regs[k] = env_value(self.env_seed, "r", k)
        return self.regs[k]

    def read_mem(self, key):
        if key not in self.mem:
            self.mem[key] = env_value(self.env_seed, "m", _mem_env_key(key))
        return self.mem[key]

    def read_tmp(self, t: int):
        if t not in self.tmps:
            self.tmps[t] = env_value(self.env_seed, "t", t)
        return self.tmps[t]


def _mem_env_key(key):
    # Mem slots are keyed by id; dynamic addresses by their runtime value.
    if isinstance(key, int):
        return key
    return stable_hash("dyn", key[1])


def _operand_value(op: Operand, st: MachineState):
    if isinstance(op, Tmp):
        return st.read_tmp(op.ident)
    if isinstance(op, (IntConst, FloatConst)):
        return const_value(op)
    if isinstance(op, Reg):
        return st.read_reg(op.ident)
    if isinstance(op, Mem):
        return _opaque("memaddr", op.ident)
    # Abstract token: opaque placeholder value
    return _opaque("abstract", op.token)


def _mem_key(addr: Operand, st: MachineState):
    if isinstance(addr, Mem):
        return addr.ident
    return ("dyn", _int_of(_operand_value(addr, st)))


def evaluate_peephole(p: Peephole, env_seed: int) -> tuple[dict, dict]:
    """Run the peephole; returns the written (registers, memory) maps.

    Use observables_equal() to compare results: locations never written
    are parameter-valued, so absent entries compare through env_value.
    """
    st = MachineState(env_seed)
    written_regs: dict[int, int | float] = {}
    written_mem: dict = {}
    call_idx: dict[str, int] = {}

    for s in p.statements:
        if isinstance(s, TmpAssign):
            e = s.expr
            if isinstance(e, (GetReg, GetRegI)):
                v = st.read_reg(e.reg)
            elif isinstance(e, Load):
                v = st.read_mem(_mem_key(e.addr, st))
            elif isinstance(e, OpApply):
                # raw spellings evaluate by their canonical operation
                op = opcode_table().canonical_of(e.opcode)
                v = apply_op(op, [_operand_value(a, st) for a in e.args])
            elif isinstance(e, ConstExpr):
                v = _operand_value(e.value, st)
            else:
                raise TypeError(f"not an expression: {e!r}")
            st.tmps[s.tmp] = v
        elif isinstance(s, (PutReg, PutRegI)):
            v = _operand_value(s.value, st)
            st.regs[s.reg] = v
            written_regs[s.reg] = v
        elif isinstance(s, Store):
            key = _mem_key(s.addr, st)
            v = _operand_value(s.value, st)
            st.mem[key] = v
            written_mem[key] = v
        elif isinstance(s, Call):
            idx = call_idx.get(s.target, 0)
            call_idx[s.target] = idx + 1
            args = [_value_part(_operand_value(a, st)) for a in s.args]
            v = stable_hash(env_seed, "call", s.target, idx, *args)
            if s.tmp is not None:
                st.tmps[s.tmp] = v
        else:
            raise TypeError(f"not a statement: {s!r}")

    return written_regs, written_mem


def _bits(v) -> tuple:
    if isinstance(v, float):
        return ("f", struct.pack("<d", v))
    return ("i", _u64(v))


def observables_equal(a: tuple[dict, dict], b: tuple[dict, dict],
                      env_seed: int) -> bool:
    """Bitwise equality of observables, filling unwritten locations with
    their parameter values so eliminated redundant writes still match."""
    regs_a, mem_a = a
    regs_b, mem_b = b
    for k in regs_a.keys() | regs_b.keys():
        va = regs_a.get(k, env_value(env_seed, "r", k))
        vb = regs_b.get(k, env_value(env_seed, "r", k))
        if _bits(va) != _bits(vb):
            return False
    for k in mem_a.keys() | mem_b.keys():
        va = mem_a.get(k, env_value(env_seed, "m", _mem_env_key(k)))
        vb = mem_b.get(k, env_value(env_seed, "m", _mem_env_key(k)))
        if _bits(va) != _bits(vb):
            return False
    return True


# =====================================================================
# dataflow analyses
# =====================================================================

def _use_locs(s: Statement) -> list[tuple]:
    """Locations read by s: ('t', id), ('r', id), ('m', id)."""
    out: list[tuple] = []

    def op_loc(op: Operand):
        if isinstance(op, Tmp):
            out.append(("t", op.ident))
        elif isinstance(op, Reg):
            out.append(("r", op.ident))

    if isinstance(s, TmpAssign):
        e = s.expr
        if isinstance(e, (GetReg, GetRegI)):
            out.append(("r", e.reg))
        elif isinstance(e, Load):
            if isinstance(e.addr, Mem):
                out.append(("m", e.addr.ident))
            op_loc(e.addr)
        elif isinstance(e, OpApply):
            for a in e.args:
                op_loc(a)
        elif isinstance(e, ConstExpr):
            op_loc(e.value)
    elif isinstance(s, (PutReg, PutRegI)):
        op_loc(s.value)
    elif isinstance(s, Store):
        op_loc(s.addr)
        op_loc(s.value)
    elif isinstance(s, Call):
        for a in s.args:
            op_loc(a)
    return out


def _def_loc(s: Statement):
    if isinstance(s, TmpAssign):
        return ("t", s.tmp)
    if isinstance(s, (PutReg, PutRegI)):
        return ("r", s.reg)
    if isinstance(s, Store):
        if isinstance(s.addr, Mem):
            return ("m", s.addr.ident)
        return ("m", "*")  # dynamic address: clobbers all memory
    if isinstance(s, Call):
        if s.tmp is not None:
            return ("t", s.tmp)
        return None
    raise TypeError(f"not a statement: {s!r}")


def _expr_key(s: TmpAssign):
    """Structural key for CSE / availability; None if not a pure expr."""
    e = s.expr
    if isinstance(e, (GetReg, GetRegI)):
        return ("get", e.reg)
    if isinstance(e, Load):
        if isinstance(e.addr, Mem):
            return ("load", e.addr.ident)
        return None
    if isinstance(e, OpApply):
        keys = [_op_key(a) for a in e.args]
        if any(k is None for k in keys):
            return None
        if opcode_table().commutative(e.opcode) and len(keys) == 2:
            keys = sorted(keys)
        return ("op", e.opcode, tuple(keys))
    return None


def _op_key(op: Operand):
    if isinstance(op, Tmp):
        return ("t", op.ident)
    if isinstance(op, IntConst):
        return ("ci", op.value)
    if isinstance(op, FloatConst):
        return ("cf", op.bits().hex())
    if isinstance(op, Reg):
        return None  # volatile between defs; keep availability simple
    if isinstance(op, Mem):
        return ("ma", op.ident)
    return ("ab", op.token)


# =====================================================================
# passes
# =====================================================================

class _Scan:
    """Forward-scan bookkeeping: per-location write stamps plus barrier
    epochs, so recorded facts can be validity-checked in O(1)."""

    __slots__ = ("stamps", "reg_epoch", "mem_epoch")

    def __init__(self):
        self.stamps: dict[tuple, int] = {}
        self.reg_epoch = 0
        self.mem_epoch = 0

    def bump(self, loc):
        self.stamps[loc] = self.stamps.get(loc, 0) + 1

    def token(self, op: Operand):
        """Validity token for an operand's current value; None = constant."""
        if isinstance(op, Tmp):
            return ("t", op.ident, self.stamps.get(("t", op.ident), 0))
        if isinstance(op, Reg):
            return ("r", op.ident, self.stamps.get(("r", op.ident), 0),
                    self.reg_epoch)
        return None

    def check(self, op: Operand, tok) -> bool:
        return self.token(op) == tok

    def mem_token(self, ident):
        return (self.stamps.get(("m", ident), 0), self.mem_epoch)

    def apply_def(self, s: Statement):
        if isinstance(s, TmpAssign):
            self.bump(("t", s.tmp))
        elif isinstance(s, (PutReg, PutRegI)):
            self.bump(("r", s.reg))
        elif isinstance(s, Store):
            if isinstance(s.addr, Mem):
                self.bump(("m", s.addr.ident))
            else:
                self.mem_epoch += 1
        elif isinstance(s, Call):
            if s.tmp is not None:
                self.bump(("t", s.tmp))
            self.reg_epoch += 1
            self.mem_epoch += 1


def _rewrite_uses(s: Statement, sub) -> Statement:
    from .canon import _rewrite_operands
    return _rewrite_operands(s, sub)


def _dead_defs(stmts: list[Statement], removable) -> set[int]:
    """Indexes of statements whose assigned tmp is dead (no use before the
    next redefinition or the end) and which removable() accepts."""
    live: set[int] = set()
    dead: set[int] = set()
    for i in range(len(stmts) - 1, -1, -1):
        s = stmts[i]
        t = assigned_tmp(s)
        if t is not None:
            if t not in live and removable(s):
                dead.add(i)
            live.discard(t)
        for loc in _use_locs(s):
            if loc[0] == "t":
                live.add(loc[1])
    return dead


def pass_register_promotion(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """get(rK) whose reaching definition is a local put(rK)=v becomes a
    copy of v, provided v still holds the same value at the read."""
    sc = _Scan()
    lastput: dict[int, tuple[Operand, object]] = {}
    out: list[Statement] = []
    changed = False
    for s in stmts:
        if isinstance(s, TmpAssign) and isinstance(s.expr, (GetReg, GetRegI)):
            fact = lastput.get(s.expr.reg)
            if fact is not None and sc.check(fact[0], fact[1]):
                s = TmpAssign(s.tmp, s.ty, ConstExpr(fact[0]))
                changed = True
        if isinstance(s, (PutReg, PutRegI)):
            lastput[s.reg] = (s.value, sc.token(s.value))
        elif isinstance(s, Call):
            lastput.clear()
        sc.apply_def(s)
        out.append(s)
    return out, changed


def pass_redundant_write_elim(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Drop a put(rK) overwritten by a later put(rK) with no intervening
    read of rK and no call in between."""
    pending: dict[int, int] = {}
    drop: set[int] = set()
    for i, s in enumerate(stmts):
        for loc in _use_locs(s):
            if loc[0] == "r":
                pending.pop(loc[1], None)
        if isinstance(s, Call):
            pending.clear()
        elif isinstance(s, (PutReg, PutRegI)):
            j = pending.get(s.reg)
            if j is not None:
                drop.add(j)
            pending[s.reg] = i
    if not drop:
        return stmts, False
    return [s for i, s in enumerate(stmts) if i not in drop], True


def pass_copy_propagation(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Forward copy sources into uses; fully-forwarded copies are dropped."""
    sc = _Scan()
    copies: dict[int, tuple[Operand, object]] = {}
    out: list[Statement] = []
    changed = False

    def sub(op: Operand) -> Operand:
        nonlocal changed
        if isinstance(op, Tmp):
            fact = copies.get(op.ident)
            if fact is not None and sc.check(fact[0], fact[1]):
                changed = True
                return fact[0]
        return op

    for s in stmts:
        s2 = _rewrite_uses(s, sub)
        if isinstance(s2, TmpAssign) and isinstance(s2.expr, ConstExpr) \
                and isinstance(s2.expr.value, (Tmp, Reg, IntConst, FloatConst, Mem)):
            v = s2.expr.value
            copies[s2.tmp] = (v, sc.token(v))
        else:
            t = assigned_tmp(s2)
            if t is not None:
                copies.pop(t, None)
        sc.apply_def(s2)
        out.append(s2)

    dead = _dead_defs(out, lambda s: isinstance(s, TmpAssign)
                      and isinstance(s.expr, ConstExpr))
    if dead:
        out = [s for i, s in enumerate(out) if i not in dead]
        changed = True
    return out, changed


def pass_const_fold(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Propagate constants into uses, fold foldable all-constant
    expressions, and drop constant initializations that became dead."""
    consts: dict[int, Operand] = {}
    out: list[Statement] = []
    changed = False
    table = opcode_table()

    def sub(op: Operand) -> Operand:
        nonlocal changed
        if isinstance(op, Tmp) and op.ident in consts:
            changed = True
            return consts[op.ident]
        return op

    for s in stmts:
        s2 = _rewrite_uses(s, sub)
        if isinstance(s2, TmpAssign) and isinstance(s2.expr, OpApply):
            e = s2.expr
            if (table.foldable(e.opcode)
                    and all(isinstance(a, (IntConst, FloatConst)) for a in e.args)
                    and not (e.opcode == "div"
                             and _int_of(const_value(e.args[1])) == 0)):
                v = apply_op(e.opcode, [const_value(a) for a in e.args])
                folded = IntConst(v, "INT") if isinstance(v, int) else FloatConst(v)
                s2 = TmpAssign(s2.tmp, s2.ty, ConstExpr(folded))
                changed = True
        t = assigned_tmp(s2)
        if t is not None:
            consts.pop(t, None)
        if isinstance(s2, TmpAssign) and isinstance(s2.expr, ConstExpr) \
                and isinstance(s2.expr.value, (IntConst, FloatConst)):
            consts[s2.tmp] = s2.expr.value
        out.append(s2)

    dead = _dead_defs(out, lambda s: isinstance(s, TmpAssign)
                      and isinstance(s.expr, ConstExpr)
                      and isinstance(s.expr.value, (IntConst, FloatConst)))
    if dead:
        out = [s for i, s in enumerate(out) if i not in dead]
        changed = True
    return out, changed


def pass_cse(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Replace a recomputation of an available expression with a copy of
    the tmp holding the first computation."""
    sc = _Scan()
    avail: dict = {}  # key -> (holder tmp, validity atoms)
    out: list[Statement] = []
    changed = False

    def atoms_for(s: TmpAssign) -> list[tuple]:
        """What must stay unchanged for s.expr's recorded value to hold."""
        e = s.expr
        atoms: list[tuple] = []
        if isinstance(e, (GetReg, GetRegI)):
            atoms.append(("opnd", Reg(e.reg), sc.token(Reg(e.reg))))
        elif isinstance(e, Load):
            atoms.append(("mem", e.addr.ident, sc.mem_token(e.addr.ident)))
        elif isinstance(e, OpApply):
            for a in e.args:
                if isinstance(a, Tmp):
                    atoms.append(("opnd", a, sc.token(a)))
        return atoms

    def atoms_hold(atoms: list[tuple]) -> bool:
        for kind, a, tok in atoms:
            if kind == "opnd":
                if not sc.check(a, tok):
                    return False
            else:
                if sc.mem_token(a) != tok:
                    return False
        return True

    for s in stmts:
        if isinstance(s, TmpAssign):
            key = _expr_key(s)
            if key is not None:
                hit = avail.get(key)
                if hit is not None:
                    holder, atoms = hit
                    if atoms_hold(atoms):
                        s = TmpAssign(s.tmp, s.ty, ConstExpr(Tmp(holder)))
                        changed = True
        record = None
        if isinstance(s, TmpAssign) and not isinstance(s.expr, ConstExpr):
            key = _expr_key(s)
            # a def feeding itself (t5 = add(t5, ...)) is not reusable
            if key is not None and ("t", s.tmp) not in _use_locs(s):
                record = (key, atoms_for(s))
        sc.apply_def(s)
        if record is not None:
            key, atoms = record
            atoms = atoms + [("opnd", Tmp(s.tmp), sc.token(Tmp(s.tmp)))]
            avail[key] = (s.tmp, atoms)
        out.append(s)
    return out, changed


def pass_load_store_elim(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Drop store(M)=t when t holds the unmodified value just loaded
    from M and M was not stored to in between."""
    sc = _Scan()
    lastload: dict[int, tuple[int, object, object]] = {}
    drop: set[int] = set()
    for i, s in enumerate(stmts):
        if isinstance(s, Store) and isinstance(s.addr, Mem) \
                and isinstance(s.value, Tmp):
            fact = lastload.get(s.addr.ident)
            if fact is not None:
                t, ttok, mtok = fact
                if t == s.value.ident and sc.check(Tmp(t), ttok) \
                        and sc.mem_token(s.addr.ident) == mtok:
                    drop.add(i)
                    continue  # removed store has no def effects
        sc.apply_def(s)
        if isinstance(s, TmpAssign) and isinstance(s.expr, Load) \
                and isinstance(s.expr.addr, Mem):
            lastload[s.expr.addr.ident] = (
                s.tmp, sc.token(Tmp(s.tmp)), sc.mem_token(s.expr.addr.ident))
    if not drop:
        return stmts, False
    return [s for i, s in enumerate(stmts) if i not in drop], True


def pass_store_store_elim(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Drop a store overwritten by a later store to the same M with no
    intervening read (conservatively: no load at all) and no call."""
    pending: dict[int, int] = {}
    drop: set[int] = set()
    for i, s in enumerate(stmts):
        reads_mem = isinstance(s, TmpAssign) and isinstance(s.expr, Load)
        if reads_mem or isinstance(s, Call):
            pending.clear()
        if isinstance(s, Store):
            if isinstance(s.addr, Mem):
                j = pending.get(s.addr.ident)
                if j is not None:
                    drop.add(j)
                pending[s.addr.ident] = i
            else:
                pending.clear()  # dynamic store may alias anything
    if not drop:
        return stmts, False
    return [s for i, s in enumerate(stmts) if i not in drop], True


def pass_dead_tmp_elim(stmts: list[Statement]) -> tuple[list[Statement], bool]:
    """Remove pure tmp definitions never used afterwards (calls stay)."""
    dead = _dead_defs(stmts, lambda s: isinstance(s, TmpAssign))
    if not dead:
        return stmts, False
    return [s for i, s in enumerate(stmts) if i not in dead], True


_LEVEL_PASSES = {
    NormLevel.N0: [],
    NormLevel.N1: [pass_register_promotion, pass_redundant_write_elim,
                   pass_copy_propagation],
    NormLevel.N2: [pass_register_promotion, pass_redundant_write_elim,
                   pass_copy_propagation, pass_const_fold, pass_cse],
    NormLevel.N3: [pass_register_promotion, pass_redundant_write_elim,
                   pass_copy_propagation, pass_const_fold, pass_cse,
                   pass_load_store_elim, pass_store_store_elim,
                   pass_dead_tmp_elim],
}

MAX_ROUNDS = 10


def normalize_peephole(p: Peephole, level: NormLevel) -> Peephole:
    stmts = list(p.statements)
    for _ in range(MAX_ROUNDS):
        any_change = False
        for pass_fn in _LEVEL_PASSES[NormLevel(level)]:
            stmts, changed = pass_fn(stmts)
            any_change = any_change or changed
        if not any_change:
            break
    return Peephole(p.function, p.blocks, stmts)
