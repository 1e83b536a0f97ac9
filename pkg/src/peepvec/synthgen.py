"""Synthetic corpus generation for retrieval benchmarks.

gen_function builds a random, structurally valid function: a connected
CFG (every block chains to the next, extra branch/loop edges keep the
edge-to-block ratio near 1.35), straight-line blocks that load machine
state into tmps, compute, and write results back.  Tmps are function-
unique (single assignment) and every tmp use is preceded by its
definition inside the same block, so any block prefix evaluates without
forward references.

make_variant derives a behaviour-preserving rewrite of a function, the
way a different compiler run would: tmp/register renaming, reordering
of independent neighbors, dead junk computations, equivalent expression
spellings, and block splitting.  Per original block, concatenating the
variant's block chain and undoing the renames yields a statement list
with identical evaluation observables; make_variant_traced returns the
maps needed to check that.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .ir import (BasicBlock, Call, ConstExpr, FloatConst, GetReg, GetRegI,
                 IntConst, IrFunction, Load, Mem, OpApply, Program, PutReg,
                 PutRegI, Reg, Statement, Store, Tmp, TmpAssign,
                 stmt_operands)
from .opcodes import opcode_table
from .rng import SplitMix64, derive, stable_hash

_EXTERN_NAMES = ("memcpy", "memset", "strlen", "strcmp", "malloc", "free",
                 "printf", "puts", "read", "write", "exit", "abort")

_STRING_POOL = ("error", "ok", "usage: %s", "out of memory", "%d\n",
                "result=%ld", "invalid argument", "done", "warning: %s",
                "/tmp/cache", "item %u of %u", "retry")

_INT_OPS = ("Add64", "Sub64", "Mul64", "And64", "Or64", "Xor64")
_INT_OPS32 = ("Add32", "Sub32", "Mul32", "And32", "Or32", "Xor32")
_SHIFT_OPS = ("Shl64", "Shr64", "Sar64")
_CMP_OPS = ("CmpEQ64", "CmpNE64", "CmpLT64S", "CmpLE64S", "CmpLT64U")
_FLOAT_OPS = ("AddF64", "SubF64", "MulF64", "DivF64")

# add <-> sub spellings swapped by the reexpress transform
_ADDSUB_FLIP = {"Add8": "Sub8", "Add16": "Sub16", "Add32": "Sub32",
                "Add64": "Sub64"}
_ADDSUB_FLIP.update({v: k for k, v in _ADDSUB_FLIP.items()})
_MUL_TO_SHL = {"Mul8": "Shl8", "Mul16": "Shl16", "Mul32": "Shl32",
               "Mul64": "Shl64"}
# ops apply_op computes symmetrically, so operand swap preserves values
_SWAPPABLE = frozenset({"add", "mul", "mull", "and", "or", "xor",
                        "cmpeq", "cmpne", "addf", "mulf", "minf", "maxf"})


# ----------------------------------------------------------- generation

def _distribute(total: int, parts: int, rng: SplitMix64) -> list[int]:
    """Split total into parts positive counts, lightly jittered."""
    out = [1] * parts
    for _ in range(total - parts):
        out[rng.below(parts)] += 1
    return out


def _gen_cfg(n_blocks: int, rng: SplitMix64) -> list[list[int]]:
    succ: list[list[int]] = [[] for _ in range(n_blocks)]
    for i in range(n_blocks - 1):
        succ[i].append(i + 1)
        if n_blocks > 2 and rng.uniform() < 0.45:
            if rng.uniform() < 0.7 and i + 2 <= n_blocks - 1:
                extra = rng.randint(i + 2, n_blocks - 1)
            else:
                extra = rng.randint(0, i)
            if extra not in succ[i]:
                succ[i].append(extra)
    if n_blocks > 1 and rng.uniform() < 0.15:
        succ[n_blocks - 1].append(rng.randint(0, n_blocks - 1))
    return succ


class _BlockBuilder:
    """Emits one block's statements with def-before-use tmp discipline."""

    def __init__(self, rng: SplitMix64, next_tmp: list[int],
                 callees: tuple[str, ...]):
        self.rng = rng
        self.next_tmp = next_tmp  # one-cell box shared across blocks
        self.callees = callees
        self.ints: list[int] = []
        self.floats: list[int] = []
        self.stmts: list[Statement] = []
        self.externs: list[str] = []

    def fresh(self) -> int:
        t = self.next_tmp[0]
        self.next_tmp[0] += 1
        return t

    def int_operand(self, tmp_bias: float = 0.75):
        rng = self.rng
        if self.ints and rng.uniform() < tmp_bias:
            return Tmp(rng.choice(self.ints))
        return IntConst(rng.below(1 << 12), "I64")

    def addr_operand(self):
        # mostly fixed slots (stack/global style), sometimes computed
        rng = self.rng
        if self.ints and rng.uniform() < 0.25:
            return Tmp(rng.choice(self.ints))
        return IntConst(0x1000 + 8 * rng.below(48), "I64")

    def emit_def(self) -> None:
        """One register read or memory load; seeds the tmp pool."""
        rng = self.rng
        t = self.fresh()
        r = rng.uniform()
        if r < 0.55:
            self.stmts.append(TmpAssign(t, "I64", GetReg(rng.below(16), "I64")))
        elif r < 0.62:
            self.stmts.append(TmpAssign(t, "I64", GetRegI(16 + rng.below(8), "I64")))
        else:
            self.stmts.append(TmpAssign(t, "I64", Load(self.addr_operand(), "I64")))
        self.ints.append(t)

    def emit_compute(self) -> None:
        rng = self.rng
        r = rng.uniform()
        t = self.fresh()
        if r < 0.34:
            ops = _INT_OPS if rng.uniform() < 0.8 else _INT_OPS32
            ty = "I64" if ops is _INT_OPS else "I32"
            self.stmts.append(TmpAssign(t, ty, OpApply(
                rng.choice(ops), (self.int_operand(), self.int_operand()))))
            self.ints.append(t)
        elif r < 0.42:
            self.stmts.append(TmpAssign(t, "I64", OpApply(
                rng.choice(_SHIFT_OPS),
                (self.int_operand(), IntConst(rng.below(32), "I8")))))
            self.ints.append(t)
        elif r < 0.50:
            self.stmts.append(TmpAssign(t, "I64", OpApply(
                rng.choice(_CMP_OPS),
                (self.int_operand(), self.int_operand()))))
            self.ints.append(t)
        elif r < 0.58:
            # width cast chain
            src = self.int_operand(tmp_bias=1.0) if self.ints \
                else IntConst(rng.below(1 << 12), "I64")
            if rng.uniform() < 0.5:
                self.stmts.append(TmpAssign(t, "I32", OpApply("64to32", (src,))))
            else:
                self.stmts.append(TmpAssign(t, "I64", OpApply("32Uto64", (src,))))
            self.ints.append(t)
        elif r < 0.70:
            self.emit_float(t)
        elif r < 0.78:
            self.stmts.append(TmpAssign(t, "I64", Load(self.addr_operand(), "I64")))
            self.ints.append(t)
        elif r < 0.86:
            self.stmts.append(TmpAssign(
                t, "I64", ConstExpr(IntConst(rng.below(1 << 16), "I64"))))
            self.ints.append(t)
        elif r < 0.92 and self.ints:
            self.stmts.append(TmpAssign(
                t, "I64", ConstExpr(Tmp(rng.choice(self.ints)))))
            self.ints.append(t)
        elif r < 0.95:
            self.stmts.append(TmpAssign(t, "V128", OpApply(
                "64HLtoV128", (self.int_operand(), self.int_operand()))))
        else:
            self.emit_call(t if rng.uniform() < 0.6 else None)

    def emit_float(self, t: int) -> None:
        rng = self.rng
        if len(self.floats) < 2:
            if rng.uniform() < 0.5:
                self.stmts.append(TmpAssign(t, "F64", OpApply(
                    "I64StoF64", (self.int_operand(),))))
            else:
                self.stmts.append(TmpAssign(t, "F64", ConstExpr(
                    FloatConst(rng.below(1 << 10) / 8.0))))
        else:
            a, b = Tmp(rng.choice(self.floats)), Tmp(rng.choice(self.floats))
            if rng.uniform() < 0.15:
                self.stmts.append(TmpAssign(t, "F64", OpApply("SqrtF64", (a,))))
            else:
                self.stmts.append(TmpAssign(t, "F64", OpApply(
                    rng.choice(_FLOAT_OPS), (a, b))))
        self.floats.append(t)

    def emit_call(self, result_tmp: int | None) -> None:
        rng = self.rng
        internal = bool(self.callees) and rng.uniform() < 0.35
        name = rng.choice(self.callees) if internal else rng.choice(_EXTERN_NAMES)
        if not internal:
            self.externs.append(name)
        args = tuple(self.int_operand() for _ in range(rng.below(4)))
        ty = "I64" if result_tmp is not None else None
        self.stmts.append(Call(name, not internal, args, result_tmp, ty))
        if result_tmp is not None:
            self.ints.append(result_tmp)

    def emit_out(self) -> None:
        rng = self.rng
        value = self.int_operand(tmp_bias=0.9)
        r = rng.uniform()
        if r < 0.55:
            self.stmts.append(PutReg(rng.below(16), value))
        elif r < 0.62:
            self.stmts.append(PutRegI(16 + rng.below(8), value))
        else:
            self.stmts.append(Store(self.addr_operand(), value))

    def build(self, n: int) -> list[Statement]:
        n_defs = min(n, 1 + self.rng.below(2))
        n_outs = 1 if n >= 3 else 0
        for _ in range(n_defs):
            self.emit_def()
        for _ in range(n - n_defs - n_outs):
            self.emit_compute()
        for _ in range(n_outs):
            self.emit_out()
        return self.stmts


def gen_function(seed: int, size: int, name: str = "f0",
                 callees: tuple[str, ...] = ()) -> IrFunction:
    """Random valid function with about `size` statements."""
    if size < 1:
        raise ValueError("size must be >= 1")
    rng = derive(seed, "synthfn", name)
    n_blocks = max(1, round(size / rng.randint(5, 8)))
    succ = _gen_cfg(n_blocks, rng)
    counts = _distribute(size, n_blocks, rng)

    next_tmp = [0]
    blocks: list[BasicBlock] = []
    externs: list[str] = []
    for i in range(n_blocks):
        bb = _BlockBuilder(rng.fork("bb", i), next_tmp, callees)
        stmts = bb.build(counts[i])
        externs.extend(bb.externs)
        blocks.append(BasicBlock(i, stmts, succ[i]))

    strings = []
    if rng.uniform() < 0.6:
        k = 1 + rng.below(3)
        pool = list(_STRING_POOL)
        rng.shuffle(pool)
        strings = sorted(pool[:k])

    return IrFunction(name=name, address=0x400000 + (seed & 0xFFFF) * 0x40,
                      blocks=blocks, strings=strings,
                      extern_calls=sorted(set(externs)))


# ------------------------------------------------------------- variants

@dataclass(frozen=True)
class VariationProfile:
    """Per-transform application rates, each in [0, 1]."""

    rename_tmps: float = 0.7
    rename_regs: float = 0.5
    reorder: float = 0.35
    junk: float = 0.25
    reexpress: float = 0.35
    split_blocks: float = 0.2

    def __post_init__(self):
        for fname in ("rename_tmps", "rename_regs", "reorder", "junk",
                      "reexpress", "split_blocks"):
            v = getattr(self, fname)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{fname} rate {v} not in [0, 1]")


@dataclass
class VariantTrace:
    tmp_map: dict[int, int] = field(default_factory=dict)
    reg_map: dict[int, int] = field(default_factory=dict)
    block_chains: dict[int, list[int]] = field(default_factory=dict)
    junk_tmps: set[int] = field(default_factory=set)
    swaps: int = 0
    rewrites: int = 0


# --- statement effect summaries for the reorder independence check

_ALL_MEM = "*"


def _effects(s: Statement):
    """(reads, writes, mem_reads, mem_writes, barrier) of one statement.
    Memory keys are constant addresses or the wildcard for computed ones."""
    reads: set = set()
    writes: set = set()
    mem_r: set = set()
    mem_w: set = set()

    def operand(op):
        if isinstance(op, Tmp):
            reads.add(("t", op.ident))
        elif isinstance(op, Reg):
            reads.add(("r", op.ident))
        elif isinstance(op, Mem):
            mem_r.add(op.ident)

    if isinstance(s, Call):
        return reads, writes, mem_r, mem_w, True
    for op in stmt_operands(s):
        operand(op)
    if isinstance(s, TmpAssign):
        writes.add(("t", s.tmp))
        e = s.expr
        if isinstance(e, (GetReg, GetRegI)):
            reads.add(("r", e.reg))
        elif isinstance(e, Load):
            if isinstance(e.addr, IntConst):
                mem_r.add(e.addr.value)
            elif isinstance(e.addr, Mem):
                mem_r.add(e.addr.ident)
            else:
                mem_r.add(_ALL_MEM)
    elif isinstance(s, (PutReg, PutRegI)):
        writes.add(("r", s.reg))
    elif isinstance(s, Store):
        if isinstance(s.addr, IntConst):
            mem_w.add(s.addr.value)
        elif isinstance(s.addr, Mem):
            mem_w.add(s.addr.ident)
        else:
            mem_w.add(_ALL_MEM)
    return reads, writes, mem_r, mem_w, False


def _mem_overlap(a: set, b: set) -> bool:
    if not a or not b:
        return False
    if _ALL_MEM in a or _ALL_MEM in b:
        return True
    return bool(a & b)


def independent(s1: Statement, s2: Statement) -> bool:
    """True when swapping adjacent s1, s2 cannot change any evaluation."""
    r1, w1, mr1, mw1, bar1 = _effects(s1)
    r2, w2, mr2, mw2, bar2 = _effects(s2)
    if bar1 or bar2:
        return False
    if (w1 & (r2 | w2)) or (w2 & r1):
        return False
    if _mem_overlap(mw1, mr2) or _mem_overlap(mw2, mr1) \
            or _mem_overlap(mw1, mw2):
        return False
    return True


# --- per-block transforms

def _reorder_block(stmts: list[Statement], rate: float,
                   rng: SplitMix64) -> tuple[list[Statement], int]:
    out = list(stmts)
    swaps = 0
    i = 0
    while i < len(out) - 1:
        if rng.uniform() < rate and independent(out[i], out[i + 1]):
            out[i], out[i + 1] = out[i + 1], out[i]
            swaps += 1
            i += 2
        else:
            i += 1
    return out, swaps


def _reexpress_stmt(s: Statement, rng: SplitMix64) -> Statement | None:
    if not isinstance(s, TmpAssign) or not isinstance(s.expr, OpApply):
        return None
    e = s.expr
    table = opcode_table()
    if e.opcode in _ADDSUB_FLIP and len(e.args) == 2 \
            and isinstance(e.args[1], IntConst):
        c = e.args[1]
        return replace(s, expr=OpApply(
            _ADDSUB_FLIP[e.opcode], (e.args[0], IntConst(-c.value, c.ty))))
    if e.opcode in _MUL_TO_SHL and len(e.args) == 2 \
            and isinstance(e.args[1], IntConst):
        v = e.args[1].value
        if v > 0 and v & (v - 1) == 0 and v.bit_length() <= 64:
            return replace(s, expr=OpApply(
                _MUL_TO_SHL[e.opcode],
                (e.args[0], IntConst(v.bit_length() - 1, "I8"))))
    if table.canonical_of(e.opcode) in _SWAPPABLE and len(e.args) == 2 \
            and e.args[0] != e.args[1]:
        return replace(s, expr=OpApply(e.opcode, (e.args[1], e.args[0])))
    return None


def _reexpress_block(stmts: list[Statement], rate: float,
                     rng: SplitMix64) -> tuple[list[Statement], int]:
    out = []
    rewrites = 0
    for s in stmts:
        if rng.uniform() < rate:
            s2 = _reexpress_stmt(s, rng)
            if s2 is not None:
                s = s2
                rewrites += 1
        out.append(s)
    return out, rewrites


def _junk_block(stmts: list[Statement], rate: float, rng: SplitMix64,
                next_tmp: list[int], junk_tmps: set[int]) -> list[Statement]:
    """Insert dead computations: fresh tmps that are never used."""
    defined: list[int] = []
    out: list[Statement] = []

    def make_junk() -> Statement:
        t = next_tmp[0]
        next_tmp[0] += 1
        junk_tmps.add(t)
        r = rng.uniform()
        if r < 0.4 and defined:
            a = Tmp(rng.choice(defined))
            b = Tmp(rng.choice(defined)) if rng.uniform() < 0.5 \
                else IntConst(rng.below(256), "I64")
            return TmpAssign(t, "I64", OpApply(rng.choice(_INT_OPS), (a, b)))
        if r < 0.7:
            return TmpAssign(t, "I64", GetReg(rng.below(16), "I64"))
        return TmpAssign(t, "I64", ConstExpr(IntConst(rng.below(1 << 16), "I64")))

    for s in stmts:
        if rng.uniform() < rate:
            out.append(make_junk())
        out.append(s)
        t = s.tmp if isinstance(s, (TmpAssign, Call)) else None
        if t is not None:
            defined.append(t)
    if rng.uniform() < rate:
        out.append(make_junk())
    return out


# --- renaming

def rename_statements(stmts: list[Statement], tmp_map: dict[int, int],
                      reg_map: dict[int, int]) -> list[Statement]:
    """Rewrite tmp and register idents everywhere, including targets.
    Ids absent from a map pass through; used to apply and undo renames."""

    def tm(i: int) -> int:
        return tmp_map.get(i, i)

    def rm(i: int) -> int:
        return reg_map.get(i, i)

    def op(o):
        if isinstance(o, Tmp):
            return Tmp(tm(o.ident))
        if isinstance(o, Reg):
            return Reg(rm(o.ident))
        return o

    out: list[Statement] = []
    for s in stmts:
        if isinstance(s, TmpAssign):
            e = s.expr
            if isinstance(e, GetReg):
                e2 = GetReg(rm(e.reg), e.ty)
            elif isinstance(e, GetRegI):
                e2 = GetRegI(rm(e.reg), e.ty)
            elif isinstance(e, Load):
                e2 = Load(op(e.addr), e.ty)
            elif isinstance(e, OpApply):
                e2 = OpApply(e.opcode, tuple(op(a) for a in e.args))
            else:
                e2 = ConstExpr(op(e.value))
            out.append(TmpAssign(tm(s.tmp), s.ty, e2))
        elif isinstance(s, PutReg):
            out.append(PutReg(rm(s.reg), op(s.value)))
        elif isinstance(s, PutRegI):
            out.append(PutRegI(rm(s.reg), op(s.value)))
        elif isinstance(s, Store):
            out.append(Store(op(s.addr), op(s.value)))
        elif isinstance(s, Call):
            out.append(Call(s.target, s.external,
                            tuple(op(a) for a in s.args),
                            None if s.tmp is None else tm(s.tmp), s.ty))
        else:
            raise TypeError(f"not a statement: {s!r}")
    return out


def invert_map(m: dict[int, int]) -> dict[int, int]:
    return {v: k for k, v in m.items()}


def _rotation_map(ids: list[int], rate: float, rng: SplitMix64) -> dict[int, int]:
    chosen = [i for i in sorted(ids) if rng.uniform() < rate]
    if len(chosen) < 2:
        return {}
    return {chosen[i]: chosen[(i + 1) % len(chosen)]
            for i in range(len(chosen))}


def _used_tmps_regs(f: IrFunction) -> tuple[set[int], set[int]]:
    tmps: set[int] = set()
    regs: set[int] = set()
    for b in f.blocks:
        for s in b.statements:
            if isinstance(s, TmpAssign):
                tmps.add(s.tmp)
                e = s.expr
                if isinstance(e, (GetReg, GetRegI)):
                    regs.add(e.reg)
            elif isinstance(s, (PutReg, PutRegI)):
                regs.add(s.reg)
            elif isinstance(s, Call) and s.tmp is not None:
                tmps.add(s.tmp)
            for o in stmt_operands(s):
                if isinstance(o, Tmp):
                    tmps.add(o.ident)
                elif isinstance(o, Reg):
                    regs.add(o.ident)
    return tmps, regs


# --- the variant driver

def make_variant_traced(f: IrFunction, profile: VariationProfile,
                        seed: int) -> tuple[IrFunction, VariantTrace]:
    rng = derive(seed, "variant", f.name)
    trace = VariantTrace()
    next_tmp = [max(_used_tmps_regs(f)[0], default=-1) + 1]

    # per-block statement transforms
    new_stmts: dict[int, list[Statement]] = {}
    for b in f.blocks:
        stmts, swaps = _reorder_block(b.statements, profile.reorder,
                                      rng.fork("ro", b.ident))
        trace.swaps += swaps
        stmts, rewrites = _reexpress_block(stmts, profile.reexpress,
                                           rng.fork("rx", b.ident))
        trace.rewrites += rewrites
        stmts = _junk_block(stmts, profile.junk, rng.fork("jk", b.ident),
                            next_tmp, trace.junk_tmps)
        new_stmts[b.ident] = stmts

    # global renames (junk tmps participate)
    probe = IrFunction(f.name, blocks=[
        BasicBlock(b.ident, new_stmts[b.ident], b.successors)
        for b in f.blocks])
    all_tmps, all_regs = _used_tmps_regs(probe)
    trace.tmp_map = _rotation_map(list(all_tmps), profile.rename_tmps,
                                  rng.fork("rt"))
    trace.reg_map = _rotation_map(list(all_regs), profile.rename_regs,
                                  rng.fork("rr"))
    for ident in new_stmts:
        new_stmts[ident] = rename_statements(new_stmts[ident],
                                             trace.tmp_map, trace.reg_map)

    # block splitting, then dense renumbering in original order
    srng = rng.fork("sp")
    pieces: list[tuple[int, list[Statement]]] = []  # (orig id, stmts)
    for b in f.blocks:
        stmts = new_stmts[b.ident]
        if len(stmts) >= 2 and srng.uniform() < profile.split_blocks:
            cut = srng.randint(1, len(stmts) - 1)
            pieces.append((b.ident, stmts[:cut]))
            pieces.append((b.ident, stmts[cut:]))
        else:
            pieces.append((b.ident, stmts))

    chain_ids: dict[int, list[int]] = {}
    for new_id, (orig, _) in enumerate(pieces):
        chain_ids.setdefault(orig, []).append(new_id)
    trace.block_chains = chain_ids

    blocks: list[BasicBlock] = []
    for new_id, (orig, stmts) in enumerate(pieces):
        chain = chain_ids[orig]
        if new_id != chain[-1]:
            succ = [new_id + 1]  # fall through to the rest of the chain
        else:
            succ = [chain_ids[s][0] for s in f.block_map()[orig].successors]
        blocks.append(BasicBlock(new_id, stmts, succ))

    out = IrFunction(name=f.name, address=f.address, blocks=blocks,
                     strings=list(f.strings),
                     extern_calls=list(f.extern_calls),
                     entry=chain_ids[f.entry][0])
    return out, trace


def make_variant(f: IrFunction, profile: VariationProfile,
                 seed: int) -> IrFunction:
    return make_variant_traced(f, profile, seed)[0]


# --------------------------------------------------------------- corpus

@dataclass(frozen=True)
class CorpusConfig:
    groups: int = 200
    variants: int = 4
    size_min: int = 20
    size_max: int = 200
    seed: int = 0xC0FFEE
    profile: VariationProfile = VariationProfile()

    def __post_init__(self):
        if self.groups < 1 or self.variants < 1:
            raise ValueError("groups and variants must be >= 1")
        if not 1 <= self.size_min <= self.size_max:
            raise ValueError("bad size range")


def gen_corpus(cfg: CorpusConfig) -> tuple[list[Program], dict[str, str]]:
    """Programs, one per variant, sharing function names; plus the
    name -> group-id labeling.  Variant 0 is the base compilation."""
    rng = derive(cfg.seed, "corpus")
    names = [f"f{g:04d}" for g in range(cfg.groups)]
    groups = {name: f"g{g:04d}" for g, name in enumerate(names)}

    base: list[IrFunction] = []
    for g, name in enumerate(names):
        size = rng.randint(cfg.size_min, cfg.size_max)
        callees: tuple[str, ...] = ()
        if g > 0 and rng.uniform() < 0.3:
            k = min(g, 1 + rng.below(2))
            callees = tuple(names[rng.below(g)] for _ in range(k))
        base.append(gen_function(stable_hash(cfg.seed, "fn", g), size,
                                 name=name, callees=callees))

    programs: list[Program] = []
    for v in range(cfg.variants):
        if v == 0:
            fns = base
        else:
            fns = [make_variant(f, cfg.profile, stable_hash(cfg.seed, "var", g, v))
                   for g, f in enumerate(base)]
        programs.append(Program(name=f"variant{v}", functions=list(fns)))
    return programs, groups
