"""Canonicalization: collapse spellings of the same semantics.

Function-level rewrites, applied in order:
  1. raw opcodes map to canonical names (unknown ones become `unk`),
     and every type annotation collapses to its class
     (INT/FLOAT/DOUBLE/VECTOR);
  2. integer width casts (canonical `ext`/`trunc`) are deleted and their
     operand forwarded into every use;
  3. add/sub with a negative immediate flip to the opposite opcode with
     the immediate negated (value-preserving: the constant is commuted
     into the second position first when needed);
  6. loads and stores through a non-symbolic address get a fresh direct
     Mem slot, one per distinct address key in first-occurrence order;
     loads that only fed replaced address positions are dropped.

Operand abstraction (rule 5) is deferred to triplet extraction; the
`abstract_operand` helper here defines the token mapping.
"""

from __future__ import annotations

from .ir import (
    Abstract, BasicBlock, Call, ConstExpr, FloatConst, GetReg, GetRegI,
    IntConst, IrFunction, Load, Mem, OpApply, Operand, Program, PutReg,
    PutRegI, Reg, Statement, Store, Tmp, TmpAssign, TYPE_CLASS,
)
from .opcodes import INT_CAST_OPS, opcode_table


def abstract_operand(op: Operand) -> str:
    if isinstance(op, Tmp):
        return "VAR"
    if isinstance(op, (IntConst, FloatConst)):
        return "CONST"
    if isinstance(op, Reg):
        return "REG"
    if isinstance(op, Mem):
        return "MEM"
    if isinstance(op, Abstract):
        return op.token
    raise TypeError(f"not an operand: {op!r}")


def _class_const(op: Operand) -> Operand:
    if isinstance(op, IntConst):
        return IntConst(op.value, "INT")
    return op


def _map_types_and_opcodes(s: Statement) -> Statement:
    table = opcode_table()
    if isinstance(s, TmpAssign):
        e = s.expr
        if isinstance(e, GetReg):
            e2 = GetReg(e.reg, TYPE_CLASS[e.ty])
        elif isinstance(e, GetRegI):
            e2 = GetRegI(e.reg, TYPE_CLASS[e.ty])
        elif isinstance(e, Load):
            e2 = Load(_class_const(e.addr), TYPE_CLASS[e.ty])
        elif isinstance(e, OpApply):
            e2 = OpApply(table.canonical_of(e.opcode),
                         tuple(_class_const(a) for a in e.args))
        elif isinstance(e, ConstExpr):
            e2 = ConstExpr(_class_const(e.value))
        else:
            raise TypeError(f"not an expression: {e!r}")
        return TmpAssign(s.tmp, TYPE_CLASS[s.ty], e2)
    if isinstance(s, PutReg):
        return PutReg(s.reg, _class_const(s.value))
    if isinstance(s, PutRegI):
        return PutRegI(s.reg, _class_const(s.value))
    if isinstance(s, Store):
        return Store(_class_const(s.addr), _class_const(s.value))
    if isinstance(s, Call):
        return Call(s.target, s.external,
                    tuple(_class_const(a) for a in s.args),
                    tmp=s.tmp, ty=TYPE_CLASS[s.ty] if s.ty else None)
    raise TypeError(f"not a statement: {s!r}")


def _rewrite_operands(s: Statement, sub) -> Statement:
    """Rebuild s with sub() applied to every source operand."""
    if isinstance(s, TmpAssign):
        e = s.expr
        if isinstance(e, Load):
            e2 = Load(sub(e.addr), e.ty)
        elif isinstance(e, OpApply):
            e2 = OpApply(e.opcode, tuple(sub(a) for a in e.args))
        elif isinstance(e, ConstExpr):
            e2 = ConstExpr(sub(e.value))
        else:
            e2 = e
        return TmpAssign(s.tmp, s.ty, e2)
    if isinstance(s, PutReg):
        return PutReg(s.reg, sub(s.value))
    if isinstance(s, PutRegI):
        return PutRegI(s.reg, sub(s.value))
    if isinstance(s, Store):
        return Store(sub(s.addr), sub(s.value))
    if isinstance(s, Call):
        return Call(s.target, s.external, tuple(sub(a) for a in s.args),
                    tmp=s.tmp, ty=s.ty)
    raise TypeError(f"not a statement: {s!r}")


def _neg(c: IntConst) -> IntConst:
    return IntConst(-c.value, c.ty)


def _rule3(e: OpApply) -> OpApply:
    if len(e.args) != 2:
        return e
    a, b = e.args
    if e.opcode == "add":
        if isinstance(b, IntConst) and b.value < 0:
            return OpApply("sub", (a, _neg(b)))
        if isinstance(a, IntConst) and a.value < 0:
            return OpApply("sub", (b, _neg(a)))
    elif e.opcode == "sub":
        if isinstance(b, IntConst) and b.value < 0:
            return OpApply("add", (a, _neg(b)))
    return e


def _operand_uses(blocks: list[BasicBlock]) -> dict[int, int]:
    from .ir import stmt_operands
    uses: dict[int, int] = {}
    for b in blocks:
        for s in b.statements:
            for op in stmt_operands(s):
                if isinstance(op, Tmp):
                    uses[op.ident] = uses.get(op.ident, 0) + 1
    return uses


def canonicalize_function(f: IrFunction) -> IrFunction:
    # rules 1 + 4: opcode and type collapsing
    blocks = [BasicBlock(b.ident, [_map_types_and_opcodes(s) for s in b.statements],
                         list(b.successors))
              for b in f.blocks]

    # rule 2: integer cast statements vanish, operands forwarded
    fwd: dict[int, Operand] = {}
    for b in blocks:
        for s in b.statements:
            if (isinstance(s, TmpAssign) and isinstance(s.expr, OpApply)
                    and s.expr.opcode in INT_CAST_OPS and len(s.expr.args) == 1):
                fwd[s.tmp] = s.expr.args[0]

    def resolve(op: Operand) -> Operand:
        seen = set()
        while isinstance(op, Tmp) and op.ident in fwd and op.ident not in seen:
            seen.add(op.ident)
            op = fwd[op.ident]
        return op

    if fwd:
        for b in blocks:
            out = []
            for s in b.statements:
                if isinstance(s, TmpAssign) and s.tmp in fwd:
                    continue
                out.append(_rewrite_operands(s, resolve))
            b.statements = out

    # rule 3: negative immediates flip add/sub
    for b in blocks:
        b.statements = [
            TmpAssign(s.tmp, s.ty, _rule3(s.expr))
            if isinstance(s, TmpAssign) and isinstance(s.expr, OpApply) else s
            for s in b.statements
        ]

    # rule 6: fresh symbolic addresses for indirect accesses
    uses_before = _operand_uses(blocks)
    next_mem = 0
    for b in blocks:
        for s in b.statements:
            ops = [s.addr] if isinstance(s, Store) else []
            if isinstance(s, TmpAssign) and isinstance(s.expr, Load):
                ops.append(s.expr.addr)
            for op in ops:
                if isinstance(op, Mem):
                    next_mem = max(next_mem, op.ident + 1)
    assigned: dict[tuple, Mem] = {}

    def memify(op: Operand) -> Operand:
        nonlocal next_mem
        if isinstance(op, Mem):
            return op
        if isinstance(op, Tmp):
            key = ("t", op.ident)
        elif isinstance(op, IntConst):
            key = ("c", op.value)
        elif isinstance(op, Reg):
            key = ("r", op.ident)
        elif isinstance(op, FloatConst):
            key = ("f", op.bits())
        else:
            key = ("a", getattr(op, "token", repr(op)))
        m = assigned.get(key)
        if m is None:
            m = Mem(next_mem)
            next_mem += 1
            assigned[key] = m
        return m

    for b in blocks:
        out = []
        for s in b.statements:
            if isinstance(s, Store):
                s = Store(memify(s.addr), s.value)
            elif isinstance(s, TmpAssign) and isinstance(s.expr, Load):
                s = TmpAssign(s.tmp, s.ty, Load(memify(s.expr.addr), s.expr.ty))
            out.append(s)
        b.statements = out

    # load-chain shortening: loads whose only uses were replaced addresses
    uses_after = _operand_uses(blocks)
    for b in blocks:
        b.statements = [
            s for s in b.statements
            if not (isinstance(s, TmpAssign) and isinstance(s.expr, Load)
                    and uses_before.get(s.tmp, 0) > 0
                    and uses_after.get(s.tmp, 0) == 0)
        ]

    return IrFunction(f.name, f.address, blocks, list(f.strings),
                      list(f.extern_calls), f.entry)


def canonicalize_program(p: Program) -> Program:
    return Program(p.name, [canonicalize_function(f) for f in p.functions])
