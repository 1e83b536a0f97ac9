"""Function-level control flow recovery.

Recursive descent from a function entry: linear runs are decoded until
a control transfer, branch targets inside the function extent become
new leaders, and direct jumps leaving the extent are treated as tail
transfers.  The scanner is architecture-neutral; it relies only on the
decoded instruction protocol (addr, size, kind, target).

Decode failures, branches that escape the extent, and overlapping
decode streams abort the whole function; the caller records it as
skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ScanError(Exception):
    def __init__(self, addr: int, why: str):
        super().__init__(f"0x{addr:x}: {why}")
        self.addr = addr
        self.why = why


@dataclass
class Block:
    start: int
    insns: list = field(default_factory=list)
    succ_addrs: list[int] = field(default_factory=list)
    # set when the block ends with a direct jump out of the function
    tail_target: int | None = None


@dataclass
class FuncCFG:
    start: int
    limit: int
    blocks: list[Block] = field(default_factory=list)

    def call_targets(self) -> list[int]:
        out = []
        for blk in self.blocks:
            for insn in blk.insns:
                if insn.kind == "call" and insn.target is not None:
                    out.append(insn.target)
            if blk.tail_target is not None:
                out.append(blk.tail_target)
        return out


def scan_function(insn_at, start: int, limit: int) -> FuncCFG:
    """insn_at(addr) decodes one instruction; may raise its DecodeError."""
    insns: dict[int, object] = {}
    leaders = {start}
    pending = [start]

    while pending:
        addr = pending.pop()
        while True:
            if addr in insns:
                # two runs converge here; force a block boundary
                leaders.add(addr)
                break
            if not start <= addr < limit:
                raise ScanError(addr, "control flow leaves function extent")
            try:
                insn = insn_at(addr)
            except Exception as e:
                raise ScanError(addr, str(e))
            insns[addr] = insn
            nxt = addr + insn.size
            if insn.kind in ("seq", "call"):
                addr = nxt
                continue
            if insn.kind == "branch":
                t = insn.target
                if t is None or not start <= t < limit:
                    raise ScanError(insn.addr, "conditional branch leaves extent")
                leaders.add(t)
                leaders.add(nxt)
                pending.append(nxt)
                pending.append(t)
                break
            if insn.kind == "jump":
                t = insn.target
                if t is not None and start <= t < limit:
                    leaders.add(t)
                    pending.append(t)
                break
            break  # ijump, ret, term: run ends with no successors

    blocks: list[Block] = []
    cur: Block | None = None
    for a in sorted(insns):
        insn = insns[a]
        if cur is not None:
            prev = cur.insns[-1]
            # contiguous flow into a leader already closed cur, so any
            # open block here must continue exactly at the next byte
            if prev.addr + prev.size != a or a in leaders:
                raise ScanError(prev.addr, "overlapping decode streams")
        if cur is None:
            cur = Block(a)
            blocks.append(cur)
        cur.insns.append(insn)
        nxt = a + insn.size
        if insn.kind in ("seq", "call"):
            if nxt in leaders:
                cur.succ_addrs = [nxt]
                cur = None
        elif insn.kind == "branch":
            cur.succ_addrs = [insn.target, nxt]
            cur = None
        elif insn.kind == "jump":
            t = insn.target
            if t is not None and start <= t < limit:
                cur.succ_addrs = [t]
            else:
                cur.tail_target = t
            cur = None
        else:  # ijump, ret, term
            cur = None

    if cur is not None:
        last = cur.insns[-1]
        raise ScanError(last.addr, "run ends without terminator")
    return FuncCFG(start, limit, blocks)
