"""Text emission for extracted programs.

Produces the block-structured IR text consumed by the analysis
pipeline: a program header, one fn section per function with harvested
string and extern-call metadata, and per-block statement lists followed
by a successor line.  Statements arrive preformatted from the lifter;
this module owns only framing and escaping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

_NAMED = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\t": "\\t"}


def escape(s: str) -> str:
    out = []
    for ch in s:
        if ch in _NAMED:
            out.append(_NAMED[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\x{ord(ch):02x}")
        else:
            out.append(ch)
    return "".join(out)


@dataclass
class FnOut:
    name: str
    addr: int
    strings: list[str] = field(default_factory=list)
    extern_calls: list[str] = field(default_factory=list)
    # (statement lines, successor block ids) per block, in id order
    blocks: list[tuple[list[str], list[int]]] = field(default_factory=list)


def render(program_name: str, fns: list[FnOut]) -> str:
    lines = [f'program "{escape(program_name)}"']
    for fn in fns:
        lines.append("")
        lines.append(f'fn "{escape(fn.name)}" addr=0x{fn.addr:x}')
        for s in fn.strings:
            lines.append(f'str "{escape(s)}"')
        for c in fn.extern_calls:
            lines.append(f'call "{escape(c)}"')
        for ident, (stmts, succs) in enumerate(fn.blocks):
            lines.append(f"bb {ident}")
            lines.extend(stmts)
            lines.append("succ" + "".join(f" {s}" for s in succs))
    return "\n".join(lines) + "\n"
