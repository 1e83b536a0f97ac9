"""Peephole sampling: seeded random walks over the CFG.

A peephole is a path of at most k contiguous basic blocks flattened to a
straight-line statement sequence.  Walks start from a uniformly drawn
not-yet-covered block and extend by uniform successor choice until a
sink or the length cap; sampling repeats until every block has been
visited at least c times.  Each walk's start block has a visit count
below c when drawn, so a block can start at most c walks and the loop
runs at most c * |V| iterations; the not-yet-covered set never grows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .ir import IrFunction, Program, Statement
from .rng import derive


@dataclass(frozen=True)
class PeepholeConfig:
    k: int = 72          # maximum blocks per walk
    c: int = 2           # minimum visits per block
    seed: int = 0xC0FFEE

    def __post_init__(self):
        if self.k < 1 or self.c < 1:
            raise ValueError("k and c must be >= 1")


@dataclass
class Peephole:
    function: str
    blocks: tuple[int, ...]
    statements: list[Statement]


@dataclass
class PeepholeSet:
    function: str
    peepholes: list[Peephole] = field(default_factory=list)
    visit_counts: dict[int, int] = field(default_factory=dict)
    iterations: int = 0


def generate_peepholes(f: IrFunction, cfg: PeepholeConfig) -> PeepholeSet:
    rng = derive(cfg.seed, f.name)
    blocks = f.block_map()
    counts = {b.ident: 0 for b in f.blocks}
    uncovered = sorted(counts)
    out = PeepholeSet(f.name, visit_counts=counts)

    while uncovered:
        start = uncovered[rng.below(len(uncovered))]
        path = [start]
        cur = start
        while len(path) < cfg.k:
            succs = blocks[cur].successors
            if not succs:
                break
            cur = succs[rng.below(len(succs))]
            path.append(cur)
        stmts: list[Statement] = []
        for b in path:
            counts[b] += 1
            stmts.extend(blocks[b].statements)
        out.peepholes.append(Peephole(f.name, tuple(path), stmts))
        out.iterations += 1
        uncovered = [b for b in uncovered if counts[b] < cfg.c]

    return out


@dataclass
class PeepholeStats:
    mean_peepholes: float
    mean_visits: float
    reference: float     # c * |V| / 2, the expected count for large k


def expected_peephole_stats(f: IrFunction, cfg: PeepholeConfig,
                            trials: int = 32) -> PeepholeStats:
    """Monte-Carlo estimate of peephole count against the c|V|/2 reference."""
    total_peeps = 0
    total_visits = 0
    for i in range(trials):
        trial_cfg = PeepholeConfig(cfg.k, cfg.c, seed=derive(cfg.seed, "stats", i).next64())
        ps = generate_peepholes(f, trial_cfg)
        total_peeps += len(ps.peepholes)
        total_visits += sum(ps.visit_counts.values())
    n = max(1, trials)
    return PeepholeStats(total_peeps / n, total_visits / n,
                         cfg.c * len(f.blocks) / 2.0)


# ------------------------------------------------------------- .peep files

def dump_peeps(sets: list[PeepholeSet]) -> str:
    """One line per peephole: `peep <fn-name> <block ids>`."""
    lines = []
    for ps in sets:
        for p in ps.peepholes:
            ids = " ".join(str(b) for b in p.blocks)
            lines.append(f"peep {p.function} {ids}")
    return "\n".join(lines) + "\n" if lines else ""


def load_peeps(text: str, program: Program) -> list[PeepholeSet]:
    """Rebuild peepholes from a .peep dump against their source program."""
    by_fn: dict[str, PeepholeSet] = {}
    fns = {f.name: f for f in program.functions}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if parts[0] != "peep" or len(parts) < 3:
            raise ValueError(f".peep line {lineno}: malformed: {line!r}")
        name = parts[1]
        if name not in fns:
            raise ValueError(f".peep line {lineno}: unknown function {name!r}")
        blocks = fns[name].block_map()
        try:
            path = tuple(int(x) for x in parts[2:])
        except ValueError:
            raise ValueError(f".peep line {lineno}: bad block id list")
        if any(b not in blocks for b in path):
            raise ValueError(f".peep line {lineno}: block id out of range")
        stmts: list[Statement] = []
        for b in path:
            stmts.extend(blocks[b].statements)
        ps = by_fn.setdefault(name, PeepholeSet(name))
        ps.peepholes.append(Peephole(name, path, stmts))
        for b in path:
            ps.visit_counts[b] = ps.visit_counts.get(b, 0) + 1
        ps.iterations += 1
    return list(by_fn.values())
