"""Function embeddings: accumulate vocabulary vectors over peepholes.

A function's initial representation is the tuple ⟨O, T, A⟩ of pointwise
sums over every statement of every sampled peephole: opcode vectors into
O, type-class vectors into T, abstract-argument vectors into A.  Blocks
visited by several walks contribute once per occurrence, weighting hot
code.  Internal call sites splice in the callee's own ⟨O, T, A⟩ instead
of a generic `call` vector, resolved in reverse-topological order over
the call graph's strongly connected components; calls inside a cycle and
external calls fall back to the plain `call` instruction.  S and L carry
hashed text embeddings of the function's string literals and external
call names.

Summation order is fixed (peephole index, then statement index) and all
accumulation is plain float64 addition, so embeddings reproduce bit for
bit; never parallelize inside one function.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ir import Call, IrFunction, Program, Statement
from .peephole import Peephole, PeepholeConfig, PeepholeSet, generate_peepholes
from .rng import SplitMix64, stable_hash
from .vexine import NormLevel, normalize_peephole
from .vocab import DIM, Vocabulary, instruction_view, instruction_views

TEXT_DIM = 100
TEXT_BUCKETS = 1 << 16
_NGRAM_SIZES = (3, 4, 5)


@dataclass
class FunctionEmbedding:
    name: str
    o: np.ndarray
    t: np.ndarray
    a: np.ndarray
    s: np.ndarray
    l: np.ndarray
    source: str = ""

    def channels(self) -> tuple[np.ndarray, ...]:
        return (self.o, self.t, self.a, self.s, self.l)


# -------------------------------------------------------------- text

_bucket_cache: dict[int, np.ndarray] = {}


def _bucket_vector(bucket: int) -> np.ndarray:
    vec = _bucket_cache.get(bucket)
    if vec is None:
        rng = SplitMix64(stable_hash("peepvec-text-v1", bucket))
        vec = np.array([rng.uniform() * 2.0 - 1.0 for _ in range(TEXT_DIM)])
        norm = float(np.linalg.norm(vec))
        if norm > 0:
            vec /= norm
        _bucket_cache[bucket] = vec
    return vec


def _ngrams(s: str):
    padded = "<" + s.lower() + ">"
    for n in _NGRAM_SIZES:
        for i in range(len(padded) - n + 1):
            yield padded[i:i + n]


def embed_text(items: list[str]) -> np.ndarray:
    """Sum of per-string normalized bags of hashed character n-grams."""
    total = np.zeros(TEXT_DIM)
    for s in items:
        acc = np.zeros(TEXT_DIM)
        count = 0
        for gram in _ngrams(s):
            bucket = stable_hash("txt", gram) % TEXT_BUCKETS
            acc += _bucket_vector(bucket)
            count += 1
        if count:
            norm = float(np.linalg.norm(acc))
            if norm > 0:
                acc /= norm
            total += acc
    return total


# --------------------------------------------------------- call graph

@dataclass
class CallGraph:
    adjacency: dict[str, list[str]]
    sccs: list[list[str]]              # reverse-topological order
    scc_of: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.scc_of:
            for i, comp in enumerate(self.sccs):
                for name in comp:
                    self.scc_of[name] = i


def build_call_graph(program: Program) -> CallGraph:
    names = {f.name for f in program.functions}
    adj: dict[str, list[str]] = {}
    for f in program.functions:
        callees: list[str] = []
        seen: set[str] = set()
        for b in f.blocks:
            for s in b.statements:
                if isinstance(s, Call) and not s.external \
                        and s.target in names and s.target not in seen:
                    seen.add(s.target)
                    callees.append(s.target)
        adj[f.name] = callees
    return CallGraph(adj, _tarjan_sccs(adj))


def _tarjan_sccs(adj: dict[str, list[str]]) -> list[list[str]]:
    """Iterative Tarjan; emits SCCs in reverse-topological order
    (every callee's component appears before its callers')."""
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[list[str]] = []
    counter = 0

    for root in adj:
        if root in index:
            continue
        work: list[tuple[str, int]] = [(root, 0)]
        while work:
            node, ei = work.pop()
            if ei == 0:
                index[node] = low[node] = counter
                counter += 1
                stack.append(node)
                on_stack.add(node)
            edges = adj[node]
            recursed = False
            for j in range(ei, len(edges)):
                child = edges[j]
                if child not in index:
                    work.append((node, j + 1))
                    work.append((child, 0))
                    recursed = True
                    break
                if child in on_stack:
                    low[node] = min(low[node], index[child])
            if recursed:
                continue
            if low[node] == index[node]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == node:
                        break
                sccs.append(comp)
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
    return sccs


# --------------------------------------------------------- embedding

def embed_instruction(s: Statement, vocab: Vocabulary,
                      tmp_types: dict[int, str] | None = None):
    """(o, t, a) vectors for one statement: opcode, type class, and the
    sum of abstract-argument vectors (zero for zero-arg statements)."""
    view = instruction_view(s, tmp_types or {})
    o = vocab.entities[view.opcode]
    t = vocab.entities[view.ty]
    a = np.zeros(DIM)
    for tok in view.args:
        a = a + vocab.entities[tok]
    return o.copy(), t.copy(), a


def _accumulate_ota(peepholes: list[Peephole], vocab: Vocabulary,
                    callee_ota: dict[str, tuple[np.ndarray, np.ndarray, np.ndarray]]):
    """Sum instruction vectors over all peepholes, splicing callee
    tuples at resolvable internal call sites.  Returns (O, T, A,
    externally called names in first-seen order)."""
    O = np.zeros(DIM)
    T = np.zeros(DIM)
    A = np.zeros(DIM)
    extern: list[str] = []
    seen_extern: set[str] = set()
    for p in peepholes:
        views = instruction_views(p.statements)
        for s, view in zip(p.statements, views):
            if isinstance(s, Call):
                if s.external:
                    if s.target not in seen_extern:
                        seen_extern.add(s.target)
                        extern.append(s.target)
                elif s.target in callee_ota:
                    co, ct, ca = callee_ota[s.target]
                    O = O + co
                    T = T + ct
                    A = A + ca
                    continue
            O = O + vocab.entities[view.opcode]
            T = T + vocab.entities[view.ty]
            for tok in view.args:
                A = A + vocab.entities[tok]
    return O, T, A, extern


def embed_function(f: IrFunction, peeps: PeepholeSet, vocab: Vocabulary,
                   program: Program | None = None,
                   callee_ota: dict | None = None,
                   peephole_cfg: PeepholeConfig | None = None,
                   level: NormLevel = NormLevel.N0,
                   source: str = "") -> FunctionEmbedding:
    """Embed one function from its (already normalized) peepholes.

    Callee substitution needs the rest of the program: pass callee_ota
    when the caller already resolved it (embed_program does), or the
    Program plus the peephole settings to resolve here.  With neither,
    every internal call embeds as a plain call instruction.
    """
    if callee_ota is None:
        if program is not None:
            callee_ota = _program_otas(program, vocab,
                                       peephole_cfg or PeepholeConfig(),
                                       level)
            callee_ota.pop(f.name, None)
        else:
            callee_ota = {}
    O, T, A, extern = _accumulate_ota(peeps.peepholes, vocab, callee_ota)
    extern_all = sorted(set(f.extern_calls) | set(extern))
    return FunctionEmbedding(f.name, O, T, A,
                             embed_text(list(f.strings)),
                             embed_text(extern_all),
                             source=source)


def _program_otas(program: Program, vocab: Vocabulary,
                  cfg: PeepholeConfig, level: NormLevel,
                  peeps_by_fn: dict[str, list[Peephole]] | None = None):
    """⟨O,T,A⟩ per function in reverse-topological SCC order.  Functions
    in a multi-member (or self-looping) component get no substitution
    for intra-component calls: those embed as plain call instructions."""
    if peeps_by_fn is None:
        peeps_by_fn = {}
        for f in program.functions:
            ps = generate_peepholes(f, cfg)
            peeps_by_fn[f.name] = [normalize_peephole(p, level)
                                   for p in ps.peepholes]
    graph = build_call_graph(program)
    otas: dict[str, tuple] = {}
    for comp in graph.sccs:
        # members see only strictly earlier components, so intra-component
        # calls (cycles, self-recursion) embed as plain call instructions
        outside = dict(otas)
        for name in comp:
            o, t, a, _ = _accumulate_ota(peeps_by_fn[name], vocab, outside)
            otas[name] = (o, t, a)
    return otas


def function_walks(f, cfg: PeepholeConfig,
                   level: NormLevel) -> tuple[PeepholeSet, list[Peephole]]:
    """Generate and normalize one function's peepholes.  Pure given its
    arguments, so callers may fan this out across worker processes and
    feed the results to embed_program via `walks`."""
    ps = generate_peepholes(f, cfg)
    return ps, [normalize_peephole(p, level) for p in ps.peepholes]


def embed_program(program: Program, vocab: Vocabulary,
                  cfg: PeepholeConfig | None = None,
                  level: NormLevel = NormLevel.N0,
                  source: str = "",
                  walks: dict | None = None) -> list[FunctionEmbedding]:
    """Embed every function; peepholes are generated with cfg, normalized
    at the given level, and callee tuples resolved program-wide.  `walks`
    may carry precomputed function_walks results keyed by function name;
    accumulation order is fixed either way, so outputs are identical."""
    cfg = cfg or PeepholeConfig()
    peeps_by_fn: dict[str, list[Peephole]] = {}
    raw_sets: dict[str, PeepholeSet] = {}
    for f in program.functions:
        ps, normed = walks[f.name] if walks is not None \
            else function_walks(f, cfg, level)
        raw_sets[f.name] = ps
        peeps_by_fn[f.name] = normed
    otas = _program_otas(program, vocab, cfg, level, peeps_by_fn)
    graph = build_call_graph(program)
    out: list[FunctionEmbedding] = []
    for f in program.functions:
        comp = graph.sccs[graph.scc_of[f.name]]
        callee_ota = {k: v for k, v in otas.items() if k not in comp}
        normalized = PeepholeSet(f.name, peeps_by_fn[f.name],
                                 raw_sets[f.name].visit_counts,
                                 raw_sets[f.name].iterations)
        out.append(embed_function(f, normalized, vocab,
                                  callee_ota=callee_ota, source=source))
    return out


# -------------------------------------------------------- persistence

FEMB_HEADER = "peepvec-femb v1"


def save_embeddings(embs: list[FunctionEmbedding], path: str) -> None:
    from .irtext import escape_string
    lines = [FEMB_HEADER]
    for e in embs:
        parts = [f'F "{escape_string(e.name)}"']
        for tag, vec in zip("OTASL", e.channels()):
            parts.append(tag)
            parts.extend(f"{x:.17g}" for x in vec)
        lines.append(" ".join(parts))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_embeddings(path: str) -> list[FunctionEmbedding]:
    import re
    from .irtext import unescape_string
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != FEMB_HEADER:
        raise ValueError("bad embedding file header")
    name_re = re.compile(r'^F "((?:[^"\\]|\\.)*)" ')
    dims = {"O": DIM, "T": DIM, "A": DIM, "S": TEXT_DIM, "L": TEXT_DIM}
    out = []
    for line_no, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        m = name_re.match(line)
        if not m:
            raise ValueError(f"line {line_no}: malformed embedding line")
        name = unescape_string(m.group(1), line_no)
        toks = line[m.end():].split()
        vecs = {}
        i = 0
        for tag in "OTASL":
            if i >= len(toks) or toks[i] != tag:
                raise ValueError(f"line {line_no}: expected {tag} block")
            n = dims[tag]
            vals = toks[i + 1:i + 1 + n]
            if len(vals) != n:
                raise ValueError(f"line {line_no}: {tag} needs {n} values")
            vecs[tag] = np.array([float(x) for x in vals])
            i += 1 + n
        if i != len(toks):
            raise ValueError(f"line {line_no}: trailing tokens")
        out.append(FunctionEmbedding(name, vecs["O"], vecs["T"], vecs["A"],
                                     vecs["S"], vecs["L"]))
    return out
