"""Entity vocabulary: triplet extraction and translation-based training.

Every canonical instruction decomposes into facts about its opcode:
which type class it operates on (TYPE), what kind of operand sits in
each position (ARG1..ARG8), and which opcode follows it (NEXT).  A
translation model trained on those facts places each entity at a
128-dim point such that head + relation lands near tail; the resulting
lookup table seeds all downstream embeddings.

Fact extraction abstracts operands on the fly (VAR/CONST/REG/MEM/FUNC);
the peepholes themselves keep concrete operands so the normalizer can
fold constants first.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .canon import abstract_operand
from .ir import (
    Call, ConstExpr, FloatConst, GetReg, GetRegI, IntConst, Load, OpApply,
    PutReg, PutRegI, Reg, Statement, Store, Tmp, TmpAssign,
    ABSTRACT_TOKENS, CLASS_TYPES,
)
from .opcodes import STMT_OPS, UNKNOWN_OP, opcode_table
from .peephole import Peephole
from .rng import SplitMix64, derive

DIM = 128
RELATIONS = ("TYPE", "NEXT") + tuple(f"ARG{i}" for i in range(1, 9))
MAX_ARGS = 8


@dataclass(frozen=True)
class Triplet:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        if self.relation not in RELATIONS:
            raise ValueError(f"unknown relation {self.relation!r}")


def default_entities() -> list[str]:
    """The closed entity inventory: every canonical opcode, statement
    opcode, type class and abstract token.  Extraction can only emit
    names from this list, so there is no out-of-vocabulary case."""
    names = set(opcode_table().canonical)
    names.add(UNKNOWN_OP)
    names.update(STMT_OPS)
    names.update(CLASS_TYPES)
    names.update(ABSTRACT_TOKENS)
    return sorted(names)


# ---------------------------------------------------------- extraction

@dataclass(frozen=True)
class InstructionView:
    """One statement reduced to (opcode, type class, abstract args)."""
    opcode: str
    ty: str
    args: tuple[str, ...]


def _operand_class(op, tmp_types: dict[int, str]) -> str:
    if isinstance(op, Tmp):
        return tmp_types.get(op.ident, "INT")
    if isinstance(op, IntConst):
        return "INT"
    if isinstance(op, FloatConst):
        return "DOUBLE"
    return "INT"  # registers and addresses carry machine words


def instruction_view(s: Statement, tmp_types: dict[int, str]) -> InstructionView:
    if isinstance(s, TmpAssign):
        e = s.expr
        if isinstance(e, OpApply):
            return InstructionView(e.opcode, s.ty,
                                   tuple(abstract_operand(a) for a in e.args))
        if isinstance(e, GetReg):
            return InstructionView("get", s.ty, ("REG",))
        if isinstance(e, GetRegI):
            return InstructionView("geti", s.ty, ("REG",))
        if isinstance(e, Load):
            return InstructionView("load", s.ty, (abstract_operand(e.addr),))
        if isinstance(e, ConstExpr):
            return InstructionView("mov", s.ty, (abstract_operand(e.value),))
        raise TypeError(f"not an expression: {e!r}")
    if isinstance(s, (PutReg, PutRegI)):
        op = "put" if isinstance(s, PutReg) else "puti"
        return InstructionView(op, _operand_class(s.value, tmp_types),
                               ("REG", abstract_operand(s.value)))
    if isinstance(s, Store):
        return InstructionView("store", _operand_class(s.value, tmp_types),
                               (abstract_operand(s.addr),
                                abstract_operand(s.value)))
    if isinstance(s, Call):
        ty = s.ty if s.ty else "INT"
        args = ("FUNC",) + tuple(abstract_operand(a) for a in s.args)
        return InstructionView("call", ty, args)
    raise TypeError(f"not a statement: {s!r}")


def instruction_views(stmts: list[Statement]) -> list[InstructionView]:
    views = []
    tmp_types: dict[int, str] = {}
    for s in stmts:
        views.append(instruction_view(s, tmp_types))
        if isinstance(s, TmpAssign):
            tmp_types[s.tmp] = s.ty
        elif isinstance(s, Call) and s.tmp is not None:
            tmp_types[s.tmp] = s.ty if s.ty else "INT"
    return views


def extract_triplets(p: Peephole) -> list[Triplet]:
    out: list[Triplet] = []
    views = instruction_views(p.statements)
    for i, v in enumerate(views):
        out.append(Triplet(v.opcode, "TYPE", v.ty))
        for j, a in enumerate(v.args[:MAX_ARGS]):
            out.append(Triplet(v.opcode, f"ARG{j + 1}", a))
        if i + 1 < len(views):
            out.append(Triplet(v.opcode, "NEXT", views[i + 1].opcode))
    return out


# ------------------------------------------------------------ training

@dataclass(frozen=True)
class TransEConfig:
    margin: float = 3.0
    lr: float = 0.002
    batch_size: int = 256
    epochs: int = 400
    seed: int = 0xC0FFEE

    def __post_init__(self):
        if self.margin <= 0 or self.lr <= 0:
            raise ValueError("margin and lr must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size >= 1, epochs >= 0")


@dataclass
class Vocabulary:
    dim: int
    entities: dict[str, np.ndarray]
    relations: dict[str, np.ndarray]
    meta: dict[str, str] = field(default_factory=dict)

    def entity_matrix(self, names: list[str]) -> np.ndarray:
        return np.stack([self.entities[n] for n in names])


def _init_matrix(rng: SplitMix64, n: int, dim: int) -> np.ndarray:
    bound = 6.0 / np.sqrt(dim)
    flat = np.array([rng.uniform() for _ in range(n * dim)])
    return ((flat * 2.0 - 1.0) * bound).reshape(n, dim)


def _renorm_rows(m: np.ndarray) -> None:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    np.divide(m, norms, out=m, where=norms > 0)


def transe_batch_loss(ent: np.ndarray, rel: np.ndarray, margin: float,
                      h, r, t, hn, tn):
    """Margin ranking loss on one batch plus dense gradients.

    Pure in (ent, rel): the finite-difference gradient checks perturb the
    matrices and call this directly.
    """
    u = ent[h] + rel[r] - ent[t]
    un = ent[hn] + rel[r] - ent[tn]
    score = margin + (u * u).sum(axis=1) - (un * un).sum(axis=1)
    active = score > 0
    loss = float(score[active].sum())
    g_ent = np.zeros_like(ent)
    g_rel = np.zeros_like(rel)
    gu = 2.0 * u[active]
    gun = -2.0 * un[active]
    np.add.at(g_ent, h[active], gu)
    np.add.at(g_ent, t[active], -gu)
    np.add.at(g_ent, hn[active], gun)
    np.add.at(g_ent, tn[active], -gun)
    np.add.at(g_rel, r[active], gu + gun)
    return loss, g_ent, g_rel


class _Adam:
    def __init__(self, shape, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def step(self, param: np.ndarray, grad: np.ndarray) -> None:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad * grad
        mhat = self.m / (1 - self.b1 ** self.t)
        vhat = self.v / (1 - self.b2 ** self.t)
        param -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def init_vocabulary(entities: list[str] | None = None,
                    relations: list[str] | None = None,
                    seed: int = 0xC0FFEE) -> Vocabulary:
    """Untrained vocabulary with the same seeded initialization the
    trainer starts from; used for throughput runs and plumbing tests."""
    ent_names = list(entities) if entities is not None else default_entities()
    rel_names = list(relations) if relations is not None else list(RELATIONS)
    rng = derive(seed, "transe")
    ent = _init_matrix(rng.fork("entities"), len(ent_names), DIM)
    rel = _init_matrix(rng.fork("relations"), len(rel_names), DIM)
    _renorm_rows(ent)
    _renorm_rows(rel)
    return Vocabulary(
        DIM,
        {name: ent[i].copy() for i, name in enumerate(ent_names)},
        {name: rel[i].copy() for i, name in enumerate(rel_names)},
        {"seed": str(seed), "epochs": "0"})


def train_transe(triplets, cfg: TransEConfig,
                 entities: list[str] | None = None,
                 relations: list[str] | None = None,
                 log=None) -> Vocabulary:
    """Train entity/relation vectors; returns the vocabulary.

    The fact set is the deduplicated sorted triplet set: frequency shapes
    the corpus file, not the constraint system.  Entities default to the
    names appearing in the triplets; pass default_entities() to embed the
    full closed inventory including unseen names.  Accepts Triplet values
    or plain (head, relation, tail) tuples, so arbitrary knowledge graphs
    can be embedded with the same trainer.
    """
    facts = sorted({(tr.head, tr.relation, tr.tail)
                    if isinstance(tr, Triplet) else (tr[0], tr[1], tr[2])
                    for tr in triplets})
    if not facts:
        raise ValueError("no triplets to train on")
    ent_names = list(entities) if entities is not None else sorted(
        {h for h, _, _ in facts} | {t for _, _, t in facts})
    rel_names = list(relations) if relations is not None else sorted(
        {r for _, r, _ in facts})
    e_index = {n: i for i, n in enumerate(ent_names)}
    r_index = {n: i for i, n in enumerate(rel_names)}
    for h, r, t in facts:
        if h not in e_index or t not in e_index:
            raise ValueError(f"triplet entity outside inventory: {h!r}/{t!r}")
        if r not in r_index:
            raise ValueError(f"triplet relation outside inventory: {r!r}")

    rng = derive(cfg.seed, "transe")
    ent = _init_matrix(rng.fork("entities"), len(ent_names), DIM)
    rel = _init_matrix(rng.fork("relations"), len(rel_names), DIM)
    _renorm_rows(ent)
    _renorm_rows(rel)  # relations normalized at init only, entities every step

    hs = np.array([e_index[h] for h, _, _ in facts])
    rs = np.array([r_index[r] for _, r, _ in facts])
    ts = np.array([e_index[t] for _, _, t in facts])
    n = len(facts)
    order = list(range(n))
    opt_e = _Adam(ent.shape, cfg.lr)
    opt_r = _Adam(rel.shape, cfg.lr)

    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        epoch_loss = 0.0
        for lo in range(0, n, cfg.batch_size):
            idx = np.array(order[lo:lo + cfg.batch_size])
            h, r, t = hs[idx], rs[idx], ts[idx]
            corrupt_head = np.array([rng.below(2) for _ in range(len(idx))],
                                    dtype=bool)
            rand_ent = np.array([rng.below(len(ent_names))
                                 for _ in range(len(idx))])
            hn = np.where(corrupt_head, rand_ent, h)
            tn = np.where(corrupt_head, t, rand_ent)
            loss, g_ent, g_rel = transe_batch_loss(
                ent, rel, cfg.margin, h, r, t, hn, tn)
            epoch_loss += loss
            opt_e.step(ent, g_ent)
            opt_r.step(rel, g_rel)
            _renorm_rows(ent)
        if log is not None:
            log(epoch, epoch_loss)

    meta = {"margin": repr(cfg.margin), "lr": repr(cfg.lr),
            "batch_size": str(cfg.batch_size), "epochs": str(cfg.epochs),
            "seed": str(cfg.seed), "facts": str(n)}
    return Vocabulary(
        DIM,
        {name: ent[i].copy() for i, name in enumerate(ent_names)},
        {name: rel[i].copy() for i, name in enumerate(rel_names)},
        meta)


# ----------------------------------------------------------- analogies

@dataclass(frozen=True)
class AnalogyQuery:
    a: str
    b: str
    c: str
    expected: str


def answer_analogy(v: Vocabulary, q: AnalogyQuery) -> str:
    for name in (q.a, q.b, q.c):
        if name not in v.entities:
            raise KeyError(f"unknown entity {name!r}")
    target = v.entities[q.b] - v.entities[q.a] + v.entities[q.c]
    exclude = {q.a, q.b, q.c}
    best: tuple[float, str] | None = None
    for name in sorted(v.entities):
        if name in exclude:
            continue
        d = float(np.linalg.norm(target - v.entities[name]))
        if best is None or (d, name) < best:
            best = (d, name)
    if best is None:
        raise ValueError("vocabulary has no candidate entities")
    return best[1]


def parse_analogy_file(text: str) -> list[AnalogyQuery]:
    queries = []
    for line_no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {line_no}: expected 'a b c expected'")
        queries.append(AnalogyQuery(*parts))
    return queries


# ---------------------------------------------------------- persistence

VOCAB_HEADER = f"peepvec-vocab v1 dim={DIM}"


def _fmt_vector(vec: np.ndarray) -> str:
    return " ".join(f"{x:.17g}" for x in vec)


def save_vocab(v: Vocabulary, path: str) -> None:
    lines = [VOCAB_HEADER]
    for key in sorted(v.meta):
        lines.append(f"# meta {key}={v.meta[key]}")
    for name in sorted(v.entities):
        lines.append(f"E {name} {_fmt_vector(v.entities[name])}")
    for name in sorted(v.relations):
        lines.append(f"R {name} {_fmt_vector(v.relations[name])}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_vocab(path: str) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != VOCAB_HEADER:
        raise ValueError(f"bad vocabulary header: {lines[0]!r}" if lines
                         else "empty vocabulary file")
    entities: dict[str, np.ndarray] = {}
    relations: dict[str, np.ndarray] = {}
    meta: dict[str, str] = {}
    for line_no, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        if line.startswith("# meta "):
            key, _, val = line[len("# meta "):].partition("=")
            meta[key] = val
            continue
        if line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2 + DIM or parts[0] not in ("E", "R"):
            raise ValueError(f"line {line_no}: malformed vocabulary line")
        vec = np.array([float(x) for x in parts[2:]])
        (entities if parts[0] == "E" else relations)[parts[1]] = vec
    return Vocabulary(DIM, entities, relations, meta)
