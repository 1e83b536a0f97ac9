"""Fine-tuning network: five-channel attention encoder trained siamese.

Each function arrives as five vectors (O, T, A, S, L).  Every channel is
L2-normalized, projected to a context vector (fully connected layer,
batch norm, SiLU), and scored against a learned attention vector u; the
softmax over channel scores weights the context vectors into one
aggregate, which a final projection maps to the 128-dim output F.
Channels S and L are masked out of the softmax for samples where the
metadata is absent (zero input), so absent strings or extern calls get
no attention weight at all.

Training is siamese with a single parameter store: batches are embedded,
easy positives and hard negatives mined on cosine distances, and NT-Xent
(temperature tau, cosine similarity, denominator over all other batch
members) minimized with Adam under per-epoch exponential lr decay.
Dropout (applied to the aggregated vector before the output projection)
and batch-norm batch statistics are active only in train mode; inference
uses running statistics and is a pure function of the inputs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .embedder import FunctionEmbedding
from .rng import SplitMix64, derive
from .tensor import Adam, Tensor

_NEG_BIG = 1e30
_BN_EPS = 1e-5
_BN_MOMENTUM = 0.1
N_CHANNELS = 5


@dataclass(frozen=True)
class VexNetConfig:
    in_dims: tuple[int, ...] = (128, 128, 128, 100, 100)
    context_dim: int = 180
    out_dim: int = 128
    dropout: float = 0.02
    temperature: float = 0.05
    batch_size: int = 64
    lr: float = 0.001
    lr_decay: float = 0.817
    epochs: int = 50
    seed: int = 0xC0FFEE

    def __post_init__(self):
        if len(self.in_dims) != N_CHANNELS:
            raise ValueError("five input channels required")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if not 0 <= self.dropout < 1:
            raise ValueError("dropout must be in [0, 1)")


def _uniform_matrix(rng: SplitMix64, rows: int, cols: int,
                    bound: float) -> np.ndarray:
    flat = np.array([rng.uniform() * 2.0 - 1.0 for _ in range(rows * cols)])
    return (flat * bound).reshape(rows, cols)


@dataclass
class _BatchNorm:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray


@dataclass
class VexNetModel:
    cfg: VexNetConfig
    proj_w: list[Tensor]
    proj_b: list[Tensor]
    bn: list[_BatchNorm]
    u: Tensor
    out_w: Tensor
    out_b: Tensor
    version: str = "peepvec-model v1"

    def params(self) -> list[Tensor]:
        out: list[Tensor] = []
        for i in range(N_CHANNELS):
            out += [self.proj_w[i], self.proj_b[i],
                    self.bn[i].gamma, self.bn[i].beta]
        out += [self.u, self.out_w, self.out_b]
        return out


def init_model(cfg: VexNetConfig) -> VexNetModel:
    rng = derive(cfg.seed, "vexnet-init")
    proj_w, proj_b, bns = [], [], []
    for d in cfg.in_dims:
        bound = np.sqrt(6.0 / (d + cfg.context_dim))
        proj_w.append(Tensor(_uniform_matrix(rng.fork("w", d), d,
                                             cfg.context_dim, bound),
                             requires_grad=True))
        proj_b.append(Tensor(np.zeros(cfg.context_dim), requires_grad=True))
        bns.append(_BatchNorm(Tensor(np.ones(cfg.context_dim), requires_grad=True),
                              Tensor(np.zeros(cfg.context_dim), requires_grad=True),
                              np.zeros(cfg.context_dim),
                              np.ones(cfg.context_dim)))
    u = Tensor(_uniform_matrix(rng.fork("u"), cfg.context_dim, 1,
                               1.0 / np.sqrt(cfg.context_dim)).ravel(),
               requires_grad=True)
    bound = np.sqrt(6.0 / (cfg.context_dim + cfg.out_dim))
    out_w = Tensor(_uniform_matrix(rng.fork("out"), cfg.context_dim,
                                   cfg.out_dim, bound), requires_grad=True)
    out_b = Tensor(np.zeros(cfg.out_dim), requires_grad=True)
    return VexNetModel(cfg, proj_w, proj_b, bns, u, out_w, out_b)


# -------------------------------------------------------------- forward

def normalize_rows(x: np.ndarray) -> np.ndarray:
    """L2-normalize each row; all-zero rows stay zero."""
    norms = np.linalg.norm(x, axis=1, keepdims=True)
    return np.divide(x, norms, out=x.astype(np.float64).copy(),
                     where=norms > 0)


def stack_inputs(embs: list[FunctionEmbedding]) -> list[np.ndarray]:
    cols = list(zip(*[e.channels() for e in embs]))
    return [np.stack(c).astype(np.float64) for c in cols]


def forward_batch(model: VexNetModel, inputs: list[np.ndarray],
                  train_mode: bool = False, dropout_seed: int = 0):
    """Returns (F: Tensor B×out, alpha: np B×5, batch_stats or None).

    inputs = five arrays of shape B×d_i.  Pure: batch-norm running
    statistics are only read here; train() applies the updates from the
    returned batch_stats.
    """
    cfg = model.cfg
    if len(inputs) != N_CHANNELS:
        raise ValueError("five input channels required")
    B = inputs[0].shape[0]
    for x, d in zip(inputs, cfg.in_dims):
        if x.shape != (B, d):
            raise ValueError(f"channel shape {x.shape} != ({B}, {d})")

    contexts: list[Tensor] = []
    masks: list[np.ndarray] = []
    batch_stats: list[tuple[np.ndarray, np.ndarray]] = []
    for i in range(N_CHANNELS):
        x = normalize_rows(inputs[i])
        # channels 3 (strings) and 4 (extern calls) are maskable metadata
        if i >= 3:
            present = (np.linalg.norm(inputs[i], axis=1) > 0).astype(np.float64)
        else:
            present = np.ones(B)
        masks.append(present.reshape(B, 1))
        h = Tensor(x) @ model.proj_w[i] + model.proj_b[i]
        bn = model.bn[i]
        if train_mode:
            mu = h.mean(axis=0, keepdims=True)
            var = ((h - mu) * (h - mu)).mean(axis=0, keepdims=True)
            batch_stats.append((mu.data.ravel().copy(), var.data.ravel().copy()))
            y = (h - mu) / (var + _BN_EPS).sqrt()
        else:
            y = (h - bn.running_mean) * Tensor(1.0 /
                                               np.sqrt(bn.running_var + _BN_EPS))
        y = y * bn.gamma + bn.beta
        contexts.append(y.silu())

    u_col = model.u  # (ctx,) broadcasts over rows
    logits = [(c * u_col).sum(axis=1, keepdims=True) for c in contexts]
    blend = [lg * masks[i] - _NEG_BIG * (1.0 - masks[i])
             for i, lg in enumerate(logits)]
    row_max = Tensor(np.maximum.reduce([b.data for b in blend]))
    exps = [(b - row_max).exp() * masks[i] for i, b in enumerate(blend)]
    denom = exps[0]
    for e in exps[1:]:
        denom = denom + e
    alphas = [e / denom for e in exps]

    agg = alphas[0] * contexts[0]
    for i in range(1, N_CHANNELS):
        agg = agg + alphas[i] * contexts[i]

    if train_mode and cfg.dropout > 0:
        rng = derive(dropout_seed, "dropout")
        keep = np.array([0.0 if rng.uniform() < cfg.dropout else 1.0
                         for _ in range(B * cfg.context_dim)])
        keep = keep.reshape(B, cfg.context_dim) / (1.0 - cfg.dropout)
        agg = agg * keep

    out = agg @ model.out_w + model.out_b
    alpha = np.concatenate([a.data for a in alphas], axis=1)
    return out, alpha, (batch_stats if train_mode else None)


def forward(model: VexNetModel, e: FunctionEmbedding,
            train_mode: bool = False, seed: int = 0):
    """Single-sample convenience wrapper: returns (F: ℝ^out, α: ℝ⁵)."""
    inputs = [np.asarray(c, dtype=np.float64).reshape(1, -1)
              for c in e.channels()]
    out, alpha, _ = forward_batch(model, inputs, train_mode=train_mode,
                                  dropout_seed=seed)
    return out.data[0].copy(), alpha[0].copy()


# ----------------------------------------------------------- NT-Xent

def cosine_matrix(z: np.ndarray) -> np.ndarray:
    zn = normalize_rows(np.array(z, dtype=np.float64))
    return zn @ zn.T


def mine_batch(distances: np.ndarray, labels: list) -> dict[int, tuple[int, int]]:
    """Per-anchor (easy positive, hard negative) under the given distance
    matrix: the closest same-group and closest different-group samples,
    ties to the smallest index.  Anchors with no in-batch positive are
    omitted."""
    n = len(labels)
    if distances.shape != (n, n):
        raise ValueError("distance matrix shape mismatch")
    out: dict[int, tuple[int, int]] = {}
    for i in range(n):
        pos = [j for j in range(n) if j != i and labels[j] == labels[i]]
        neg = [j for j in range(n) if labels[j] != labels[i]]
        if not pos or not neg:
            continue
        best_p = min(pos, key=lambda j: (distances[i, j], j))
        best_n = min(neg, key=lambda j: (distances[i, j], j))
        out[i] = (best_p, best_n)
    return out


def _ntxent_graph(z: Tensor, positives: dict[int, int], tau: float) -> Tensor:
    """NT-Xent over the anchors in positives: mean over anchors i of
    -log( exp(cos(z_i, z_pos)/tau) / sum_{k != i} exp(cos(z_i, z_k)/tau) )."""
    B = z.shape[0]
    if not positives:
        raise ValueError("no anchors with positives")
    norms = (z * z).sum(axis=1, keepdims=True).sqrt()
    zn = z / norms
    sims = (zn @ zn.T) * (1.0 / tau)
    eye = np.eye(B)
    excl = 1.0 - eye
    blend = sims * excl - _NEG_BIG * eye
    row_max = blend.max_detached(axis=1, keepdims=True)
    e = (blend - row_max).exp() * excl
    lse = e.sum(axis=1, keepdims=True).log() + row_max
    onehot = np.zeros((B, B))
    anchor_mask = np.zeros((B, 1))
    for i, j in positives.items():
        onehot[i, j] = 1.0
        anchor_mask[i, 0] = 1.0
    picked = (sims * onehot).sum(axis=1, keepdims=True)
    per_anchor = (lse - picked) * anchor_mask
    return per_anchor.sum() * (1.0 / len(positives))


def ntxent_loss(z: np.ndarray, labels: list, tau: float,
                positives: dict[int, int] | None = None):
    """Loss value and gradient w.r.t. the raw embeddings z (B×d).

    positives defaults to the easy positive per anchor (cosine
    distance); every anchor must then have at least one positive."""
    if positives is None:
        d = 1.0 - cosine_matrix(z)
        positives = {}
        for i in range(len(labels)):
            pos = [j for j in range(len(labels))
                   if j != i and labels[j] == labels[i]]
            if not pos:
                raise ValueError(f"anchor {i} has no positive in batch")
            positives[i] = min(pos, key=lambda j: (d[i, j], j))
    zt = Tensor(z, requires_grad=True)
    loss = _ntxent_graph(zt, positives, tau)
    loss.backward()
    return float(loss.data), zt.grad


# ------------------------------------------------------------ training

@dataclass
class TrainHistory:
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    collapsed: bool = False
    initial_spread: float = 0.0
    final_spread: float = 0.0

    def to_csv(self) -> str:
        lines = ["epoch,loss,lr"]
        for epoch, loss, lr in self.rows:
            lines.append(f"{epoch},{loss:.17g},{lr:.17g}")
        return "\n".join(lines) + "\n"


def _distinct_group_spread(model: VexNetModel, inputs: list[np.ndarray],
                           labels: list) -> float:
    out, _, _ = forward_batch(model, inputs, train_mode=False)
    sim = cosine_matrix(out.data)
    n = len(labels)
    dists = [1.0 - sim[i, j] for i in range(n) for j in range(i + 1, n)
             if labels[i] != labels[j]]
    return float(np.mean(dists)) if dists else 0.0


def train(model: VexNetModel, embs: list[FunctionEmbedding], groups: list,
          cfg: VexNetConfig | None = None) -> TrainHistory:
    """Fine-tune in place; returns the loss history.

    Mini-batches are drawn by seeded shuffle; batches whose samples span
    fewer than two groups, and anchors without an in-batch positive, are
    skipped.  Ends with the anti-collapse check: mean distinct-group
    distance on the validation slice must stay above 0.1x its initial
    value, else a collapse warning is recorded.
    """
    cfg = cfg or model.cfg
    if len(embs) != len(groups):
        raise ValueError("embeddings and groups must align")
    if not embs:
        raise ValueError("empty dataset")
    if len(set(groups)) < 2:
        raise ValueError("need at least 2 groups")

    all_inputs = stack_inputs(embs)
    val_n = min(128, len(embs))
    val_inputs = [x[:val_n] for x in all_inputs]
    val_labels = list(groups[:val_n])

    history = TrainHistory()
    history.initial_spread = _distinct_group_spread(model, val_inputs,
                                                    val_labels)
    opt = Adam(model.params(), cfg.lr)
    rng = derive(cfg.seed, "vexnet-train")
    order = list(range(len(embs)))
    step = 0

    for epoch in range(cfg.epochs):
        lr = cfg.lr * (cfg.lr_decay ** epoch)
        opt.lr = lr
        rng.shuffle(order)
        losses: list[float] = []
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            if len(idx) < 2:
                continue
            labels = [groups[i] for i in idx]
            if len(set(labels)) < 2:
                continue
            inputs = [x[idx] for x in all_inputs]
            step += 1
            out, _, stats = forward_batch(model, inputs, train_mode=True,
                                          dropout_seed=rng.next64())
            mined = mine_batch(1.0 - cosine_matrix(out.data), labels)
            if not mined:
                continue
            positives = {i: p for i, (p, _) in mined.items()}
            loss = _ntxent_graph(out, positives, cfg.temperature)
            opt.zero_grad()
            loss.backward()
            opt.step()
            for i, (mu, var) in enumerate(stats):
                bn = model.bn[i]
                bn.running_mean = (1 - _BN_MOMENTUM) * bn.running_mean \
                    + _BN_MOMENTUM * mu
                bn.running_var = (1 - _BN_MOMENTUM) * bn.running_var \
                    + _BN_MOMENTUM * var
            losses.append(float(loss.data))
        history.rows.append((epoch, float(np.mean(losses)) if losses else 0.0,
                             lr))

    history.final_spread = _distinct_group_spread(model, val_inputs,
                                                  val_labels)
    if history.final_spread <= 0.1 * history.initial_spread:
        history.collapsed = True
        warnings.warn("embedding collapse: distinct-group spread fell "
                      f"from {history.initial_spread:.4g} to "
                      f"{history.final_spread:.4g}")
    return history


# -------------------------------------------------------- persistence

MODEL_HEADER = "peepvec-model v1"


def _write_block(lines: list[str], name: str, arr: np.ndarray) -> None:
    mat = arr.reshape(1, -1) if arr.ndim == 1 else arr
    lines.append(f"P {name} {mat.shape[0]} {mat.shape[1]}")
    for row in mat:
        lines.append(" ".join(f"{x:.17g}" for x in row))


def save_model(model: VexNetModel, path: str) -> None:
    cfg = model.cfg
    lines = [MODEL_HEADER,
             "C in_dims=" + ",".join(str(d) for d in cfg.in_dims)
             + f" context_dim={cfg.context_dim} out_dim={cfg.out_dim}"
             + f" dropout={cfg.dropout!r} temperature={cfg.temperature!r}"
             + f" batch_size={cfg.batch_size} lr={cfg.lr!r}"
             + f" lr_decay={cfg.lr_decay!r} epochs={cfg.epochs}"
             + f" seed={cfg.seed}"]
    for i in range(N_CHANNELS):
        _write_block(lines, f"proj_w{i}", model.proj_w[i].data)
        _write_block(lines, f"proj_b{i}", model.proj_b[i].data)
        _write_block(lines, f"bn_gamma{i}", model.bn[i].gamma.data)
        _write_block(lines, f"bn_beta{i}", model.bn[i].beta.data)
        _write_block(lines, f"bn_mean{i}", model.bn[i].running_mean)
        _write_block(lines, f"bn_var{i}", model.bn[i].running_var)
    _write_block(lines, "u", model.u.data)
    _write_block(lines, "out_w", model.out_w.data)
    _write_block(lines, "out_b", model.out_b.data)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_model(path: str) -> VexNetModel:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != MODEL_HEADER:
        raise ValueError(f"bad model header; expected {MODEL_HEADER!r}")
    if len(lines) < 2 or not lines[1].startswith("C "):
        raise ValueError("missing config line")
    kv = dict(item.split("=", 1) for item in lines[1][2:].split())
    cfg = VexNetConfig(
        in_dims=tuple(int(x) for x in kv["in_dims"].split(",")),
        context_dim=int(kv["context_dim"]), out_dim=int(kv["out_dim"]),
        dropout=float(kv["dropout"]), temperature=float(kv["temperature"]),
        batch_size=int(kv["batch_size"]), lr=float(kv["lr"]),
        lr_decay=float(kv["lr_decay"]), epochs=int(kv["epochs"]),
        seed=int(kv["seed"]))

    blocks: dict[str, np.ndarray] = {}
    i = 2
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        parts = lines[i].split()
        if len(parts) != 4 or parts[0] != "P":
            raise ValueError(f"line {i + 1}: expected parameter block header")
        name, rows, cols = parts[1], int(parts[2]), int(parts[3])
        if i + rows >= len(lines):
            raise ValueError(f"line {i + 1}: truncated block {name}")
        data = np.array([[float(x) for x in lines[i + 1 + r].split()]
                         for r in range(rows)])
        if data.shape != (rows, cols):
            raise ValueError(f"line {i + 1}: block {name} shape mismatch")
        blocks[name] = data
        i += 1 + rows

    def take(name: str, vector: bool = False) -> np.ndarray:
        if name not in blocks:
            raise ValueError(f"missing parameter block {name}")
        arr = blocks.pop(name)
        return arr.ravel() if vector else arr

    proj_w, proj_b, bns = [], [], []
    for ch in range(N_CHANNELS):
        proj_w.append(Tensor(take(f"proj_w{ch}"), requires_grad=True))
        proj_b.append(Tensor(take(f"proj_b{ch}", vector=True),
                             requires_grad=True))
        bns.append(_BatchNorm(
            Tensor(take(f"bn_gamma{ch}", vector=True), requires_grad=True),
            Tensor(take(f"bn_beta{ch}", vector=True), requires_grad=True),
            take(f"bn_mean{ch}", vector=True),
            take(f"bn_var{ch}", vector=True)))
    model = VexNetModel(cfg, proj_w, proj_b, bns,
                        Tensor(take("u", vector=True), requires_grad=True),
                        Tensor(take("out_w"), requires_grad=True),
                        Tensor(take("out_b", vector=True), requires_grad=True))
    if blocks:
        raise ValueError(f"unexpected parameter blocks: {sorted(blocks)}")
    return model
