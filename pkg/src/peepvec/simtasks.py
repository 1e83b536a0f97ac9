"""Similarity tasks: exact k-NN retrieval, diffing, searching, metrics.

The index is a KD-tree that answers exactly the same (id, distance)
lists as a brute-force linear scan, including tie order: equal
distances rank by ascending insertion index, and subtree pruning is
strict (a plane at exactly the current worst distance is still visited,
because a tied point with a smaller index must win).  Leaf distances go
through the same numpy expression as the brute-force oracle so the
values agree bit for bit.

Diffing follows query-level accounting: each source function with a
ground-truth pair is one query, a true positive iff the paired target
appears among its k nearest targets; pairs whose endpoint embeddings
are missing are false negatives.  Searching reports mean average
precision with AP = (1/N) sum of Prec(i) over relevant retrieved
positions (0 when nothing relevant is retrieved).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_LEAF_SIZE = 16


# --------------------------------------------------------------- index

@dataclass
class _Node:
    axis: int = -1
    thresh: float = 0.0
    left: "_Node | None" = None
    right: "_Node | None" = None
    idxs: np.ndarray | None = None  # leaf payload


class EmbeddingIndex:
    """Exact Euclidean nearest-neighbor index over named points."""

    def __init__(self, ids: list[str], points: np.ndarray):
        if len(ids) != points.shape[0]:
            raise ValueError("ids/points length mismatch")
        if points.ndim != 2:
            raise ValueError("points must be N x d")
        self.ids = list(ids)
        self.points = np.array(points, dtype=np.float64)
        self._root = self._build(np.arange(len(ids)))

    def __len__(self) -> int:
        return len(self.ids)

    def _build(self, idxs: np.ndarray) -> _Node:
        if len(idxs) <= _LEAF_SIZE:
            return _Node(idxs=idxs)
        sub = self.points[idxs]
        spread = sub.max(axis=0) - sub.min(axis=0)
        axis = int(np.argmax(spread))
        if spread[axis] == 0.0:
            return _Node(idxs=idxs)  # all points identical on every axis
        order = np.lexsort((idxs, sub[:, axis]))
        idxs = idxs[order]
        mid = len(idxs) // 2
        thresh = float(self.points[idxs[mid], axis])
        return _Node(axis=axis, thresh=thresh,
                     left=self._build(idxs[:mid]),
                     right=self._build(idxs[mid:]))

    def knn(self, query: np.ndarray, k: int) -> list[tuple[str, float]]:
        """k nearest (id, distance) pairs, ascending (distance, index)."""
        if k < 1:
            raise ValueError("k must be >= 1")
        if k > len(self.ids):
            raise ValueError(f"k={k} exceeds index size {len(self.ids)}")
        q = np.asarray(query, dtype=np.float64)
        best: list[tuple[float, int]] = []  # max-heap via (-d, -idx)
        import heapq

        def consider(idxs: np.ndarray) -> None:
            dists = np.linalg.norm(self.points[idxs] - q, axis=1)
            for d, i in zip(dists, idxs):
                d = float(d)
                i = int(i)
                if len(best) < k:
                    heapq.heappush(best, (-d, -i))
                else:
                    worst_d, worst_i = -best[0][0], -best[0][1]
                    if (d, i) < (worst_d, worst_i):
                        heapq.heapreplace(best, (-d, -i))

        def visit(node: _Node) -> None:
            if node.idxs is not None:
                consider(node.idxs)
                return
            delta = q[node.axis] - node.thresh
            near, far = (node.left, node.right) if delta < 0 \
                else (node.right, node.left)
            visit(near)
            if len(best) < k or abs(delta) <= -best[0][0]:
                visit(far)

        visit(self._root)
        ranked = sorted(((-d, -i) for d, i in best))
        return [(self.ids[i], d) for d, i in ranked]


def brute_force_knn(ids: list[str], points: np.ndarray, query: np.ndarray,
                    k: int) -> list[tuple[str, float]]:
    """Reference linear scan with the same tie rule; kept as the oracle
    the index is validated against."""
    dists = np.linalg.norm(np.asarray(points, dtype=np.float64)
                           - np.asarray(query, dtype=np.float64), axis=1)
    order = sorted(range(len(ids)), key=lambda i: (dists[i], i))[:k]
    return [(ids[i], float(dists[i])) for i in order]


# --------------------------------------------------------- ground truth

@dataclass
class GroundTruth:
    """source id -> expected target id (one target per source)."""
    pairs: dict[str, str]

    @staticmethod
    def from_groups(source_groups: dict[str, str],
                    target_groups: dict[str, str]) -> "GroundTruth":
        """Pair each source with the same-group target; group keys must
        identify at most one target."""
        by_group: dict[str, str] = {}
        for name, group in target_groups.items():
            if group in by_group:
                raise ValueError(f"group {group!r} has multiple targets")
            by_group[group] = name
        pairs = {}
        for name, group in source_groups.items():
            if group in by_group:
                pairs[name] = by_group[group]
        return GroundTruth(pairs)


def parse_groups_tsv(text: str) -> dict[str, str]:
    groups: dict[str, str] = {}
    for line_no, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"line {line_no}: expected name<TAB>group")
        groups[parts[0]] = parts[1]
    return groups


def format_groups_tsv(groups: dict[str, str]) -> str:
    return "".join(f"{name}\t{group}\n" for name, group in groups.items())


# -------------------------------------------------------------- reports

@dataclass
class EvalReport:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    map_score: float | None = None
    ap_list: list[float] = field(default_factory=list)

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r > 0 else 0.0

    def text(self) -> str:
        parts = [f'"tp": {self.tp}', f'"fp": {self.fp}', f'"fn": {self.fn}',
                 f'"precision": {self.precision:.17g}',
                 f'"recall": {self.recall:.17g}',
                 f'"f1": {self.f1:.17g}',
                 f'"map": {self.map_score:.17g}'
                 if self.map_score is not None else '"map": null']
        return "{" + ", ".join(parts) + "}"


# ------------------------------------------------------------- diffing

def diff(source_ids: list[str], source_vecs: np.ndarray,
         target_ids: list[str], target_vecs: np.ndarray,
         gt: GroundTruth, k: int = 10, mode: str = "topk"):
    """Match source functions against targets.

    Returns (rows, report, matches): rows are per-query CSV records
    (query, rank, candidate, distance, relevant); matches is the greedy
    one-to-one assignment in matching mode, else None.
    """
    if not source_ids or not target_ids:
        raise ValueError("empty embedding set")
    if mode not in ("topk", "matching"):
        raise ValueError(f"unknown diff mode {mode!r}")
    index = EmbeddingIndex(target_ids, target_vecs)
    target_present = set(target_ids)
    source_pos = {name: i for i, name in enumerate(source_ids)}

    report = EvalReport()
    rows: list[tuple[str, int, str, float, int]] = []
    kk = min(k, len(target_ids))
    for name, expected in sorted(gt.pairs.items()):
        if name not in source_pos or expected not in target_present:
            report.fn += 1
            continue
        hits = index.knn(source_vecs[source_pos[name]], kk)
        found = False
        for rank, (cand, dist) in enumerate(hits, 1):
            rel = int(cand == expected)
            found = found or bool(rel)
            rows.append((name, rank, cand, dist, rel))
        if found:
            report.tp += 1
        else:
            report.fp += 1

    matches = None
    if mode == "matching":
        matches = greedy_matching(source_ids, source_vecs,
                                  target_ids, target_vecs)
    return rows, report, matches


def greedy_matching(source_ids: list[str], source_vecs: np.ndarray,
                    target_ids: list[str], target_vecs: np.ndarray):
    """One-to-one assignment by ascending distance; min(m, n) pairs,
    each source and target used at most once."""
    sv = np.asarray(source_vecs, dtype=np.float64)
    tv = np.asarray(target_vecs, dtype=np.float64)
    d2 = ((sv * sv).sum(axis=1)[:, None] + (tv * tv).sum(axis=1)[None, :]
          - 2.0 * (sv @ tv.T))
    np.maximum(d2, 0.0, out=d2)
    dist = np.sqrt(d2)
    order = sorted(((float(dist[i, j]), i, j)
                    for i in range(len(source_ids))
                    for j in range(len(target_ids))))
    used_s: set[int] = set()
    used_t: set[int] = set()
    matches: list[tuple[str, str, float]] = []
    want = min(len(source_ids), len(target_ids))
    for d, i, j in order:
        if i in used_s or j in used_t:
            continue
        used_s.add(i)
        used_t.add(j)
        matches.append((source_ids[i], target_ids[j], d))
        if len(matches) == want:
            break
    return matches


# ------------------------------------------------------------ searching

def average_precision(rels: list[int]) -> float:
    """AP over one ranked list: (1/N) sum of Prec(i) at relevant i."""
    n_rel = sum(rels)
    if n_rel == 0:
        return 0.0
    hits = 0
    total = 0.0
    for i, rel in enumerate(rels, 1):
        if rel:
            hits += 1
            total += hits / i
    return total / n_rel


def search(pool_ids: list[str], pool_vecs: np.ndarray,
           query_ids: list[str], query_vecs: np.ndarray,
           groups: dict[str, str], k: int = 10):
    """Rank the pool for each query; relevant = same group label.

    Returns (rows, report) where report carries MAP over the queries.
    The pool must not contain the query entries themselves.
    """
    if not pool_ids:
        raise ValueError("empty pool")
    index = EmbeddingIndex(pool_ids, pool_vecs)
    kk = min(k, len(pool_ids))
    rows: list[tuple[str, int, str, float, int]] = []
    report = EvalReport()
    for qi, qname in enumerate(query_ids):
        hits = index.knn(query_vecs[qi], kk)
        rels = []
        for rank, (cand, dist) in enumerate(hits, 1):
            rel = int(groups.get(cand) == groups.get(qname)
                      and groups.get(qname) is not None)
            rels.append(rel)
            rows.append((qname, rank, cand, dist, rel))
        ap = average_precision(rels)
        report.ap_list.append(ap)
        if any(rels):
            report.tp += 1
        else:
            report.fn += 1
    report.map_score = (float(np.mean(report.ap_list))
                        if report.ap_list else 0.0)
    return rows, report


# ----------------------------------------------------------------- CDF

def f1_cdf(reports: list[EvalReport]) -> list[tuple[float, float]]:
    """Distinct F1 values ascending with cumulative fraction of reports
    at or below each value."""
    if not reports:
        raise ValueError("no reports")
    values = sorted(r.f1 for r in reports)
    n = len(values)
    out: list[tuple[float, float]] = []
    for i, v in enumerate(values, 1):
        if i < n and values[i] == v:
            continue
        out.append((v, i / n))
    return out


def rows_to_csv(rows) -> str:
    lines = ["query,rank,candidate,distance,relevant"]
    for query, rank, cand, dist, rel in rows:
        lines.append(f"{query},{rank},{cand},{dist:.17g},{rel}")
    return "\n".join(lines) + "\n"


def cdf_to_csv(table: list[tuple[float, float]]) -> str:
    lines = ["f1,cumulative_fraction"]
    for f1, frac in table:
        lines.append(f"{f1:.17g},{frac:.17g}")
    return "\n".join(lines) + "\n"
