"""Command-line entry point wiring the pipeline stages.

Stages are re-runnable from their persisted artifacts (vexir -> peep ->
trip -> vocab -> femb -> model -> reports) and every randomized stage
takes --seed.  Seed priority: --seed flag, then a `seed=` line in the
--config file, then the PEEPVEC_SEED environment variable, then the
default 0xC0FFEE.

Exit codes: 0 success, 1 usage error, 2 data error (unreadable or
malformed inputs), 3 internal invariant violation.  Worker parallelism
fans the peephole generation+normalization phase out per function;
results merge in input order, so output bytes do not depend on
scheduling.
"""

from __future__ import annotations

import argparse
import json
import multiprocessing as mp
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .canon import canonicalize_program
from .embedder import (FunctionEmbedding, embed_program, function_walks,
                       load_embeddings, save_embeddings)
from .ir import Program, validate_program
from .irtext import ParseError, parse_program, serialize_program
from .peephole import PeepholeConfig, dump_peeps, generate_peepholes, load_peeps
from .simtasks import (EvalReport, GroundTruth, cdf_to_csv, diff, f1_cdf,
                       format_groups_tsv, parse_groups_tsv, rows_to_csv,
                       search)
from .synthgen import CorpusConfig, gen_corpus
from .vexine import NormLevel, normalize_peephole
from .vexnet import (VexNetConfig, forward_batch, init_model, load_model,
                     save_model, stack_inputs, train)
from .vocab import (TransEConfig, answer_analogy, default_entities,
                    extract_triplets, init_vocabulary, load_vocab,
                    parse_analogy_file, save_vocab, train_transe)

DEFAULT_SEED = 0xC0FFEE
TRIP_HEADER = "peepvec-trip v1"

_CONFIG_KEYS = frozenset({"norm", "k", "c", "seed", "workers", "vocab",
                          "model", "dim", "text_dim", "context_dim"})


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit 2; we reserve
        raise UsageError(message)  # that for data errors


# ------------------------------------------------------------- helpers

def _load_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}")
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        key, value = key.strip(), value.strip()
        if key not in _CONFIG_KEYS:
            raise UsageError(f"{path}:{lineno}: unknown config key {key!r}")
        out[key] = value
    return out


def _parse_int(text: str, what: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise UsageError(f"bad {what}: {text!r}")


def _resolve_seed(args, cfg: dict[str, str]) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    if "seed" in cfg:
        return _parse_int(cfg["seed"], "config seed")
    env = os.environ.get("PEEPVEC_SEED")
    if env is not None:
        return _parse_int(env, "PEEPVEC_SEED")
    return DEFAULT_SEED


def _resolve(args, cfg: dict[str, str], key: str, default):
    v = getattr(args, key, None)
    if v is not None:
        return v
    if key in cfg:
        if isinstance(default, int):
            return _parse_int(cfg[key], f"config {key}")
        return cfg[key]
    return default


def _norm_level(text: str) -> NormLevel:
    try:
        return NormLevel[text.upper()]
    except KeyError:
        raise UsageError(f"bad norm level {text!r} (want N0|N1|N2|N3)")


def _read_text(path: str) -> str:
    try:
        return Path(path).read_text()
    except OSError as e:
        raise DataError(f"cannot read {path}: {e}")


def _read_program(path: str) -> Program:
    text = _read_text(path)
    try:
        return parse_program(text)
    except ParseError as e:
        raise DataError(f"{path}: {e}")


def _write_out(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _peephole_cfg(args, cfg: dict[str, str]) -> PeepholeConfig:
    return PeepholeConfig(k=_resolve(args, cfg, "k", 72),
                          c=_resolve(args, cfg, "c", 2),
                          seed=_resolve_seed(args, cfg))


def _walk_job(payload):
    f, pcfg, level = payload
    return f.name, function_walks(f, pcfg, level)


def _all_walks(program: Program, pcfg: PeepholeConfig, level: NormLevel,
               workers: int) -> dict:
    jobs = [(f, pcfg, level) for f in program.functions]
    if workers <= 1:
        return {f.name: function_walks(f, pcfg, level)
                for f in program.functions}
    with ProcessPoolExecutor(max_workers=workers,
                             mp_context=mp.get_context("fork")) as pool:
        return dict(pool.map(_walk_job, jobs))


def _load_groups(path: str) -> dict[str, str]:
    try:
        return parse_groups_tsv(_read_text(path))
    except ValueError as e:
        raise DataError(f"{path}: {e}")


def _final_embeddings(embs: list[FunctionEmbedding],
                      model_path: str | None) -> np.ndarray:
    """Final vectors: network output when a model is given, otherwise the
    L2-normalized channel concatenation (pre-training baseline)."""
    if model_path is not None:
        model = load_model(model_path)
        out, _, _ = forward_batch(model, stack_inputs(embs))
        return out.data
    from .vexnet import normalize_rows
    return np.concatenate([normalize_rows(c) for c in stack_inputs(embs)],
                          axis=1)


def _load_femb(path: str) -> list[FunctionEmbedding]:
    try:
        return load_embeddings(path)
    except ValueError as e:
        raise DataError(f"{path}: {e}")


# --------------------------------------------------------- subcommands

def cmd_validate(args, cfg):
    for path in args.inputs:
        program = _read_program(path)
        diags = validate_program(program)
        if diags:
            for d in diags:
                print(f"{path}: {d}", file=sys.stderr)
            raise DataError(f"{path}: {len(diags)} validation errors")
        prefix = f"{path}: " if len(args.inputs) > 1 else ""
        print(f"{prefix}ok: {len(program.functions)} functions")
    return 0


def cmd_canon(args, cfg):
    program = _read_program(args.input)
    _write_out(serialize_program(canonicalize_program(program)), args.out)
    return 0


def cmd_peep(args, cfg):
    program = _read_program(args.input)
    pcfg = _peephole_cfg(args, cfg)
    sets = [generate_peepholes(f, pcfg) for f in program.functions]
    _write_out(dump_peeps(sets), args.out)
    return 0


def _normalized_sets(args, cfg, program: Program, level: NormLevel):
    """Canonical program + per-function normalized peephole lists."""
    canonical = canonicalize_program(program)
    if getattr(args, "peep", None):
        try:
            sets = load_peeps(_read_text(args.peep), canonical)
        except ValueError as e:
            raise DataError(f"{args.peep}: {e}")
    else:
        pcfg = _peephole_cfg(args, cfg)
        sets = [generate_peepholes(f, pcfg) for f in canonical.functions]
    normalized = [(ps, [normalize_peephole(p, level) for p in ps.peepholes])
                  for ps in sets]
    return canonical, normalized


def cmd_norm(args, cfg):
    level = _norm_level(_resolve(args, cfg, "norm", "N3"))
    program = _read_program(args.input)
    _, normalized = _normalized_sets(args, cfg, program, level)
    lines = []
    for ps, normed in normalized:
        before = sum(len(p.statements) for p in ps.peepholes)
        after = sum(len(p.statements) for p in normed)
        lines.append(f"# fn {ps.function} level {level.name} "
                     f"stmts {before} -> {after}")
    body = dump_peeps([ps for ps, _ in normalized])
    _write_out("\n".join(lines) + "\n" + body, args.out)
    return 0


def cmd_triplets(args, cfg):
    level = _norm_level(_resolve(args, cfg, "norm", "N3"))
    program = _read_program(args.input)
    _, normalized = _normalized_sets(args, cfg, program, level)
    lines = [TRIP_HEADER]
    for _, normed in normalized:
        for p in normed:
            for tr in extract_triplets(p):
                lines.append(f"{tr.head}\t{tr.relation}\t{tr.tail}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def _load_triplet_file(path: str) -> list[tuple[str, str, str]]:
    text = _read_text(path)
    lines = text.splitlines()
    if not lines or lines[0].strip() != TRIP_HEADER:
        raise DataError(f"{path}: missing {TRIP_HEADER!r} header")
    out = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected h<TAB>r<TAB>t")
        out.append((parts[0], parts[1], parts[2]))
    return out


def cmd_pretrain(args, cfg):
    first = _read_text(args.input).split("\n", 1)[0].strip()
    if first == TRIP_HEADER:
        triplets = _load_triplet_file(args.input)
    else:
        program = _read_program(args.input)
        level = _norm_level(_resolve(args, cfg, "norm", "N3"))
        _, normalized = _normalized_sets(args, cfg, program, level)
        triplets = [tr for _, normed in normalized
                    for p in normed for tr in extract_triplets(p)]
    tcfg = TransEConfig(epochs=args.epochs, seed=_resolve_seed(args, cfg))
    try:
        voc = train_transe(triplets, tcfg, entities=default_entities())
    except ValueError as e:
        raise DataError(str(e))
    save_vocab(voc, args.out)
    print(f"trained {len(voc.entities)} entities on {voc.meta['facts']} facts")
    return 0


def cmd_embed(args, cfg):
    program = _read_program(args.input)
    vocab_path = _resolve(args, cfg, "vocab", None)
    if vocab_path is None:
        raise UsageError("embed requires --vocab")
    try:
        voc = load_vocab(vocab_path)
    except ValueError as e:
        raise DataError(f"{vocab_path}: {e}")
    level = _norm_level(_resolve(args, cfg, "norm", "N3"))
    pcfg = _peephole_cfg(args, cfg)
    workers = _resolve(args, cfg, "workers", 1)
    canonical = canonicalize_program(program)
    walks = _all_walks(canonical, pcfg, level, workers)
    embs = embed_program(canonical, voc, pcfg, level,
                         source=Path(args.input).stem, walks=walks)
    save_embeddings(embs, args.out)
    print(f"embedded {len(embs)} functions at {level.name}")
    return 0


def cmd_train(args, cfg):
    groups_map = _load_groups(args.groups)
    embs: list[FunctionEmbedding] = []
    labels: list[str] = []
    for path in args.femb:
        for e in _load_femb(path):
            if e.name not in groups_map:
                raise DataError(f"{path}: {e.name!r} missing from groups file")
            embs.append(e)
            labels.append(groups_map[e.name])
    ncfg = VexNetConfig(epochs=args.epochs, seed=_resolve_seed(args, cfg))
    model = init_model(ncfg)
    try:
        history = train(model, embs, labels, ncfg)
    except ValueError as e:
        raise DataError(str(e))
    save_model(model, args.out)
    if args.history:
        Path(args.history).write_text(history.to_csv())
    final = history.rows[-1][1] if history.rows else float("nan")
    print(f"trained on {len(embs)} embeddings, final loss {final:.6f}")
    if history.collapsed:
        print("warning: embedding spread collapsed during training",
              file=sys.stderr)
    return 0


def cmd_diff(args, cfg):
    src = _load_femb(args.source)
    tgt = _load_femb(args.target)
    groups_map = _load_groups(args.groups)
    model_path = _resolve(args, cfg, "model", None)
    sv = _final_embeddings(src, model_path)
    tv = _final_embeddings(tgt, model_path)
    s_groups = {e.name: groups_map[e.name] for e in src if e.name in groups_map}
    t_groups = {e.name: groups_map[e.name] for e in tgt if e.name in groups_map}
    try:
        gt = GroundTruth.from_groups(s_groups, t_groups)
        rows, report, matches = diff([e.name for e in src], sv,
                                     [e.name for e in tgt], tv, gt,
                                     k=args.k, mode=args.mode)
    except ValueError as e:
        raise DataError(str(e))
    text = report.text() + "\n"
    if matches is not None:
        text += "".join(f"match {a} {b} {d:.17g}\n" for a, b, d in matches)
    _write_out(text, args.out)
    if args.csv:
        Path(args.csv).write_text(rows_to_csv(rows))
    return 0


def _tagged(paths: list[str], groups_map: dict[str, str]):
    ids: list[str] = []
    embs: list[FunctionEmbedding] = []
    groups: dict[str, str] = {}
    for path in paths:
        stem = Path(path).stem
        for e in _load_femb(path):
            tag = f"{stem}:{e.name}"
            ids.append(tag)
            embs.append(e)
            if e.name in groups_map:
                groups[tag] = groups_map[e.name]
    return ids, embs, groups


def cmd_search(args, cfg):
    groups_map = _load_groups(args.groups)
    pool_ids, pool_embs, pool_groups = _tagged(args.pool, groups_map)
    q_ids, q_embs, q_groups = _tagged([args.queries], groups_map)
    model_path = _resolve(args, cfg, "model", None)
    pv = _final_embeddings(pool_embs, model_path)
    qv = _final_embeddings(q_embs, model_path)
    try:
        rows, report = search(pool_ids, pv, q_ids, qv,
                              {**pool_groups, **q_groups}, k=args.k)
    except ValueError as e:
        raise DataError(str(e))
    _write_out(report.text() + "\n", args.out)
    if args.csv:
        Path(args.csv).write_text(rows_to_csv(rows))
    return 0


def _parse_report(path: str) -> EvalReport:
    try:
        data = json.loads(_read_text(path))
    except json.JSONDecodeError as e:
        raise DataError(f"{path}: not a report: {e}")
    for key in ("tp", "fp", "fn"):
        if key not in data:
            raise DataError(f"{path}: report missing {key!r}")
    return EvalReport(tp=int(data["tp"]), fp=int(data["fp"]),
                      fn=int(data["fn"]), map_score=data.get("map"))


def cmd_eval(args, cfg):
    reports = [_parse_report(p) for p in args.reports]
    lines = []
    for path, r in zip(args.reports, reports):
        lines.append(f"{path}: {r.text()}")
    f1s = [r.f1 for r in reports]
    maps = [r.map_score for r in reports if r.map_score is not None]
    lines.append(f"mean f1 {np.mean(f1s):.17g} over {len(reports)} reports")
    if maps:
        lines.append(f"mean map {np.mean(maps):.17g}")
    _write_out("\n".join(lines) + "\n", args.out)
    if args.cdf:
        Path(args.cdf).write_text(cdf_to_csv(f1_cdf(reports)))
    return 0


def cmd_synth(args, cfg):
    ccfg = CorpusConfig(groups=args.groups, variants=args.variants,
                        size_min=args.size_min, size_max=args.size_max,
                        seed=_resolve_seed(args, cfg))
    programs, groups = gen_corpus(ccfg)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for program in programs:
        (out_dir / f"{program.name}.vexir").write_text(
            serialize_program(program))
    (out_dir / "groups.tsv").write_text(format_groups_tsv(groups))
    print(f"wrote {len(programs)} programs x {ccfg.groups} functions "
          f"to {out_dir}")
    return 0


def cmd_analogy(args, cfg):
    try:
        voc = load_vocab(args.vocab)
    except ValueError as e:
        raise DataError(f"{args.vocab}: {e}")
    try:
        queries = parse_analogy_file(_read_text(args.queries))
    except ValueError as e:
        raise DataError(f"{args.queries}: {e}")
    lines = []
    hits = 0
    for q in queries:
        try:
            got = answer_analogy(voc, q)
        except KeyError as e:
            raise DataError(f"analogy entity not in vocabulary: {e}")
        ok = got == q.expected
        hits += ok
        lines.append(f"{q.a} {q.b} {q.c} {q.expected} -> {got} "
                     f"{'ok' if ok else 'miss'}")
    n = len(queries)
    acc = hits / n if n else 0.0
    lines.append(f"accuracy: {hits}/{n} = {acc:.4f}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


def cmd_bench(args, cfg):
    target = Path(args.corpus)
    if target.is_dir():
        paths = sorted(str(p) for p in target.glob("*.vexir"))
    else:
        paths = [str(target)]
    if not paths:
        raise DataError(f"{args.corpus}: no .vexir files")
    functions = []
    for path in paths:
        functions.extend(canonicalize_program(_read_program(path)).functions)
    level = _norm_level(_resolve(args, cfg, "norm", "N3"))
    pcfg = _peephole_cfg(args, cfg)
    vocab_path = _resolve(args, cfg, "vocab", None)
    voc = load_vocab(vocab_path) if vocab_path else init_vocabulary()
    try:
        worker_counts = [int(w) for w in args.workers.split(",")]
    except ValueError:
        raise UsageError(f"bad --workers list {args.workers!r}")

    program = Program("bench", functions)
    lines = ["workers,index,function,cumulative_seconds"]
    totals: dict[int, float] = {}
    for w in worker_counts:
        t0 = time.monotonic()
        jobs = [(f, pcfg, level) for f in functions]
        walks = {}
        if w <= 1:
            results = map(_walk_job, jobs)
        else:
            pool = ProcessPoolExecutor(max_workers=w,
                                       mp_context=mp.get_context("fork"))
            results = pool.map(_walk_job, jobs)
        for i, (name, fw) in enumerate(results):
            walks[name] = fw
            lines.append(f"{w},{i},{name},{time.monotonic() - t0:.6f}")
        if w > 1:
            pool.shutdown()
        embed_program(program, voc, pcfg, level, walks=walks)
        totals[w] = time.monotonic() - t0
        lines.append(f"{w},total,,{totals[w]:.6f}")
    base = totals.get(worker_counts[0], 0.0)
    for w in worker_counts:
        speedup = base / totals[w] if totals[w] > 0 else float("inf")
        lines.append(f"# workers={w} total={totals[w]:.6f} "
                     f"speedup={speedup:.4f}")
    _write_out("\n".join(lines) + "\n", args.out)
    return 0


# ------------------------------------------------------------ dispatch

def _add_common(p: _Parser, seed=True, out=True):
    p.add_argument("--config", help="key=value config file")
    if seed:
        p.add_argument("--seed", type=lambda s: int(s, 0))
    if out:
        p.add_argument("-o", "--out", help="output path (default stdout)")


def _add_peep_flags(p: _Parser):
    p.add_argument("--k", type=int, help="max blocks per walk (default 72)")
    p.add_argument("--c", type=int, help="min visits per block (default 2)")


def build_parser() -> _Parser:
    top = _Parser(prog="peepvec", description=__doc__.split("\n")[0])
    sub = top.add_subparsers(dest="command", metavar="subcommand")

    p = sub.add_parser("validate", help="parse and validate .vexir files",
                       add_help=True)
    p.add_argument("inputs", nargs="+")
    _add_common(p, seed=False, out=False)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("canon", help="canonicalize a program")
    p.add_argument("input")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_canon)

    p = sub.add_parser("peep", help="sample peepholes")
    p.add_argument("input")
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_peep)

    p = sub.add_parser("norm", help="normalize peepholes, report sizes")
    p.add_argument("input")
    p.add_argument("--norm", help="N0|N1|N2|N3 (default N3)")
    p.add_argument("--peep", help="reuse walks from a .peep file")
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("triplets", help="extract vocabulary triplets")
    p.add_argument("input")
    p.add_argument("--norm")
    p.add_argument("--peep")
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_triplets)

    p = sub.add_parser("pretrain", help="train the entity vocabulary")
    p.add_argument("input", help=".trip or .vexir file")
    p.add_argument("--epochs", type=int, default=400)
    p.add_argument("--norm")
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_pretrain, out_required=True)

    p = sub.add_parser("embed", help="embed functions to .femb")
    p.add_argument("input")
    p.add_argument("--vocab")
    p.add_argument("--norm")
    p.add_argument("--workers", type=int)
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_embed, out_required=True)

    p = sub.add_parser("train", help="train the similarity network")
    p.add_argument("femb", nargs="+")
    p.add_argument("--groups", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--history", help="write training history CSV here")
    _add_common(p)
    p.set_defaults(func=cmd_train, out_required=True)

    p = sub.add_parser("diff", help="match source functions to targets")
    p.add_argument("source")
    p.add_argument("target")
    p.add_argument("--groups", required=True)
    p.add_argument("--model")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--mode", choices=("topk", "matching"), default="topk")
    p.add_argument("--csv", help="write per-query results CSV here")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("search", help="rank a pool for each query")
    p.add_argument("--pool", nargs="+", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--groups", required=True)
    p.add_argument("--model")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--csv")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="aggregate reports, emit F1 CDF")
    p.add_argument("reports", nargs="+")
    p.add_argument("--cdf", help="write F1 CDF CSV here")
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--groups", type=int, default=200)
    p.add_argument("--variants", type=int, default=4)
    p.add_argument("--size-min", type=int, default=20)
    p.add_argument("--size-max", type=int, default=200)
    _add_common(p, out=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analogy", help="answer analogy queries")
    p.add_argument("queries")
    p.add_argument("--vocab", required=True)
    _add_common(p, seed=False)
    p.set_defaults(func=cmd_analogy)

    p = sub.add_parser("bench", help="throughput benchmark")
    p.add_argument("corpus", help=".vexir file or directory of them")
    p.add_argument("--workers", default="1,2,4",
                   help="comma-separated worker counts")
    p.add_argument("--vocab")
    p.add_argument("--norm")
    _add_peep_flags(p)
    _add_common(p)
    p.set_defaults(func=cmd_bench)

    return top


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            raise UsageError("missing subcommand")
        if getattr(args, "out_required", False) and args.out is None:
            raise UsageError(f"{args.command} requires -o/--out")
        cfg = _load_config(args.config) if getattr(args, "config", None) \
            else {}
        return args.func(args, cfg)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except BrokenPipeError:
        return 0
    except Exception as e:  # internal invariant violation
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
