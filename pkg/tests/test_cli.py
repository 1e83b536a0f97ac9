"""Subcommand behavior: exit codes, seed resolution, artifact stability."""

import json
import os

import pytest

import peepvec.cli as cli
from peepvec.cli import main
from peepvec.irtext import parse_program
from peepvec.vocab import init_vocabulary, save_vocab

from conftest import fixture_path, read_fixture


@pytest.fixture()
def sample_path():
    return fixture_path("a.vexir")


@pytest.fixture()
def vocab_path(tmp_path):
    path = str(tmp_path / "v.vocab")
    save_vocab(init_vocabulary(seed=1), path)
    return path


def _embed(sample_path, vocab_path, out, extra=()):
    rc = main(["embed", sample_path, "--vocab", vocab_path, "--k", "6",
               "--c", "1", "--seed", "3", "-o", out, *extra])
    assert rc == 0
    return out


# ------------------------------------------------------------ exit codes

def test_usage_errors_exit_1(tmp_path, capsys, sample_path):
    assert main([]) == 1
    assert main(["peep", "x.vexir", "--bogus-flag"]) == 1
    assert main(["embed", sample_path, "-o", "out.femb"]) == 1  # no vocab
    assert main(["pretrain", "in.trip"]) == 1                  # no --out
    cfgfile = tmp_path / "bad.cfg"
    cfgfile.write_text("mystery=1\n")
    assert main(["peep", "x.vexir", "--config", str(cfgfile)]) == 1
    cfgfile.write_text("just words\n")
    assert main(["peep", "x.vexir", "--config", str(cfgfile)]) == 1
    assert main(["norm", "x.vexir", "--norm", "N9"]) == 1
    err = capsys.readouterr().err
    assert "usage error" in err


def test_data_errors_exit_2(tmp_path, capsys, sample_path):
    assert main(["validate", str(tmp_path / "missing.vexir")]) == 2
    bad = tmp_path / "bad.vexir"
    bad.write_text("program broken\nt0 = nonsense\n")
    assert main(["validate", str(bad)]) == 2
    trip = tmp_path / "bad.trip"
    trip.write_text("wrong header\n")
    assert main(["pretrain", str(trip), "-o", str(tmp_path / "v")]) == 2
    groups = tmp_path / "g.tsv"
    groups.write_text("oneword\n")
    assert main(["train", "none.femb", "--groups", str(groups),
                 "-o", str(tmp_path / "m")]) == 2
    assert "data error" in capsys.readouterr().err


def test_internal_errors_exit_3(monkeypatch, capsys, sample_path):
    def boom(_):
        raise RuntimeError("invariant broken")
    monkeypatch.setattr(cli, "canonicalize_program", boom)
    assert main(["canon", sample_path, "-o", "/dev/null"]) == 3
    assert "internal error" in capsys.readouterr().err


# -------------------------------------------------------------- validate

def test_validate_reports_function_count(capsys, sample_path):
    assert main(["validate", sample_path]) == 0
    out = capsys.readouterr().out
    n = read_fixture("a.vexir").count("\nfn ") + \
        read_fixture("a.vexir").startswith("fn ")
    assert "ok:" in out and "functions" in out
    assert main(["validate", sample_path, sample_path]) == 0
    out = capsys.readouterr().out
    assert out.count(f"{sample_path}: ok:") == 2


def test_canon_output_reparses_and_is_idempotent(tmp_path, sample_path):
    once = tmp_path / "c1.vexir"
    twice = tmp_path / "c2.vexir"
    assert main(["canon", sample_path, "-o", str(once)]) == 0
    parse_program(once.read_text())
    assert main(["canon", str(once), "-o", str(twice)]) == 0
    assert once.read_text() == twice.read_text()


# ------------------------------------------------------------------ seed

def test_seed_priority_chain(tmp_path, monkeypatch, sample_path):
    def peep_out(name, extra):
        out = tmp_path / name
        assert main(["peep", sample_path, "--k", "6", "--c", "1",
                     "-o", str(out), *extra]) == 0
        return out.read_text()

    cfgfile = tmp_path / "s.cfg"
    cfgfile.write_text("seed=9  # comment\n")
    monkeypatch.delenv("PEEPVEC_SEED", raising=False)

    flag5 = peep_out("flag5", ["--seed", "5"])
    assert peep_out("flag_over_cfg", ["--seed", "5", "--config",
                                      str(cfgfile)]) == flag5
    cfg9 = peep_out("cfg9", ["--config", str(cfgfile)])
    assert cfg9 == peep_out("flag9", ["--seed", "9"])
    assert cfg9 != flag5

    monkeypatch.setenv("PEEPVEC_SEED", "5")
    assert peep_out("env5", []) == flag5
    assert peep_out("cfg_over_env", ["--config", str(cfgfile)]) == cfg9

    monkeypatch.delenv("PEEPVEC_SEED")
    default = peep_out("default", [])
    assert default == peep_out("default_hex", ["--seed", "0xC0FFEE"])
    assert default != flag5


# -------------------------------------------------------------- pipeline

def test_triplets_format(tmp_path, sample_path):
    out = tmp_path / "t.trip"
    assert main(["triplets", sample_path, "--k", "6", "--c", "1",
                 "--seed", "2", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "peepvec-trip v1"
    assert len(lines) > 1
    assert all(len(ln.split("\t")) == 3 for ln in lines[1:])


def test_pretrain_is_bitwise_deterministic(tmp_path, sample_path):
    trip = tmp_path / "t.trip"
    assert main(["triplets", sample_path, "--seed", "2",
                 "-o", str(trip)]) == 0
    v1, v2 = tmp_path / "v1", tmp_path / "v2"
    for v in (v1, v2):
        assert main(["pretrain", str(trip), "--epochs", "5",
                     "--seed", "4", "-o", str(v)]) == 0
    assert v1.read_bytes() == v2.read_bytes()


def test_embed_bitwise_stable_across_worker_counts(tmp_path, sample_path,
                                                   vocab_path):
    one = _embed(sample_path, vocab_path, str(tmp_path / "w1.femb"),
                 ["--workers", "1"])
    two = _embed(sample_path, vocab_path, str(tmp_path / "w2.femb"),
                 ["--workers", "2"])
    with open(one, "rb") as a, open(two, "rb") as b:
        assert a.read() == b.read()


def test_norm_reports_shrinking_sizes(tmp_path, capsys, sample_path):
    out = tmp_path / "n.peep"
    assert main(["norm", sample_path, "--norm", "N3", "--k", "6", "--c", "1",
                 "--seed", "2", "-o", str(out)]) == 0
    header_lines = [ln for ln in out.read_text().splitlines()
                    if ln.startswith("# fn ")]
    assert header_lines
    for ln in header_lines:
        before, after = ln.split("stmts ")[1].split(" -> ")
        assert int(after) <= int(before)


# ---------------------------------------------------- diff/search/eval

@pytest.fixture()
def diff_setup(tmp_path, sample_path, vocab_path):
    femb = _embed(sample_path, vocab_path, str(tmp_path / "a.femb"))
    names = [e.name for e in cli.load_embeddings(femb)]
    groups = tmp_path / "groups.tsv"
    groups.write_text("".join(f"{n}\tg{i}\n" for i, n in enumerate(names)))
    return femb, str(groups)


def test_diff_self_is_perfect(tmp_path, capsys, diff_setup):
    femb, groups = diff_setup
    report_path = tmp_path / "report.json"
    assert main(["diff", femb, femb, "--groups", groups, "--k", "1",
                 "--csv", str(tmp_path / "rows.csv"),
                 "-o", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["fp"] == 0 and report["fn"] == 0
    assert report["precision"] == 1 and report["recall"] == 1
    csv = (tmp_path / "rows.csv").read_text().splitlines()
    assert csv[0] == "query,rank,candidate,distance,relevant"
    assert len(csv) == 1 + report["tp"]


def test_diff_matching_mode_lists_pairs(tmp_path, diff_setup):
    femb, groups = diff_setup
    out = tmp_path / "m.txt"
    assert main(["diff", femb, femb, "--groups", groups,
                 "--mode", "matching", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    n = len(cli.load_embeddings(femb))
    matches = [ln for ln in lines if ln.startswith("match ")]
    assert len(matches) == n
    for ln in matches:
        _, a, b, d = ln.split()
        assert a == b and float(d) < 1e-6


def test_search_and_eval_round_trip(tmp_path, diff_setup):
    femb, groups = diff_setup
    report_path = tmp_path / "s.json"
    assert main(["search", "--pool", femb, "--queries", femb,
                 "--groups", groups, "--k", "2",
                 "-o", str(report_path)]) == 0
    report = json.loads(report_path.read_text())
    assert report["map"] == 1  # each query finds itself first
    eval_out = tmp_path / "eval.txt"
    cdf = tmp_path / "cdf.csv"
    assert main(["eval", str(report_path), str(report_path),
                 "--cdf", str(cdf), "-o", str(eval_out)]) == 0
    text = eval_out.read_text()
    assert "mean f1 1 over 2 reports" in text
    assert "mean map 1" in text
    assert cdf.read_text() == "f1,cumulative_fraction\n1,1\n"


# ------------------------------------------------------- synth and bench

def test_synth_writes_valid_corpus(tmp_path, capsys):
    out_dir = tmp_path / "corpus"
    assert main(["synth", "--out-dir", str(out_dir), "--groups", "3",
                 "--variants", "2", "--size-min", "8", "--size-max", "16",
                 "--seed", "6"]) == 0
    files = sorted(p.name for p in out_dir.iterdir())
    assert files == ["groups.tsv", "variant0.vexir", "variant1.vexir"]
    assert main(["validate", str(out_dir / "variant0.vexir"),
                 str(out_dir / "variant1.vexir")]) == 0
    tsv = (out_dir / "groups.tsv").read_text().splitlines()
    assert len(tsv) == 3 and all("\t" in ln for ln in tsv)


def test_bench_csv_shape(tmp_path, sample_path):
    out = tmp_path / "bench.csv"
    assert main(["bench", sample_path, "--workers", "1", "--k", "4",
                 "--c", "1", "--seed", "2", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "workers,index,function,cumulative_seconds"
    assert any(ln.startswith("1,total,") for ln in lines)
    assert lines[-1].startswith("# workers=1 total=")
    assert "speedup=1.0000" in lines[-1]
