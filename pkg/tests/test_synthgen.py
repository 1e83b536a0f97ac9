"""Corpus generator: validity, variant equivalence, trace bookkeeping."""

from collections import Counter

import pytest

from peepvec.canon import canonicalize_program
from peepvec.ir import (IntConst, OpApply, Program, PutReg, Store, Tmp,
                        TmpAssign, Call, GetReg, Load, validate_program)
from peepvec.irtext import serialize_program
from peepvec.peephole import Peephole, PeepholeConfig, generate_peepholes
from peepvec.synthgen import (CorpusConfig, VariationProfile, gen_corpus,
                              gen_function, independent, invert_map,
                              make_variant, make_variant_traced,
                              rename_statements)
from peepvec.vexine import evaluate_peephole, observables_equal
from peepvec.vocab import extract_triplets

IDENTITY = VariationProfile(0, 0, 0, 0, 0, 0)
RENAME_ONLY = VariationProfile(1.0, 1.0, 0, 0, 0, 0)


def _prog(*fns):
    return Program("p", list(fns))


# ------------------------------------------------------------ generation

@pytest.mark.parametrize("seed,size", [(1, 5), (2, 20), (3, 60), (4, 150)])
def test_generated_functions_are_valid(seed, size):
    f = gen_function(seed, size)
    assert validate_program(_prog(f)) == []
    n_stmts = sum(len(b.statements) for b in f.blocks)
    assert n_stmts == size


def test_generation_is_deterministic_and_seed_sensitive():
    a = serialize_program(_prog(gen_function(7, 40)))
    b = serialize_program(_prog(gen_function(7, 40)))
    c = serialize_program(_prog(gen_function(8, 40)))
    assert a == b
    assert a != c


def test_edge_to_block_ratio_is_sparse():
    edges = blocks = 0
    for seed in range(60):
        f = gen_function(seed, 80)
        blocks += len(f.blocks)
        edges += sum(len(b.successors) for b in f.blocks)
    ratio = edges / blocks
    assert 1.2 <= ratio <= 1.5


def test_gen_function_rejects_empty():
    with pytest.raises(ValueError):
        gen_function(1, 0)


# ----------------------------------------------------------- independence

def test_independence_hand_cases():
    get16 = TmpAssign(0, "I64", GetReg(16, "I64"))
    get3 = TmpAssign(1, "I64", GetReg(3, "I64"))
    use0 = TmpAssign(2, "I64", OpApply("Add64", (Tmp(0), IntConst(1, "I64"))))
    put_a = PutReg(5, IntConst(1, "I64"))
    put_b = PutReg(5, IntConst(2, "I64"))
    store_x = Store(IntConst(0x1000, "I64"), IntConst(7, "I64"))
    load_x = TmpAssign(3, "I64", Load(IntConst(0x1000, "I64"), "I64"))
    load_y = TmpAssign(4, "I64", Load(IntConst(0x2000, "I64"), "I64"))
    load_dyn = TmpAssign(5, "I64", Load(Tmp(0), "I64"))
    call = Call("memcpy", True, (), None, None)

    assert independent(get16, get3)
    assert not independent(get16, use0)          # def feeds use
    assert not independent(use0, get16)          # use before redefinition
    assert not independent(put_a, put_b)         # same register written
    assert not independent(store_x, load_x)      # same address
    assert independent(store_x, load_y)          # distinct constants
    assert not independent(store_x, load_dyn)    # computed address aliases
    assert not independent(call, get3)           # calls are barriers
    assert not independent(get16, TmpAssign(6, "I64", GetReg(16, "I64"))) \
        or True  # reg reads commute; just ensure no crash
    assert independent(get16, TmpAssign(6, "I64", GetReg(16, "I64")))


def test_rename_statements_round_trip():
    f = gen_function(11, 30)
    tmp_map = {0: 5, 5: 0, 1: 9, 9: 1}
    reg_map = {2: 7, 7: 2}
    for b in f.blocks:
        once = rename_statements(b.statements, tmp_map, reg_map)
        back = rename_statements(once, invert_map(tmp_map),
                                 invert_map(reg_map))
        assert back == b.statements


# -------------------------------------------------------------- variants

def test_zero_profile_is_identity():
    f = gen_function(21, 50)
    v = make_variant(f, IDENTITY, seed=4)
    assert serialize_program(_prog(v)) == serialize_program(_prog(f))


def test_variants_are_valid_and_seed_sensitive():
    f = gen_function(22, 60)
    v1 = make_variant(f, VariationProfile(), seed=1)
    v2 = make_variant(f, VariationProfile(), seed=2)
    assert validate_program(_prog(v1)) == []
    assert validate_program(_prog(v2)) == []
    assert serialize_program(_prog(v1)) != serialize_program(_prog(v2))
    assert v1.strings == f.strings
    assert v1.extern_calls == f.extern_calls


def _triplet_multiset(f):
    canon = canonicalize_program(_prog(f)).functions[0]
    peeps = generate_peepholes(canon, PeepholeConfig(8, 2, seed=5))
    return Counter(t for p in peeps.peepholes for t in extract_triplets(p))


def test_rename_only_variant_keeps_triplet_multiset():
    for seed in range(6):
        f = gen_function(100 + seed, 45)
        v = make_variant(f, RENAME_ONLY, seed=seed)
        assert _triplet_multiset(f) == _triplet_multiset(v)


def test_split_chains_partition_statements():
    f = gen_function(23, 70)
    v, trace = make_variant_traced(f, VariationProfile(0, 0, 0, 0, 0, 1.0),
                                   seed=9)
    vmap = v.block_map()
    seen = []
    for b in f.blocks:
        chain = trace.block_chains[b.ident]
        seen.extend(chain)
        merged = [s for i in chain for s in vmap[i].statements]
        assert merged == b.statements
        # interior pieces fall through; the last inherits real successors
        for i in chain[:-1]:
            assert vmap[i].successors == [i + 1]
        assert vmap[chain[-1]].successors == \
            [trace.block_chains[s][0] for s in b.successors]
    assert sorted(seen) == [b.ident for b in v.blocks]
    assert v.entry == trace.block_chains[f.entry][0]


def test_traced_variant_preserves_block_observables():
    checked = 0
    for seed in range(20):
        f = gen_function(200 + seed, 55)
        v, trace = make_variant_traced(f, VariationProfile(), seed=seed)
        vmap = v.block_map()
        undo_t = invert_map(trace.tmp_map)
        undo_r = invert_map(trace.reg_map)
        for b in f.blocks:
            merged = [s for i in trace.block_chains[b.ident]
                      for s in vmap[i].statements]
            restored = rename_statements(merged, undo_t, undo_r)
            for env_seed in (0, 1):
                ref = evaluate_peephole(
                    Peephole(f.name, (b.ident,), b.statements), env_seed)
                got = evaluate_peephole(
                    Peephole(f.name, (b.ident,), restored), env_seed)
                assert observables_equal(ref, got, env_seed)
                checked += 1
    assert checked >= 40


def test_profile_validation():
    with pytest.raises(ValueError):
        VariationProfile(rename_tmps=1.5)
    with pytest.raises(ValueError):
        VariationProfile(junk=-0.1)


# --------------------------------------------------------------- corpus

def test_corpus_shape_and_labels():
    cfg = CorpusConfig(groups=6, variants=3, size_min=10, size_max=30, seed=2)
    programs, groups = gen_corpus(cfg)
    assert len(programs) == 3
    names = [f.name for f in programs[0].functions]
    assert len(names) == 6
    assert groups == {f"f{g:04d}": f"g{g:04d}" for g in range(6)}
    for p in programs:
        assert [f.name for f in p.functions] == names
        assert validate_program(p) == []
    # variants actually differ from the base compilation
    assert serialize_program(programs[0]) != serialize_program(programs[1])


def test_corpus_config_validation():
    with pytest.raises(ValueError):
        CorpusConfig(groups=0)
    with pytest.raises(ValueError):
        CorpusConfig(size_min=10, size_max=5)
