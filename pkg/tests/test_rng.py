"""Seeded RNG: reference-algorithm agreement and stream independence."""

import hashlib

import pytest

from peepvec.rng import MASK64, SplitMix64, derive, mix64, stable_hash


def _reference_splitmix64(state: int):
    """Textbook SplitMix64, written independently of the library code."""
    while True:
        state = (state + 0x9E3779B97F4A7C15) & MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        yield z ^ (z >> 31)


@pytest.mark.parametrize("seed", [0, 1, 42, 0xC0FFEE, MASK64])
def test_matches_reference_stream(seed):
    ref = _reference_splitmix64(seed)
    rng = SplitMix64(seed)
    for _ in range(200):
        assert rng.next64() == next(ref)


def test_mix64_is_bijective_on_sample():
    seen = {mix64(x) for x in range(10000)}
    assert len(seen) == 10000


def test_below_bounds_and_coverage():
    rng = SplitMix64(7)
    draws = [rng.below(10) for _ in range(2000)]
    assert all(0 <= d < 10 for d in draws)
    assert set(draws) == set(range(10))
    with pytest.raises(ValueError):
        rng.below(0)


def test_uniform_in_unit_interval():
    rng = SplitMix64(3)
    for _ in range(2000):
        u = rng.uniform()
        assert 0.0 <= u < 1.0


def test_randint_inclusive():
    rng = SplitMix64(5)
    draws = {rng.randint(-2, 2) for _ in range(500)}
    assert draws == {-2, -1, 0, 1, 2}


def test_shuffle_is_permutation():
    rng = SplitMix64(11)
    xs = list(range(50))
    ys = list(xs)
    rng.shuffle(ys)
    assert sorted(ys) == xs
    assert ys != xs  # astronomically unlikely to be identity


def test_stable_hash_is_pure_blake2b():
    # independent re-derivation of the tagged length-prefixed encoding
    h = hashlib.blake2b(digest_size=8)
    h.update(b"i" + (42).to_bytes(17, "little", signed=True))
    h.update(b"s" + (3).to_bytes(8, "little") + b"abc")
    expect = int.from_bytes(h.digest(), "little")
    assert stable_hash(42, "abc") == expect


def test_stable_hash_type_tagging():
    # int 97 vs the one-byte string "a" (codepoint 97) must not collide
    assert stable_hash(97) != stable_hash("a")
    assert stable_hash("ab", "c") != stable_hash("a", "bc")
    with pytest.raises(TypeError):
        stable_hash(True)
    with pytest.raises(TypeError):
        stable_hash(1.5)


def test_stable_hash_negative_ints():
    assert stable_hash(-1) != stable_hash(1)
    assert stable_hash(-1) == stable_hash(-1)


def test_derive_independent_streams():
    a = derive(9, "walk", 0)
    b = derive(9, "walk", 1)
    assert [a.next64() for _ in range(4)] != [b.next64() for _ in range(4)]
    # same label, same stream
    c = derive(9, "walk", 0)
    a2 = derive(9, "walk", 0)
    assert [a2.next64() for _ in range(4)] == [c.next64() for _ in range(4)]


def test_fork_advances_parent():
    r1 = SplitMix64(77)
    r2 = SplitMix64(77)
    r1.fork("x")
    # parent consumed one draw while forking
    assert r1.next64() == (r2.next64(), r2.next64())[1]


def test_fork_labels_distinct():
    base = SplitMix64(123)
    s1 = base.fork("a")
    base2 = SplitMix64(123)
    s2 = base2.fork("b")
    assert [s1.next64() for _ in range(4)] != [s2.next64() for _ in range(4)]
