"""Opcode table: canonical mapping and inventory shape."""

from peepvec.opcodes import INT_CAST_OPS, STMT_OPS, UNKNOWN_OP, opcode_table
from peepvec.ir import CLASS_TYPES, ABSTRACT_TOKENS
from peepvec.vocab import default_entities


def test_width_suffixes_collapse():
    t = opcode_table()
    for raw in ("Add8", "Add16", "Add32", "Add64"):
        assert t.canonical_of(raw) == "add"
    assert t.canonical_of("CmpEQ64") == "cmpeq"
    assert t.canonical_of("Shl32") == "shl"
    assert t.canonical_of("MulF64") == "mulf"


def test_unknown_maps_to_unk():
    t = opcode_table()
    assert t.canonical_of("TotallyMadeUp99") == UNKNOWN_OP
    assert not t.is_known("TotallyMadeUp99")


def test_canonical_names_are_fixpoints():
    t = opcode_table()
    for name in t.canonical:
        assert t.canonical_of(name) == name


def test_casts_are_canonical_ops():
    t = opcode_table()
    assert t.canonical_of("64to32") == "trunc"
    assert t.canonical_of("32Uto64") == "ext"
    assert t.canonical_of("8Sto64") == "ext"
    assert INT_CAST_OPS == {"ext", "trunc"}


def test_commutativity_flags():
    t = opcode_table()
    for name in ("add", "mul", "and", "or", "xor"):
        assert t.commutative(name)
    for name in ("sub", "shl", "divmod"):
        assert not t.commutative(name)


def test_entity_inventory_is_closed_and_sized():
    t = opcode_table()
    ents = default_entities()
    assert len(ents) == len(set(ents))
    expect = (sorted(t.canonical) + [UNKNOWN_OP] + list(STMT_OPS)
              + list(CLASS_TYPES) + list(ABSTRACT_TOKENS))
    assert sorted(ents) == sorted(expect)
    assert len(ents) == 83
