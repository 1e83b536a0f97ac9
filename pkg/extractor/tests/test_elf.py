"""ELF container parsing: real binaries, synthetic images, rejects."""

import struct

import pytest

from binlift.elf import EM_AARCH64, EM_X86_64, BadBinary, load, load_path

from .elfbuild import build_elf, sym


def test_hello_container(hello_bin):
    elf = load_path(str(hello_bin))
    assert elf.machine == EM_X86_64
    assert elf.et_type in (2, 3)
    text = elf.section(".text")
    assert text is not None and text.executable and text.size > 0
    assert elf.section_at(text.addr) is text
    assert elf.vread(text.addr, 4) == text.data[:4]
    assert elf.vread(text.addr + text.size - 2, 8) == text.data[-2:]


def test_hello_symbols_and_slots(hello_bin):
    elf = load_path(str(hello_bin))
    mains = [s for s in elf.symbols if s.name == "main"]
    assert mains and mains[0].is_func
    assert elf.func_name_at(mains[0].value) == "main"
    # dynamic linkage exposes the libc print routine through a GOT slot
    assert {"puts", "printf"} & set(elf.slot_names.values())


def test_synthetic_sections_and_symtab():
    strtab = b"\x00f\x00g\x00"
    symtab = (sym(0, 0, info=0, shndx=0)
              + sym(1, 0x1000, size=8)
              + sym(3, 0x1008, size=4))
    img = build_elf(EM_AARCH64, 0x1000, [
        (".text", 1, 0x6, 0x1000, b"\x00" * 16, 0, 0),
        (".symtab", 2, 0, 0, symtab, 3, 24),
        (".strtab", 3, 0, 0, strtab, 0, 0),
    ])
    elf = load(img)
    assert elf.machine == EM_AARCH64 and elf.entry == 0x1000
    assert [s.name for s in elf.sections] == \
        ["", ".text", ".symtab", ".strtab", ".shstrtab"]
    assert elf.section(".text").executable
    assert not elf.section(".strtab").executable
    assert elf.func_name_at(0x1000) == "f"
    assert elf.func_name_at(0x1008) == "g"
    assert elf.func_name_at(0x2000) is None


def test_synthetic_got_slots():
    dynstr = b"\x00puts\x00"
    dynsym = sym(0, 0, info=0, shndx=0) + sym(1, 0, shndx=0)
    rela = struct.pack("<QQq", 0x3FD0, (1 << 32) | 7, 0)
    img = build_elf(EM_X86_64, 0, [
        (".dynsym", 11, 2, 0, dynsym, 2, 24),
        (".dynstr", 3, 2, 0, dynstr, 0, 0),
        (".rela.plt", 4, 2, 0, rela, 1, 24),
    ])
    elf = load(img)
    assert elf.slot_names == {0x3FD0: "puts"}


def test_vread_stops_at_section_end():
    img = build_elf(EM_X86_64, 0x1000, [
        (".text", 1, 0x6, 0x1000, b"\xc3" * 8, 0, 0),
    ])
    elf = load(img)
    assert elf.vread(0x1006, 16) == b"\xc3\xc3"
    assert elf.vread(0x2000, 4) == b""


def test_reject_short_and_wrong_magic():
    with pytest.raises(BadBinary):
        load(b"")
    with pytest.raises(BadBinary):
        load(b"\x7fELF")
    with pytest.raises(BadBinary):
        load(b"MZ" + b"\x00" * 100)


def test_reject_wrong_class_and_endianness():
    img = bytearray(build_elf(EM_X86_64, 0, []))
    bad32 = bytes(img[:4]) + b"\x01" + bytes(img[5:])
    with pytest.raises(BadBinary):
        load(bad32)
    badbe = bytes(img[:5]) + b"\x02" + bytes(img[6:])
    with pytest.raises(BadBinary):
        load(badbe)


def test_reject_broken_section_table():
    img = bytearray(build_elf(EM_X86_64, 0, []))
    # e_shoff past end of file
    bad = bytearray(img)
    struct.pack_into("<Q", bad, 40, len(img) + 1024)
    with pytest.raises(BadBinary):
        load(bytes(bad))
    # e_shentsize not 64
    bad = bytearray(img)
    struct.pack_into("<H", bad, 58, 32)
    with pytest.raises(BadBinary):
        load(bytes(bad))
    # e_shnum zero
    bad = bytearray(img)
    struct.pack_into("<H", bad, 60, 0)
    with pytest.raises(BadBinary):
        load(bytes(bad))


def test_reject_truncated_section_data():
    img = bytearray(build_elf(EM_X86_64, 0x1000, [
        (".text", 1, 0x6, 0x1000, b"\x90" * 8, 0, 0),
    ]))
    shoff = struct.unpack_from("<Q", img, 40)[0]
    # inflate the .text size so its body runs past end of file
    struct.pack_into("<Q", img, shoff + 64 + 32, 1 << 20)
    with pytest.raises(BadBinary):
        load(bytes(img))


def test_load_path_missing_file(tmp_path):
    with pytest.raises(BadBinary):
        load_path(str(tmp_path / "nope"))
