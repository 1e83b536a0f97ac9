"""Minimal ELF64 reader.

Parses just enough of the format to drive extraction: section headers,
symbol tables, and RELA relocations.  Only little-endian 64-bit objects
are accepted; anything else raises BadBinary before any output is
produced.  Virtual addresses are resolved through section headers, so
the reader works on both executables and shared objects without
touching program headers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

EM_X86_64 = 62
EM_AARCH64 = 183

SHT_SYMTAB = 2
SHT_STRTAB = 3
SHT_RELA = 4
SHT_NOBITS = 8
SHT_DYNSYM = 11

SHF_ALLOC = 0x2
SHF_EXECINSTR = 0x4

STT_FUNC = 2

# Relocation types that bind a GOT slot to a dynamic symbol, per machine.
_SLOT_RELOCS = {
    EM_X86_64: frozenset({6, 7}),     # GLOB_DAT, JUMP_SLOT
    EM_AARCH64: frozenset({1025, 1026}),
}


class BadBinary(Exception):
    """Input is not an ELF object this reader supports."""


@dataclass(frozen=True)
class Section:
    name: str
    sh_type: int
    flags: int
    addr: int
    offset: int
    size: int
    link: int
    entsize: int
    data: bytes

    @property
    def executable(self) -> bool:
        return bool(self.flags & SHF_EXECINSTR)

    @property
    def allocated(self) -> bool:
        return bool(self.flags & SHF_ALLOC)

    def contains(self, vaddr: int) -> bool:
        return self.addr <= vaddr < self.addr + self.size


@dataclass(frozen=True)
class Symbol:
    name: str
    value: int
    size: int
    info: int
    shndx: int

    @property
    def is_func(self) -> bool:
        return self.info & 0xF == STT_FUNC


def _cstr(data: bytes, off: int) -> str:
    end = data.find(b"\x00", off)
    if end < 0:
        end = len(data)
    return data[off:end].decode("utf-8", "replace")


@dataclass
class ElfFile:
    machine: int
    entry: int
    et_type: int
    sections: list[Section]
    symbols: list[Symbol] = field(default_factory=list)
    dynsym: list[Symbol] = field(default_factory=list)
    # GOT slot vaddr -> dynamic symbol name, from JUMP_SLOT/GLOB_DAT relas
    slot_names: dict[int, str] = field(default_factory=dict)

    def section(self, name: str) -> Section | None:
        for s in self.sections:
            if s.name == name:
                return s
        return None

    def section_at(self, vaddr: int) -> Section | None:
        for s in self.sections:
            if s.allocated and s.size and s.contains(vaddr):
                return s
        return None

    def vread(self, vaddr: int, n: int) -> bytes:
        """Bytes at a virtual address; shorter than n at section end."""
        s = self.section_at(vaddr)
        if s is None or s.sh_type == SHT_NOBITS:
            return b""
        lo = vaddr - s.addr
        return s.data[lo:lo + n]

    def func_name_at(self, vaddr: int) -> str | None:
        for table in (self.symbols, self.dynsym):
            for sym in table:
                if sym.is_func and sym.value == vaddr and sym.name:
                    return sym.name
        return None


def _parse_symtab(raw: bytes, strtab: bytes) -> list[Symbol]:
    out = []
    for off in range(0, len(raw) - len(raw) % 24, 24):
        name_off, info, _other, shndx, value, size = struct.unpack_from(
            "<IBBHQQ", raw, off)
        out.append(Symbol(_cstr(strtab, name_off), value, size, info, shndx))
    return out


def load(data: bytes) -> ElfFile:
    if len(data) < 64:
        raise BadBinary("file too short for an ELF header")
    if data[:4] != b"\x7fELF":
        raise BadBinary("not an ELF object")
    if data[4] != 2:
        raise BadBinary("only 64-bit ELF is supported")
    if data[5] != 1:
        raise BadBinary("only little-endian ELF is supported")
    (et_type, machine, _ver, entry, _phoff, shoff, _flags, _ehsize,
     _phentsize, _phnum, shentsize, shnum, shstrndx) = struct.unpack_from(
        "<HHIQQQIHHHHHH", data, 16)
    if shoff == 0 or shnum == 0:
        raise BadBinary("no section headers")
    if shentsize != 64:
        raise BadBinary(f"unexpected section header size {shentsize}")
    if shoff + shnum * 64 > len(data):
        raise BadBinary("section header table runs past end of file")

    rows = []
    for i in range(shnum):
        (nameoff, sh_type, flags, addr, offset, size, link, _info,
         _align, entsize) = struct.unpack_from("<IIQQQQIIQQ", data, shoff + i * 64)
        rows.append((nameoff, sh_type, flags, addr, offset, size, link, entsize))

    if shstrndx >= shnum:
        raise BadBinary("bad section name table index")
    shstr_off, shstr_size = rows[shstrndx][4], rows[shstrndx][5]
    shstrtab = data[shstr_off:shstr_off + shstr_size]

    sections = []
    for nameoff, sh_type, flags, addr, offset, size, link, entsize in rows:
        body = b""
        if sh_type != SHT_NOBITS and size:
            if offset + size > len(data):
                raise BadBinary("section data runs past end of file")
            body = data[offset:offset + size]
        sections.append(Section(_cstr(shstrtab, nameoff), sh_type, flags,
                                addr, offset, size, link, entsize, body))

    elf = ElfFile(machine, entry, et_type, sections)

    def strtab_for(sec: Section) -> bytes:
        if 0 <= sec.link < len(sections):
            return sections[sec.link].data
        return b""

    for sec in sections:
        if sec.sh_type == SHT_SYMTAB:
            elf.symbols.extend(_parse_symtab(sec.data, strtab_for(sec)))
        elif sec.sh_type == SHT_DYNSYM:
            elf.dynsym.extend(_parse_symtab(sec.data, strtab_for(sec)))

    slot_types = _SLOT_RELOCS.get(machine, frozenset())
    for sec in sections:
        if sec.sh_type != SHT_RELA:
            continue
        for off in range(0, len(sec.data) - len(sec.data) % 24, 24):
            r_offset, r_info, _addend = struct.unpack_from("<QQq", sec.data, off)
            r_type = r_info & 0xFFFFFFFF
            sym_idx = r_info >> 32
            if r_type in slot_types and 0 < sym_idx < len(elf.dynsym):
                name = elf.dynsym[sym_idx].name
                if name:
                    elf.slot_names[r_offset] = name
    return elf


def load_path(path: str) -> ElfFile:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise BadBinary(f"cannot read {path}: {e}")
    return load(data)
