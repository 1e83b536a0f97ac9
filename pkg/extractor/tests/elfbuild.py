"""Hand-rolled ELF64 images for tests that need exact control of the input.

build_elf lays out: header, section bodies in order, .shstrtab, then the
section header table.  Section indices are 0 for the null entry, 1..n for
the caller's sections in list order, and n+1 for .shstrtab; link fields in
the caller's tuples must use those indices.
"""

import struct


def build_elf(machine, entry, secs, et_type=2):
    """secs: (name, sh_type, flags, addr, data, link, entsize) tuples."""
    blob = bytearray(64)
    rows = [(0, 0, 0, 0, 0, 0, 0, 0)]
    names = bytearray(b"\x00")
    for name, sh_type, flags, addr, data, link, entsize in secs:
        nameoff = len(names)
        names += name.encode() + b"\x00"
        while len(blob) % 8:
            blob.append(0)
        off = len(blob)
        blob += data
        rows.append((nameoff, sh_type, flags, addr, off, len(data),
                     link, entsize))
    shstr_nameoff = len(names)
    names += b".shstrtab\x00"
    while len(blob) % 8:
        blob.append(0)
    rows.append((shstr_nameoff, 3, 0, 0, len(blob), len(names), 0, 0))
    blob += names

    while len(blob) % 8:
        blob.append(0)
    shoff = len(blob)
    for nameoff, sh_type, flags, addr, off, size, link, entsize in rows:
        blob += struct.pack("<IIQQQQIIQQ", nameoff, sh_type, flags, addr,
                            off, size, link, 0, 8, entsize)
    blob[:64] = struct.pack(
        "<4sBBBBB7xHHIQQQIHHHHHH", b"\x7fELF", 2, 1, 1, 0, 0,
        et_type, machine, 1, entry, 0, shoff, 0, 64, 0, 0, 64,
        len(rows), len(rows) - 1)
    return bytes(blob)


def sym(nameoff, value, size=0, info=0x12, shndx=1):
    """One symtab entry; defaults to a global function in section 1."""
    return struct.pack("<IBBHQQ", nameoff, info, 0, shndx, value, size)
