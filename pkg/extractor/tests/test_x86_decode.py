"""x86-64 decoder: byte patterns taken from compiler output."""

import pytest

from binlift.x86 import DecodeError, I, M, R, decode


def dec(hexstr, addr=0x1000):
    return decode(bytes.fromhex(hexstr), 0, addr)


def test_push_pop():
    i = dec("55")
    assert (i.op, i.ops, i.size, i.kind) == ("push", (R(5, 64),), 1, "seq")
    assert dec("5d").op == "pop"
    assert dec("4154").ops == (R(12, 64),)    # push r12


def test_mov_reg_reg():
    i = dec("4889e5")                          # mov rbp, rsp
    assert i.op == "mov" and i.size == 3
    assert i.ops == (R(5, 64), R(4, 64))


def test_mov_imm():
    i = dec("b800000000")                      # mov eax, 0
    assert i.op == "mov" and i.ops == (R(0, 32), I(0, 32))


def test_group1_imm8():
    i = dec("4883ec10")                        # sub rsp, 0x10
    assert i.op == "sub" and i.ops == (R(4, 64), I(0x10, 64))
    j = dec("83f805")                          # cmp eax, 5
    assert j.op == "cmp" and j.ops == (R(0, 32), I(5, 32))


def test_lea_rip_relative():
    i = dec("488d3d02000000")                  # lea rdi, [rip+2]
    assert i.op == "lea" and i.size == 7
    dst, src = i.ops
    assert dst == R(7, 64)
    assert isinstance(src, M) and src.abs == 0x1000 + 7 + 2


def test_mem_base_disp():
    i = dec("488b4508")                        # mov rax, [rbp+8]
    dst, src = i.ops
    assert dst == R(0, 64)
    assert (src.base, src.disp, src.w) == (5, 8, 64)


def test_call_rel32():
    i = dec("e810000000", addr=0x2000)
    assert (i.kind, i.target, i.size) == ("call", 0x2015, 5)


def test_jmp_and_jcc():
    i = dec("eb05", addr=0x3000)
    assert (i.kind, i.target) == ("jump", 0x3007)
    j = dec("7405", addr=0x3000)               # je +5
    assert (j.kind, j.cc, j.target) == ("branch", "e", 0x3007)
    k = dec("0f84fbffffff", addr=0x3000)       # je -5
    assert (k.kind, k.cc, k.target) == ("branch", "e", 0x3001)


def test_ret_nop_endbr():
    assert dec("c3").kind == "ret"
    assert dec("0f1f4000").op == "nop"
    assert dec("f30f1efa").op == "endbr"


def test_indirect_call_and_jump():
    i = dec("ffd0")                            # call rax
    assert i.kind == "call" and i.ops == (R(0, 64),) and i.target is None
    j = dec("ff25aa000000")                    # jmp [rip+0xaa]
    assert j.kind == "ijump"
    assert j.ops[0].abs == 0x1000 + 6 + 0xAA


def test_movzx():
    i = dec("0fb6c0")                          # movzx eax, al
    assert i.op == "movzx" and i.ops == (R(0, 32), R(0, 8))


def test_rex_b_extends_register():
    i = dec("4531e4")                          # xor r12d, r12d
    assert i.op == "xor" and i.ops == (R(12, 32), R(12, 32))


def test_shift_imm():
    i = dec("48c1e803")                        # shr rax, 3
    assert i.op == "shr" and i.ops == (R(0, 64), I(3, 8))


def test_test_reg_reg():
    i = dec("4885c0")                          # test rax, rax
    assert i.op == "test" and i.ops == (R(0, 64), R(0, 64))


def test_unknown_opcode_raises():
    with pytest.raises(DecodeError):
        dec("d7")
    with pytest.raises(DecodeError):
        dec("0f0e")


def test_truncated_stream_raises():
    with pytest.raises(DecodeError):
        dec("48")
