"""Fixtures shared by the extractor tests."""

import shutil
import subprocess

import pytest

HELLO_C = """\
#include <stdio.h>

int main(void) {
    printf("hello, world\\n");
    return 0;
}
"""


@pytest.fixture(scope="session")
def hello_bin(tmp_path_factory):
    """An ordinary dynamically linked hello-world executable."""
    cc = shutil.which("gcc") or shutil.which("cc")
    if cc is None:
        pytest.skip("no C compiler available")
    d = tmp_path_factory.mktemp("hello")
    src = d / "hello.c"
    src.write_text(HELLO_C)
    exe = d / "hello"
    subprocess.run([cc, str(src), "-o", str(exe)], check=True)
    return exe
