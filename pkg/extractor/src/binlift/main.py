"""Command line front end.

extract.py <binary> -o <out.vexir> [--arch x86|arm]

Exit codes follow the analysis toolkit convention: 0 success, 1 usage
error, 2 data error (unreadable or unsupported input), 3 internal
error.  Output is written only after extraction succeeds, so a failed
run never leaves a partial file behind.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .elf import EM_AARCH64, EM_X86_64, BadBinary, load_path
from .lifter import extract_program
from .manifest import ExtractionManifest

_ARCH_TAGS = {"x86": EM_X86_64, "arm": EM_AARCH64}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def extract(binary: str, out: str, arch: str | None = None) -> ExtractionManifest:
    """Lift one binary to IR text at `out` and return the manifest."""
    elf = load_path(binary)
    if arch is not None and elf.machine != _ARCH_TAGS[arch]:
        raise BadBinary(f"{binary}: machine {elf.machine} does not match "
                        f"--arch {arch}")
    text, manifest = extract_program(elf, binary)
    Path(out).write_text(text)
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="extract.py",
                description="Lift an ELF binary to IR text.")
    p.add_argument("binary", help="input executable or shared object")
    p.add_argument("-o", "--out", required=True, help="output .vexir path")
    p.add_argument("--arch", choices=("x86", "arm"),
                   help="require this architecture instead of auto-detecting")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        manifest = extract(args.binary, args.out, args.arch)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except BadBinary as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # internal invariant violation
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    print(manifest.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
