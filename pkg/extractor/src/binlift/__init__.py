"""Static binary-to-IR extractor.

Reads an ELF executable, recovers functions and control flow, and
lifts the machine code to the block-structured IR text consumed by the
analysis pipeline.  The textual format is the only coupling point; the
extractor itself has no other dependencies.
"""

from .elf import BadBinary
from .main import extract
from .manifest import ExtractionManifest

__all__ = ["BadBinary", "ExtractionManifest", "extract"]
