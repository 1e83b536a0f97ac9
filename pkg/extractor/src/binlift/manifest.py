"""Extraction result summary."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ExtractionManifest:
    binary: str
    arch: str
    functions: int = 0
    # (function name or hex address, reason) for anything not extracted
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"{self.binary}: {self.functions} functions ({self.arch})"]
        for name, reason in self.skipped:
            lines.append(f"  skipped {name}: {reason}")
        return "\n".join(lines)
