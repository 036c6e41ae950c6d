"""One pass/fail line per acceptance criterion, echoed in the pytest summary."""
from __future__ import annotations

LINES: dict[str, str] = {}


def report(key: str, ok: bool, detail: str) -> bool:
    line = f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[key] = line
    print(line)
    return ok
