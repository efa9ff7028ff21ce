"""One line per acceptance criterion, printed at the end of the run."""
import sys

LINES: list[str] = []


def record(n: int, ok: bool, title: str, detail: str) -> bool:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}  ({detail})"
    LINES.append(line)
    print(line, file=sys.stderr)
    return ok
