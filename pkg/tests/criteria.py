"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES: list[str] = []


def record(number, ok, detail: str) -> bool:
    status = ok if isinstance(ok, str) else ("PASS" if ok else "FAIL")
    line = f"criterion {number}: {status}  {detail}"
    LINES.append(line)
    print(line)
    return ok
