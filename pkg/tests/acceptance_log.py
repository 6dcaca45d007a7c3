"""One line per acceptance criterion, collected for the terminal summary."""

LINES: list[str] = []


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    LINES.append(line)
    print(line)
