"""Collects acceptance outcomes and prints one PASS/FAIL line per criterion."""

ACCEPTANCE = {}


def record(number, ok, detail):
    ACCEPTANCE.setdefault(number, []).append((bool(ok), detail))


def summary_lines():
    lines = []
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        ok = all(p[0] for p in parts)
        detail = "; ".join(d for _, d in parts)
        lines.append(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}: {detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    lines = summary_lines()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
