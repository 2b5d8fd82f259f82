import pytest

# criterion -> list of (part, passed, detail)
ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record one part of an acceptance criterion, then assert it."""

    def check(criterion: int, part: str, ok: bool, detail: str = ""):
        ACCEPTANCE.setdefault(criterion, []).append((part, bool(ok), detail))
        print(f"C{criterion} {part}: {'PASS' if ok else 'FAIL'} {detail}")
        assert ok, f"C{criterion} {part}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for c in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[c]
        status = "PASS" if all(ok for _, ok, _ in parts) else "FAIL"
        failed = [f"{p} ({d})" for p, ok, d in parts if not ok]
        tail = "; failing: " + "; ".join(failed) if failed else ""
        tr.write_line(f"C{c:<2} {status}  {len(parts)} checks{tail}")
