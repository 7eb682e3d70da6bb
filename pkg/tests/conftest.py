import pytest

# criterion -> list of (part, passed, detail); filled by test_acceptance.py
ACCEPTANCE = {}


def record(criterion, part, passed, detail=""):
    ACCEPTANCE.setdefault(criterion, []).append((part, bool(passed), detail))
    return bool(passed)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[crit]
        ok = all(p for _, p, _ in parts)
        tr.write_line(f"criterion {crit:2d}: {'PASS' if ok else 'FAIL'}")
        for part, passed, detail in parts:
            tr.write_line(f"    {'ok  ' if passed else 'FAIL'} {part}  {detail}")


@pytest.fixture
def rng():
    import numpy as np

    return np.random.default_rng(20240611)
