from collections import OrderedDict

import pytest

_CRITERIA = OrderedDict()


@pytest.fixture
def criterion():
    """``check(n, label, ok, detail)`` records one sub-check of acceptance criterion ``n``."""

    def check(n, label, ok, detail=""):
        _CRITERIA.setdefault(n, []).append((label, bool(ok), detail))
        return bool(ok)

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        subs = _CRITERIA[n]
        ok = all(s[1] for s in subs)
        tr.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}")
        for label, good, detail in subs:
            tr.write_line(f"    {'ok  ' if good else 'FAIL'} {label}  {detail}")
