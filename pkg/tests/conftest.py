import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

# criterion number -> (title, [(passed, detail, seconds)])
_ACCEPTANCE = {}


@pytest.fixture
def detail(request):
    """List of strings a test can fill; shown on its acceptance summary line."""
    request.node.detail_lines = []
    return request.node.detail_lines


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    k, title = mark.args
    text = "; ".join(getattr(item, "detail_lines", []))
    _ACCEPTANCE.setdefault(k, (title, []))[1].append((rep.passed, text, rep.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        title, parts = _ACCEPTANCE[k]
        ok = all(p for p, _, _ in parts)
        secs = sum(s for _, _, s in parts)
        info = " | ".join(t for _, t, _ in parts if t)
        tr.write_line(f"criterion {k:>2} {'PASS' if ok else 'FAIL'}  {title} [{secs:.1f}s] {info}")
