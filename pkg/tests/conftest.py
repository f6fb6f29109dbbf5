import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netlqr.model import scalar_instance  # noqa: E402

_criteria: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(num, title, tolerance): acceptance criterion")


def pytest_runtest_makereport(item, call):
    m = item.get_closest_marker("criterion")
    if m is None or call.when not in ("setup", "call"):
        return
    num, title, tol = m.args
    rec = _criteria.setdefault(item.nodeid, {"num": num, "title": title, "tol": tol, "ok": True})
    if call.excinfo is not None:
        rec["ok"] = False
    rec["detail"] = "; ".join(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for rec in sorted(_criteria.values(), key=lambda r: r["num"]):
        verdict = "PASS" if rec["ok"] else "FAIL"
        line = f"[{verdict}] criterion {rec['num']:>2}: {rec['title']} (tolerance {rec['tol']})"
        if rec.get("detail"):
            line += f" :: {rec['detail']}"
        tr.write_line(line)


@pytest.fixture
def scalar():
    return scalar_instance()

