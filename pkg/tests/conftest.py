"""Collects ``@pytest.mark.criterion(n, title)`` outcomes and prints one line each."""
import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    n, title = marker.args
    entry = _RESULTS.setdefault(n, {"title": title, "ok": True, "ran": False, "detail": []})
    if rep.when == "call":
        entry["ran"] = not rep.skipped
        entry["detail"] += [str(v) for k, v in item.user_properties if k == "detail"]
    if rep.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for n in sorted(_RESULTS):
        e = _RESULTS[n]
        verdict = "SKIP" if not e["ran"] and e["ok"] else ("PASS" if e["ok"] else "FAIL")
        detail = "; ".join(e["detail"])
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  {e['title']}"
                                    + (f"  [{detail}]" if detail else ""))
