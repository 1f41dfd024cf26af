import pytest

# criterion number -> [(passed, detail)] from every test tagged with it
_criteria: dict[int, list[tuple[bool, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        crash = getattr(rep.longrepr, "reprcrash", None)
        first = crash.message.splitlines()[0] if crash and crash.message else "error"
        detail = f"{detail}; {first}" if detail else first
    _criteria.setdefault(mark.args[0], []).append((not rep.failed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        parts = _criteria[n]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        tr.write_line(f"criterion {n:2d}: {status}  " + " | ".join(d for _, d in parts if d))
