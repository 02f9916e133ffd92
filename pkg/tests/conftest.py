import pytest

_RESULTS: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    num = mark.args[0]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        _RESULTS[num] = ("PASS" if rep.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        status, detail = _RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {status}" + (f"  [{detail}]" if detail else ""))
