import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_VERDICTS: dict[str, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(cid, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    cid, title = marker.args
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            verdict = "SKIP"
            detail = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
            detail = detail.removeprefix("Skipped: ")
        else:
            verdict = "PASS" if rep.passed else "FAIL"
            detail = dict(item.user_properties).get("detail", "")
        _VERDICTS[cid] = (verdict, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(_VERDICTS, key=lambda c: (int(c[1:].split("[")[0]), c)):
        verdict, title, detail = _VERDICTS[cid]
        tr.write_line(f"{verdict:<4}  {cid:<14} {title}" + (f"  [{detail}]" if detail else ""))
