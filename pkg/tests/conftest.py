_ACCEPTANCE: dict[int, tuple[str, list[str]]] = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("acceptance")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo):
        return
    number, label = mark.args
    _, outcomes = _ACCEPTANCE.setdefault(number, (label, []))
    outcomes.append("passed" if call.excinfo is None else "failed")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        label, outcomes = _ACCEPTANCE[number]
        verdict = "PASS" if outcomes and all(o == "passed" for o in outcomes) else "FAIL"
        terminalreporter.write_line(f"{verdict}  {number:>2}. {label}")
