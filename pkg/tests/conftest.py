import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        title, passed, detail = results[number]
        terminalreporter.write_line(
            f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {title}  ({detail})")
