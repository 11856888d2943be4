import pytest

# criterion number -> printed line, filled by the acceptance tests
ACCEPTANCE = {}


@pytest.fixture
def acceptance(capsys):
    """Record and print one PASS/FAIL line for an acceptance criterion.

    ``checks`` is a list of ``(name, ok, detail)``; the criterion passes when
    every sub-check does.
    """
    def report(number, title, checks):
        ok = all(c[1] for c in checks)
        parts = "; ".join(f"{name} {'ok' if good else 'FAILED'} [{detail}]" for name, good, detail in checks)
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} :: {parts}"
        ACCEPTANCE[number] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
