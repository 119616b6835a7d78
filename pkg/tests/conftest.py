import pytest

from petreg import default_scenario, run

# criterion number -> (passed, one-line detail); filled by test_acceptance.py
ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[num]
        terminalreporter.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def default_run():
    """The bundled 30 s benchmark, simulated once per session, with every
    trigger evaluation recorded."""
    trace = []
    log = run(default_scenario(), trace=lambda *rec: trace.append(rec))
    return log, trace


@pytest.fixture(scope="session")
def short_scenario():
    def make(t_end=2.0, **overrides):
        return default_scenario(engine__t_end=t_end, **overrides)
    return make
