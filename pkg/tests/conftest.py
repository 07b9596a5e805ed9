import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def gate(request):
    """Record a PASS/FAIL line for an acceptance criterion; ``gate(n, name, limit_s)`` returns a timer."""
    import time

    class Gate:
        def __init__(self):
            self.label = None
            self.start = time.perf_counter()

        def __call__(self, n, name, limit_s):
            self.label = (n, name, limit_s)
            self.start = time.perf_counter()
            return self

        def elapsed(self):
            return time.perf_counter() - self.start

    g = Gate()
    yield g
    if g.label is None:
        return
    n, name, limit_s = g.label
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    ACCEPTANCE_LINES.append((n, f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {name}  "
                                f"({g.elapsed():.1f} s, limit {limit_s} s)"))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
