import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")

ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance_report(request):
    """Callable ``(number, name, passed, detail)`` that logs one criterion line."""
    config = request.config
    lines = config.stash.setdefault(ACCEPTANCE, [])
    term = config.pluginmanager.get_plugin("terminalreporter")

    def report(number, name, passed, detail):
        line = f"criterion {number} {name}: {'PASS' if passed else 'FAIL'} ({detail})"
        lines.append(line)
        if term is not None:
            term.write_line("")
            term.write_line(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
