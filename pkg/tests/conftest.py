import os
import sys

import pytest
from hypothesis import settings

sys.path.insert(0, os.path.dirname(__file__))

# fixed example generation by default; HYPOTHESIS_PROFILE=random explores
settings.register_profile("fixed", derandomize=True)
settings.register_profile("random")
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "fixed"))


def pytest_addoption(parser):
    parser.addoption("--run-network", action="store_true", default=False,
                     help="run tests that download the OPUS EMEA corpus")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-network") or os.environ.get("MTSMT_NETWORK") == "1":
        return
    skip = pytest.mark.skip(reason="network test; pass --run-network or set MTSMT_NETWORK=1")
    for item in items:
        if "network" in item.keywords:
            item.add_marker(skip)


def pytest_configure(config):
    config.acceptance_lines = []


@pytest.fixture
def criterion(request):
    """``criterion(label, ok, detail)`` records an acceptance line and
    returns ``ok`` so the test can assert on it."""
    def record(label, ok, detail=""):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {label}" + (f": {detail}" if detail else "")
        request.config.acceptance_lines.append(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter, config):
    if config.acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in config.acceptance_lines:
            terminalreporter.write_line(line)
