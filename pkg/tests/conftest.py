import sys
from pathlib import Path

# Make tests/helpers.py importable regardless of how pytest was invoked.
sys.path.insert(0, str(Path(__file__).parent))

# Verdict lines recorded by the acceptance tests; replayed after the run so
# they stay visible even though capture swallows in-test printing.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
