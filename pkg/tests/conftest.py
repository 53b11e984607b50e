import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

import scenarios  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not scenarios.ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(scenarios.ACCEPTANCE_LINES.items()):
        terminalreporter.write_line(line)
