import os

import pytest

# criterion -> (passed, line); filled by tests/test_acceptance.py and printed at the end of the run
ACCEPTANCE_LINES: dict[int, tuple[bool, str]] = {}


def acceptance_scale() -> float:
    """SIMLAB_ACCEPTANCE_SCALE < 1 shrinks the replica counts for a quick look; 1 is the real check."""
    return float(os.environ.get("SIMLAB_ACCEPTANCE_SCALE", "1.0"))


@pytest.fixture(scope="session")
def acceptance_run(tmp_path_factory):
    from simlab.suite import run_suite

    out = tmp_path_factory.mktemp("acceptance") / "workers1"
    results, verdicts = run_suite(out, scale=acceptance_scale(), workers=1, skip=(16,), quiet=True)
    return out, results, verdicts


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for c in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[c][1])
    passed = sum(ok for ok, _ in ACCEPTANCE_LINES.values())
    terminalreporter.write_line(f"{passed}/{len(ACCEPTANCE_LINES)} criteria passed")
