"""The sixteen acceptance criteria, each at its stated tolerance.

The suite runs once per session (see conftest.acceptance_run); every test reads its
criterion off that run and prints a one-line verdict.
"""

import pytest

from conftest import ACCEPTANCE_LINES, acceptance_scale
from simlab.suite import TITLES, format_line, run_suite, tree_digest

pytestmark = pytest.mark.slow


def _check(criterion, acceptance_run):
    _, results, verdicts = acceptance_run
    passed = verdicts[criterion]
    line = format_line(criterion, passed, results)
    ACCEPTANCE_LINES[criterion] = (passed, line)
    print(line)
    if not passed:
        failing = [f"{e.label}/{r.name}: {r.estimate:.4g} ({r.rule} {r.tolerance if r.tolerance is not None else ''})"
                   for e, res in results if e.criterion == criterion for r in res.rows
                   if r.role == "criterion" and not r.passed]
        pytest.fail("; ".join(failing))


@pytest.mark.parametrize("criterion", range(1, 16), ids=lambda c: f"{c:02d}_{TITLES[c].replace(' ', '_')}")
def test_criterion(criterion, acceptance_run):
    _check(criterion, acceptance_run)


def test_16_determinism(acceptance_run, tmp_path):
    # same seed, two workers instead of one: the output tree must match byte for byte
    first, _, _ = acceptance_run
    run_suite(tmp_path / "workers2", scale=acceptance_scale(), workers=2, skip=(16,), quiet=True)
    a, b = tree_digest(first), tree_digest(tmp_path / "workers2")
    passed = a == b
    line = f"[{'PASS' if passed else 'FAIL'}] 16 {TITLES[16]}: sha256 {a[:12]} / {b[:12]}"
    ACCEPTANCE_LINES[16] = (passed, line)
    print(line)
    assert passed
