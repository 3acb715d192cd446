"""Every acceptance criterion at its stated tolerance and shipped seed.

Each test prints a single ``[PASS]``/``[FAIL]`` line; the lines are repeated
together in the terminal summary.
"""
import pytest

from stochavg.acceptance import CRITERIA, run_criterion


@pytest.mark.slow
@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, acceptance_log, capsys):
    res = run_criterion(k)
    line = res.line()
    acceptance_log.append(line)
    with capsys.disabled():
        print(f"\n{line}")
    if not res.passed:
        pytest.fail(line, pytrace=False)
