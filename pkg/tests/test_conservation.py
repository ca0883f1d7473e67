"""Randomised end-to-end runs checked against ledger-level invariants."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofchannels.scenario import random_scenario, run_scenario

INVARIANTS = {"ledger-audit", "conservation", "channel-invariants", "resolved", "holdings-sum", "honest-safety"}


def test_reports_carry_every_invariant():
    report = run_scenario(random_scenario(0))
    assert INVARIANTS <= {c.name for c in report.checks}


@pytest.mark.parametrize("block", range(10))
def test_random_scenarios_hold_invariants(block):
    bad = {}
    for seed in range(block * 100, block * 100 + 100):
        report = run_scenario(random_scenario(seed))
        if not report.ok:
            bad[seed] = [f"{c.name}: {c.detail}" for c in report.checks if not c.ok]
    assert not bad


@settings(max_examples=40, deadline=None)
@given(st.integers(1000, 10**9))
def test_honest_runs_settle_everything(seed):
    s = random_scenario(seed)
    if "cheater" in {a.policy for a in s.actors.values()}:
        return
    report = run_scenario(s)
    assert report.ok
    # nothing stays open: every channel reached a closed status and every output was claimed
    assert all("Open" not in v for views in report.statuses.values() for v in views.values())
    assert sum(report.holdings.values()) == sum(sum(a.faucet) for a in s.actors.values())
