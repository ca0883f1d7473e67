from pathlib import Path

import pytest

from proofchannels.ledger import BAR
from proofchannels.scenario import (
    ScenarioError,
    builtin_names,
    load_scenario,
    parse_scenario,
    random_scenario,
    run_scenario,
)

FIXTURES = Path(__file__).parent / "fixtures"

MINIMAL = """
[scenario]
name = tiny

[actor alice]
faucet = 5

[actor bob]
faucet = 5

[channel ab]
a = alice
b = bob
contrib_a = 5
contrib_b = 5

[script]
steps =
    open ab
    advance 1
    pay ab from=alice amount=2
    close ab by=bob mode=cooperative
    advance 1

[expect]
alice = 3
bob = 7
"""


@pytest.mark.parametrize("name", builtin_names())
def test_builtin_matches_snapshot(name):
    report = run_scenario(load_scenario(f"builtin:{name}"))
    assert report.ok, [c for c in report.checks if not c.ok]
    assert report.render() == (FIXTURES / f"{name}.report").read_text()


def test_there_are_enough_builtins():
    assert len(builtin_names()) >= 14


def test_minimal_scenario_runs_and_checks_expectations():
    report = run_scenario(parse_scenario(MINIMAL))
    assert report.ok
    assert report.holdings == {"alice": 3 * BAR, "bob": 7 * BAR}
    assert [c.name for c in report.checks][-1] == "expected-holdings"


def test_wrong_expectation_is_reported():
    report = run_scenario(parse_scenario(MINIMAL.replace("alice = 3", "alice = 4")))
    assert not report.ok
    failed = [c for c in report.checks if not c.ok]
    assert [c.name for c in failed] == ["expected-holdings"]


def test_seed_override_is_recorded():
    s = load_scenario("builtin:open-close")
    assert run_scenario(s, seed=7).seed == 7
    assert run_scenario(s).seed == s.seed


@pytest.mark.parametrize("mutation,message", [
    (("open ab\n", ""), "used before open"),
    (("from=alice", "from=carol"), "unknown actor"),
    (("[actor bob]\nfaucet = 5", "[actor bob]\nfaucet = five"), "bad amount"),
    (("[script]", "[widgets]\n[script]"), "unknown section"),
    (("advance 1\n    pay", "advance 0\n    pay"), "k >= 1"),
    (("    advance 1\n\n[expect]", "    levitate\n\n[expect]"), "unknown directive"),
])
def test_invalid_scenarios_are_rejected(mutation, message):
    old, new = mutation
    assert old in MINIMAL
    with pytest.raises(ScenarioError, match=message):
        parse_scenario(MINIMAL.replace(old, new))


def test_unknown_policy_and_missing_head():
    with pytest.raises(ScenarioError, match="unknown policy"):
        parse_scenario(MINIMAL.replace("[actor bob]\n", "[actor bob]\npolicy = gambler\n"))
    with pytest.raises(ScenarioError, match=r"\[scenario\]"):
        parse_scenario("[actor a]\nfaucet = 1\n")
    with pytest.raises(ScenarioError, match="unknown builtin"):
        load_scenario("builtin:nope")


def test_random_scenarios_are_reproducible():
    one, two = random_scenario(42), random_scenario(42)
    assert [d.text for d in one.script] == [d.text for d in two.script]
    assert run_scenario(one).log_digest == run_scenario(two).log_digest
    assert [d.text for d in random_scenario(43).script] != [d.text for d in one.script]
