import re

import pytest

from proofchannels.channel import Status, check_invariants
from proofchannels.ledger import BAR
from proofchannels.peer import Harness, ProofBlob, ProofOracle, verify_proof
from proofchannels.peer import messages as m
from proofchannels.peer.harness import Fault
from proofchannels.peer.policies import Honest, make_policy
from proofchannels.scenario import Runner, load_scenario, parse_scenario, run_scenario
from proofchannels.script import PropositionId

LOG_LINE = re.compile(r"^step=\d+ height=\d+ actor=[\w-]+ event=\w+ detail=([\w.]+=[^,]*(,[\w.]+=[^,]*)*)?$")


def two_party(steps: str, alice: str = "policy = honest", bob: str = "policy = honest",
              head: str = "") -> str:
    return f"""
[scenario]
name = inline
{head}

[actor alice]
faucet = 100
{alice}

[actor bob]
faucet = 100
{bob}

[channel ab]
a = alice
b = bob
contrib_a = 100
contrib_b = 100
csv_delay = 48

[prop P]
provable = yes

[script]
steps =
{steps}
"""


def runner_for(steps: str, **kw) -> Runner:
    r = Runner(parse_scenario(two_party(steps, **kw)))
    r.h.run()
    return r


BET = "    bet ab doubter=alice backer=bob doubter_stake=50 backer_stake=10 prop=P deadline=100"


def test_verify_proof_uses_the_oracle():
    oracle = ProofOracle()
    p, q = PropositionId.from_label("P"), PropositionId.from_label("Q")
    blob = oracle.add(p, b"proof")
    assert verify_proof(blob, oracle)
    assert not verify_proof(ProofBlob(p, b"proof!"), oracle)
    assert not verify_proof(ProofBlob(q, b"proof"), oracle)


@pytest.mark.parametrize("name", ["bet-settle-cooperative", "breach-punish", "three-party-hedge-proof"])
def test_same_seed_same_log(name):
    one = run_scenario(load_scenario(name))
    two = run_scenario(load_scenario(name))
    assert one.log_text == two.log_text
    assert all(LOG_LINE.match(line) for line in one.log), [x for x in one.log if not LOG_LINE.match(x)][:3]


def test_every_log_line_uses_the_stable_format():
    report = run_scenario(load_scenario("route-payment"))
    bad = [line for line in report.log if not LOG_LINE.match(line)]
    assert not bad


def test_open_then_update_handshake_events():
    r = runner_for("    open ab\n    advance 1\n    pay ab from=alice amount=0.1")
    assert r.h.state("alice", "ab").status == Status.OPEN
    assert r.h.state("bob", "ab").contents.balance_b == 100 * BAR + BAR // 10
    start = max(i for i, x in enumerate(r.h.log) if "verb=pay" in x)
    sent = [(x.split()[2][6:], re.search(r"kind=(\w+)", x).group(1))
            for x in r.h.log[start:] if "event=send" in x]
    # propose, accept, cross-sign, then revoke
    assert sent == [("alice", "PayReq"), ("bob", "PayAck"), ("bob", "CommitSig"),
                    ("alice", "CommitSig"), ("alice", "RevokeAck"), ("bob", "RevokeAck")]


def test_bet_handshake_leaves_matching_pending_state():
    r = Runner(parse_scenario(two_party("    open ab\n    advance 1\n" + BET, head="resolve = no")))
    h = r.h
    while not any("recv" in x and "BetAccept" in x for x in h.log):
        h.step()
    a, b = h.state("alice", "ab"), h.state("bob", "ab")
    assert a.pending is not None and b.pending is not None
    assert a.pending.contents == b.pending.contents
    h.run()
    assert a.contents.bets == b.contents.bets and len(a.contents.bets) == 1


def test_dropped_revocation_leaves_two_live_revisions():
    r = runner_for("    open ab\n    advance 1\n    fault drop RevokeAck count=all\n    pay ab from=alice amount=20",
                   head="resolve = no")
    a, b = r.h.state("alice", "ab"), r.h.state("bob", "ab")
    assert a.live_revisions() == [1, 2]
    assert b.live_revisions() == [1, 2]
    # the dual-live state is legitimate, not an invariant violation
    assert not check_invariants(a) and not check_invariants(b)


def test_drop_of_revocation_resolves_on_chain():
    report = run_scenario(load_scenario("revoke-drop"))
    assert report.ok
    assert report.holdings == {"alice": 80 * BAR, "bob": 120 * BAR}


def test_silenced_doubter_forces_backer_on_chain():
    report = run_scenario(load_scenario("bet-onchain-backer"))
    assert report.ok
    assert report.holdings == {"alice": 50 * BAR, "bob": 150 * BAR}
    events = [x for x in report.log if "actor=bob" in x]
    assert any("event=close_unilateral" in x for x in events)
    assert any("event=register_proof" in x for x in events)


def test_silence_after_reveal_triggers_close_and_registration():
    steps = "\n".join([
        "    open ab", "    advance 1", BET, "    advance to=80",
        "    fault drop SettleReq count=all", "    obtain bob P",
        "    fault silence alice until=400", "    drain",
    ])
    r = runner_for(steps)
    log = r.h.log
    revealed = next(i for i, x in enumerate(log) if "kind=ProofReveal" in x and "event=recv" in x)
    after = log[revealed:]
    assert any("actor=bob event=close_unilateral" in x for x in after)
    assert any("actor=bob event=register_proof" in x for x in after)
    assert r.h.holdings("bob") == 150 * BAR


def test_cooperative_settle_uses_no_extra_chain_transactions():
    steps = "\n".join(["    open ab", "    advance 1", BET, "    advance to=90", "    obtain bob P", "    advance 2"])
    r = runner_for(steps, head="resolve = no")
    assert len(r.h.chain.txs) == 1
    st = r.h.state("alice", "ab")
    assert (st.contents.balance_a, st.contents.balance_b) == (50 * BAR, 150 * BAR)


def test_doubter_claims_timeout_settlement_at_deadline():
    steps = "\n".join(["    open ab", "    advance 1", BET, "    advance to=101"])
    r = runner_for(steps, head="resolve = no")
    st = r.h.state("bob", "ab")
    assert (st.contents.balance_a, st.contents.balance_b) == (110 * BAR, 90 * BAR)
    assert len(r.h.chain.txs) == 1


def test_cheater_is_punished():
    report = run_scenario(load_scenario("breach-punish"))
    assert report.holdings == {"alice": 0, "bob": 200 * BAR}
    assert any("event=punish" in x or "what=punish" in x for x in report.log)


def test_out_of_sequence_message_is_ignored():
    r = runner_for("    open ab\n    advance 1")
    h = r.h
    before = h.state("bob", "ab").contents
    forged = m.Envelope("alice", "bob", 1, m.PayReq("ab", 2, 0, 200 * BAR, h.state("alice", "ab").lock_for(
        h.actors["alice"].address, 1)))
    h.queue.append(forged)
    h.run_until_quiet()
    assert h.log[-1].endswith("reason=sequence")
    assert h.state("bob", "ab").contents == before


def test_silence_window_ends():
    h = Harness(seed=1)
    h.add_actor("alice", Honest(), 10 * BAR)
    h.add_fault(Fault("silence", actor="alice", until=3))
    assert h.is_silent("alice")
    h.advance(3)
    assert not h.is_silent("alice")


def test_make_policy_rejects_unknown_names_and_values():
    with pytest.raises(ValueError):
        make_policy("gambler")
    with pytest.raises(ValueError):
        make_policy("honest", late_proof="sometimes")


def test_withholder_never_reveals_and_claims_on_chain():
    steps = "\n".join(["    open ab", "    advance 1", BET, "    advance to=50", "    obtain bob P", "    drain"])
    r = runner_for(steps, bob="policy = withholder")
    assert not any("kind=ProofReveal" in x for x in r.h.log)
    assert any("actor=bob event=register_proof" in x for x in r.h.log)
    assert r.h.holdings("bob") == 150 * BAR
    assert r.h.holdings("alice") == 50 * BAR


def test_backer_enforces_bet_stuck_in_pending_update():
    # bob never sees alice's revocation, so the bet lives only in a half-finished update
    steps = "\n".join([
        "    open ab", "    advance 1", "    obtain bob P", "    fault drop RevokeAck count=1",
        "    bet ab doubter=alice backer=bob doubter_stake=0 backer_stake=1 prop=P deadline=8",
        "    drain",
    ])
    r = runner_for(steps, bob="policy = honest\npatience = 20")
    assert r.h.state("bob", "ab").pending is not None or r.h.state("bob", "ab").status.closed
    closes = [x for x in r.h.log if "actor=bob event=close_unilateral" in x]
    assert closes and "reason=deadline" in closes[0]
    assert r.h.holdings("bob") == 100 * BAR
