from copy import deepcopy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from channel_kit import ALICE, BOB, P, Q, alice_key, counter_secrets, open_pair, outputs_view
from proofchannels.channel import (
    ActiveBetsRemain,
    BalanceMismatch,
    Bet,
    ChannelParams,
    ChannelState,
    DeadlineInPast,
    Handshake,
    HostageRisk,
    InsufficientBalance,
    NoSuchBet,
    Pay,
    Status,
    add_bet,
    build_commitment,
    build_funding_tx,
    check_invariants,
    claim_bet_onchain,
    claimable_now,
    close_cooperative,
    close_unilateral,
    punish,
    select_inputs,
    settle_bet,
    update_balance,
)
from proofchannels.ledger import BAR, DoubleSpend, bars, new_chain
from proofchannels.script import (
    Htlc,
    PayToAddr,
    PropositionNotProven,
    Ptlc,
    Secret,
    TimeoutNotReached,
    hash_secret,
)

T = 100


def lock(tag: bytes, n: int):
    """Hash lock of the n-th secret drawn by the party seeded with ``tag``."""
    gen = counter_secrets(tag)
    for _ in range(n - 1):
        gen()
    return hash_secret(Secret(gen()))


def bet_50_10(deadline=T):
    return Bet(P, 50 * BAR, 10 * BAR, deadline, backer=BOB, doubter=ALICE)


def view(*pairs):
    return {(amount * BAR, str(script)) for amount, script in pairs}


def test_initial_commitment_outputs():
    pair = open_pair()
    assert pair.a.status == pair.b.status == Status.OPEN
    ha, hb = lock(b"A", 1), lock(b"B", 1)
    assert outputs_view(build_commitment(pair.a, ALICE)) == view(
        (100, Htlc(ha, BOB, 48, PayToAddr(ALICE))), (100, PayToAddr(BOB)))
    assert outputs_view(build_commitment(pair.b, BOB)) == view(
        (100, PayToAddr(ALICE)), (100, Htlc(hb, ALICE, 48, PayToAddr(BOB))))


def test_funding_signed_before_cross_signatures_is_hostage_risk():
    chain = new_chain()
    chain.faucet(ALICE, 100 * BAR)
    chain.faucet(BOB, 100 * BAR)
    params = ChannelParams(ALICE, BOB, 100 * BAR, 100 * BAR)
    funding = build_funding_tx(params, select_inputs(chain, ALICE, 100 * BAR), select_inputs(chain, BOB, 100 * BAR))
    state = ChannelState(params, alice_key)
    state.set_funding(funding)
    with pytest.raises(HostageRisk):
        state.sign_funding(funding, chain)


def test_bet_commitment_outputs():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10(), height=pair.chain.height)
    ha, hb = lock(b"A", 2), lock(b"B", 2)
    ptlc = Ptlc(P, BOB, T + 48, ALICE)
    assert outputs_view(build_commitment(pair.a, ALICE)) == view(
        (50, Htlc(ha, BOB, 48, PayToAddr(ALICE))), (90, PayToAddr(BOB)), (60, Htlc(ha, BOB, 48, ptlc)))
    assert outputs_view(build_commitment(pair.b, BOB)) == view(
        (50, PayToAddr(ALICE)), (90, Htlc(hb, ALICE, 48, PayToAddr(BOB))), (60, Htlc(hb, ALICE, 48, ptlc)))


def test_ptlc_timeout_follows_csv_parameter():
    pair = open_pair(csv=6)
    add_bet(pair.a, pair.b, bet_50_10())
    bet_out = [o for o in build_commitment(pair.a, ALICE).outputs if o.amount == 60 * BAR][0]
    assert bet_out.script.inner.timeout == T + 6


def test_payment_update_and_errors():
    pair = open_pair()
    update_balance(pair.a, pair.b, bars("99.9"), bars("100.1"))
    assert (pair.a.contents.balance_a, pair.a.contents.balance_b) == (bars("99.9"), bars("100.1"))
    assert pair.a.revision == pair.b.revision == 2
    with pytest.raises(BalanceMismatch):
        update_balance(pair.a, pair.b, 100 * BAR, 100 * BAR + 1)
    # replaying a revocation is harmless
    rev, secret = pair.a.revoke_previous()
    pair.b.receive_revocation(rev, secret)
    assert not check_invariants(pair.a) and not check_invariants(pair.b)


def test_bet_rejections():
    pair = open_pair()
    with pytest.raises(InsufficientBalance):
        add_bet(pair.a, pair.b, Bet(P, 150 * BAR, 10 * BAR, T, BOB, ALICE))
    pair.chain.advance_blocks(10)
    with pytest.raises(DeadlineInPast):
        add_bet(pair.a, pair.b, bet_50_10(deadline=5), height=pair.chain.height)


def test_two_bets_give_four_outputs():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    add_bet(pair.a, pair.b, Bet(Q, 5 * BAR, 5 * BAR, T, backer=ALICE, doubter=BOB))
    outs = build_commitment(pair.b, BOB).outputs
    assert len(outs) == 4
    assert sum(o.amount for o in outs) == 200 * BAR


@pytest.mark.parametrize("winner,expected", [(BOB, (50, 150)), (ALICE, (110, 90))])
def test_cooperative_settlements(winner, expected):
    pair = open_pair()
    bet = bet_50_10()
    add_bet(pair.a, pair.b, bet)
    settle_bet(pair.a, pair.b, bet, winner)
    assert (pair.a.contents.balance_a, pair.a.contents.balance_b) == tuple(x * BAR for x in expected)
    with pytest.raises(NoSuchBet):
        settle_bet(pair.a, pair.b, bet, winner)
    tx = close_cooperative(pair.a, pair.b)
    assert outputs_view(tx) == view((expected[0], PayToAddr(ALICE)), (expected[1], PayToAddr(BOB)))
    pair.chain.submit_tx(tx)
    pair.chain.advance_blocks(1)
    assert pair.chain.holdings(ALICE) == expected[0] * BAR


def test_cooperative_close_refused_with_active_bet():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    with pytest.raises(ActiveBetsRemain):
        close_cooperative(pair.a, pair.b)


def claim_all(state, chain, commitment):
    total = 0
    for claim in claimable_now(state, chain, commitment):
        chain.submit_tx(claim)
        total += claim.total_out
    return total


def test_backer_unilateral_claim_gets_150():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    tx = close_unilateral(pair.b)
    pair.chain.submit_tx(tx)
    pair.chain.register_proof(P)
    pair.chain.advance_blocks(1)
    pair.chain.advance_blocks(47)
    assert claim_all(pair.b, pair.chain, tx) == 150 * BAR
    pair.chain.advance_blocks(1)
    assert pair.chain.holdings(BOB) == 150 * BAR
    assert pair.chain.holdings(ALICE) == 50 * BAR


def test_doubter_unilateral_claim_gets_110():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    pair.chain.advance_blocks(T - pair.chain.height)
    tx = close_unilateral(pair.a)
    pair.chain.submit_tx(tx)
    pair.chain.advance_blocks(48)
    assert claim_all(pair.a, pair.chain, tx) == 110 * BAR
    pair.chain.advance_blocks(1)
    assert pair.chain.holdings(ALICE) == 110 * BAR
    assert pair.chain.holdings(BOB) == 90 * BAR


def test_breach_is_punished_with_full_capacity():
    pair = open_pair()
    bet = bet_50_10()
    add_bet(pair.a, pair.b, bet)
    settle_bet(pair.a, pair.b, bet, BOB)
    stale = close_unilateral(pair.a, revision=2)
    assert pair.a.status == Status.BREACHED
    pair.chain.submit_tx(stale)
    pair.chain.advance_blocks(1)
    sweep_tx = punish(pair.b, stale, pair.chain)
    assert sweep_tx is not None and sweep_tx.total_out == 110 * BAR
    pair.chain.submit_tx(sweep_tx)
    pair.chain.advance_blocks(1)
    assert pair.chain.holdings(BOB) == 200 * BAR
    assert pair.chain.holdings(ALICE) == 0


def test_punish_returns_none_for_latest_commitment():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    tx = close_unilateral(pair.a)
    pair.chain.submit_tx(tx)
    pair.chain.advance_blocks(1)
    assert punish(pair.b, tx, pair.chain) is None


def test_offline_watcher_loses_race_to_delay_branch():
    pair = open_pair(csv=4)
    update_balance(pair.a, pair.b, 150 * BAR, 50 * BAR)
    update_balance(pair.a, pair.b, 20 * BAR, 180 * BAR)
    stale = close_unilateral(pair.a, revision=2)
    pair.chain.submit_tx(stale)
    pair.chain.advance_blocks(4)
    late = punish(pair.b, stale, pair.chain)
    assert claim_all(pair.a, pair.chain, stale) == 150 * BAR
    with pytest.raises(DoubleSpend):
        pair.chain.submit_tx(late)


def test_every_revoked_revision_is_sweepable():
    pair = open_pair()
    bet = bet_50_10()
    add_bet(pair.a, pair.b, bet)
    update_balance(pair.a, pair.b, 40 * BAR, 100 * BAR)
    settle_bet(pair.a, pair.b, bet, ALICE)
    for rev in range(1, pair.a.revision):
        chain_copy = deepcopy(pair.chain)
        stale = close_unilateral(deepcopy(pair.a), revision=rev)
        chain_copy.submit_tx(stale)
        chain_copy.advance_blocks(1)
        sweep_tx = punish(deepcopy(pair.b), stale, chain_copy)
        assert sweep_tx is not None, rev
        chain_copy.submit_tx(sweep_tx)


def test_mid_handshake_abort_leaves_two_unpunishable_revisions():
    pair = open_pair()
    hs = Handshake(pair.a, pair.b, Pay(90 * BAR, 110 * BAR))
    hs.propose()
    hs.exchange_signatures()
    assert pair.a.live_revisions() == [1, 2]
    for rev in (1, 2):
        for publisher, watcher in ((pair.a, pair.b), (pair.b, pair.a)):
            chain = deepcopy(pair.chain)
            tx = close_unilateral(deepcopy(publisher), revision=rev)
            chain.submit_tx(tx)
            chain.advance_blocks(1)
            assert punish(deepcopy(watcher), tx, chain) is None
            pub, wat = deepcopy(publisher), deepcopy(watcher)
            chain.advance_blocks(48)
            claim_all(pub, chain, tx)
            claim_all(wat, chain, tx)
            chain.advance_blocks(1)
            assert chain.holdings(ALICE) + chain.holdings(BOB) == 200 * BAR


def test_race_window_both_branches_valid_first_wins():
    for first in (ALICE, BOB):
        pair = open_pair()
        add_bet(pair.a, pair.b, bet_50_10())
        pair.chain.advance_blocks(T - pair.chain.height)
        tx = close_unilateral(pair.a)
        pair.chain.submit_tx(tx)
        pair.chain.advance_blocks(1)
        pair.chain.register_proof(P)
        pair.chain.advance_blocks(T + 48 - pair.chain.height)
        bet_op = next(tx.outpoint(i) for i, o in enumerate(tx.outputs) if o.amount == 60 * BAR)
        by_alice = claim_bet_onchain(pair.a, pair.chain, bet_op)
        by_bob = claim_bet_onchain(pair.b, pair.chain, bet_op)
        order = (by_alice, by_bob) if first == ALICE else (by_bob, by_alice)
        pair.chain.submit_tx(order[0])
        with pytest.raises(DoubleSpend):
            pair.chain.submit_tx(order[1])
        pair.chain.advance_blocks(1)
        assert pair.chain.holdings(first) >= 60 * BAR


def test_bet_claim_errors_propagate():
    pair = open_pair()
    add_bet(pair.a, pair.b, bet_50_10())
    tx = close_unilateral(pair.b)
    pair.chain.submit_tx(tx)
    pair.chain.advance_blocks(48)
    bet_op = next(tx.outpoint(i) for i, o in enumerate(tx.outputs) if o.amount == 60 * BAR)
    with pytest.raises(PropositionNotProven):
        claim_bet_onchain(pair.b, pair.chain, bet_op)
    with pytest.raises(TimeoutNotReached):
        claim_bet_onchain(pair.a, pair.chain, bet_op)


@settings(max_examples=25, deadline=None)
@given(
    pays=st.lists(st.integers(-30, 30), max_size=4),
    stakes=st.tuples(st.integers(0, 20), st.integers(0, 20)),
    proven=st.booleans(),
    publisher=st.sampled_from(["a", "b"]),
    cheat=st.booleans(),
)
def test_every_close_path_conserves_capacity(pays, stakes, proven, publisher, cheat):
    pair = open_pair(csv=3)
    bal = 100
    for d in pays:
        if 0 <= bal + d <= 200:
            bal += d
            update_balance(pair.a, pair.b, bal * BAR, (200 - bal) * BAR)
    ds, bs = stakes
    if ds + bs and ds <= bal and bs <= 200 - bal:
        add_bet(pair.a, pair.b, Bet(P, ds * BAR, bs * BAR, 10, backer=BOB, doubter=ALICE))
    pub, watcher = (pair.a, pair.b) if publisher == "a" else (pair.b, pair.a)
    rev = 1 if cheat and pub.revision > 1 else None
    tx = close_unilateral(pub, revision=rev)
    pair.chain.submit_tx(tx)
    if proven:
        pair.chain.register_proof(P)
    pair.chain.advance_blocks(1)
    sweep_tx = punish(watcher, tx, pair.chain)
    if sweep_tx is not None:
        pair.chain.submit_tx(sweep_tx)
    for _ in range(20):
        pair.chain.advance_blocks(1)
        claim_all(watcher, pair.chain, tx)
        claim_all(pub, pair.chain, tx)
    pair.chain.advance_blocks(1)
    assert pair.chain.holdings(ALICE) + pair.chain.holdings(BOB) == 200 * BAR
