import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from proofchannels.ledger import (
    BAR,
    DoubleSpend,
    TxOutput,
    Transaction,
    UnknownOutpoint,
    ValueCreated,
    ZeroAmount,
    audit,
    bars,
    format_bars,
    new_chain,
)
from proofchannels.script import (
    DelayBranch,
    DelayNotElapsed,
    Htlc,
    MissingSignature,
    Multisig2,
    PayToAddr,
    PropositionId,
    Secret,
    Sig2Witness,
    SigWitness,
    hash_secret,
    keygen,
)

alice_key, ALICE = keygen("alice")
bob_key, BOB = keygen("bob")
P = PropositionId.from_label("P")


def spend(chain, ops, outputs, witness_fn):
    body = Transaction.unsigned(ops, outputs)
    return body.with_witnesses(witness_fn(body.digest) for _ in ops)


def test_new_chain_is_empty():
    c = new_chain()
    assert c.height == 0 and not c.utxos and not c.is_proven(P)
    c.advance_blocks(5)
    assert c.height == 5


def test_faucet_creates_confirmed_output_and_rejects_zero():
    c = new_chain()
    op = c.faucet(ALICE, 100 * BAR)
    assert c.utxos[op].output == TxOutput(100 * BAR, PayToAddr(ALICE))
    assert c.confirmations(op) == 1
    with pytest.raises(ZeroAmount):
        c.faucet(ALICE, 0)


def test_funding_needs_both_signatures():
    c = new_chain()
    a, b = c.faucet(ALICE, 100 * BAR), c.faucet(BOB, 100 * BAR)
    body = Transaction.unsigned([a, b], [TxOutput(200 * BAR, Multisig2(ALICE, BOB))])
    ok = body.with_witnesses([SigWitness(alice_key.sign(body.digest)), SigWitness(bob_key.sign(body.digest))])
    half = body.with_witnesses([SigWitness(alice_key.sign(body.digest)), SigWitness(None)])
    with pytest.raises(MissingSignature):
        c.submit_tx(half)
    c.submit_tx(ok)
    c.advance_blocks(1)
    assert c.live_total == 200 * BAR
    assert not audit(c)

    # spending the multisig with one signature fails the same way
    fund = ok.outpoint(0)
    out = Transaction.unsigned([fund], [TxOutput(200 * BAR, PayToAddr(ALICE))])
    with pytest.raises(MissingSignature):
        c.submit_tx(out.with_witnesses([Sig2Witness(alice_key.sign(out.digest), None)]))


def test_delay_branch_one_confirmation_short():
    c = new_chain()
    src = c.faucet(ALICE, 10)
    lock = hash_secret(Secret(bytes(32)))
    tx = spend(c, [src], [TxOutput(10, Htlc(lock, BOB, 48, PayToAddr(ALICE)))],
               lambda d: SigWitness(alice_key.sign(d)))
    c.submit_tx(tx)
    c.advance_blocks(1)
    c.advance_blocks(46)
    assert c.confirmations(tx.outpoint(0)) == 47
    claim = spend(c, [tx.outpoint(0)], [TxOutput(10, PayToAddr(ALICE))],
                  lambda d: DelayBranch(SigWitness(alice_key.sign(d))))
    with pytest.raises(DelayNotElapsed):
        c.submit_tx(claim)
    c.advance_blocks(1)
    c.submit_tx(claim)


def test_confirmation_arithmetic():
    c = new_chain()
    c.advance_blocks(10)
    src = c.faucet(ALICE, 5)
    tx = spend(c, [src], [TxOutput(5, PayToAddr(BOB))], lambda d: SigWitness(alice_key.sign(d)))
    c.submit_tx(tx)
    c.advance_blocks(48)
    # created in block 11; height 58 gives 58 - 11 + 1
    assert c.height == 58
    assert c.confirmations(tx.outpoint(0)) == 48


def test_rejections():
    c = new_chain()
    src = c.faucet(ALICE, 5)
    sign_a = lambda d: SigWitness(alice_key.sign(d))  # noqa: E731
    with pytest.raises(ValueCreated):
        c.submit_tx(spend(c, [src], [TxOutput(6, PayToAddr(BOB))], sign_a))
    first = spend(c, [src], [TxOutput(5, PayToAddr(BOB))], sign_a)
    c.submit_tx(first)
    with pytest.raises(DoubleSpend):
        c.submit_tx(spend(c, [src], [TxOutput(4, PayToAddr(BOB))], sign_a))
    c.advance_blocks(1)
    with pytest.raises(UnknownOutpoint):
        c.submit_tx(spend(c, [first.outpoint(3)], [TxOutput(1, PayToAddr(BOB))], sign_a))
    with pytest.raises(ValueError):
        c.advance_blocks(0)


def test_earlier_submission_wins_a_race():
    c = new_chain()
    src = c.faucet(ALICE, 5)
    sign_a = lambda d: SigWitness(alice_key.sign(d))  # noqa: E731
    one = spend(c, [src], [TxOutput(5, PayToAddr(BOB))], sign_a)
    two = spend(c, [src], [TxOutput(5, PayToAddr(ALICE))], sign_a)
    c.submit_tx(one)
    with pytest.raises(DoubleSpend):
        c.submit_tx(two)
    c.advance_blocks(1)
    assert c.holdings(BOB) == 5 and c.holdings(ALICE) == 0


def test_proof_registry():
    c = new_chain()
    c.register_proof(P)
    assert not c.is_proven(P)
    c.advance_blocks(1)
    assert c.is_proven(P) and c.proven[P] == 1
    c.register_proof(P)
    c.advance_blocks(3)
    assert c.proven[P] == 1
    q = PropositionId.from_label("Q")
    assert not c.is_proven(q)


@pytest.mark.parametrize("text,atoms", [("100", 100 * BAR), ("0.1", BAR // 10), ("1.00000001", BAR + 1)])
def test_bar_parsing(text, atoms):
    assert bars(text) == atoms
    assert format_bars(atoms) == text


def test_bar_parsing_rejects_sub_atom_amounts():
    with pytest.raises(ValueError):
        bars("0.000000001")
    with pytest.raises(ValueError):
        bars("-1")


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 10**9), st.integers(0, 3), st.booleans()), min_size=1, max_size=12))
def test_random_transfers_conserve_value(moves):
    c = new_chain()
    keys = [keygen(f"k{i}") for i in range(4)]
    for amount, who, _ in moves:
        c.faucet(keys[who][1], amount)
    for amount, who, split in moves:
        priv, addr = keys[who]
        ops = c.utxos_of(addr)
        if not ops:
            continue
        op = ops[0]
        value = c.utxos[op].output.amount
        dest = keys[(who + 1) % 4][1]
        outs = [TxOutput(value, PayToAddr(dest))]
        if split and value > 1:
            outs = [TxOutput(value // 2, PayToAddr(dest)), TxOutput(value - value // 2, PayToAddr(addr))]
        c.submit_tx(spend(c, [op], outs, lambda d, k=priv: SigWitness(k.sign(d))))
        c.advance_blocks(1)
    assert c.live_total + c.burned == c.minted
    assert not audit(c)
    assert all(c.confirmations(op) >= 1 for op in c.utxos)
