"""Direct two-party channel setups without the message harness."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from proofchannels.channel import ChannelParams, ChannelState, open_channel
from proofchannels.ledger import BAR, ChainState, Transaction, new_chain
from proofchannels.script import PropositionId, keygen

alice_key, ALICE = keygen("alice")
bob_key, BOB = keygen("bob")
P = PropositionId.from_label("P")
Q = PropositionId.from_label("Q")


def counter_secrets(tag: bytes):
    n = itertools.count(1)
    return lambda: tag + next(n).to_bytes(32 - len(tag), "big")


@dataclass
class Pair:
    chain: ChainState
    a: ChannelState
    b: ChannelState
    funding: Transaction


def open_pair(contrib_a: int = 100 * BAR, contrib_b: int = 100 * BAR, csv: int = 48) -> Pair:
    chain = new_chain()
    chain.faucet(ALICE, contrib_a or 1)
    chain.faucet(BOB, contrib_b or 1)
    params = ChannelParams(ALICE, BOB, contrib_a, contrib_b, csv)
    res = open_channel(params, alice_key, bob_key, chain, counter_secrets(b"A"), counter_secrets(b"B"))
    chain.advance_blocks(1)
    res.state_a.refresh(chain)
    res.state_b.refresh(chain)
    return Pair(chain, res.state_a, res.state_b, res.funding_tx)


def outputs_view(template_or_tx) -> set[tuple[int, str]]:
    return {(o.amount, str(o.script)) for o in template_or_tx.outputs}
