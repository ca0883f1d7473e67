"""Wire messages exchanged between channel parties."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union

from ..channel import (
    AddBet,
    AddHtlc,
    Bet,
    Change,
    ChannelParams,
    FailHtlc,
    FulfillHtlc,
    Pay,
    PaymentHtlc,
    SettleBet,
)
from ..ledger import OutPoint
from ..script import Address, HashLock, PropositionId, Secret, Sig, SigWitness


@dataclass(frozen=True)
class ProofBlob:
    prop: PropositionId
    payload: bytes


class ProofOracle:
    """Ground truth for proof validity: which payload proves which proposition."""

    def __init__(self):
        self._valid: dict[PropositionId, bytes] = {}

    def add(self, prop: PropositionId, payload: bytes) -> ProofBlob:
        self._valid[prop] = payload
        return ProofBlob(prop, payload)

    def blob_for(self, prop: PropositionId) -> Optional[ProofBlob]:
        payload = self._valid.get(prop)
        return None if payload is None else ProofBlob(prop, payload)

    def check(self, blob: ProofBlob) -> bool:
        return self._valid.get(blob.prop) == blob.payload


def verify_proof(blob: ProofBlob, oracle: ProofOracle) -> bool:
    return oracle.check(blob)


# -- opening ------------------------------------------------------------------


@dataclass(frozen=True)
class OpenReq:
    channel: str
    params: ChannelParams
    inputs: tuple[tuple[OutPoint, int], ...]
    next_hash: HashLock


@dataclass(frozen=True)
class OpenAck:
    channel: str
    inputs: tuple[tuple[OutPoint, int], ...]
    next_hash: HashLock


@dataclass(frozen=True)
class FundingSig:
    channel: str
    witnesses: tuple[tuple[OutPoint, SigWitness], ...]


# -- update handshake -----------------------------------------------------------


@dataclass(frozen=True)
class CommitSig:
    channel: str
    revision: int
    sig: Sig


@dataclass(frozen=True)
class RevokeAck:
    channel: str
    revision: int
    secret: Secret


@dataclass(frozen=True)
class PayReq:
    channel: str
    revision: int
    balance_a: int
    balance_b: int
    next_hash: HashLock

    def change(self) -> Change:
        return Pay(self.balance_a, self.balance_b)


@dataclass(frozen=True)
class BetPropose:
    channel: str
    revision: int
    bet: Bet
    next_hash: HashLock

    def change(self) -> Change:
        return AddBet(self.bet)


@dataclass(frozen=True)
class SettleReq:
    channel: str
    revision: int
    bet: Bet
    winner: Address
    next_hash: HashLock

    def change(self) -> Change:
        return SettleBet(self.bet, self.winner)


@dataclass(frozen=True)
class HtlcAdd:
    channel: str
    revision: int
    htlc: PaymentHtlc
    next_hash: HashLock
    # remaining hops: (channel, amount, expiry, delay)
    onion: tuple[tuple[str, int, int, int], ...] = ()

    def change(self) -> Change:
        return AddHtlc(self.htlc)


@dataclass(frozen=True)
class HtlcFulfill:
    channel: str
    revision: int
    payment_hash: HashLock
    preimage: Secret
    next_hash: HashLock

    def change(self) -> Change:
        return FulfillHtlc(self.payment_hash, self.preimage)


@dataclass(frozen=True)
class HtlcFail:
    channel: str
    revision: int
    payment_hash: HashLock
    next_hash: HashLock

    def change(self) -> Change:
        return FailHtlc(self.payment_hash)


@dataclass(frozen=True)
class PayAck:
    channel: str
    revision: int
    next_hash: HashLock


@dataclass(frozen=True)
class BetAccept:
    channel: str
    revision: int
    next_hash: HashLock
    bet: Optional[Bet] = None


@dataclass(frozen=True)
class SettleAck:
    channel: str
    revision: int
    next_hash: HashLock


@dataclass(frozen=True)
class HtlcAck:
    channel: str
    revision: int
    next_hash: HashLock


@dataclass(frozen=True)
class Reject:
    channel: str
    revision: int
    reason: str


# -- proofs and closing -------------------------------------------------------------


@dataclass(frozen=True)
class ProofReveal:
    blob: ProofBlob


@dataclass(frozen=True)
class CloseReq:
    channel: str
    balance_a: int
    balance_b: int


@dataclass(frozen=True)
class CloseSig:
    channel: str
    sig: Sig


Proposal = Union[PayReq, BetPropose, SettleReq, HtlcAdd, HtlcFulfill, HtlcFail]
PROPOSALS = (PayReq, BetPropose, SettleReq, HtlcAdd, HtlcFulfill, HtlcFail)
ACKS = (PayAck, BetAccept, SettleAck, HtlcAck)


def proposal_for(channel: str, revision: int, change: Change, next_hash: HashLock, onion=()) -> Proposal:
    if isinstance(change, Pay):
        return PayReq(channel, revision, change.balance_a, change.balance_b, next_hash)
    if isinstance(change, AddBet):
        return BetPropose(channel, revision, change.bet, next_hash)
    if isinstance(change, SettleBet):
        return SettleReq(channel, revision, change.bet, change.winner, next_hash)
    if isinstance(change, AddHtlc):
        return HtlcAdd(channel, revision, change.htlc, next_hash, tuple(onion))
    if isinstance(change, FulfillHtlc):
        return HtlcFulfill(channel, revision, change.payment_hash, change.preimage, next_hash)
    if isinstance(change, FailHtlc):
        return HtlcFail(channel, revision, change.payment_hash, next_hash)
    raise TypeError(f"no proposal message for {change!r}")


def ack_for(proposal: Proposal, next_hash: HashLock):
    if isinstance(proposal, PayReq):
        return PayAck(proposal.channel, proposal.revision, next_hash)
    if isinstance(proposal, BetPropose):
        return BetAccept(proposal.channel, proposal.revision, next_hash, proposal.bet)
    if isinstance(proposal, SettleReq):
        return SettleAck(proposal.channel, proposal.revision, next_hash)
    return HtlcAck(proposal.channel, proposal.revision, next_hash)


@dataclass(frozen=True)
class Envelope:
    sender: str
    receiver: str
    seq: int
    body: object

    @property
    def kind(self) -> str:
        return type(self.body).__name__
