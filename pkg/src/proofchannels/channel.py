"""Two-party channel state machine.

Each party owns a :class:`ChannelState`.  Updates run as a four-step
handshake (propose/accept with fresh hash locks, exchange commitment
signatures, reveal the previous revision's secrets, commit) and every step is
a separate method so the message layer, and tests, can stop between any two.
The :class:`Handshake` helper drives both sides directly.
"""

from __future__ import annotations

import enum
import secrets as _secrets
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Optional, Union

from .ledger import ChainState, OutPoint, Transaction, TxOutput, checked_sum
from .script import (
    Address,
    DelayBranch,
    EvalContext,
    HashLock,
    Htlc,
    Multisig2,
    PayToAddr,
    PrivKey,
    PropositionId,
    ProvenBranch,
    Ptlc,
    Secret,
    Sig,
    Sig2Witness,
    SigWitness,
    TimeoutBranch,
    eval_script,
    hash_secret,
    solve,
    verify,
)

DEFAULT_CSV_DELAY = 48


class ChannelError(Exception):
    code = "ChannelError"


def _error(name: str) -> type:
    return type(name, (ChannelError,), {"code": name})


HostageRisk = _error("HostageRisk")
InsufficientFunds = _error("InsufficientFunds")
BalanceMismatch = _error("BalanceMismatch")
StaleRevision = _error("StaleRevision")
InsufficientBalance = _error("InsufficientBalance")
NoSuchBet = _error("NoSuchBet")
NoSuchHtlc = _error("NoSuchHtlc")
ActiveBetsRemain = _error("ActiveBetsRemain")
NoRevealedSecret = _error("NoRevealedSecret")
DeadlineInPast = _error("DeadlineInPast")
InvalidBet = _error("InvalidBet")
BadCommitmentSig = _error("BadCommitmentSig")
BadRevocation = _error("BadRevocation")
BadPreimage = _error("BadPreimage")
UnknownRevisionSecret = _error("UnknownRevisionSecret")
MissingCounterpartySig = _error("MissingCounterpartySig")
ChannelNotOpen = _error("ChannelNotOpen")


# -- parameters and contents ------------------------------------------------


@dataclass(frozen=True)
class ChannelParams:
    party_a: Address
    party_b: Address
    contrib_a: int
    contrib_b: int
    csv_delay: int = DEFAULT_CSV_DELAY

    def __post_init__(self):
        if self.party_a == self.party_b:
            raise ValueError("channel parties must differ")
        if self.contrib_a < 0 or self.contrib_b < 0:
            raise ValueError("negative contribution")
        if self.capacity <= 0:
            raise ValueError("channel capacity must be positive")
        if self.csv_delay < 1:
            raise ValueError("csv delay must be >= 1")

    @property
    def capacity(self) -> int:
        return self.contrib_a + self.contrib_b

    def other(self, addr: Address) -> Address:
        if addr == self.party_a:
            return self.party_b
        if addr == self.party_b:
            return self.party_a
        raise ValueError(f"{addr} is not a party of this channel")


@dataclass(frozen=True)
class Bet:
    prop: PropositionId
    doubter_stake: int
    backer_stake: int
    deadline: int
    backer: Address
    doubter: Address

    def __post_init__(self):
        if self.doubter_stake < 0 or self.backer_stake < 0:
            raise InvalidBet("negative stake")
        if self.doubter_stake + self.backer_stake <= 0:
            raise InvalidBet("bet has no stakes")
        if self.backer == self.doubter:
            raise InvalidBet("backer and doubter must differ")
        if self.deadline < 1:
            raise InvalidBet("deadline must be a positive height")

    @property
    def pot(self) -> int:
        return self.doubter_stake + self.backer_stake

    def stake_of(self, addr: Address) -> int:
        if addr == self.backer:
            return self.backer_stake
        if addr == self.doubter:
            return self.doubter_stake
        return 0


@dataclass(frozen=True)
class PaymentHtlc:
    """A conditional payment in flight: ``receiver`` takes it with the preimage."""

    payment_hash: HashLock
    amount: int
    sender: Address
    receiver: Address
    expiry: int
    delay: int = 6

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("htlc amount must be positive")


@dataclass(frozen=True)
class Contents:
    """What one revision's commitments encode."""

    balance_a: int
    balance_b: int
    bets: tuple[Bet, ...] = ()
    htlcs: tuple[PaymentHtlc, ...] = ()

    @property
    def total(self) -> int:
        return checked_sum(
            [self.balance_a, self.balance_b]
            + [b.pot for b in self.bets]
            + [h.amount for h in self.htlcs]
        )

    def balance_of(self, params: ChannelParams, addr: Address) -> int:
        return self.balance_a if addr == params.party_a else self.balance_b

    def with_balance(self, params: ChannelParams, addr: Address, value: int) -> "Contents":
        if value < 0:
            raise InsufficientBalance(f"{addr} balance would be negative")
        if addr == params.party_a:
            return replace(self, balance_a=value)
        return replace(self, balance_b=value)


# -- changes ------------------------------------------------------------------


@dataclass(frozen=True)
class Pay:
    balance_a: int
    balance_b: int

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        new = replace(c, balance_a=self.balance_a, balance_b=self.balance_b)
        if min(self.balance_a, self.balance_b) < 0 or new.total != params.capacity:
            raise BalanceMismatch("balances plus locked stakes must equal capacity")
        return new


@dataclass(frozen=True)
class AddBet:
    bet: Bet

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        bet = self.bet
        if {bet.backer, bet.doubter} != {params.party_a, params.party_b}:
            raise InvalidBet("bet parties must be the channel parties")
        if bet.deadline <= height:
            raise DeadlineInPast(f"deadline {bet.deadline} is not after height {height}")
        for who in (bet.doubter, bet.backer):
            if c.balance_of(params, who) < bet.stake_of(who):
                raise InsufficientBalance(f"{who} cannot cover stake {bet.stake_of(who)}")
        for who in (bet.doubter, bet.backer):
            c = c.with_balance(params, who, c.balance_of(params, who) - bet.stake_of(who))
        return replace(c, bets=c.bets + (bet,))


@dataclass(frozen=True)
class SettleBet:
    bet: Bet
    winner: Address

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        if self.bet not in c.bets:
            raise NoSuchBet("bet is not active")
        if self.winner not in (self.bet.backer, self.bet.doubter):
            raise InvalidBet("winner must be a bet party")
        bets = list(c.bets)
        bets.remove(self.bet)
        c = replace(c, bets=tuple(bets))
        return c.with_balance(params, self.winner, c.balance_of(params, self.winner) + self.bet.pot)


@dataclass(frozen=True)
class AddHtlc:
    htlc: PaymentHtlc

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        h = self.htlc
        if {h.sender, h.receiver} != {params.party_a, params.party_b}:
            raise ValueError("htlc parties must be the channel parties")
        if any(x.payment_hash == h.payment_hash for x in c.htlcs):
            raise ValueError("duplicate payment hash")
        if c.balance_of(params, h.sender) < h.amount:
            raise InsufficientBalance(f"{h.sender} cannot cover htlc {h.amount}")
        c = c.with_balance(params, h.sender, c.balance_of(params, h.sender) - h.amount)
        return replace(c, htlcs=c.htlcs + (h,))


def _take_htlc(c: Contents, payment_hash: HashLock) -> tuple[PaymentHtlc, Contents]:
    for h in c.htlcs:
        if h.payment_hash == payment_hash:
            return h, replace(c, htlcs=tuple(x for x in c.htlcs if x is not h))
    raise NoSuchHtlc("no htlc with that payment hash")


@dataclass(frozen=True)
class FulfillHtlc:
    payment_hash: HashLock
    preimage: Secret

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        if hash_secret(self.preimage) != self.payment_hash:
            raise BadPreimage("preimage does not match payment hash")
        h, c = _take_htlc(c, self.payment_hash)
        return c.with_balance(params, h.receiver, c.balance_of(params, h.receiver) + h.amount)


@dataclass(frozen=True)
class FailHtlc:
    payment_hash: HashLock

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        h, c = _take_htlc(c, self.payment_hash)
        return c.with_balance(params, h.sender, c.balance_of(params, h.sender) + h.amount)


@dataclass(frozen=True)
class Initial:
    """Revision 1: both contributions, nothing locked."""

    def apply(self, c: Contents, params: ChannelParams, height: int) -> Contents:
        return Contents(params.contrib_a, params.contrib_b)


Change = Union[Pay, AddBet, SettleBet, AddHtlc, FulfillHtlc, FailHtlc, Initial]


# -- commitments ----------------------------------------------------------------


@dataclass(frozen=True)
class CommitmentTemplate:
    owner: Address
    revision: int
    funding_outpoint: OutPoint
    outputs: tuple[TxOutput, ...]

    def tx(self) -> Transaction:
        return Transaction.unsigned([self.funding_outpoint], self.outputs)

    @property
    def digest(self) -> bytes:
        return self.tx().digest


def commitment_outputs(
    params: ChannelParams, contents: Contents, owner: Address, lock: HashLock
) -> tuple[TxOutput, ...]:
    """Owner's view: its own balance and every bet sit behind the owner's
    revocation lock; the counterparty's balance is paid directly."""
    other = params.other(owner)
    n = params.csv_delay
    outs = []
    for addr, amount in ((params.party_a, contents.balance_a), (params.party_b, contents.balance_b)):
        if amount == 0:
            continue
        if addr == owner:
            outs.append(TxOutput(amount, Htlc(lock, other, n, PayToAddr(owner))))
        else:
            outs.append(TxOutput(amount, PayToAddr(other)))
    for bet in contents.bets:
        if bet.pot == 0:
            continue
        ptlc = Ptlc(bet.prop, bet.backer, bet.deadline + n, bet.doubter)
        outs.append(TxOutput(bet.pot, Htlc(lock, other, n, ptlc)))
    for h in contents.htlcs:
        outs.append(TxOutput(h.amount, Htlc(h.payment_hash, h.receiver, h.delay, PayToAddr(h.sender))))
    return tuple(outs)


def build_funding_tx(
    params: ChannelParams,
    inputs_a: list[tuple[OutPoint, int]],
    inputs_b: list[tuple[OutPoint, int]],
) -> Transaction:
    """Unsigned funding transaction; change goes back to each contributor."""
    have_a = checked_sum(a for _, a in inputs_a)
    have_b = checked_sum(a for _, a in inputs_b)
    if have_a < params.contrib_a:
        raise InsufficientFunds(f"party A has {have_a}, needs {params.contrib_a}")
    if have_b < params.contrib_b:
        raise InsufficientFunds(f"party B has {have_b}, needs {params.contrib_b}")
    outputs = [TxOutput(params.capacity, Multisig2(params.party_a, params.party_b))]
    if have_a > params.contrib_a:
        outputs.append(TxOutput(have_a - params.contrib_a, PayToAddr(params.party_a)))
    if have_b > params.contrib_b:
        outputs.append(TxOutput(have_b - params.contrib_b, PayToAddr(params.party_b)))
    return Transaction.unsigned([op for op, _ in inputs_a + inputs_b], outputs)


# -- per-party state --------------------------------------------------------------


class Status(enum.Enum):
    INIT = "Init"
    COMMITMENTS_EXCHANGED = "CommitmentsExchanged"
    OPEN = "Open"
    CLOSING_COOPERATIVE = "ClosingCooperative"
    CLOSED_COOPERATIVE = "ClosedCooperative"
    CLOSED_UNILATERAL = "ClosedUnilateral"
    BREACHED = "Breached"

    @property
    def closed(self) -> bool:
        return self in (Status.CLOSED_COOPERATIVE, Status.CLOSED_UNILATERAL, Status.BREACHED)


@dataclass
class PendingUpdate:
    revision: int
    contents: Contents
    change: Change
    proposer: bool
    their_hash: Optional[HashLock] = None
    sent_sig: bool = False
    got_sig: bool = False
    sent_revoke: bool = False
    got_revoke: bool = False
    started: int = 0

    @property
    def ready(self) -> bool:
        if self.revision == 1:
            return self.sent_sig and self.got_sig
        return self.sent_revoke and self.got_revoke


class ChannelState:
    """One party's view of a channel."""

    def __init__(
        self,
        params: ChannelParams,
        key: PrivKey,
        secret_source: Optional[Callable[[], bytes]] = None,
    ):
        if key.address not in (params.party_a, params.party_b):
            raise ValueError("key does not belong to a channel party")
        self.params = params
        self.key = key
        self.me = key.address
        self.them = params.other(self.me)
        self._new_secret = secret_source or (lambda: _secrets.token_bytes(32))
        self.status = Status.INIT
        self.closed_by: Optional[Address] = None
        self.closed_revision: Optional[int] = None
        self.revision = 0
        self.contents = Contents(0, 0)
        self.history: dict[int, Contents] = {}
        self.my_secrets: dict[int, Secret] = {}
        self.my_revoked: set[int] = set()
        self.their_hashes: dict[int, HashLock] = {}
        self.their_revealed: dict[int, Secret] = {}
        self.their_sigs: dict[int, Sig] = {}
        self.preimages: dict[HashLock, Secret] = {}
        self.funding_tx: Optional[Transaction] = None
        self.funding_outpoint: Optional[OutPoint] = None
        self.pending: Optional[PendingUpdate] = None

    def __repr__(self):
        return f"<ChannelState {self.me} rev={self.revision} {self.status.value}>"

    @property
    def is_a(self) -> bool:
        return self.me == self.params.party_a

    @property
    def bets(self) -> tuple[Bet, ...]:
        return self.contents.bets

    @property
    def my_balance(self) -> int:
        return self.contents.balance_of(self.params, self.me)

    # -- funding ------------------------------------------------------------

    def set_funding(self, funding_tx: Transaction) -> None:
        out = funding_tx.outputs[0]
        if out.script != Multisig2(self.params.party_a, self.params.party_b):
            raise ValueError("funding output 0 must be the channel multisig")
        if out.amount != self.params.capacity:
            raise ValueError("funding output must carry the channel capacity")
        self.funding_tx = funding_tx
        self.funding_outpoint = funding_tx.outpoint(0)

    def begin_open(self) -> HashLock:
        """Start revision 1; returns the hash lock to send to the counterparty."""
        if self.revision != 0 or self.pending is not None:
            raise StaleRevision("channel already opening")
        return self._start_pending(Initial(), proposer=self.is_a, height=0)

    def sign_funding(self, funding_tx: Transaction, chain: ChainState) -> dict[OutPoint, SigWitness]:
        """Witnesses for this party's funding inputs.

        Signing before holding the counterparty's signature on our first
        commitment would let them hold the funds hostage.
        """
        if 1 not in self.their_sigs or self.revision < 1:
            raise HostageRisk("counterparty has not signed our initial commitment")
        digest = funding_tx.digest
        witnesses = {}
        for i in funding_tx.inputs:
            utxo = chain.utxos.get(i.outpoint)
            if utxo is not None and utxo.output.script == PayToAddr(self.me):
                witnesses[i.outpoint] = SigWitness(self.key.sign(digest))
        return witnesses

    # -- hash locks -------------------------------------------------------------

    def lock_for(self, owner: Address, revision: int) -> HashLock:
        if owner == self.me:
            if revision not in self.my_secrets:
                raise UnknownRevisionSecret(f"no secret for revision {revision}")
            return hash_secret(self.my_secrets[revision])
        if revision in self.their_hashes:
            return self.their_hashes[revision]
        if self.pending is not None and self.pending.revision == revision and self.pending.their_hash:
            return self.pending.their_hash
        raise UnknownRevisionSecret(f"no counterparty hash for revision {revision}")

    def contents_at(self, revision: int) -> Contents:
        if revision in self.history:
            return self.history[revision]
        if self.pending is not None and self.pending.revision == revision:
            return self.pending.contents
        raise StaleRevision(f"unknown revision {revision}")

    def known_secrets(self) -> dict[HashLock, Secret]:
        known = {hash_secret(s): s for s in self.their_revealed.values()}
        known.update(self.preimages)
        return known

    # -- update handshake ---------------------------------------------------------

    def _start_pending(self, change: Change, proposer: bool, height: int) -> HashLock:
        contents = change.apply(self.contents, self.params, height)
        rev = self.revision + 1
        secret = Secret(self._new_secret())
        self.my_secrets[rev] = secret
        self.pending = PendingUpdate(rev, contents, change, proposer, started=height)
        return hash_secret(secret)

    def _require_open(self) -> None:
        if self.status != Status.OPEN:
            raise ChannelNotOpen(f"channel is {self.status.value}")

    def propose(self, change: Change, height: int = 0) -> HashLock:
        """Step 1 (proposer side)."""
        self._require_open()
        if self.pending is not None:
            raise StaleRevision("another update is in progress")
        return self._start_pending(change, proposer=True, height=height)

    def accept(self, change: Change, revision: int, their_hash: HashLock, height: int = 0) -> HashLock:
        """Step 1 (acceptor side)."""
        if not isinstance(change, Initial):
            self._require_open()
        if self.pending is not None or revision != self.revision + 1:
            raise StaleRevision(f"expected revision {self.revision + 1}, got {revision}")
        my_hash = self._start_pending(change, proposer=False, height=height)
        self.pending.their_hash = their_hash
        return my_hash

    def on_accept(self, their_hash: HashLock) -> None:
        if self.pending is None:
            raise StaleRevision("no update in progress")
        self.pending.their_hash = their_hash

    def abort_pending(self) -> None:
        """Drop an update nothing has been signed for yet."""
        if self.pending is not None and not (self.pending.sent_sig or self.pending.got_sig):
            self.my_secrets.pop(self.pending.revision, None)
            self.pending = None

    def sign_counterparty_commitment(self) -> tuple[int, Sig]:
        """Step 2: our signature on the counterparty's next commitment."""
        p = self.pending
        if p is None or p.their_hash is None:
            raise StaleRevision("nothing to sign")
        template = build_commitment(self, self.them, p.revision)
        p.sent_sig = True
        return p.revision, self.key.sign(template.digest)

    def receive_commit_sig(self, revision: int, sig: Sig) -> None:
        p = self.pending
        if p is None or p.revision != revision:
            if revision in self.their_sigs:
                return
            raise StaleRevision(f"unexpected signature for revision {revision}")
        template = build_commitment(self, self.me, revision)
        if not verify(self.them, sig, template.digest):
            raise BadCommitmentSig("counterparty signature does not match our commitment")
        self.their_sigs[revision] = sig
        p.got_sig = True

    def revoke_previous(self) -> tuple[int, Secret]:
        """Step 3: reveal our secret for the revision being replaced."""
        p = self.pending
        if p is None:
            last = self.revision - 1
            if last in self.my_revoked:
                return last, self.my_secrets[last]
            raise StaleRevision("no update in progress")
        if not (p.sent_sig and p.got_sig):
            raise StaleRevision("cannot revoke before both new commitments are signed")
        old = p.revision - 1
        self.my_revoked.add(old)
        p.sent_revoke = True
        return old, self.my_secrets[old]

    def receive_revocation(self, revision: int, secret: Secret) -> None:
        if revision in self.their_revealed:
            if self.their_revealed[revision] != secret:
                raise BadRevocation("conflicting secret for revoked revision")
            return
        expected = self.their_hashes.get(revision)
        if expected is None or hash_secret(secret) != expected:
            raise BadRevocation(f"secret does not match revision {revision}")
        self.their_revealed[revision] = secret
        if self.pending is not None and self.pending.revision == revision + 1:
            self.pending.got_revoke = True

    def commit_pending(self) -> Change:
        """Step 4: make the pending revision current."""
        p = self.pending
        if p is None or not p.ready:
            raise StaleRevision("update handshake incomplete")
        self.revision = p.revision
        self.contents = p.contents
        self.history[p.revision] = p.contents
        self.their_hashes[p.revision] = p.their_hash
        self.pending = None
        if p.revision == 1:
            self.status = Status.COMMITMENTS_EXCHANGED
        if isinstance(p.change, FulfillHtlc):
            self.preimages[p.change.payment_hash] = p.change.preimage
        return p.change

    # -- liveness bookkeeping -----------------------------------------------------

    def publishable_revision(self) -> int:
        """Newest revision we hold a counterparty signature for."""
        if self.pending is not None and self.pending.got_sig:
            return self.pending.revision
        return self.revision

    def live_revisions(self) -> list[int]:
        """Revisions either side might still publish without being punished."""
        revs = [self.revision] if self.revision else []
        p = self.pending
        if p is not None and (p.sent_sig or p.got_sig):
            revs.append(p.revision)
        return revs

    def identify(self, tx: Transaction) -> Optional[tuple[Address, int]]:
        """Match a transaction against every commitment we can reconstruct."""
        if self.funding_outpoint is None or tx.inputs[0].outpoint != self.funding_outpoint:
            return None
        revs = sorted(set(self.history) | ({self.pending.revision} if self.pending else set()))
        txid = tx.txid
        for owner in (self.me, self.them):
            for rev in revs:
                try:
                    if build_commitment(self, owner, rev).tx().txid == txid:
                        return owner, rev
                except (UnknownRevisionSecret, StaleRevision):
                    continue
        return None

    def refresh(self, chain: ChainState) -> None:
        """Update status from what the chain shows about the funding output."""
        if self.funding_outpoint is None:
            return
        op = self.funding_outpoint
        if self.status == Status.COMMITMENTS_EXCHANGED and (op in chain.utxos or op in chain.spent_by):
            self.status = Status.OPEN
        if op not in chain.spent_by or self.status.closed:
            return
        tx = chain.txs[chain.spent_by[op]]
        found = self.identify(tx)
        if found is None:
            self.status = Status.CLOSED_COOPERATIVE
            return
        owner, rev = found
        self.closed_by, self.closed_revision = owner, rev
        revoked = rev in (self.their_revealed if owner == self.them else self.my_revoked)
        self.status = Status.BREACHED if revoked else Status.CLOSED_UNILATERAL


def build_commitment(state: ChannelState, owner: Address, revision: Optional[int] = None) -> CommitmentTemplate:
    if revision is None:
        revision = state.revision
    if state.funding_outpoint is None:
        raise ChannelNotOpen("funding transaction not set")
    lock = state.lock_for(owner, revision)
    outputs = commitment_outputs(state.params, state.contents_at(revision), owner, lock)
    return CommitmentTemplate(owner, revision, state.funding_outpoint, outputs)


# -- two-party drivers ----------------------------------------------------------


@dataclass
class Handshake:
    """Runs one update between two in-process parties, step by step."""

    proposer: ChannelState
    acceptor: ChannelState
    change: Change
    height: int = 0
    transcript: list[str] = field(default_factory=list)

    def _log(self, who: ChannelState, what: str) -> None:
        self.transcript.append(f"{who.me} {what}")

    def propose(self) -> None:
        h = self.proposer.propose(self.change, self.height)
        self._log(self.proposer, f"propose rev={self.proposer.pending.revision}")
        h2 = self.acceptor.accept(self.change, self.proposer.pending.revision, h, self.height)
        self._log(self.acceptor, "accept")
        self.proposer.on_accept(h2)

    def exchange_signatures(self) -> None:
        for signer, receiver in ((self.acceptor, self.proposer), (self.proposer, self.acceptor)):
            rev, sig = signer.sign_counterparty_commitment()
            receiver.receive_commit_sig(rev, sig)
            self._log(signer, f"commit_sig rev={rev}")

    def revoke(self) -> None:
        for revoker, receiver in ((self.proposer, self.acceptor), (self.acceptor, self.proposer)):
            rev, secret = revoker.revoke_previous()
            receiver.receive_revocation(rev, secret)
            self._log(revoker, f"revoke rev={rev}")

    def bump(self) -> None:
        for s in (self.proposer, self.acceptor):
            s.commit_pending()
            self._log(s, f"commit rev={s.revision}")

    def run(self) -> list[str]:
        self.propose()
        self.exchange_signatures()
        self.revoke()
        self.bump()
        return self.transcript


def _pair(a: ChannelState, b: ChannelState) -> None:
    if a.params != b.params or a.me == b.me:
        raise ValueError("states belong to different channels or the same party")


def update_balance(a: ChannelState, b: ChannelState, new_a: int, new_b: int, height: int = 0) -> list[str]:
    _pair(a, b)
    proposer, acceptor = (a, b) if a.is_a else (b, a)
    return Handshake(proposer, acceptor, Pay(new_a, new_b), height).run()


def add_bet(a: ChannelState, b: ChannelState, bet: Bet, height: int = 0) -> list[str]:
    _pair(a, b)
    proposer, acceptor = (a, b) if a.me == bet.doubter else (b, a)
    return Handshake(proposer, acceptor, AddBet(bet), height).run()


def settle_bet(a: ChannelState, b: ChannelState, bet: Bet, winner: Address, height: int = 0) -> list[str]:
    _pair(a, b)
    proposer, acceptor = (a, b) if a.me == winner else (b, a)
    return Handshake(proposer, acceptor, SettleBet(bet, winner), height).run()


@dataclass
class OpenResult:
    funding_tx: Transaction
    commitment_a: CommitmentTemplate
    commitment_b: CommitmentTemplate
    state_a: ChannelState
    state_b: ChannelState


def select_inputs(chain: ChainState, addr: Address, amount: int, exclude: Iterable[OutPoint] = ()) -> list[tuple[OutPoint, int]]:
    """Greedy pick of ``addr``'s coins covering ``amount`` (in outpoint order)."""
    exclude = set(exclude)
    picked, total = [], 0
    if amount == 0:
        return picked
    for op in chain.utxos_of(addr):
        if op in exclude or chain.is_spent(op):
            continue
        value = chain.utxos[op].output.amount
        picked.append((op, value))
        total += value
        if total >= amount:
            return picked
    raise InsufficientFunds(f"{addr} has {total}, needs {amount}")


def open_channel(
    params: ChannelParams,
    key_a: PrivKey,
    key_b: PrivKey,
    chain: ChainState,
    secrets_a: Optional[Callable[[], bytes]] = None,
    secrets_b: Optional[Callable[[], bytes]] = None,
) -> OpenResult:
    """Fund a channel: commitments are cross-signed before the funding
    transaction is signed, then the funding transaction is submitted.

    The caller advances the chain and calls :meth:`ChannelState.refresh` to
    reach ``Open``.
    """
    funding = build_funding_tx(
        params,
        select_inputs(chain, params.party_a, params.contrib_a),
        select_inputs(chain, params.party_b, params.contrib_b),
    )
    a = ChannelState(params, key_a, secrets_a)
    b = ChannelState(params, key_b, secrets_b)
    for s in (a, b):
        s.set_funding(funding)
    ha = a.begin_open()
    hb = b.accept(Initial(), 1, ha)
    a.on_accept(hb)
    for signer, receiver in ((b, a), (a, b)):
        rev, sig = signer.sign_counterparty_commitment()
        receiver.receive_commit_sig(rev, sig)
    a.commit_pending()
    b.commit_pending()
    witnesses = {**a.sign_funding(funding, chain), **b.sign_funding(funding, chain)}
    signed = funding.with_witnesses(witnesses[i.outpoint] for i in funding.inputs)
    chain.submit_tx(signed)
    return OpenResult(signed, build_commitment(a, a.me, 1), build_commitment(b, b.me, 1), a, b)


# -- closing --------------------------------------------------------------------


def closing_tx(state: ChannelState) -> Transaction:
    c = state.contents
    if c.bets or c.htlcs:
        raise ActiveBetsRemain("settle bets and payments before closing cooperatively")
    if state.pending is not None:
        raise StaleRevision("update in progress")
    outs = [
        TxOutput(amount, PayToAddr(addr))
        for addr, amount in ((state.params.party_a, c.balance_a), (state.params.party_b, c.balance_b))
        if amount
    ]
    return Transaction.unsigned([state.funding_outpoint], outs)


def sign_closing(state: ChannelState) -> Sig:
    state._require_open()
    sig = state.key.sign(closing_tx(state).digest)
    state.status = Status.CLOSING_COOPERATIVE
    return sig


def complete_closing(state: ChannelState, their_sig: Sig) -> Transaction:
    tx = closing_tx(state)
    if not verify(state.them, their_sig, tx.digest):
        raise BadCommitmentSig("bad closing signature")
    mine = state.key.sign(tx.digest)
    sigs = (mine, their_sig) if state.is_a else (their_sig, mine)
    state.status = Status.CLOSING_COOPERATIVE
    return tx.with_witnesses([Sig2Witness(*sigs)])


def close_cooperative(a: ChannelState, b: ChannelState) -> Transaction:
    _pair(a, b)
    for s in (a, b):
        s._require_open()
    if a.contents != b.contents or a.revision != b.revision:
        raise StaleRevision("parties disagree on the channel state")
    tx = complete_closing(a, sign_closing(b))
    a.status = b.status = Status.CLOSED_COOPERATIVE
    return tx


def close_unilateral(state: ChannelState, revision: Optional[int] = None) -> Transaction:
    """Our own commitment for ``revision`` (default: newest we can publish),
    signed by both parties and ready for submission."""
    if revision is None:
        revision = state.publishable_revision()
    their_sig = state.their_sigs.get(revision)
    if their_sig is None:
        raise MissingCounterpartySig(f"no counterparty signature for revision {revision}")
    tx = build_commitment(state, state.me, revision).tx()
    mine = state.key.sign(tx.digest)
    sigs = (mine, their_sig) if state.is_a else (their_sig, mine)
    state.closed_by, state.closed_revision = state.me, revision
    state.status = Status.BREACHED if revision in state.my_revoked else Status.CLOSED_UNILATERAL
    return tx.with_witnesses([Sig2Witness(*sigs)])


# -- on-chain claims --------------------------------------------------------------


def sweep(
    key: PrivKey,
    chain: ChainState,
    outpoints: list[OutPoint],
    secrets: Optional[dict[HashLock, Secret]] = None,
) -> Optional[Transaction]:
    """One transaction moving ``outpoints`` to ``key``'s address, or None if any
    of them cannot be spent by ``key`` right now."""
    if not outpoints:
        return None
    total = checked_sum(chain.utxos[op].output.amount for op in outpoints)
    body = Transaction.unsigned(outpoints, [TxOutput(total, PayToAddr(key.address))])
    digest = body.digest
    witnesses = []
    for op in outpoints:
        w = solve(chain.utxos[op].output.script, key, chain.context(op, digest), secrets)
        if w is None:
            return None
        witnesses.append(w)
    return body.with_witnesses(witnesses)


def punish(watcher: ChannelState, observed: Transaction, chain: ChainState) -> Optional[Transaction]:
    """Sweep every output of a revoked counterparty commitment locked with a
    secret we were given.  Returns None when ``observed`` is not a breach."""
    revealed = {hash_secret(s) for s in watcher.their_revealed.values()}
    targets = []
    for n, out in enumerate(observed.outputs):
        s = out.script
        if isinstance(s, Htlc) and s.lock in revealed and s.claimant == watcher.me:
            op = observed.outpoint(n)
            if op in chain.utxos and not chain.is_spent(op):
                targets.append(op)
    if not targets:
        return None
    found = watcher.identify(observed)
    if found is not None:
        watcher.closed_by, watcher.closed_revision = found
    watcher.status = Status.BREACHED
    return sweep(watcher.key, chain, targets, watcher.known_secrets())


def claim_bet_onchain(state: ChannelState, chain: ChainState, bet_outpoint: OutPoint) -> Transaction:
    """Claim a bet output after a unilateral close via the proven branch
    (backer) or the timeout branch (doubter).  Raises the script error when
    the branch is not yet available."""
    script = chain.utxos[bet_outpoint].output.script
    if not (isinstance(script, Htlc) and isinstance(script.inner, Ptlc)):
        raise ValueError("not a bet output")
    ptlc = script.inner
    total = chain.utxos[bet_outpoint].output.amount
    body = Transaction.unsigned([bet_outpoint], [TxOutput(total, PayToAddr(state.me))])
    ctx = chain.context(bet_outpoint, body.digest)
    sig = state.key.sign(body.digest)
    if state.me == ptlc.prover:
        w = DelayBranch(ProvenBranch(sig))
    elif state.me == ptlc.refundee:
        w = DelayBranch(TimeoutBranch(sig))
    else:
        raise ValueError("not a party to this bet")
    eval_script(script, w, ctx)
    return body.with_witnesses([w])


def claimable_now(state: ChannelState, chain: ChainState, tx: Transaction) -> list[Transaction]:
    """Per-output claims ``state``'s owner can submit right now for ``tx``."""
    claims = []
    secrets = state.known_secrets()
    for n, out in enumerate(tx.outputs):
        op = tx.outpoint(n)
        if isinstance(out.script, PayToAddr) or op not in chain.utxos or chain.is_spent(op):
            continue
        claim = sweep(state.key, chain, [op], secrets)
        if claim is not None:
            claims.append(claim)
    return claims


def check_invariants(state: ChannelState) -> list[str]:
    problems = []
    cap = state.params.capacity
    for rev, c in state.history.items():
        if c.total != cap:
            problems.append(f"revision {rev} sums to {c.total}, capacity {cap}")
    if state.pending is not None and state.pending.contents.total != cap:
        problems.append("pending revision does not sum to capacity")
    if state.revision >= 1 and state.status not in (Status.INIT,):
        mid_update = state.pending is not None and state.pending.revision == state.revision + 1
        if state.revision in state.their_revealed and not mid_update:
            problems.append(f"counterparty secret for current revision {state.revision} revealed")
        for rev in range(1, state.revision):
            if rev not in state.their_revealed:
                problems.append(f"revision {rev} not revoked by counterparty")
    for rev, c in state.history.items():
        if state.funding_outpoint is None:
            break
        try:
            outs = build_commitment(state, state.me, rev).outputs
        except ChannelError:
            continue
        if checked_sum(o.amount for o in outs) != cap:
            problems.append(f"commitment {rev} outputs do not sum to capacity")
    return problems
