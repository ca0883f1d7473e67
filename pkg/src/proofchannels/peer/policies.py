"""Actor policies.

A policy maps an observation (a new block, a proof, a committed update, a
rejected proposal) to a list of actions the harness then carries out.  The
same policy also answers the yes/no questions the protocol asks of a party:
whether to accept a proposed change and whether to co-sign a close.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional, Union

from ..channel import (
    AddBet,
    AddHtlc,
    Bet,
    FailHtlc,
    FulfillHtlc,
    Pay,
    PaymentHtlc,
    SettleBet,
    Status,
    claimable_now,
    punish,
)
from ..ledger import Transaction
from ..script import HashLock, PropositionId, SecretBranch, hash_secret
from . import messages as m

if TYPE_CHECKING:
    from .harness import Actor, Harness, Link


# -- actions ----------------------------------------------------------------


@dataclass(frozen=True)
class Send:
    receiver: str
    body: object


@dataclass(frozen=True)
class Propose:
    channel: str
    change: object
    onion: tuple = ()


@dataclass(frozen=True)
class Submit:
    tx: Transaction
    what: str


@dataclass(frozen=True)
class RegisterProof:
    prop: PropositionId


@dataclass(frozen=True)
class GoOnchain:
    channel: str
    reason: str


@dataclass(frozen=True)
class Broadcast:
    blob: m.ProofBlob


@dataclass(frozen=True)
class Abort:
    channel: str


@dataclass(frozen=True)
class PublishRevoked:
    channel: str
    revision: Optional[int]


Action = Union[Send, Propose, Submit, RegisterProof, GoOnchain, Broadcast, Abort, PublishRevoked]


# -- observations ------------------------------------------------------------


@dataclass(frozen=True)
class BlockObs:
    height: int


@dataclass(frozen=True)
class ProofObs:
    blob: m.ProofBlob
    source: Optional[str]


@dataclass(frozen=True)
class CommittedObs:
    channel: str
    change: object


@dataclass(frozen=True)
class RejectedObs:
    channel: str
    change: object
    reason: str


Observation = Union[BlockObs, ProofObs, CommittedObs, RejectedObs]


def run_policy(h: "Harness", actor: "Actor", obs: Observation) -> list[Action]:
    p = actor.policy
    if isinstance(obs, BlockObs):
        return p.on_block(h, actor, obs.height)
    if isinstance(obs, ProofObs):
        return p.on_proof(h, actor, obs.blob, obs.source)
    if isinstance(obs, CommittedObs):
        return p.on_committed(h, actor, actor.links[obs.channel], obs.change)
    if isinstance(obs, RejectedObs):
        return p.on_rejected(h, actor, actor.links[obs.channel], obs.change, obs.reason)
    raise TypeError(f"unknown observation {obs!r}")


class Policy:
    """Do-nothing base: accepts everything, never acts."""

    name = "passive"

    def accept_change(self, h, actor, link, change) -> tuple[bool, str]:
        return True, ""

    def accept_close(self, h, actor, link) -> bool:
        return True

    def on_block(self, h, actor, height) -> list[Action]:
        return []

    def on_proof(self, h, actor, blob, source) -> list[Action]:
        return []

    def on_committed(self, h, actor, link, change) -> list[Action]:
        return []

    def on_rejected(self, h, actor, link, change, reason) -> list[Action]:
        return []

    def describe(self) -> str:
        return self.name


class Honest(Policy):
    """Follows the protocol and protects its own funds.

    ``patience``: blocks to wait for an unanswered request before going on-chain.
    ``margin``: extra blocks before a deadline at which a backer holding a
    proof stops waiting for cooperation.
    ``late_proof``: what a backer does with a proof obtained after the
    deadline ("concede" or "race" on-chain).
    ``share_proof``: publish every proof received to all actors.
    ``watch_delay``: confirmations to wait before punishing a breach.
    """

    name = "honest"

    def __init__(self, patience: int = 3, margin: int = 0, late_proof: str = "concede",
                 share_proof: bool = False, watch_delay: int = 0):
        if late_proof not in ("concede", "race"):
            raise ValueError(f"late_proof must be concede or race, not {late_proof!r}")
        self.patience = patience
        self.margin = margin
        self.late_proof = late_proof
        self.share_proof = share_proof
        self.watch_delay = watch_delay

    def describe(self) -> str:
        return (f"{self.name}(patience={self.patience},margin={self.margin},"
                f"late_proof={self.late_proof},share_proof={self.share_proof},"
                f"watch_delay={self.watch_delay})")

    # -- helpers ---------------------------------------------------------------

    @staticmethod
    def revealed_in_time(link: "Link", bet: Bet) -> bool:
        at = link.proof_received.get(bet.prop)
        return at is not None and at < bet.deadline

    def has_timely_proof(self, actor: "Actor", bet: Bet) -> bool:
        at = actor.proof_heights.get(bet.prop)
        return at is not None and at < bet.deadline

    # -- decisions -----------------------------------------------------------------

    def accept_change(self, h, actor, link, change):
        st = link.state
        me = actor.address
        height = h.chain.height
        if isinstance(change, Pay):
            mine = change.balance_a if st.is_a else change.balance_b
            return (mine >= st.my_balance, "WouldLoseFunds")
        if isinstance(change, SettleBet):
            bet = change.bet
            if change.winner == me:
                return True, ""
            if me == bet.doubter:
                if self.revealed_in_time(link, bet):
                    return True, ""
                if self.late_proof == "concede" and bet.prop in link.proof_received:
                    return True, ""
                return False, "NoTimelyProof"
            # I back the bet and the doubter claims it
            if height < bet.deadline:
                return False, "DeadlineNotReached"
            if self.has_timely_proof(actor, bet):
                return False, "ProofHeld"
            if bet.prop in actor.proofs and self.late_proof == "race":
                return False, "ProofHeld"
            return True, ""
        if isinstance(change, FailHtlc):
            for x in st.contents.htlcs:
                if x.payment_hash == change.payment_hash:
                    if x.sender == me:
                        return True, ""
                    known = x.payment_hash in actor.invoices
                    return (not known and height >= x.expiry, "PreimageKnown" if known else "NotExpired")
            return False, "NoSuchHtlc"
        return True, ""

    # -- reactions -------------------------------------------------------------------

    def on_proof(self, h, actor, blob, source):
        acts: list[Action] = []
        height = h.chain.height
        for cid, link in sorted(actor.links.items()):
            st = link.state
            for bet in st.contents.bets:
                if bet.prop != blob.prop or bet.backer != actor.address:
                    continue
                if link.onchain or st.status.closed:
                    acts.append(RegisterProof(bet.prop))
                    continue
                if actor.withhold:
                    continue
                if height < bet.deadline or self.late_proof == "race":
                    acts.extend(self._reveal_and_settle(actor, link, bet, height))
            if (link.onchain or st.status.closed) and self._closed_bets(h, link, blob.prop):
                acts.append(RegisterProof(blob.prop))
        if self.share_proof and source != "public":
            acts.append(Broadcast(blob))
        return acts

    def _reveal_and_settle(self, actor: "Actor", link: "Link", bet: Bet, height: int) -> list[Action]:
        acts: list[Action] = []
        if bet.prop not in link.revealed:
            acts.append(Send(link.peer, m.ProofReveal(actor.proofs[bet.prop])))
        if bet not in link.settle_wait:
            link.settle_wait[bet] = height
            acts.append(Propose(link.channel, SettleBet(bet, bet.backer)))
        return acts

    def on_committed(self, h, actor, link, change):
        acts: list[Action] = []
        me = actor.address
        if isinstance(change, SettleBet):
            link.settle_wait.pop(change.bet, None)
        elif isinstance(change, AddBet):
            bet = change.bet
            # already holding the proof: no reason to wait for the deadline
            if (bet.backer == me and bet.prop in actor.proofs and not actor.withhold
                    and h.chain.height < bet.deadline):
                acts.extend(self._reveal_and_settle(actor, link, bet, h.chain.height))
        elif isinstance(change, AddHtlc) and change.htlc.receiver == me:
            acts.extend(self._route_onward(h, actor, link, change.htlc))
        elif isinstance(change, FulfillHtlc):
            actor.invoices.setdefault(change.payment_hash, change.preimage)
            link.fail_wait.pop(change.payment_hash, None)
            acts.extend(self._settle_upstream(actor, change.payment_hash, fulfill=True))
        elif isinstance(change, FailHtlc):
            link.fail_wait.pop(change.payment_hash, None)
            acts.extend(self._settle_upstream(actor, change.payment_hash, fulfill=False))
        return acts

    def _route_onward(self, h, actor, link, htlc: PaymentHtlc) -> list[Action]:
        _, onion = actor.forwards.get(htlc.payment_hash, (link.channel, ()))
        if not onion:
            pre = actor.invoices.get(htlc.payment_hash)
            if pre is not None:
                return [Propose(link.channel, FulfillHtlc(htlc.payment_hash, pre))]
            return [Propose(link.channel, FailHtlc(htlc.payment_hash))]
        cid, amount, expiry, delay = onion[0]
        nxt = actor.links.get(cid)
        if nxt is None or nxt.state.status != Status.OPEN or nxt.state.my_balance < amount:
            return [Propose(link.channel, FailHtlc(htlc.payment_hash))]
        onward = PaymentHtlc(htlc.payment_hash, amount, actor.address, nxt.state.them, expiry, delay)
        return [Propose(cid, AddHtlc(onward), tuple(onion[1:]))]

    def _settle_upstream(self, actor, payment_hash: HashLock, fulfill: bool) -> list[Action]:
        acts: list[Action] = []
        for cid, link in sorted(actor.links.items()):
            for x in link.state.contents.htlcs:
                if x.payment_hash == payment_hash and x.receiver == actor.address:
                    if fulfill:
                        acts.append(Propose(cid, FulfillHtlc(payment_hash, actor.invoices[payment_hash])))
                    else:
                        acts.append(Propose(cid, FailHtlc(payment_hash)))
        return acts

    def on_rejected(self, h, actor, link, change, reason):
        if change is None:
            return []
        if isinstance(change, SettleBet) and reason != "local":
            return [GoOnchain(link.channel, f"settle-refused-{reason}")]
        if isinstance(change, AddHtlc):
            return self._settle_upstream(actor, change.htlc.payment_hash, fulfill=False)
        return []

    def on_block(self, h, actor, height):
        acts: list[Action] = []
        for cid, link in sorted(actor.links.items()):
            st = link.state
            if st.status == Status.OPEN and not link.onchain:
                acts.extend(self._watch_open(h, actor, link, height))
            elif link.onchain or st.status in (Status.CLOSED_UNILATERAL, Status.BREACHED):
                acts.extend(self._watch_closed(h, actor, link))
        return acts

    def _watch_open(self, h, actor, link, height) -> list[Action]:
        st = link.state
        me = actor.address
        p = st.pending
        if p is not None and height - p.started >= self.patience:
            if p.sent_sig or p.got_sig:
                return [GoOnchain(link.channel, "stuck-update")]
            link.in_flight = None
            return [Abort(link.channel)]
        bets = list(st.contents.bets)
        if p is not None and p.got_sig:
            # a half-finished update we can already publish still binds its bets
            bets += [b for b in p.contents.bets if b not in bets]
        for bet in bets:
            if bet.backer == me:
                acts = self._backer_duty(actor, link, bet, height)
            else:
                acts = self._doubter_duty(link, bet, height)
            if acts:
                return acts
        for x in st.contents.htlcs:
            if x.sender == me and height >= x.expiry:
                if x.payment_hash not in link.fail_wait:
                    link.fail_wait[x.payment_hash] = height
                    return [Propose(link.channel, FailHtlc(x.payment_hash))]
                if height - link.fail_wait[x.payment_hash] >= self.patience:
                    return [GoOnchain(link.channel, "htlc-expired")]
            if x.receiver == me and x.payment_hash in actor.invoices and height >= x.expiry - 1:
                return [GoOnchain(link.channel, "htlc-unfulfilled")]
        return []

    def _backer_duty(self, actor, link, bet: Bet, height: int) -> list[Action]:
        if bet.prop not in actor.proofs:
            return []
        timely = self.has_timely_proof(actor, bet)
        if not timely and self.late_proof == "concede":
            return []
        if height >= bet.deadline - self.margin - 1:
            return [RegisterProof(bet.prop), GoOnchain(link.channel, "deadline")]
        if actor.withhold:
            return []
        started = link.settle_wait.get(bet)
        if started is None:
            return self._reveal_and_settle(actor, link, bet, height)
        if height - started >= self.patience:
            return [RegisterProof(bet.prop), GoOnchain(link.channel, "settle-timeout")]
        return []

    def _doubter_duty(self, link, bet: Bet, height: int) -> list[Action]:
        if height < bet.deadline or self.revealed_in_time(link, bet):
            return []
        if self.late_proof == "concede" and bet.prop in link.proof_received:
            return []
        started = link.settle_wait.get(bet)
        if started is None:
            link.settle_wait[bet] = height
            return [Propose(link.channel, SettleBet(bet, bet.doubter))]
        if height - started >= self.patience:
            return [GoOnchain(link.channel, "settle-timeout")]
        return []

    def _closed_bets(self, h, link, prop: PropositionId) -> bool:
        st = link.state
        revs = [st.closed_revision] if st.closed_revision is not None else st.live_revisions()
        for rev in revs:
            try:
                contents = st.contents_at(rev)
            except Exception:
                continue
            if any(b.prop == prop and b.backer == st.me for b in contents.bets):
                return True
        return False

    def _watch_closed(self, h, actor, link) -> list[Action]:
        chain = h.chain
        st = link.state
        op = st.funding_outpoint
        acts: list[Action] = []
        for prop in sorted(actor.proofs):
            if self._closed_bets(h, link, prop) and not chain.is_proven(prop):
                if prop not in chain.pending_proofs:
                    acts.append(RegisterProof(prop))
        txid = chain.spent_by.get(op)
        if txid is None:
            return acts
        tx = chain.txs[txid]
        self._learn_preimages(h, actor, tx)
        st.preimages.update(actor.invoices)
        if st.status == Status.BREACHED and st.closed_by == st.them and not link.punished:
            if chain.height - chain.tx_heights[txid] + 1 >= self.watch_delay:
                ptx = punish(st, tx, chain)
                link.punished = True
                if ptx is not None:
                    return acts + [Submit(ptx, f"punish-{link.channel}")]
        for claim in claimable_now(st, chain, tx):
            acts.append(Submit(claim, f"claim-{link.channel}-{claim.inputs[0].outpoint.index}"))
        return acts

    @staticmethod
    def _learn_preimages(h, actor, tx: Transaction) -> None:
        chain = h.chain
        for n, out in enumerate(tx.outputs):
            spender = chain.spent_by.get(tx.outpoint(n))
            if spender is None:
                continue
            for i in chain.txs[spender].inputs:
                w = i.witness
                if isinstance(w, SecretBranch):
                    actor.invoices.setdefault(hash_secret(w.secret), w.secret)


class HonestDoubter(Honest):
    name = "honest-doubter"


class HonestBacker(Honest):
    name = "honest-backer"


class Withholder(Honest):
    """Never reveals proofs off-chain; enforces bets on-chain just before the deadline."""

    name = "withholder"

    def on_proof(self, h, actor, blob, source):
        actor.withhold = True
        return super().on_proof(h, actor, blob, source)


class PublicRevealer(Honest):
    """Publishes every proof it learns to everyone."""

    name = "public-revealer"

    def __init__(self, **kw):
        kw.setdefault("share_proof", True)
        super().__init__(**kw)


class Cheater(Honest):
    """Publishes a revoked commitment once the chain reaches ``at``."""

    name = "cheater"

    def __init__(self, channel: Optional[str] = None, revision: Optional[int] = None,
                 at: int = 0, **kw):
        super().__init__(**kw)
        self.channel = channel
        self.revision = revision
        self.at = at
        self.done = False

    def on_block(self, h, actor, height):
        if not self.done and height >= self.at:
            cid = self.channel or next(iter(sorted(actor.links)), None)
            link = actor.links.get(cid) if cid else None
            if link is not None and link.state.my_revoked and link.state.status == Status.OPEN:
                self.done = True
                return [PublishRevoked(cid, self.revision)]
        return super().on_block(h, actor, height)


POLICIES = {
    "honest": Honest,
    "honest-doubter": HonestDoubter,
    "honest-backer": HonestBacker,
    "withholder": Withholder,
    "public-revealer": PublicRevealer,
    "cheater": Cheater,
    "passive": Policy,
}


def make_policy(name: str, **params) -> Policy:
    try:
        cls = POLICIES[name]
    except KeyError:
        raise ValueError(f"unknown policy {name!r}") from None
    return cls(**params)
