"""Deterministic network harness.

Actors exchange :mod:`messages` through in-order inboxes; a single-threaded
scheduler interleaves message delivery with scripted actions and block
production.  Given the same scenario and seed the event log is identical
byte for byte.
"""

from __future__ import annotations

import logging
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from ..channel import (
    Bet,
    Change,
    ChannelError,
    ChannelParams,
    ChannelState,
    Initial,
    Pay,
    Status,
    build_commitment,
    build_funding_tx,
    close_unilateral,
    closing_tx,
    complete_closing,
    select_inputs,
    sign_closing,
)
from ..ledger import ChainState, LedgerError, OutPoint, Transaction, format_bars, new_chain
from ..script import (
    Address,
    EvalError,
    HashLock,
    Htlc,
    Multisig2,
    PayToAddr,
    PropositionId,
    Ptlc,
    Secret,
    SigWitness,
    keygen,
)
from . import messages as m
from .policies import (
    Abort,
    Action,
    Broadcast,
    GoOnchain,
    Policy,
    Propose,
    PublishRevoked,
    RegisterProof,
    Send,
    Submit,
    run_policy,
    BlockObs,
    CommittedObs,
    ProofObs,
    RejectedObs,
)

log = logging.getLogger(__name__)


@dataclass
class Link:
    """An actor's side of one channel plus policy bookkeeping."""

    channel: str
    peer: str
    state: ChannelState
    inputs: list[tuple[OutPoint, int]] = field(default_factory=list)
    funding_witnesses: dict[OutPoint, SigWitness] = field(default_factory=dict)
    funded: bool = False
    queued: list[tuple[Change, tuple]] = field(default_factory=list)
    in_flight: Optional[tuple[Change, tuple]] = None
    settle_wait: dict[Bet, int] = field(default_factory=dict)
    fail_wait: dict[HashLock, int] = field(default_factory=dict)
    close_wait: Optional[int] = None
    onchain: bool = False
    punished: bool = False
    proof_received: dict[PropositionId, int] = field(default_factory=dict)
    revealed: set[PropositionId] = field(default_factory=set)
    last_status: Status = Status.INIT


class Actor:
    def __init__(self, name: str, policy: Policy, seed: int):
        self.name = name
        self.key, self.address = keygen(name)
        self.policy = policy
        self.rng = random.Random(f"{seed}/{name}")
        self.links: dict[str, Link] = {}
        self.proofs: dict[PropositionId, m.ProofBlob] = {}
        self.proof_heights: dict[PropositionId, int] = {}
        self.reserved: set[OutPoint] = set()
        self.seq = 0
        self.seen_seq: dict[str, int] = {}
        self.withhold = False
        self.invoices: dict[HashLock, Secret] = {}
        self.forwards: dict[HashLock, tuple[str, tuple]] = {}
        self.faucet_total = 0

    def secret_source(self) -> bytes:
        return self.rng.randbytes(32)

    def __repr__(self):
        return f"<Actor {self.name}>"


@dataclass
class Fault:
    kind: str  # drop | silence | publish-revoked | withhold
    actor: Optional[str] = None
    pattern: Optional[str] = None
    sender: Optional[str] = None
    count: Optional[int] = 1
    until: Optional[int] = None
    channel: Optional[str] = None
    revision: Optional[int] = None
    at: Optional[int] = None
    active: bool = True

    def drops(self, env: m.Envelope) -> bool:
        if self.kind != "drop" or not self.active:
            return False
        if self.pattern not in (None, "*", env.kind):
            return False
        if self.sender is not None and env.sender != self.sender:
            return False
        if self.actor is not None and env.receiver != self.actor:
            return False
        if self.count is not None:
            self.count -= 1
            self.active = self.count > 0
        return True


class Harness:
    def __init__(self, seed: int = 0, oracle: Optional[m.ProofOracle] = None):
        self.seed = seed
        self.rng = random.Random(seed)
        self.oracle = oracle or m.ProofOracle()
        self.chain: ChainState = new_chain()
        self.chain.listener = self._on_chain_event
        self.actors: dict[str, Actor] = {}
        self.channels: dict[str, tuple[str, str]] = {}
        self.prop_names: dict[PropositionId, str] = {}
        self.queue: deque[m.Envelope] = deque()
        self.actions: deque[tuple[str, Callable[[], None]]] = deque()
        self.faults: list[Fault] = []
        self.log: list[str] = []
        self.step_no = 0
        self.finished = False
        self._names: dict[Address, str] = {}

    # -- setup ----------------------------------------------------------------

    def add_actor(self, name: str, policy: Optional[Policy] = None,
                  faucet: Union[int, Sequence[int]] = 0) -> Actor:
        """Register an actor; ``faucet`` is one coin amount or a list of coins."""
        from .policies import Honest

        actor = Actor(name, policy or Honest(), self.seed)
        self.actors[name] = actor
        self._names[actor.address] = name
        for amount in ([faucet] if isinstance(faucet, int) else faucet):
            if amount:
                self.chain.faucet(actor.address, amount)
                actor.faucet_total += amount
        return actor

    def add_proposition(self, label: str, provable: bool = True) -> PropositionId:
        prop = PropositionId.from_label(label)
        self.prop_names[prop] = label
        if provable:
            self.oracle.add(prop, b"proof-of:" + label.encode())
        return prop

    def name_of(self, addr: Address) -> str:
        return self._names.get(addr, str(addr))

    def link(self, actor: str, channel: str) -> Link:
        return self.actors[actor].links[channel]

    def state(self, actor: str, channel: str) -> ChannelState:
        return self.link(actor, channel).state

    # -- logging ----------------------------------------------------------------

    def fmt(self, v) -> str:
        if isinstance(v, Address):
            return self.name_of(v)
        if isinstance(v, PropositionId):
            return self.prop_names.get(v, str(v))
        if isinstance(v, (bytes, bytearray)):
            return v.hex()[:8]
        if isinstance(v, OutPoint):
            return str(v)
        if isinstance(v, Status):
            return v.value
        return str(v)

    def render_script(self, s) -> str:
        if isinstance(s, PayToAddr):
            return self.fmt(s.addr)
        if isinstance(s, Multisig2):
            return f"multisig({self.fmt(s.a)}|{self.fmt(s.b)})"
        if isinstance(s, Ptlc):
            return f"p({self.fmt(s.prop)}|{self.fmt(s.prover)}|{s.timeout}|{self.fmt(s.refundee)})"
        if isinstance(s, Htlc):
            return f"h({s.lock}|{self.fmt(s.claimant)}|{s.delay}|{self.render_script(s.inner)})"
        return repr(s)

    def render_outputs(self, outputs) -> str:
        return ";".join(f"{format_bars(o.amount)}:{self.render_script(o.script)}" for o in outputs)

    def emit(self, actor: str, event: str, /, **detail) -> None:
        body = ",".join(f"{k}={self.fmt(v)}" for k, v in detail.items())
        line = f"step={self.step_no} height={self.chain.height} actor={actor} event={event} detail={body}"
        self.log.append(line)
        log.debug(line)

    def _on_chain_event(self, kind: str, **detail) -> None:
        if kind == "faucet":
            self.emit("chain", kind, addr=detail["addr"], amount=format_bars(detail["amount"]))
        elif kind in ("tx_submitted", "tx_confirmed"):
            self.emit("chain", kind, txid=detail["txid"])
        else:
            self.emit("chain", kind, **detail)

    # -- faults -----------------------------------------------------------------

    def add_fault(self, fault: Fault) -> None:
        self.faults.append(fault)
        self.emit("harness", "fault", kind=fault.kind, actor=fault.actor or "-",
                  pattern=fault.pattern or "-")
        if fault.kind == "withhold":
            self.actors[fault.actor].withhold = True
        elif fault.kind == "publish-revoked" and (fault.at is None or fault.at <= self.chain.height):
            self._trigger_publish(fault)

    def is_silent(self, name: str) -> bool:
        for f in self.faults:
            if f.kind == "silence" and f.actor == name and f.active:
                if f.until is not None and self.chain.height >= f.until:
                    f.active = False
                    continue
                return True
        return False

    def _trigger_publish(self, fault: Fault) -> None:
        fault.active = False
        actor = self.actors[fault.actor]
        channel = fault.channel or next(iter(actor.links))
        self.publish_revoked(actor, channel, fault.revision)

    def publish_revoked(self, actor: Actor, channel: str, revision: Optional[int]) -> None:
        if self.is_silent(actor.name):
            return
        link = actor.links[channel]
        rev = revision if revision is not None else max(link.state.my_revoked, default=link.state.revision)
        try:
            tx = close_unilateral(link.state, rev)
        except ChannelError as e:
            self.emit(actor.name, "publish_failed", channel=channel, rev=rev, error=e.code)
            return
        link.onchain = True
        self.emit(actor.name, "publish_revoked", channel=channel, rev=rev)
        self.submit(actor, tx, f"commitment-{channel}-r{rev}")

    # -- messaging ------------------------------------------------------------------

    def send(self, actor: Actor, receiver: str, body) -> None:
        if self.is_silent(actor.name):
            self.emit(actor.name, "suppressed", kind=type(body).__name__, to=receiver)
            return
        actor.seq += 1
        env = m.Envelope(actor.name, receiver, actor.seq, body)
        self.queue.append(env)
        self.emit(actor.name, "send", kind=env.kind, to=receiver, seq=env.seq,
                  **self._summary(body))

    def _summary(self, body) -> dict:
        out = {}
        for key in ("channel", "revision"):
            if hasattr(body, key):
                out[key] = getattr(body, key)
        if isinstance(body, m.PayReq):
            out["balance_a"] = format_bars(body.balance_a)
            out["balance_b"] = format_bars(body.balance_b)
        if isinstance(body, (m.BetPropose, m.SettleReq)):
            out["prop"] = body.bet.prop
        if isinstance(body, m.SettleReq):
            out["winner"] = body.winner
        if isinstance(body, m.HtlcAdd):
            out["amount"] = format_bars(body.htlc.amount)
        if isinstance(body, m.ProofReveal):
            out["prop"] = body.blob.prop
        if isinstance(body, m.Reject):
            out["reason"] = body.reason
        return out

    def _deliver(self, env: m.Envelope) -> None:
        for f in self.faults:
            if f.drops(env):
                self.emit(env.receiver, "dropped", kind=env.kind, sender=env.sender, seq=env.seq)
                return
        if self.is_silent(env.receiver):
            self.emit(env.receiver, "dropped", kind=env.kind, sender=env.sender, reason="offline")
            return
        actor = self.actors[env.receiver]
        if env.seq <= actor.seen_seq.get(env.sender, 0):
            self.emit(env.receiver, "ignored", kind=env.kind, sender=env.sender, reason="sequence")
            return
        actor.seen_seq[env.sender] = env.seq
        self.emit(env.receiver, "recv", kind=env.kind, sender=env.sender, seq=env.seq)
        body = env.body
        if isinstance(body, m.PROPOSALS):
            self._on_proposal(actor, env.sender, body)
        elif isinstance(body, m.ACKS):
            self._on_ack(actor, body)
        else:
            getattr(self, f"_on_{env.kind}")(actor, env.sender, body)

    # -- scheduling -------------------------------------------------------------------

    def schedule(self, label: str, fn: Callable[[], None]) -> None:
        self.actions.append((label, fn))

    def schedule_blocks(self, k: int) -> None:
        for _ in range(k):
            self.actions.append(("block", self._block))

    def step(self) -> list[str]:
        start = len(self.log)
        if self.queue:
            self.step_no += 1
            self._deliver(self.queue.popleft())
        elif self.actions:
            self.step_no += 1
            _, fn = self.actions.popleft()
            fn()
        else:
            self.finished = True
        return self.log[start:]

    def run(self, max_steps: int = 1_000_000) -> None:
        for _ in range(max_steps):
            self.step()
            if self.finished:
                return
        raise RuntimeError("scenario did not finish within the step bound")

    def run_until_quiet(self, max_steps: int = 100_000) -> None:
        for _ in range(max_steps):
            if not self.queue:
                return
            self.step()
        raise RuntimeError("message exchange did not quiesce")

    def advance(self, k: int = 1) -> None:
        """Produce ``k`` blocks now, delivering messages between blocks."""
        self.run_until_quiet()
        for _ in range(k):
            self.step_no += 1
            self._block()
            self.run_until_quiet()

    def _block(self) -> None:
        self.chain.advance_blocks(1)
        height = self.chain.height
        for f in self.faults:
            if f.kind == "publish-revoked" and f.active and f.at is not None and f.at <= height:
                self._trigger_publish(f)
        order = sorted(self.actors)
        self.rng.shuffle(order)
        for name in order:
            actor = self.actors[name]
            if self.is_silent(name):
                continue
            for link in actor.links.values():
                link.state.refresh(self.chain)
                if link.state.status != link.last_status:
                    link.last_status = link.state.status
                    self.emit(name, "status", channel=link.channel, status=link.state.status)
            self.execute(actor, run_policy(self, actor, BlockObs(height)))
            for link in actor.links.values():
                self._flush_queue(actor, link)

    # -- action execution --------------------------------------------------------------

    def execute(self, actor: Actor, actions: list[Action]) -> None:
        for a in actions:
            if self.is_silent(actor.name):
                return
            if isinstance(a, Send):
                if isinstance(a.body, m.ProofReveal):
                    for link in actor.links.values():
                        if link.peer == a.receiver:
                            link.revealed.add(a.body.blob.prop)
                self.send(actor, a.receiver, a.body)
            elif isinstance(a, Propose):
                self.propose(actor, a.channel, a.change, a.onion)
            elif isinstance(a, Submit):
                self.submit(actor, a.tx, a.what)
            elif isinstance(a, RegisterProof):
                self.register_proof(actor, a.prop)
            elif isinstance(a, GoOnchain):
                self.go_onchain(actor, a.channel, a.reason)
            elif isinstance(a, Broadcast):
                self.broadcast_proof(actor, a.blob)
            elif isinstance(a, PublishRevoked):
                self.publish_revoked(actor, a.channel, a.revision)
            elif isinstance(a, Abort):
                actor.links[a.channel].state.abort_pending()
                actor.links[a.channel].in_flight = None
                self.emit(actor.name, "abort", channel=a.channel)
            else:
                raise TypeError(f"unknown action {a!r}")

    def submit(self, actor: Actor, tx: Transaction, what: str) -> bool:
        try:
            self.chain.submit_tx(tx)
        except (LedgerError, EvalError) as e:
            self.emit(actor.name, "tx_rejected", what=what, error=e.code)
            return False
        self.emit(actor.name, "tx", what=what, txid=tx.txid,
                  amount=format_bars(tx.total_out))
        return True

    def register_proof(self, actor: Actor, prop: PropositionId) -> None:
        if self.chain.is_proven(prop) or prop in self.chain.pending_proofs:
            return
        self.chain.register_proof(prop)
        self.emit(actor.name, "register_proof", prop=prop)

    def go_onchain(self, actor: Actor, channel: str, reason: str) -> None:
        if self.is_silent(actor.name):
            return
        link = actor.links[channel]
        st = link.state
        if link.onchain or st.status.closed or st.funding_outpoint is None:
            return
        if self.chain.is_spent(st.funding_outpoint) or st.revision < 1:
            return
        link.onchain = True
        rev = st.publishable_revision()
        tx = close_unilateral(st, rev)
        self.emit(actor.name, "close_unilateral", channel=channel, rev=rev, reason=reason)
        self.submit(actor, tx, f"commitment-{channel}-r{rev}")

    def broadcast_proof(self, actor: Actor, blob: m.ProofBlob) -> None:
        self.emit(actor.name, "publish_proof_offchain", prop=blob.prop)
        for name in sorted(self.actors):
            if name != actor.name:
                self.give_proof(self.actors[name], blob, source="public")

    def give_proof(self, actor: Actor, blob: m.ProofBlob, source: Optional[str] = None) -> None:
        if self.is_silent(actor.name):
            return
        height = self.chain.height
        for link in actor.links.values():
            if source is not None and link.peer == source:
                link.proof_received.setdefault(blob.prop, height)
        if blob.prop in actor.proofs:
            return
        actor.proofs[blob.prop] = blob
        actor.proof_heights[blob.prop] = height
        self.emit(actor.name, "proof_obtained", prop=blob.prop, source=source or "self")
        self.execute(actor, run_policy(self, actor, ProofObs(blob, source)))

    # -- channel protocol ----------------------------------------------------------------

    def propose(self, actor: Actor, channel: str, change: Change, onion: tuple = ()) -> None:
        if self.is_silent(actor.name):
            return
        link = actor.links[channel]
        st = link.state
        if st.status != Status.OPEN or link.onchain:
            self.emit(actor.name, "propose_skipped", channel=channel, change=type(change).__name__,
                      status=st.status)
            return
        if st.pending is not None:
            link.queued.append((change, onion))
            return
        try:
            h = st.propose(change, self.chain.height)
        except (ChannelError, ValueError) as e:
            self.emit(actor.name, "propose_failed", channel=channel, change=type(change).__name__,
                      error=getattr(e, "code", type(e).__name__))
            self.execute(actor, run_policy(self, actor, RejectedObs(channel, change, "local")))
            return
        link.in_flight = (change, onion)
        self.send(actor, link.peer, m.proposal_for(channel, st.pending.revision, change, h, onion))

    def _flush_queue(self, actor: Actor, link: Link) -> None:
        while link.queued and link.state.pending is None and link.state.status == Status.OPEN:
            change, onion = link.queued.pop(0)
            self.propose(actor, link.channel, change, onion)

    def open_channel(self, channel: str, a: str, b: str, contrib_a: int, contrib_b: int,
                     csv_delay: int = 48) -> None:
        actor_a, actor_b = self.actors[a], self.actors[b]
        params = ChannelParams(actor_a.address, actor_b.address, contrib_a, contrib_b, csv_delay)
        self.channels[channel] = (a, b)
        try:
            inputs = select_inputs(self.chain, actor_a.address, contrib_a, actor_a.reserved)
        except ChannelError as e:
            self.emit(a, "open_failed", channel=channel, error=e.code)
            return
        actor_a.reserved.update(op for op, _ in inputs)
        st = ChannelState(params, actor_a.key, actor_a.secret_source)
        link = Link(channel, b, st, inputs)
        actor_a.links[channel] = link
        h = st.begin_open()
        self.send(actor_a, b, m.OpenReq(channel, params, tuple(inputs), h))

    def _on_OpenReq(self, actor: Actor, sender: str, body: m.OpenReq) -> None:
        params = body.params
        if params.party_b != actor.address:
            self.send(actor, sender, m.Reject(body.channel, 0, "NotParty"))
            return
        try:
            inputs = select_inputs(self.chain, actor.address, params.contrib_b, actor.reserved)
            funding = build_funding_tx(params, list(body.inputs), inputs)
        except ChannelError as e:
            self.send(actor, sender, m.Reject(body.channel, 0, e.code))
            return
        actor.reserved.update(op for op, _ in inputs)
        st = ChannelState(params, actor.key, actor.secret_source)
        st.set_funding(funding)
        link = Link(body.channel, sender, st, inputs)
        actor.links[body.channel] = link
        h = st.accept(Initial(), 1, body.next_hash, self.chain.height)
        self.send(actor, sender, m.OpenAck(body.channel, tuple(inputs), h))
        self._send_commit_sig(actor, link)

    def _on_OpenAck(self, actor: Actor, sender: str, body: m.OpenAck) -> None:
        link = actor.links[body.channel]
        st = link.state
        st.set_funding(build_funding_tx(st.params, link.inputs, list(body.inputs)))
        st.on_accept(body.next_hash)
        self._send_commit_sig(actor, link)

    def _send_commit_sig(self, actor: Actor, link: Link) -> None:
        rev, sig = link.state.sign_counterparty_commitment()
        self.send(actor, link.peer, m.CommitSig(link.channel, rev, sig))
        self._progress(actor, link)

    def _on_CommitSig(self, actor: Actor, sender: str, body: m.CommitSig) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        try:
            link.state.receive_commit_sig(body.revision, body.sig)
        except ChannelError as e:
            self.emit(actor.name, "bad_message", kind="CommitSig", error=e.code)
            return
        self._progress(actor, link)

    def _on_RevokeAck(self, actor: Actor, sender: str, body: m.RevokeAck) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        try:
            link.state.receive_revocation(body.revision, body.secret)
        except ChannelError as e:
            self.emit(actor.name, "bad_message", kind="RevokeAck", error=e.code)
            return
        self._progress(actor, link)

    def _progress(self, actor: Actor, link: Link) -> None:
        st = link.state
        p = st.pending
        if p is None:
            return
        if p.revision > 1 and p.sent_sig and p.got_sig and not p.sent_revoke:
            rev, secret = st.revoke_previous()
            self.send(actor, link.peer, m.RevokeAck(link.channel, rev, secret))
        if not p.ready:
            return
        change = st.commit_pending()
        link.in_flight = None
        c = st.contents
        self.emit(actor.name, "commit", channel=link.channel, rev=st.revision,
                  balance_a=format_bars(c.balance_a), balance_b=format_bars(c.balance_b),
                  bets=len(c.bets), htlcs=len(c.htlcs))
        self.emit(actor.name, "commitment", channel=link.channel, owner=actor.address,
                  rev=st.revision, outputs=self.render_outputs(build_commitment(st, st.me).outputs))
        if st.revision == 1:
            self._send_funding_sig(actor, link)
        else:
            self.execute(actor, run_policy(self, actor, CommittedObs(link.channel, change)))
        self._flush_queue(actor, link)

    def _send_funding_sig(self, actor: Actor, link: Link) -> None:
        st = link.state
        witnesses = st.sign_funding(st.funding_tx, self.chain)
        link.funding_witnesses.update(witnesses)
        self.send(actor, link.peer, m.FundingSig(link.channel, tuple(sorted(witnesses.items()))))
        self._maybe_submit_funding(actor, link)

    def _on_FundingSig(self, actor: Actor, sender: str, body: m.FundingSig) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        link.funding_witnesses.update(dict(body.witnesses))
        self._maybe_submit_funding(actor, link)

    def _maybe_submit_funding(self, actor: Actor, link: Link) -> None:
        st = link.state
        if not st.is_a or link.funded or st.revision < 1:
            return
        tx = st.funding_tx
        if not all(i.outpoint in link.funding_witnesses for i in tx.inputs):
            return
        link.funded = True
        signed = tx.with_witnesses(link.funding_witnesses[i.outpoint] for i in tx.inputs)
        self.submit(actor, signed, f"funding-{link.channel}")

    def _on_proposal(self, actor: Actor, sender: str, body: m.Proposal) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        st = link.state
        change = body.change()
        p = st.pending
        if p is not None:
            if p.proposer and p.their_hash is None and not st.is_a and not p.sent_sig:
                # concurrent proposals: party B yields and retries later
                st.abort_pending()
                if link.in_flight is not None:
                    link.queued.insert(0, link.in_flight)
                    link.in_flight = None
            else:
                self.send(actor, sender, m.Reject(body.channel, body.revision, "Busy"))
                return
        ok, reason = actor.policy.accept_change(self, actor, link, change)
        if not ok:
            self.emit(actor.name, "refuse", channel=body.channel, change=type(change).__name__,
                      reason=reason)
            self.send(actor, sender, m.Reject(body.channel, body.revision, reason))
            return
        try:
            h = st.accept(change, body.revision, body.next_hash, self.chain.height)
        except (ChannelError, ValueError) as e:
            self.send(actor, sender, m.Reject(body.channel, body.revision,
                                              getattr(e, "code", type(e).__name__)))
            return
        if isinstance(body, m.HtlcAdd):
            actor.forwards[body.htlc.payment_hash] = (body.channel, body.onion)
        if isinstance(body, m.HtlcFulfill):
            actor.invoices.setdefault(body.payment_hash, body.preimage)
        self.send(actor, sender, m.ack_for(body, h))
        self._send_commit_sig(actor, link)

    def _on_ack(self, actor: Actor, body) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        p = link.state.pending
        if p is None or not p.proposer or p.revision != body.revision or p.their_hash is not None:
            return
        link.state.on_accept(body.next_hash)
        self._send_commit_sig(actor, link)

    def _on_Reject(self, actor: Actor, sender: str, body: m.Reject) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        st = link.state
        if body.revision == 0:
            link.close_wait = link.close_wait if st.status == Status.OPEN else None
            self.execute(actor, run_policy(self, actor, RejectedObs(body.channel, None, body.reason)))
            return
        p = st.pending
        if p is not None and p.proposer and p.revision == body.revision and not p.sent_sig:
            change = p.change
            retry = link.in_flight
            st.abort_pending()
            link.in_flight = None
            if body.reason == "Busy" and retry is not None:
                # try again at the next block rather than spinning
                link.queued.append(retry)
                return
            self.execute(actor, run_policy(self, actor, RejectedObs(body.channel, change, body.reason)))
            self._flush_queue(actor, link)

    def _on_ProofReveal(self, actor: Actor, sender: str, body: m.ProofReveal) -> None:
        if not m.verify_proof(body.blob, self.oracle):
            self.emit(actor.name, "invalid_proof", prop=body.blob.prop, sender=sender)
            return
        self.give_proof(actor, body.blob, source=sender)

    def _on_CloseReq(self, actor: Actor, sender: str, body: m.CloseReq) -> None:
        link = actor.links.get(body.channel)
        if link is None:
            return
        st = link.state
        c = st.contents
        reason = None
        if st.status != Status.OPEN or st.pending is not None:
            reason = "NotOpen"
        elif c.bets or c.htlcs:
            reason = "ActiveBetsRemain"
        elif (body.balance_a, body.balance_b) != (c.balance_a, c.balance_b):
            reason = "BalanceMismatch"
        elif not actor.policy.accept_close(self, actor, link):
            reason = "Refused"
        if reason is not None:
            self.send(actor, sender, m.Reject(body.channel, 0, reason))
            return
        self.send(actor, sender, m.CloseSig(body.channel, sign_closing(st)))

    def _on_CloseSig(self, actor: Actor, sender: str, body: m.CloseSig) -> None:
        link = actor.links.get(body.channel)
        if link is None or link.state.status != Status.OPEN:
            return
        try:
            tx = complete_closing(link.state, body.sig)
        except ChannelError as e:
            self.emit(actor.name, "bad_message", kind="CloseSig", error=e.code)
            return
        self.submit(actor, tx, f"close-{link.channel}")

    # -- directives ---------------------------------------------------------------------------

    def pay(self, channel: str, payer: str, amount: int) -> None:
        actor = self.actors[payer]
        st = actor.links[channel].state
        c = st.contents
        if st.is_a:
            change = Pay(c.balance_a - amount, c.balance_b + amount)
        else:
            change = Pay(c.balance_a + amount, c.balance_b - amount)
        self.propose(actor, channel, change)

    def request_close(self, channel: str, by: str, mode: str = "cooperative") -> None:
        actor = self.actors[by]
        link = actor.links[channel]
        st = link.state
        if mode == "unilateral":
            self.go_onchain(actor, channel, "requested")
            return
        if st.status != Status.OPEN:
            self.emit(by, "close_skipped", channel=channel, status=st.status)
            return
        try:
            closing_tx(st)
        except ChannelError as e:
            self.emit(by, "close_blocked", channel=channel, error=e.code)
            self.execute(actor, run_policy(self, actor, RejectedObs(channel, None, e.code)))
            return
        link.close_wait = self.chain.height
        c = st.contents
        self.send(actor, link.peer, m.CloseReq(channel, c.balance_a, c.balance_b))

    def obtain(self, name: str, label_or_prop, corrupt: bool = False) -> None:
        prop = label_or_prop
        if isinstance(prop, str):
            prop = PropositionId.from_label(prop)
        blob = self.oracle.blob_for(prop)
        if blob is None or corrupt:
            blob = m.ProofBlob(prop, b"bogus")
        actor = self.actors[name]
        if not m.verify_proof(blob, self.oracle):
            self.emit(name, "invalid_proof", prop=prop, sender="self")
            return
        self.give_proof(actor, blob)

    # -- inspection -------------------------------------------------------------------------------

    def holdings(self, name: str) -> int:
        return self.chain.holdings(self.actors[name].address)

    def quiet(self) -> bool:
        return not self.queue and not self.chain.pending_txs and not self.chain.pending_proofs

    def unresolved_outputs(self) -> list[OutPoint]:
        """Live outputs not yet paid out to a plain address, open funding included."""
        return sorted(op for op, u in self.chain.utxos.items()
                      if not isinstance(u.output.script, PayToAddr))

    def drain(self, max_blocks: int = 2000) -> int:
        """Advance until nothing is in flight and every closing output is claimed."""
        self.run_until_quiet()
        for n in range(max_blocks):
            if self.quiet() and not self.unresolved_outputs():
                return n
            self.advance(1)
        return max_blocks

    # -- safety ---------------------------------------------------------------------------

    def bet_won(self, actor: Actor, link: Link, bet: Bet) -> bool:
        """Whether an honest ``actor`` is guaranteed to win ``bet`` given what happened."""
        if bet.doubter == actor.address:
            revealed = link.proof_received.get(bet.prop)
            return bet.prop not in self.chain.proven and (revealed is None or revealed >= bet.deadline)
        at = actor.proof_heights.get(bet.prop)
        return at is not None and at <= bet.deadline - 2

    def safety_bound(self, name: str) -> int:
        """Lower bound on what ``name`` must hold on-chain once everything resolves.

        Free coins plus, per funded channel, the worst case over revisions
        either side could still publish of our balance and the bets we are
        owed.  In-flight payments count as zero.
        """
        actor = self.actors[name]
        total = actor.faucet_total
        for link in actor.links.values():
            st = link.state
            if st.funding_tx is None or st.funding_tx.txid not in self.chain.tx_heights:
                continue
            mine = st.params.contrib_a if st.is_a else st.params.contrib_b
            total -= mine
            worst = None
            for rev in st.live_revisions():
                c = st.contents_at(rev)
                value = c.balance_of(st.params, st.me)
                value += sum(b.pot for b in c.bets if self.bet_won(actor, link, b))
                worst = value if worst is None else min(worst, value)
            total += worst or 0
        return total
