"""Scenario files: parsing, validation, execution and reports.

A scenario is an INI document::

    [scenario]
    name = bet-timeout
    summary = one line
    seed = 0

    [actor alice]
    faucet = 100            ; or a list of coins: 60, 40
    policy = honest
    patience = 3            ; any other key is a policy parameter

    [channel ab]
    a = alice
    b = bob
    contrib_a = 100
    contrib_b = 100
    csv_delay = 48

    [prop P]
    provable = yes

    [expect]
    alice = 110             ; final on-chain holdings in bars

    [script]
    steps =
        open ab
        advance 1
        ...

Amounts are bars with up to eight decimals.
"""

from __future__ import annotations

import configparser
import hashlib
import random
import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

from .channel import AddBet, Bet, ChannelError, SettleBet, Status, check_invariants
from .ledger import BAR, LedgerError, audit, bars, format_bars
from .market import (
    BetOffer,
    MarketError,
    Route,
    hedge_bet,
    probability_report_line,
    select_best_counteroffer,
    start_payment,
)
from .peer.harness import Fault, Harness
from .peer.messages import ProofReveal
from .peer.policies import POLICIES, make_policy

HONEST_POLICIES = {"honest", "honest-doubter", "honest-backer", "public-revealer", "passive"}


class ScenarioError(Exception):
    """Malformed or inconsistent scenario (CLI exit code 2)."""


@dataclass
class ActorSpec:
    name: str
    faucet: list[int]
    policy: str = "honest"
    params: dict[str, object] = field(default_factory=dict)


@dataclass
class ChannelSpec:
    name: str
    a: str
    b: str
    contrib_a: int
    contrib_b: int
    csv_delay: int = 48


@dataclass
class Directive:
    verb: str
    args: list[str]
    kw: dict[str, str]
    index: int
    text: str

    def need(self, key: str) -> str:
        if key not in self.kw:
            raise ScenarioError(f"directive {self.index} ({self.text!r}): missing {key}=")
        return self.kw[key]


@dataclass
class Scenario:
    name: str
    summary: str = ""
    seed: int = 0
    actors: dict[str, ActorSpec] = field(default_factory=dict)
    channels: dict[str, ChannelSpec] = field(default_factory=dict)
    props: dict[str, bool] = field(default_factory=dict)
    script: list[Directive] = field(default_factory=list)
    expect: dict[str, int] = field(default_factory=dict)
    honest: list[str] = field(default_factory=list)
    resolve: bool = True


# -- parsing ----------------------------------------------------------------------


def _amount(text: str, where: str) -> int:
    try:
        return bars(text)
    except (ValueError, LedgerError) as e:
        raise ScenarioError(f"{where}: bad amount {text!r}: {e}") from None


def _int(text: str, where: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"{where}: expected an integer, got {text!r}") from None


def _policy_value(text: str):
    low = text.lower()
    if low in ("yes", "true", "on"):
        return True
    if low in ("no", "false", "off"):
        return False
    try:
        return int(text)
    except ValueError:
        return text


def parse_directive(line: str, index: int) -> Directive:
    try:
        parts = shlex.split(line)
    except ValueError as e:
        raise ScenarioError(f"directive {index}: {e}") from None
    args, kw = [], {}
    for p in parts[1:]:
        if "=" in p:
            k, v = p.split("=", 1)
            kw[k] = v
        else:
            args.append(p)
    return Directive(parts[0], args, kw, index, line)


def parse_scenario(text: str) -> Scenario:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ScenarioError(f"parse error: {e}") from None
    if "scenario" not in cp:
        raise ScenarioError("missing [scenario] section")
    head = cp["scenario"]
    s = Scenario(head.get("name", "unnamed"), head.get("summary", ""),
                 _int(head.get("seed", "0"), "seed"))
    for section in cp.sections():
        kind, _, name = section.partition(" ")
        sec = cp[section]
        if kind == "actor":
            params = {k: _policy_value(v) for k, v in sec.items() if k not in ("faucet", "policy")}
            coins = [_amount(x.strip(), section) for x in sec.get("faucet", "0").split(",")]
            s.actors[name] = ActorSpec(name, coins,
                                       sec.get("policy", "honest"), params)
        elif kind == "channel":
            try:
                s.channels[name] = ChannelSpec(
                    name, sec["a"], sec["b"], _amount(sec["contrib_a"], section),
                    _amount(sec["contrib_b"], section), _int(sec.get("csv_delay", "48"), section))
            except KeyError as e:
                raise ScenarioError(f"[{section}] missing {e.args[0]}") from None
        elif kind == "prop":
            s.props[name] = sec.getboolean("provable", True)
        elif section == "expect":
            s.expect = {k: _amount(v, "[expect]") for k, v in sec.items()}
        elif section in ("scenario", "script"):
            pass
        else:
            raise ScenarioError(f"unknown section [{section}]")
    honest = head.get("honest")
    if honest is None:
        s.honest = [a.name for a in s.actors.values() if a.policy in HONEST_POLICIES]
    else:
        s.honest = [x.strip() for x in honest.split(",") if x.strip()]
    s.resolve = head.getboolean("resolve", True)
    lines = cp["script"].get("steps", "") if "script" in cp else ""
    s.script = [parse_directive(ln.strip(), i + 1)
                for i, ln in enumerate(x for x in lines.splitlines() if x.strip())]
    validate(s)
    return s


VERBS = {"open", "advance", "pay", "bet", "obtain", "reveal", "settle", "close", "publish",
         "fault", "route", "hedge", "register", "drain", "offer", "select"}


def validate(s: Scenario) -> None:
    """Check that every reference resolves and channels open before use."""
    def actor(name, d):
        if name not in s.actors:
            raise ScenarioError(f"directive {d.index} ({d.text!r}): unknown actor {name!r}")

    def prop(name, d):
        if name not in s.props:
            raise ScenarioError(f"directive {d.index} ({d.text!r}): unknown proposition {name!r}")

    for spec in s.actors.values():
        if spec.policy not in POLICIES:
            raise ScenarioError(f"actor {spec.name}: unknown policy {spec.policy!r}")
        try:
            make_policy(spec.policy, **spec.params)
        except (TypeError, ValueError) as e:
            raise ScenarioError(f"actor {spec.name}: bad policy parameters: {e}") from None
    for c in s.channels.values():
        for who in (c.a, c.b):
            if who not in s.actors:
                raise ScenarioError(f"channel {c.name}: unknown actor {who!r}")
        if c.a == c.b:
            raise ScenarioError(f"channel {c.name}: parties must differ")
        if c.csv_delay < 1:
            raise ScenarioError(f"channel {c.name}: csv_delay must be >= 1")
    for name in list(s.expect) + s.honest:
        if name not in s.actors:
            raise ScenarioError(f"unknown actor {name!r} in expectations")
    opened: set[str] = set()

    def channel(name, d):
        if name not in s.channels:
            raise ScenarioError(f"directive {d.index} ({d.text!r}): unknown channel {name!r}")
        if name not in opened:
            raise ScenarioError(f"directive {d.index} ({d.text!r}): channel {name} used before open")

    for d in s.script:
        if d.verb not in VERBS:
            raise ScenarioError(f"directive {d.index}: unknown directive {d.verb!r}")
        v = d.verb
        if v == "open":
            for cid in d.args:
                if cid not in s.channels:
                    raise ScenarioError(f"directive {d.index}: unknown channel {cid!r}")
                opened.add(cid)
        elif v == "advance":
            if d.args:
                if _int(d.args[0], f"directive {d.index}") < 1:
                    raise ScenarioError(f"directive {d.index}: advance needs k >= 1")
            else:
                _int(d.need("to"), f"directive {d.index}")
        elif v == "pay":
            channel(d.args[0], d)
            actor(d.need("from"), d)
            _amount(d.need("amount"), f"directive {d.index}")
        elif v == "bet":
            channel(d.args[0], d)
            actor(d.need("doubter"), d)
            actor(d.need("backer"), d)
            prop(d.need("prop"), d)
            _amount(d.need("doubter_stake"), f"directive {d.index}")
            _amount(d.need("backer_stake"), f"directive {d.index}")
            _int(d.need("deadline"), f"directive {d.index}")
        elif v in ("obtain", "register"):
            actor(d.args[0], d)
            prop(d.args[1], d)
        elif v == "reveal":
            actor(d.args[0], d)
            channel(d.args[1], d)
            prop(d.args[2], d)
        elif v == "settle":
            channel(d.args[0], d)
            prop(d.need("prop"), d)
            actor(d.need("winner"), d)
        elif v == "close":
            channel(d.args[0], d)
            actor(d.need("by"), d)
            if d.kw.get("mode", "cooperative") not in ("cooperative", "unilateral"):
                raise ScenarioError(f"directive {d.index}: mode must be cooperative or unilateral")
        elif v == "publish":
            actor(d.args[0], d)
            channel(d.args[1], d)
        elif v == "fault":
            kind = d.args[0] if d.args else ""
            if kind not in ("drop", "silence", "publish-revoked", "withhold"):
                raise ScenarioError(f"directive {d.index}: unknown fault {kind!r}")
            if kind in ("silence", "publish-revoked", "withhold"):
                actor(d.args[1], d)
        elif v == "route":
            actor(d.args[0], d)
            for hop in d.args[1:]:
                channel(hop.split(":")[0], d)
            _amount(d.need("amount"), f"directive {d.index}")
        elif v == "hedge":
            channel(d.args[0], d)
            channel(d.args[1], d)
            prop(d.need("prop"), d)
        elif v == "offer":
            actor(d.need("by"), d)
            prop(d.need("prop"), d)
        elif v == "select":
            actor(d.need("doubter"), d)
            prop(d.need("prop"), d)


# -- loading ----------------------------------------------------------------------


def builtin_names() -> list[str]:
    root = resources.files("proofchannels") / "scenarios"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".ini"))


def builtin_text(name: str) -> str:
    path = resources.files("proofchannels") / "scenarios" / f"{name}.ini"
    if not path.is_file():
        raise ScenarioError(f"unknown builtin scenario {name!r}")
    return path.read_text()


def load_scenario(ref: str) -> Scenario:
    if ref.startswith("builtin:"):
        return parse_scenario(builtin_text(ref[len("builtin:"):]))
    path = Path(ref)
    if not path.is_file():
        if ref in builtin_names():
            return parse_scenario(builtin_text(ref))
        raise ScenarioError(f"no such scenario file: {ref}")
    return parse_scenario(path.read_text())


# -- execution --------------------------------------------------------------------


@dataclass
class Check:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class Report:
    scenario: str
    seed: int
    holdings: dict[str, int]
    statuses: dict[str, dict[str, str]]
    checks: list[Check]
    probabilities: list[str]
    log: list[str]
    height: int

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def log_text(self) -> str:
        return "".join(line + "\n" for line in self.log)

    @property
    def log_digest(self) -> str:
        return hashlib.sha256(self.log_text.encode()).hexdigest()

    def render(self) -> str:
        out = [f"scenario={self.scenario} seed={self.seed} height={self.height}"]
        out += [f"holdings {name}={format_bars(v)}" for name, v in sorted(self.holdings.items())]
        for cid, views in sorted(self.statuses.items()):
            out.append(f"status {cid} " + " ".join(f"{k}={v}" for k, v in views.items()))
        out += self.probabilities
        for c in self.checks:
            out.append(f"check {c.name} {'ok' if c.ok else 'FAIL'}" + (f" {c.detail}" if c.detail else ""))
        out.append(f"log_sha256={self.log_digest}")
        return "\n".join(out) + "\n"


class Runner:
    """Binds a parsed scenario to a harness and schedules its directives."""

    def __init__(self, s: Scenario, seed: Optional[int] = None):
        self.s = s
        self.seed = s.seed if seed is None else seed
        self.h = Harness(self.seed)
        self.offers: list[BetOffer] = []
        self.offer_names: list[str] = []
        self.probabilities: list[str] = []
        self.max_drain = 2000
        for spec in s.actors.values():
            self.h.add_actor(spec.name, make_policy(spec.policy, **spec.params), spec.faucet)
        for name, provable in s.props.items():
            self.h.add_proposition(name, provable)
        for d in s.script:
            self._schedule(d)

    def prop(self, name: str):
        return next(p for p, n in self.h.prop_names.items() if n == name)

    def _schedule(self, d: Directive) -> None:
        h = self.h
        if d.verb == "advance":
            if d.args:
                h.schedule_blocks(int(d.args[0]))
            else:
                h.schedule("advance-to", lambda: self._advance_to(int(d.kw["to"])))
        elif d.verb == "drain":
            limit = int(d.kw.get("max", self.max_drain))
            h.schedule("drain", lambda: self._drain(limit))
        else:
            h.schedule(d.verb, lambda: self._run(d))

    def _advance_to(self, target: int) -> None:
        for _ in range(max(0, target - self.h.chain.height)):
            self.h.actions.appendleft(("block", self.h._block))

    def _drain(self, remaining: int) -> None:
        h = self.h
        if remaining <= 0 or (h.quiet() and not h.unresolved_outputs()):
            return
        h.actions.appendleft(("drain", lambda: self._drain(remaining - 1)))
        h.actions.appendleft(("block", h._block))

    def _bet_line(self, bet: Bet) -> None:
        self.probabilities.append(probability_report_line(
            self.h.prop_names[bet.prop], bet.deadline, bet.doubter_stake, bet.backer_stake))

    def _run(self, d: Directive) -> None:
        h = self.h
        h.emit("script", "directive", n=d.index, verb=d.verb)
        try:
            getattr(self, "_do_" + d.verb.replace("-", "_"))(d)
        except (ChannelError, MarketError, LedgerError, ValueError, KeyError, StopIteration) as e:
            h.emit("script", "directive_failed", n=d.index,
                   error=getattr(e, "code", type(e).__name__))

    def _do_open(self, d: Directive) -> None:
        for cid in d.args:
            c = self.s.channels[cid]
            self.h.open_channel(cid, c.a, c.b, c.contrib_a, c.contrib_b, c.csv_delay)

    def _do_pay(self, d: Directive) -> None:
        self.h.pay(d.args[0], d.kw["from"], bars(d.kw["amount"]))

    def _do_bet(self, d: Directive) -> None:
        h = self.h
        bet = Bet(self.prop(d.kw["prop"]), bars(d.kw["doubter_stake"]), bars(d.kw["backer_stake"]),
                  int(d.kw["deadline"]), h.actors[d.kw["backer"]].address,
                  h.actors[d.kw["doubter"]].address)
        by = d.kw.get("by", d.kw["doubter"])
        self._bet_line(bet)
        h.propose(h.actors[by], d.args[0], AddBet(bet))

    def _do_obtain(self, d: Directive) -> None:
        self.h.obtain(d.args[0], d.args[1], corrupt="corrupt" in d.args[2:])

    def _do_register(self, d: Directive) -> None:
        self.h.register_proof(self.h.actors[d.args[0]], self.prop(d.args[1]))

    def _do_reveal(self, d: Directive) -> None:
        actor = self.h.actors[d.args[0]]
        blob = actor.proofs[self.prop(d.args[2])]
        link = actor.links[d.args[1]]
        link.revealed.add(blob.prop)
        self.h.send(actor, link.peer, ProofReveal(blob))

    def _find_bet(self, actor: str, cid: str, prop: str) -> Bet:
        st = self.h.state(actor, cid)
        p = self.prop(prop)
        return next(b for b in st.contents.bets if b.prop == p)

    def _do_settle(self, d: Directive) -> None:
        h = self.h
        winner = d.kw["winner"]
        by = d.kw.get("by", winner)
        bet = self._find_bet(by, d.args[0], d.kw["prop"])
        h.propose(h.actors[by], d.args[0], SettleBet(bet, h.actors[winner].address))

    def _do_close(self, d: Directive) -> None:
        self.h.request_close(d.args[0], d.kw["by"], d.kw.get("mode", "cooperative"))

    def _do_publish(self, d: Directive) -> None:
        rev = d.kw.get("rev")
        self.h.publish_revoked(self.h.actors[d.args[0]], d.args[1], int(rev) if rev else None)

    def _do_fault(self, d: Directive) -> None:
        kind = d.args[0]
        kw = d.kw
        count = kw.get("count", "1")
        if kind == "drop":
            f = Fault("drop", actor=kw.get("to"), pattern=d.args[1] if len(d.args) > 1 else None,
                      sender=kw.get("from"), count=None if count == "all" else int(count))
        elif kind == "silence":
            f = Fault("silence", actor=d.args[1], until=int(kw["until"]) if "until" in kw else None)
        elif kind == "publish-revoked":
            f = Fault("publish-revoked", actor=d.args[1], channel=kw.get("channel"),
                      revision=int(kw["rev"]) if "rev" in kw else None,
                      at=int(kw["at"]) if "at" in kw else None)
        else:
            f = Fault("withhold", actor=d.args[1])
        self.h.add_fault(f)

    def _do_route(self, d: Directive) -> None:
        hops = []
        for hop in d.args[1:]:
            cid, _, fee = hop.partition(":")
            hops.append((cid, bars(fee) if fee else 0))
        start_payment(self.h, Route.of(d.args[0], *hops), bars(d.kw["amount"]))

    def _do_hedge(self, d: Directive) -> None:
        up, down = d.args[0], d.args[1]
        a, b = self.h.channels[up]
        bet = self._find_bet(a, up, d.kw["prop"])
        hedged = hedge_bet(self.h, up, bet, down)
        self._bet_line(hedged.downstream[1])

    def _do_offer(self, d: Directive) -> None:
        h = self.h
        offer = BetOffer(self.prop(d.kw["prop"]), int(d.need("deadline")),
                         bars(d.need("backer_stake")), bars(d.need("doubter_stake")),
                         h.actors[d.kw["by"]].address)
        self.offers.append(offer)
        self.offer_names.append(d.kw["by"])
        self.probabilities.append("offer by=" + d.kw["by"] + " " + probability_report_line(
            d.kw["prop"], offer.deadline, offer.doubter_stake, offer.backer_stake))

    def _do_select(self, d: Directive) -> None:
        h = self.h
        p = self.prop(d.kw["prop"])
        pool = [o for o in self.offers if o.prop == p]
        best = select_best_counteroffer(pool)
        name = self.offer_names[self.offers.index(best)]
        doubter = d.kw["doubter"]
        h.emit(doubter, "select_offer", prop=p, offerer=name,
               backer=format_bars(best.backer_stake))
        cid = next(c for c, (x, y) in h.channels.items() if {x, y} == {doubter, name})
        bet = Bet(p, best.doubter_stake, best.backer_stake, best.deadline, best.offerer,
                  h.actors[doubter].address)
        self.probabilities.append("selected by=" + name + " " + probability_report_line(
            d.kw["prop"], bet.deadline, bet.doubter_stake, bet.backer_stake))
        h.propose(h.actors[doubter], cid, AddBet(bet))

    # -- report --------------------------------------------------------------------

    def run(self, max_steps: int = 2_000_000) -> Report:
        self.h.run(max_steps)
        return self.report()

    def report(self) -> Report:
        h = self.h
        s = self.s
        holdings = {name: h.holdings(name) for name in sorted(h.actors)}
        statuses = {}
        for cid, (a, b) in sorted(h.channels.items()):
            views = {}
            for name in (a, b):
                link = h.actors[name].links.get(cid)
                views[name] = link.state.status.value if link else "None"
            statuses[cid] = views
        checks = []
        problems = audit(h.chain)
        checks.append(Check("ledger-audit", not problems, "; ".join(problems)))
        minted = h.chain.minted
        live = h.chain.live_total
        conserved = live + h.chain.burned == minted and h.chain.burned == 0
        checks.append(Check("conservation", conserved,
                            f"minted={format_bars(minted)} live={format_bars(live)}"))
        bad = []
        for name, actor in sorted(h.actors.items()):
            for cid, link in actor.links.items():
                bad += [f"{name}/{cid}: {p}" for p in check_invariants(link.state)]
        checks.append(Check("channel-invariants", not bad, "; ".join(bad)))
        if s.resolve:
            pending = h.unresolved_outputs()
            settled = h.quiet() and not pending
            checks.append(Check("resolved", settled, f"{len(pending)} unclaimed outputs" if pending else ""))
            total = sum(holdings.values())
            checks.append(Check("holdings-sum", total == minted,
                                f"{format_bars(total)} of {format_bars(minted)}"))
            short = []
            # an actor that was taken offline or told to withhold is the faulty party
            faulted = {f.actor for f in h.faults if f.kind in ("silence", "withhold")}
            for name in s.honest:
                if name in faulted:
                    continue
                bound = h.safety_bound(name)
                if holdings[name] < bound:
                    short.append(f"{name} holds {format_bars(holdings[name])} < {format_bars(bound)}")
            checks.append(Check("honest-safety", not short, "; ".join(short)))
        wrong = [f"{name}={format_bars(holdings[name])} expected {format_bars(v)}"
                 for name, v in sorted(s.expect.items()) if holdings[name] != v]
        if s.expect:
            checks.append(Check("expected-holdings", not wrong, "; ".join(wrong)))
        return Report(s.name, self.seed, holdings, statuses, checks, self.probabilities,
                      list(h.log), h.chain.height)


def run_scenario(s: Scenario, seed: Optional[int] = None) -> Report:
    return Runner(s, seed).run()


# -- random scenarios ------------------------------------------------------------


def random_scenario(seed: int) -> Scenario:
    """A small two-party scenario with random updates, bets, one fault and a close."""
    rng = random.Random(seed)
    csv = rng.choice([2, 3, 4, 6])
    fa, fb = rng.randint(1, 40) * BAR, rng.randint(1, 40) * BAR
    ca, cb = rng.randint(0, fa // BAR) * BAR, rng.randint(0, fb // BAR) * BAR
    if ca + cb == 0:
        ca = fa
    s = Scenario(f"random-{seed}", seed=seed, resolve=True)
    s.props = {"P": rng.random() < 0.7, "Q": rng.random() < 0.5}
    cheat = rng.random() < 0.2
    s.actors = {
        "alice": ActorSpec("alice", [fa], "cheater" if cheat else "honest",
                           {"at": 0} if cheat else {"patience": rng.randint(1, 4)}),
        "bob": ActorSpec("bob", [fb], "honest", {"patience": rng.randint(1, 4),
                                                "watch_delay": rng.randint(0, csv - 1),
                                                "late_proof": rng.choice(["concede", "race"])}),
    }
    s.channels = {"ab": ChannelSpec("ab", "alice", "bob", ca, cb, csv)}
    s.honest = ["bob"] if cheat else ["alice", "bob"]
    lines = ["open ab", "advance 1"]
    height = 1
    bal = {"alice": ca, "bob": cb}
    fault_used = cheat  # a cheating counterparty is already the one fault
    quiet_until = 0
    for _ in range(rng.randint(1, 8)):
        r = rng.random()
        if r < 0.35:
            payer = rng.choice(["alice", "bob"])
            if bal[payer] >= 1:
                amt = rng.randint(1, max(1, bal[payer] // 10**6)) * 10**6
                amt = min(amt, bal[payer])
                other = "bob" if payer == "alice" else "alice"
                bal[payer] -= amt
                bal[other] += amt
                lines.append(f"pay ab from={payer} amount={format_bars(amt)}")
        elif r < 0.6:
            doubter = rng.choice(["alice", "bob"])
            backer = "bob" if doubter == "alice" else "alice"
            ds = rng.randint(0, bal[doubter] // 10**7) * 10**7
            bs = rng.randint(0, bal[backer] // 10**7) * 10**7
            if ds + bs > 0:
                bal[doubter] -= ds
                bal[backer] -= bs
                deadline = height + rng.randint(3, 15)
                prop = rng.choice(["P", "Q"])
                lines.append(f"bet ab doubter={doubter} backer={backer} doubter_stake={format_bars(ds)} "
                             f"backer_stake={format_bars(bs)} prop={prop} deadline={deadline}")
                if s.props[prop] and rng.random() < 0.7:
                    lines.append(f"obtain {backer} {prop}")
        elif r < 0.8:
            k = rng.randint(1, 6)
            height += k
            lines.append(f"advance {k}")
        elif not fault_used:
            fault_used = True
            kind = rng.choice(["drop", "silence", "withhold"])
            if kind == "drop":
                msg = rng.choice(["RevokeAck", "CommitSig", "SettleAck", "PayAck", "ProofReveal", "BetAccept"])
                lines.append(f"fault drop {msg} count=1")
            elif kind == "silence":
                who = rng.choice(["alice", "bob"])
                quiet_until = height + rng.randint(1, 20)
                lines.append(f"fault silence {who} until={quiet_until}")
            else:
                lines.append(f"fault withhold {rng.choice(['alice', 'bob'])}")
    if rng.random() < 0.5:
        lines.append(f"advance {rng.randint(1, 20)}")
    if quiet_until:
        # everyone back online before the closing phase
        lines.append(f"advance to={quiet_until + 1}")
    mode = rng.choice(["cooperative", "unilateral"])
    lines.append(f"close ab by={rng.choice(['alice', 'bob'])} mode={mode}")
    lines.append("advance 1")
    lines.append(f"close ab by={rng.choice(['alice', 'bob'])} mode=unilateral")
    lines.append("drain")
    s.script = [parse_directive(ln, i + 1) for i, ln in enumerate(lines)]
    validate(s)
    return s
