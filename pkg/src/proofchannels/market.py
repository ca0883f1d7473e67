"""Multi-hop payments, hedged bets and implied-probability arithmetic."""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import TYPE_CHECKING, Optional, Sequence, Union

from .channel import AddBet, AddHtlc, Bet, InsufficientBalance, PaymentHtlc, Status
from .ledger import format_bars
from .peer import messages as m
from .peer.policies import Send
from .script import Address, HashLock, PropositionId, Secret, hash_secret

if TYPE_CHECKING:
    from .peer.harness import Harness


class MarketError(Exception):
    code = "MarketError"


class InsufficientLiquidity(MarketError):
    code = "InsufficientLiquidity"

    def __init__(self, hop: int, msg: str):
        super().__init__(msg)
        self.hop = hop


class RouteBroken(MarketError):
    code = "RouteBroken"


class DeadlineMismatch(MarketError):
    code = "DeadlineMismatch"


class NoOffers(MarketError):
    code = "NoOffers"


# -- probabilities -----------------------------------------------------------


def implied_probability(doubter_stake: int, backer_stake: int) -> Fraction:
    """Exact market-implied chance that the proposition gets proven."""
    if doubter_stake < 0 or backer_stake < 0:
        raise ValueError("stakes must be non-negative")
    if doubter_stake + backer_stake == 0:
        raise ValueError("at least one stake must be positive")
    return Fraction(backer_stake, doubter_stake + backer_stake)


def format_probability(p: Fraction, places: int = 4) -> str:
    q = Decimal(1).scaleb(-places)
    return str((Decimal(p.numerator) / Decimal(p.denominator)).quantize(q, rounding=ROUND_HALF_UP))


def probability_report_line(prop: str, deadline: int, doubter_stake: int, backer_stake: int) -> str:
    p = implied_probability(doubter_stake, backer_stake)
    return (f"prop={prop} deadline={deadline} doubter={format_bars(doubter_stake)} "
            f"backer={format_bars(backer_stake)} p={format_probability(p)}")


@dataclass(frozen=True)
class BetOffer:
    prop: PropositionId
    deadline: int
    backer_stake: int
    doubter_stake: int
    offerer: Address

    def __post_init__(self):
        if self.backer_stake <= 0 or self.doubter_stake <= 0:
            raise ValueError("offer stakes must be positive")

    @property
    def probability(self) -> Fraction:
        return implied_probability(self.doubter_stake, self.backer_stake)


def select_best_counteroffer(offers: Sequence[BetOffer]) -> BetOffer:
    """Highest backer stake wins; the earliest offer wins a tie."""
    if not offers:
        raise NoOffers("no counteroffers to choose from")
    terms = {(o.prop, o.deadline, o.doubter_stake) for o in offers}
    if len(terms) > 1:
        raise ValueError("counteroffers must share proposition, deadline and doubter stake")
    best = offers[0]
    for o in offers[1:]:
        if o.backer_stake > best.backer_stake:
            best = o
    return best


# -- routing -------------------------------------------------------------------


@dataclass(frozen=True)
class Hop:
    channel: str
    fee: int = 0  # kept by this hop's receiver when it forwards


@dataclass(frozen=True)
class Route:
    source: str
    hops: tuple[Hop, ...]

    @classmethod
    def of(cls, source: str, *hops: Union[str, tuple[str, int]]) -> "Route":
        return cls(source, tuple(Hop(h) if isinstance(h, str) else Hop(*h) for h in hops))


@dataclass(frozen=True)
class PlannedHop:
    channel: str
    sender: str
    receiver: str
    amount: int
    expiry: int
    delay: int


HOP_EXPIRY_DELTA = 6
HTLC_DELAY = 6


def plan_route(h: "Harness", route: Route, amount: int) -> list[PlannedHop]:
    if amount <= 0:
        raise ValueError("payment amount must be positive")
    if not route.hops:
        raise RouteBroken("route has no hops")
    if route.hops[-1].fee:
        raise RouteBroken("the final hop cannot charge a fee")
    n = len(route.hops)
    plan = []
    sender = route.source
    height = h.chain.height
    for i, hop in enumerate(route.hops):
        parties = h.channels.get(hop.channel)
        if parties is None or sender not in parties:
            raise RouteBroken(f"hop {i}: {sender} is not a party of channel {hop.channel}")
        receiver = parties[1] if parties[0] == sender else parties[0]
        carried = amount + sum(x.fee for x in route.hops[i:])
        link = h.actors[sender].links.get(hop.channel)
        if link is None or link.state.status != Status.OPEN:
            raise RouteBroken(f"hop {i}: channel {hop.channel} is not open")
        if link.state.my_balance < carried:
            raise InsufficientLiquidity(i, f"hop {i}: {sender} has {format_bars(link.state.my_balance)}, "
                                           f"needs {format_bars(carried)}")
        expiry = height + HOP_EXPIRY_DELTA * (n - i + 1)
        plan.append(PlannedHop(hop.channel, sender, receiver, carried, expiry, HTLC_DELAY))
        sender = receiver
    return plan


@dataclass
class RouteResult:
    payment_hash: HashLock
    plan: list[PlannedHop]
    before: dict[str, int]

    def deltas(self, h: "Harness") -> dict[str, int]:
        """Change in each route actor's channel balances since the payment began."""
        now = _route_balances(h, self.plan)
        return {name: now[name] - self.before[name] for name in self.before}


def _route_balances(h: "Harness", plan: list[PlannedHop]) -> dict[str, int]:
    out: dict[str, int] = {}
    for hop in plan:
        for name in (hop.sender, hop.receiver):
            link = h.actors[name].links[hop.channel]
            out[name] = out.get(name, 0) + link.state.my_balance
    # an actor on two hops was counted per channel; that is what we want
    return out


def start_payment(h: "Harness", route: Route, amount: int) -> RouteResult:
    """Lock the payment hop by hop; the final receiver releases the preimage."""
    plan = plan_route(h, route, amount)
    target = h.actors[plan[-1].receiver]
    preimage = Secret(target.rng.randbytes(32))
    payment_hash = hash_secret(preimage)
    target.invoices[payment_hash] = preimage
    before = _route_balances(h, plan)
    first = plan[0]
    sender = h.actors[first.sender]
    htlc = PaymentHtlc(payment_hash, first.amount, sender.address,
                       h.actors[first.receiver].address, first.expiry, first.delay)
    onion = tuple((x.channel, x.amount, x.expiry, x.delay) for x in plan[1:])
    h.emit(first.sender, "route", hash=payment_hash, amount=format_bars(amount),
           hops=len(plan), to=target.name)
    h.propose(sender, first.channel, AddHtlc(htlc), onion)
    return RouteResult(payment_hash, plan, before)


def route_payment(h: "Harness", route: Route, amount: int) -> dict[str, int]:
    """Route ``amount`` and return per-actor channel-balance deltas once quiet."""
    result = start_payment(h, route, amount)
    h.run_until_quiet()
    return result.deltas(h)


# -- hedging ------------------------------------------------------------------------


@dataclass(frozen=True)
class HedgedBet:
    middle: str
    upstream: tuple[str, Bet]
    downstream: tuple[str, Bet]

    def __post_init__(self):
        up, down = self.upstream[1], self.downstream[1]
        if up.prop != down.prop or up.deadline != down.deadline:
            raise DeadlineMismatch("hedged bets must share proposition and deadline")
        if (up.doubter_stake, up.backer_stake) != (down.doubter_stake, down.backer_stake):
            raise ValueError("hedged stakes must mirror exactly")


def mirror_bet(bet: Bet, middle: Address, counterparty: Address, deadline: Optional[int] = None) -> Bet:
    deadline = bet.deadline if deadline is None else deadline
    if deadline != bet.deadline:
        raise DeadlineMismatch(f"downstream deadline {deadline} differs from {bet.deadline}")
    if middle == bet.backer:
        backer, doubter = counterparty, middle
    elif middle == bet.doubter:
        backer, doubter = middle, counterparty
    else:
        raise ValueError("middle actor is not a party of the upstream bet")
    return Bet(bet.prop, bet.doubter_stake, bet.backer_stake, deadline, backer, doubter)


def hedge_bet(h: "Harness", upstream: str, bet: Bet, downstream: str,
              deadline: Optional[int] = None) -> HedgedBet:
    """Have the shared actor of both channels take the opposite side downstream."""
    up_parties = set(h.channels[upstream])
    down_parties = h.channels[downstream]
    shared = up_parties & set(down_parties)
    if len(shared) != 1:
        raise RouteBroken("channels must share exactly one actor")
    middle = shared.pop()
    other = down_parties[1] if down_parties[0] == middle else down_parties[0]
    actor = h.actors[middle]
    mirrored = mirror_bet(bet, actor.address, h.actors[other].address, deadline)
    st = actor.links[downstream].state
    mine = mirrored.stake_of(actor.address)
    if st.my_balance < mine:
        raise InsufficientBalance(f"{middle} has {format_bars(st.my_balance)} in {downstream}, "
                                  f"needs {format_bars(mine)}")
    h.propose(actor, downstream, AddBet(mirrored))
    return HedgedBet(middle, (upstream, bet), (downstream, mirrored))


def propagate_proof(h: "Harness", hedged: HedgedBet, holder: str,
                    blob: m.ProofBlob) -> list[tuple[str, Send]]:
    """Reveals owed along a hedge, starting at ``holder``.

    A proof only travels from a backer to its doubter, so it moves from the
    backer end toward the doubter end and stops at anyone who merely doubts.
    """
    if not m.verify_proof(blob, h.oracle) or blob.prop != hedged.upstream[1].prop:
        return []
    by_addr = {a.address: name for name, a in h.actors.items()}
    legs = [hedged.downstream, hedged.upstream]
    if by_addr[hedged.upstream[1].backer] != hedged.middle:
        legs.reverse()
    out = []
    current = holder
    for channel, bet in legs:
        if by_addr[bet.backer] != current:
            continue
        receiver = by_addr[bet.doubter]
        out.append((current, Send(receiver, m.ProofReveal(blob))))
        current = receiver
    return out
