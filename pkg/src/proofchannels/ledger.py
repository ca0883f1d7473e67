"""Simulated Layer-1 chain.

Keeps a UTXO set, a block-height clock and a registry of proven
propositions.  Submitted transactions and proofs wait in a queue and confirm
together in the next block; there are no fees, reorgs or mining.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from functools import cached_property
from typing import Callable, Iterable, Optional, Union

from .script import (
    Address,
    EvalContext,
    PayToAddr,
    PropositionId,
    Script,
    Witness,
    eval_script,
    serialize_script,
)

__all__ = [
    "BAR", "MAX_ATOMS", "Address", "PropositionId", "OutPoint", "TxInput", "TxOutput",
    "Transaction", "Utxo", "ChainState", "LedgerError", "UnknownOutpoint", "DoubleSpend",
    "ValueCreated", "ZeroAmount", "AmountOverflow", "InvalidTransaction", "bars",
    "format_bars", "checked_sum", "new_chain", "audit",
]

BAR = 10**8
MAX_ATOMS = 2**63 - 1


class LedgerError(Exception):
    code = "LedgerError"


class UnknownOutpoint(LedgerError):
    code = "UnknownOutpoint"


class DoubleSpend(LedgerError):
    code = "DoubleSpend"


class ValueCreated(LedgerError):
    code = "ValueCreated"


class ZeroAmount(LedgerError):
    code = "ZeroAmount"


class AmountOverflow(LedgerError):
    code = "AmountOverflow"


class InvalidTransaction(LedgerError):
    code = "InvalidTransaction"


def bars(value: Union[str, int, Decimal]) -> int:
    """Parse a bar quantity such as ``"100"`` or ``"1.00000001"`` into atoms."""
    try:
        d = Decimal(str(value))
    except InvalidOperation:
        raise ValueError(f"not an amount: {value!r}") from None
    atoms = d * BAR
    if atoms != atoms.to_integral_value():
        raise ValueError(f"{value!r} has more than 8 decimal places")
    atoms = int(atoms)
    if atoms < 0 or atoms > MAX_ATOMS:
        raise ValueError(f"amount out of range: {value!r}")
    return atoms


def format_bars(atoms: int) -> str:
    whole, frac = divmod(atoms, BAR)
    if not frac:
        return str(whole)
    return f"{whole}.{frac:08d}".rstrip("0")


def checked_sum(amounts: Iterable[int]) -> int:
    total = 0
    for a in amounts:
        if a < 0:
            raise ValueError("negative amount")
        total += a
        if total > MAX_ATOMS:
            raise AmountOverflow("amount sum overflows")
    return total


@dataclass(frozen=True, order=True)
class OutPoint:
    txid: bytes
    index: int

    def __str__(self):
        return f"{self.txid.hex()[:8]}:{self.index}"


@dataclass(frozen=True)
class TxOutput:
    amount: int
    script: Script

    def __post_init__(self):
        if self.amount <= 0:
            raise ZeroAmount("output amount must be positive")
        if self.amount > MAX_ATOMS:
            raise AmountOverflow("output amount too large")


@dataclass(frozen=True)
class TxInput:
    outpoint: OutPoint
    witness: Optional[Witness] = None


@dataclass(frozen=True)
class Transaction:
    inputs: tuple[TxInput, ...]
    outputs: tuple[TxOutput, ...]

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.inputs or not self.outputs:
            raise InvalidTransaction("transaction needs at least one input and one output")
        outpoints = [i.outpoint for i in self.inputs]
        if len(set(outpoints)) != len(outpoints):
            raise InvalidTransaction("duplicate outpoint in transaction")

    def serialize(self) -> bytes:
        """Witness-free canonical encoding; signatures commit to these bytes."""
        parts = [struct.pack(">I", len(self.inputs))]
        for i in self.inputs:
            parts.append(struct.pack(">I", len(i.outpoint.txid)) + i.outpoint.txid)
            parts.append(struct.pack(">I", i.outpoint.index))
        parts.append(struct.pack(">I", len(self.outputs)))
        for o in self.outputs:
            s = serialize_script(o.script)
            parts.append(struct.pack(">Q", o.amount) + struct.pack(">I", len(s)) + s)
        return b"".join(parts)

    @cached_property
    def digest(self) -> bytes:
        return hashlib.sha256(self.serialize()).digest()

    @property
    def txid(self) -> bytes:
        return self.digest

    def outpoint(self, index: int) -> OutPoint:
        return OutPoint(self.txid, index)

    def with_witnesses(self, witnesses: Iterable[Optional[Witness]]) -> "Transaction":
        ins = tuple(TxInput(i.outpoint, w) for i, w in zip(self.inputs, witnesses, strict=True))
        return Transaction(ins, self.outputs)

    @property
    def total_out(self) -> int:
        return checked_sum(o.amount for o in self.outputs)

    @classmethod
    def unsigned(cls, outpoints: Iterable[OutPoint], outputs: Iterable[TxOutput]) -> "Transaction":
        return cls(tuple(TxInput(op) for op in outpoints), tuple(outputs))


@dataclass(frozen=True)
class Utxo:
    output: TxOutput
    height: int


@dataclass
class ChainState:
    height: int = 0
    utxos: dict[OutPoint, Utxo] = field(default_factory=dict)
    proven: dict[PropositionId, int] = field(default_factory=dict)
    pending_txs: list[Transaction] = field(default_factory=list)
    pending_proofs: list[PropositionId] = field(default_factory=list)
    minted: int = 0
    burned: int = 0
    # history, for audit and for actors inspecting closing transactions
    txs: dict[bytes, Transaction] = field(default_factory=dict)
    tx_heights: dict[bytes, int] = field(default_factory=dict)
    spent_by: dict[OutPoint, bytes] = field(default_factory=dict)
    faucets: list[tuple[OutPoint, TxOutput, int]] = field(default_factory=list)
    blocks: list[tuple[int, list[bytes]]] = field(default_factory=list)
    listener: Optional[Callable[..., None]] = field(default=None, repr=False, compare=False)

    def _emit(self, kind: str, **detail) -> None:
        if self.listener is not None:
            self.listener(kind, **detail)

    # -- funding -------------------------------------------------------------

    def faucet(self, addr: Address, amount: int) -> OutPoint:
        if amount <= 0:
            raise ZeroAmount("faucet amount must be positive")
        checked_sum([self.minted, amount])
        seed = b"faucet" + struct.pack(">Q", len(self.faucets)) + addr.id
        op = OutPoint(hashlib.sha256(seed).digest(), 0)
        out = TxOutput(amount, PayToAddr(addr))
        self.utxos[op] = Utxo(out, self.height)
        self.faucets.append((op, out, self.height))
        self.minted += amount
        self._emit("faucet", addr=addr, amount=amount, outpoint=op)
        return op

    # -- transactions --------------------------------------------------------

    def _pending_spends(self) -> dict[OutPoint, bytes]:
        return {i.outpoint: tx.txid for tx in self.pending_txs for i in tx.inputs}

    def context(self, outpoint: OutPoint, tx_digest: bytes) -> EvalContext:
        return EvalContext(tx_digest, self.utxos[outpoint].height, self.height, self.is_proven)

    def submit_tx(self, tx: Transaction) -> bytes:
        txid = tx.txid
        if txid in self.txs or any(p.txid == txid for p in self.pending_txs):
            raise InvalidTransaction("transaction already known")
        pending = self._pending_spends()
        total_in = 0
        for i in tx.inputs:
            if i.outpoint in self.spent_by or i.outpoint in pending:
                raise DoubleSpend(f"{i.outpoint} already spent")
            utxo = self.utxos.get(i.outpoint)
            if utxo is None:
                raise UnknownOutpoint(f"{i.outpoint} is not a live output")
            if i.witness is None:
                raise InvalidTransaction(f"input {i.outpoint} has no witness")
            eval_script(utxo.output.script, i.witness, self.context(i.outpoint, txid))
            total_in += utxo.output.amount
        if tx.total_out > total_in:
            raise ValueCreated(f"outputs {tx.total_out} exceed inputs {total_in}")
        self.pending_txs.append(tx)
        self._emit("tx_submitted", txid=txid)
        return txid

    def register_proof(self, p: PropositionId) -> None:
        if p not in self.proven and p not in self.pending_proofs:
            self.pending_proofs.append(p)

    def is_proven(self, p: PropositionId) -> bool:
        h = self.proven.get(p)
        return h is not None and h <= self.height

    def advance_blocks(self, k: int = 1) -> None:
        if k < 1:
            raise ValueError("must advance at least one block")
        block = self.height + 1
        confirmed = []
        proofs = [p for p in self.pending_proofs if p not in self.proven]
        for p in proofs:
            self.proven[p] = block
        for tx in self.pending_txs:
            txid = tx.txid
            total_in = 0
            for i in tx.inputs:
                total_in += self.utxos.pop(i.outpoint).output.amount
                self.spent_by[i.outpoint] = txid
            for n, out in enumerate(tx.outputs):
                self.utxos[OutPoint(txid, n)] = Utxo(out, block)
            self.burned += total_in - tx.total_out
            self.txs[txid] = tx
            self.tx_heights[txid] = block
            confirmed.append(txid)
        self.pending_proofs = []
        self.pending_txs = []
        self.blocks.append((block, confirmed))
        self.height += k
        self._emit("block", txs=len(confirmed), proofs=len(proofs))
        for p in proofs:
            self._emit("proof_confirmed", prop=p)
        for txid in confirmed:
            self._emit("tx_confirmed", txid=txid)

    # -- queries -------------------------------------------------------------

    def confirmations(self, outpoint: OutPoint) -> int:
        utxo = self.utxos.get(outpoint)
        return 0 if utxo is None else self.height - utxo.height + 1

    def spender(self, outpoint: OutPoint) -> Optional[Transaction]:
        """Confirmed or queued transaction spending ``outpoint``, if any."""
        txid = self.spent_by.get(outpoint)
        if txid is not None:
            return self.txs[txid]
        for tx in self.pending_txs:
            if any(i.outpoint == outpoint for i in tx.inputs):
                return tx
        return None

    def is_spent(self, outpoint: OutPoint) -> bool:
        return self.spender(outpoint) is not None

    def holdings(self, addr: Address) -> int:
        script = PayToAddr(addr)
        return sum(u.output.amount for u in self.utxos.values() if u.output.script == script)

    def utxos_of(self, addr: Address) -> list[OutPoint]:
        script = PayToAddr(addr)
        return sorted(op for op, u in self.utxos.items() if u.output.script == script)

    @property
    def live_total(self) -> int:
        return sum(u.output.amount for u in self.utxos.values())


def new_chain() -> ChainState:
    return ChainState()


def audit(chain: ChainState) -> list[str]:
    """Replay the chain history and return a list of invariant violations."""
    problems = []
    live: dict[OutPoint, tuple[int, int]] = {}
    minted = 0
    for op, out, height in chain.faucets:
        live[op] = (out.amount, height)
        minted += out.amount
    consumed: set[OutPoint] = set()
    burned = 0
    for block, txids in chain.blocks:
        for txid in txids:
            tx = chain.txs[txid]
            total_in = 0
            for i in tx.inputs:
                if i.outpoint in consumed:
                    problems.append(f"double spend of {i.outpoint}")
                consumed.add(i.outpoint)
                entry = live.pop(i.outpoint, None)
                if entry is None:
                    problems.append(f"spend of unknown {i.outpoint}")
                    continue
                total_in += entry[0]
            if tx.total_out > total_in:
                problems.append(f"tx {txid.hex()[:8]} creates value")
            burned += total_in - tx.total_out
            for n, out in enumerate(tx.outputs):
                live[OutPoint(txid, n)] = (out.amount, block)
    if set(live) != set(chain.utxos):
        problems.append("replayed utxo set differs from chain state")
    if minted != chain.minted or burned != chain.burned:
        problems.append("minted/burned totals differ from replay")
    if minted != sum(a for a, _ in live.values()) + burned:
        problems.append("value not conserved")
    for op, utxo in chain.utxos.items():
        if utxo.height > chain.height:
            problems.append(f"{op} created in the future")
    for p, h in chain.proven.items():
        if h > chain.height:
            problems.append(f"proposition {p} proven in the future")
    return problems
