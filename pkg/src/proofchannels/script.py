"""Contract terms, witnesses and the evaluator.

Five contract shapes are supported: pay-to-address, 2-of-2 multisig, the
hashed timelock ``h(lock, claimant, delay, inner)``, the proposition timelock
``p(prop, prover, timeout, refundee)`` and the htlc wrapping a ptlc.  There is
no opcode VM; each shape has a fixed set of spend branches checked by
:func:`eval_script`.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Union

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

ADDRESS_SIZE = 20
DIGEST_SIZE = 32


def sha256(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


@dataclass(frozen=True, order=True)
class Address:
    """Hash of a public key."""

    id: bytes

    def __post_init__(self):
        if len(self.id) != ADDRESS_SIZE:
            raise ValueError(f"address must be {ADDRESS_SIZE} bytes")

    @classmethod
    def from_pubkey(cls, pubkey: bytes) -> "Address":
        return cls(sha256(pubkey)[:ADDRESS_SIZE])

    def __str__(self):
        return self.id.hex()[:8]


@dataclass(frozen=True, order=True)
class PropositionId:
    """Hash root identifying a proposition."""

    id: bytes

    def __post_init__(self):
        if len(self.id) != DIGEST_SIZE:
            raise ValueError(f"proposition id must be {DIGEST_SIZE} bytes")

    @classmethod
    def from_label(cls, label: str) -> "PropositionId":
        return cls(sha256(b"prop:" + label.encode()))

    def __str__(self):
        return self.id.hex()[:8]


@dataclass(frozen=True)
class Secret:
    value: bytes

    def __post_init__(self):
        if len(self.value) != DIGEST_SIZE:
            raise ValueError("secret must be 32 bytes")

    def __repr__(self):
        return "Secret(...)"


@dataclass(frozen=True)
class HashLock:
    value: bytes

    def __post_init__(self):
        if len(self.value) != DIGEST_SIZE:
            raise ValueError("hash lock must be 32 bytes")

    def __str__(self):
        return self.value.hex()[:8]


def hash_secret(s: Secret) -> HashLock:
    return HashLock(sha256(s.value))


# -- keys and signatures ---------------------------------------------------


@dataclass(frozen=True)
class Sig:
    """Ed25519 signature together with the signer's public key."""

    pubkey: bytes
    signature: bytes


class PrivKey:
    def __init__(self, raw: bytes):
        self._key = Ed25519PrivateKey.from_private_bytes(raw)
        self.pubkey = self._key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
        self.address = Address.from_pubkey(self.pubkey)

    def sign(self, digest: bytes) -> Sig:
        return Sig(self.pubkey, self._key.sign(digest))

    def __repr__(self):
        return f"PrivKey(address={self.address})"


def keygen(seed: Union[bytes, str]) -> tuple[PrivKey, Address]:
    """Deterministic keypair from an arbitrary seed."""
    if isinstance(seed, str):
        seed = seed.encode()
    priv = PrivKey(sha256(b"keygen:" + seed))
    return priv, priv.address


def sign(priv: PrivKey, digest: bytes) -> Sig:
    return priv.sign(digest)


@lru_cache(maxsize=4096)
def _load_pubkey(raw: bytes) -> Ed25519PublicKey:
    return Ed25519PublicKey.from_public_bytes(raw)


def verify(addr: Address, sig: Optional[Sig], digest: bytes) -> bool:
    if sig is None or Address.from_pubkey(sig.pubkey) != addr:
        return False
    try:
        _load_pubkey(sig.pubkey).verify(sig.signature, digest)
    except (InvalidSignature, ValueError):
        return False
    return True


# -- scripts ----------------------------------------------------------------


@dataclass(frozen=True)
class PayToAddr:
    addr: Address

    def __str__(self):
        return str(self.addr)


@dataclass(frozen=True)
class Multisig2:
    a: Address
    b: Address

    def __str__(self):
        return f"multisig({self.a},{self.b})"


@dataclass(frozen=True)
class Ptlc:
    prop: PropositionId
    prover: Address
    timeout: int
    refundee: Address

    def __post_init__(self):
        if self.timeout < 1:
            raise ValueError("ptlc timeout must be >= 1")

    def __str__(self):
        return f"p({self.prop},{self.prover},{self.timeout},{self.refundee})"


@dataclass(frozen=True)
class Htlc:
    lock: HashLock
    claimant: Address
    delay: int
    inner: Union[PayToAddr, Ptlc]

    def __post_init__(self):
        if self.delay < 1:
            raise ValueError("htlc delay must be >= 1")
        if not isinstance(self.inner, (PayToAddr, Ptlc)):
            raise ValueError("htlc inner script must be PayToAddr or Ptlc")

    def __str__(self):
        return f"h({self.lock},{self.claimant},{self.delay},{self.inner})"


Script = Union[PayToAddr, Multisig2, Htlc, Ptlc]

_TAGS = {PayToAddr: 1, Multisig2: 2, Htlc: 3, Ptlc: 4}


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


def serialize_script(script: Script) -> bytes:
    """Canonical byte encoding: tag byte, then length-prefixed fields in order."""
    tag = bytes([_TAGS[type(script)]])
    if isinstance(script, PayToAddr):
        fields = [script.addr.id]
    elif isinstance(script, Multisig2):
        fields = [script.a.id, script.b.id]
    elif isinstance(script, Ptlc):
        fields = [
            script.prop.id,
            script.prover.id,
            struct.pack(">Q", script.timeout),
            script.refundee.id,
        ]
    elif isinstance(script, Htlc):
        fields = [
            script.lock.value,
            script.claimant.id,
            struct.pack(">Q", script.delay),
            serialize_script(script.inner),
        ]
    else:
        raise TypeError(f"not a script: {script!r}")
    return tag + b"".join(_lp(f) for f in fields)


# -- witnesses --------------------------------------------------------------


@dataclass(frozen=True)
class SigWitness:
    sig: Optional[Sig]


@dataclass(frozen=True)
class Sig2Witness:
    sig_a: Optional[Sig]
    sig_b: Optional[Sig]


@dataclass(frozen=True)
class SecretBranch:
    secret: Secret
    sig: Optional[Sig]


@dataclass(frozen=True)
class DelayBranch:
    inner: "Witness"


@dataclass(frozen=True)
class ProvenBranch:
    sig: Optional[Sig]


@dataclass(frozen=True)
class TimeoutBranch:
    sig: Optional[Sig]


Witness = Union[SigWitness, Sig2Witness, SecretBranch, DelayBranch, ProvenBranch, TimeoutBranch]


# -- evaluation -------------------------------------------------------------


class EvalError(Exception):
    code = "EvalError"


class BadSecret(EvalError):
    code = "BadSecret"


class MissingSignature(EvalError):
    code = "MissingSignature"


class BadSignature(EvalError):
    code = "BadSignature"


class DelayNotElapsed(EvalError):
    code = "DelayNotElapsed"


class PropositionNotProven(EvalError):
    code = "PropositionNotProven"


class TimeoutNotReached(EvalError):
    code = "TimeoutNotReached"


class WitnessShapeMismatch(EvalError):
    code = "WitnessShapeMismatch"


@dataclass(frozen=True)
class EvalContext:
    tx_digest: bytes
    utxo_height: int
    chain_height: int
    is_proven: Callable[[PropositionId], bool]

    @property
    def confirmations(self) -> int:
        return self.chain_height - self.utxo_height + 1


def _check_sig(addr: Address, sig: Optional[Sig], ctx: EvalContext) -> None:
    if sig is None:
        raise MissingSignature(f"no signature for {addr}")
    if not verify(addr, sig, ctx.tx_digest):
        raise BadSignature(f"signature does not verify for {addr}")


def eval_script(script: Script, w: Witness, ctx: EvalContext) -> None:
    """Raise the :class:`EvalError` for the first failed condition, else return."""
    if isinstance(script, PayToAddr):
        if not isinstance(w, SigWitness):
            raise WitnessShapeMismatch("pay-to-address needs SigWitness")
        _check_sig(script.addr, w.sig, ctx)
    elif isinstance(script, Multisig2):
        if not isinstance(w, Sig2Witness):
            raise WitnessShapeMismatch("multisig needs Sig2Witness")
        _check_sig(script.a, w.sig_a, ctx)
        _check_sig(script.b, w.sig_b, ctx)
    elif isinstance(script, Htlc):
        if isinstance(w, SecretBranch):
            if hash_secret(w.secret) != script.lock:
                raise BadSecret("secret does not hash to lock")
            _check_sig(script.claimant, w.sig, ctx)
        elif isinstance(w, DelayBranch):
            if ctx.confirmations < script.delay:
                raise DelayNotElapsed(
                    f"{ctx.confirmations} confirmations, need {script.delay}"
                )
            eval_script(script.inner, w.inner, ctx)
        else:
            raise WitnessShapeMismatch("htlc needs SecretBranch or DelayBranch")
    elif isinstance(script, Ptlc):
        if isinstance(w, ProvenBranch):
            if not ctx.is_proven(script.prop):
                raise PropositionNotProven(f"{script.prop} not proven")
            _check_sig(script.prover, w.sig, ctx)
        elif isinstance(w, TimeoutBranch):
            if ctx.chain_height < script.timeout:
                raise TimeoutNotReached(
                    f"height {ctx.chain_height} < timeout {script.timeout}"
                )
            _check_sig(script.refundee, w.sig, ctx)
        else:
            raise WitnessShapeMismatch("ptlc needs ProvenBranch or TimeoutBranch")
    else:
        raise TypeError(f"not a script: {script!r}")


def solve(
    script: Script,
    key: PrivKey,
    ctx: EvalContext,
    secrets: Optional[dict[HashLock, Secret]] = None,
) -> Optional[Witness]:
    """Find a witness ``key`` alone can produce for ``script`` right now.

    Branch preference is secret, then proven, then timeout.  Multisig outputs
    need both parties and are never solvable here.
    """
    me = key.address
    secrets = secrets or {}
    if isinstance(script, PayToAddr):
        return SigWitness(key.sign(ctx.tx_digest)) if script.addr == me else None
    if isinstance(script, Ptlc):
        if script.prover == me and ctx.is_proven(script.prop):
            return ProvenBranch(key.sign(ctx.tx_digest))
        if script.refundee == me and ctx.chain_height >= script.timeout:
            return TimeoutBranch(key.sign(ctx.tx_digest))
        return None
    if isinstance(script, Htlc):
        if script.claimant == me and script.lock in secrets:
            return SecretBranch(secrets[script.lock], key.sign(ctx.tx_digest))
        if ctx.confirmations >= script.delay:
            inner = solve(script.inner, key, ctx, secrets)
            if inner is not None:
                return DelayBranch(inner)
        return None
    return None
