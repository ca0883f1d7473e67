"""Actors, wire messages, policies and the deterministic network harness."""

from .harness import Actor, Fault, Harness, Link
from .messages import ProofBlob, ProofOracle, verify_proof
from .policies import (
    Cheater,
    Honest,
    HonestBacker,
    HonestDoubter,
    Policy,
    PublicRevealer,
    Withholder,
    make_policy,
    run_policy,
)

__all__ = [
    "Actor", "Cheater", "Fault", "Harness", "Honest", "HonestBacker", "HonestDoubter",
    "Link", "Policy", "ProofBlob", "ProofOracle", "PublicRevealer", "Withholder",
    "make_policy", "run_policy", "verify_proof",
]
