"""Payment channels with proof-contingent bets on a simulated ledger."""

__version__ = "0.1.0"
