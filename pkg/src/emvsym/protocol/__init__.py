"""Card, terminal and bank roles and the world that wires them together."""

from .bank import (AuthRequest, AuthResponse, BankHandle, BankState, CardEntry, ReplayedAtc,
                   UnknownPan, bank_authorize, bank_clear)
from .card import CardState, ProtocolOrder, card_step
from .terminal import ACCEPTED, DECLINED, Abort, TerminalState, terminal_run
from .world import ISSUER, OTHER_BANK, TransactionResult, World

__all__ = [
    "AuthRequest", "AuthResponse", "BankHandle", "BankState", "CardEntry", "ReplayedAtc",
    "UnknownPan", "bank_authorize", "bank_clear", "CardState", "ProtocolOrder", "card_step",
    "ACCEPTED", "DECLINED", "Abort", "TerminalState", "terminal_run", "ISSUER", "OTHER_BANK",
    "TransactionResult", "World",
]
