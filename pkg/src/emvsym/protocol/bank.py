"""Issuing bank: online authorization and clearing of offline cryptograms."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

from .. import data as d
from ..channel import transmit
from ..data import TransactionRecord
from ..terms import Mac, MacPrime, Pad, Term, Tuple, derive_session_key, xor
from ..trace import BANK, CA, CARD, TERMINAL, Fact, Trace, bank_declines, commit, honest, running


class UnknownPan(KeyError):
    pass


class ReplayedAtc(Exception):
    def __init__(self, t: TransactionRecord, facts: list[Fact]):
        super().__init__(f"ATC {t.atc} already seen")
        self.t = t
        self.facts = facts


@dataclass(frozen=True)
class CardEntry:
    mk: Term
    pin: Term
    last_seen_atc: int = 0
    cleared: frozenset[int] = frozenset()


@dataclass(frozen=True)
class BankState:
    bank_id: Term
    directory: Mapping[Term, CardEntry] = field(default_factory=dict)
    arc_policy: str = "accept"

    def with_entry(self, pan: Term, entry: CardEntry) -> BankState:
        directory = dict(self.directory)
        directory[pan] = entry
        return replace(self, directory=directory)


@dataclass(frozen=True)
class AuthRequest:
    transaction: TransactionRecord
    arqc: Term
    pin_candidate: Term | None = None
    claimed_bank: Term | None = None


@dataclass(frozen=True)
class AuthResponse:
    arc: Term
    arpc: Term | None


def expected_ac(mk: Term, t: TransactionRecord) -> Term:
    atc = d.atc_term(t.atc)
    return Mac(Tuple(t.ac_input, t.aip.term, atc), derive_session_key(mk, atc))


def arpc_for(arc: Term, arqc: Term, session_key: Term) -> Term:
    return MacPrime(xor(Pad(arc, 6), arqc), session_key)


def _honest_set(s: BankState, t: TransactionRecord, claimed: Term | None) -> list[Fact]:
    agents = [CA, s.bank_id, TERMINAL, t.pan]
    if claimed is not None and claimed not in agents:
        agents.append(claimed)
    return [honest(a) for a in agents]


def _entry(s: BankState, pan: Term) -> CardEntry:
    try:
        return s.directory[pan]
    except KeyError:
        raise UnknownPan(str(pan)) from None


def bank_authorize(s: BankState, req: AuthRequest) -> tuple[BankState, AuthResponse, list[Fact]]:
    t = req.transaction
    entry = _entry(s, t.pan)
    if t.atc <= entry.last_seen_atc:
        raise ReplayedAtc(t, [bank_declines(t)])
    if req.arqc != t.ac or expected_ac(entry.mk, t) != t.ac:
        return s, AuthResponse(d.ARC_DECLINED, None), [bank_declines(t)]
    s = s.with_entry(t.pan, replace(entry, last_seen_atc=t.atc))
    if t.cvm == d.ONLINE_PIN and req.pin_candidate != entry.pin:
        return s, AuthResponse(d.ARC_DECLINED, None), []
    if s.arc_policy != "accept":
        return s, AuthResponse(d.ARC_DECLINED, None), []
    sk = derive_session_key(entry.mk, d.atc_term(t.atc))
    facts = [commit(s.bank_id, t.pan, CARD, BANK, t),
             running(s.bank_id, TERMINAL, BANK, TERMINAL, t),
             *_honest_set(s, t, req.claimed_bank)]
    return s, AuthResponse(d.ARC_APPROVED, arpc_for(d.ARC_APPROVED, t.ac, sk)), facts


def bank_clear(s: BankState, t: TransactionRecord,
               claimed_bank: Term | None = None) -> tuple[BankState, bool, list[Fact]]:
    """Clearing of a transaction certificate the terminal accepted."""
    entry = _entry(s, t.pan)
    if t.atc in entry.cleared or expected_ac(entry.mk, t) != t.ac:
        return s, False, [bank_declines(t)]
    s = s.with_entry(t.pan, replace(entry, cleared=entry.cleared | {t.atc}))
    return s, True, [commit(s.bank_id, t.pan, CARD, BANK, t), *_honest_set(s, t, claimed_bank)]


class BankHandle:
    """The bank as seen by a terminal: requests travel over a secure channel
    and the bank's events are appended to the shared trace."""

    def __init__(self, state: BankState, trace: Trace, channel=None):
        self.state = state
        self.trace = trace
        self.channel = channel

    def _deliver(self, msg):
        if self.channel is None:
            return msg
        (tagged,) = transmit(self.channel, msg)
        return tagged.payload

    def authorize(self, req: AuthRequest) -> AuthResponse | None:
        req = self._deliver(req)
        try:
            self.state, resp, facts = bank_authorize(self.state, req)
        except ReplayedAtc as exc:
            self.trace.extend(exc.facts)
            return None
        self.trace.extend(facts)
        return self._deliver(resp)

    def clear(self, t: TransactionRecord, claimed_bank: Term | None = None) -> bool:
        t = self._deliver(t)
        self.state, ok, facts = bank_clear(self.state, t, claimed_bank)
        self.trace.extend(facts)
        return ok
