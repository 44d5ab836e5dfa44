"""Labelled facts and the append-only trace recorder.

A trace is a sequence of steps; every step carries one or more facts (a
protocol rule may label its transition with several, e.g. a ``Commit`` and
the ``Honest`` assumptions it relies on).  Each fact becomes an ``Event``
with a unique, strictly increasing ``index`` and the ``step`` it belongs to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Iterator

from .data import TransactionRecord
from .terms import Atom, Term

FACT_KINDS = ("Running", "Commit", "TerminalAccepts", "BankDeclines", "Honest",
              "Compromise", "Secret", "KU", "Warning")

CARD = Atom("Card")
TERMINAL = Atom("Terminal")
BANK = Atom("Bank")
CA = Atom("CA")


@dataclass(frozen=True)
class Claim:
    """``<role, roleTag, t>``: ``role`` is the partner's role being
    authenticated, ``tag`` the committing role."""

    role: Term
    tag: Term
    t: TransactionRecord

    def __str__(self):
        return f"<{self.role}, {self.tag}, {self.t}>"


@dataclass(frozen=True)
class Fact:
    kind: str
    args: tuple

    def __post_init__(self):
        if self.kind not in FACT_KINDS:
            raise ValueError(f"unknown fact {self.kind!r}")

    def __str__(self):
        return f"{self.kind}({', '.join(str(a) for a in self.args)})"


def running(a: Term, b: Term, role: Term, tag: Term, t: TransactionRecord) -> Fact:
    return Fact("Running", (a, b, Claim(role, tag, t)))


def commit(a: Term, b: Term, role: Term, tag: Term, t: TransactionRecord) -> Fact:
    return Fact("Commit", (a, b, Claim(role, tag, t)))


def terminal_accepts(t: TransactionRecord) -> Fact:
    return Fact("TerminalAccepts", (t,))


def bank_declines(t: TransactionRecord) -> Fact:
    return Fact("BankDeclines", (t,))


def honest(a: Term) -> Fact:
    return Fact("Honest", (a,))


def compromise_fact(a: Term) -> Fact:
    return Fact("Compromise", (a,))


def secret(x: Term) -> Fact:
    return Fact("Secret", (x,))


def ku(x: Term) -> Fact:
    return Fact("KU", (x,))


def warning(text: str) -> Fact:
    return Fact("Warning", (text,))


@dataclass(frozen=True)
class Event:
    index: int
    step: int
    fact: Fact

    def __str__(self):
        return f"{self.index:4d} [{self.step:3d}] {self.fact}"


class Trace:
    def __init__(self, events: Iterable[Event] = ()):
        self.events: list[Event] = list(events)
        self._step = max((e.step for e in self.events), default=-1)

    def emit(self, *facts: Fact) -> int:
        """Record ``facts`` as one step; returns the step number."""
        if not facts:
            return self._step
        self._step += 1
        for f in facts:
            self.events.append(Event(len(self.events), self._step, f))
        return self._step

    def extend(self, facts: Iterable[Fact]) -> None:
        facts = list(facts)
        if facts:
            self.emit(*facts)

    def __iter__(self) -> Iterator[Event]:
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    def of_kind(self, kind: str) -> list[Event]:
        return [e for e in self.events if e.fact.kind == kind]

    def at_step(self, step: int) -> list[Event]:
        return [e for e in self.events if e.step == step]

    def copy(self) -> Trace:
        return Trace(self.events)

    def dump(self) -> str:
        return "\n".join(str(e) for e in self.events)

    def to_json(self) -> list[dict]:
        return [{"index": e.index, "step": e.step, "fact": e.fact.kind,
                 "args": [str(a) for a in e.fact.args]} for e in self.events]

    def dumps_json(self) -> str:
        return json.dumps(self.to_json(), indent=1)
