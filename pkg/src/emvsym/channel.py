"""The card-terminal link under Dolev-Yao control and the secure
terminal-bank link.

An ``AdversaryScript`` sees every APDU on the card-terminal link and answers
with an action.  Anything the script puts on the wire is checked against the
attacker's knowledge unless the channel runs in unsound mode.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .data import Apdu
from .knowledge import Knowledge
from .terms import Term, fresh
from .trace import Event, Trace, compromise_fact, warning

DOLEV_YAO = "dolev-yao"
SECURE = "secure"


class UnderivableInjection(Exception):
    """A script tried to send a term the attacker cannot construct."""

    def __init__(self, apdu: Apdu, missing: Term):
        super().__init__(f"{apdu.name}: {missing} is not derivable")
        self.apdu = apdu
        self.missing = missing


class NoResponse(Exception):
    pass


# -- actions --------------------------------------------------------------------

@dataclass(frozen=True)
class Pass:
    pass


@dataclass(frozen=True)
class Drop:
    pass


@dataclass(frozen=True)
class Replace:
    apdu: Apdu


@dataclass(frozen=True)
class Inject:
    """Suppress the message and deliver ``apdus`` instead.  Commands go to the
    card, responses to the terminal."""
    apdus: tuple[Apdu, ...]

    def __init__(self, apdus: Iterable[Apdu]):
        object.__setattr__(self, "apdus", tuple(apdus))


PASS = Pass()
DROP = Drop()


class AdversaryScript:
    """Base script: forwards everything untouched."""

    name = "pass"
    description = "forward every message unchanged"

    def begin(self, transaction: int, knowledge: Knowledge) -> None:
        """Called before each transaction on the channel."""

    def on_command(self, apdu: Apdu, knowledge: Knowledge):
        return PASS

    def on_response(self, apdu: Apdu, knowledge: Knowledge):
        return PASS


# -- channels -------------------------------------------------------------------

@dataclass(frozen=True)
class SecureMessage:
    channel_id: Term
    payload: object


@dataclass
class ChannelHandle:
    kind: str = DOLEV_YAO
    script: AdversaryScript | None = None
    observer: Knowledge | None = None
    channel_id: Term | None = None
    unsound: bool = False
    transcript: list[str] = field(default_factory=list)
    history: list[list[Apdu]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if self.kind not in (DOLEV_YAO, SECURE):
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == SECURE:
            if self.channel_id is None:
                self.channel_id = fresh("channel")
        elif self.observer is None:
            self.observer = Knowledge()

    def begin_transaction(self) -> int:
        self.history.append([])
        n = len(self.history)
        if self.kind == DOLEV_YAO:
            self.transcript.append(f"# transaction {n}")
            if self.script is not None:
                self.script.begin(n, self.observer)
        return n

    def observed(self, transaction: int) -> list[Apdu]:
        """APDUs seen on the wire during transaction ``transaction`` (1-based)."""
        return list(self.history[transaction - 1])


def secure_channel() -> ChannelHandle:
    return ChannelHandle(kind=SECURE)


def _check_derivable(ch: ChannelHandle, apdu: Apdu) -> None:
    if ch.unsound or ch.observer.derivable(apdu.payload):
        return
    # Report the smallest offending piece for a readable error.
    missing = apdu.payload
    stack = [apdu.payload]
    while stack:
        t = stack.pop()
        if not ch.observer.derivable(t):
            missing = t
            stack = list(t.children)
    raise UnderivableInjection(apdu, missing)


def transmit(ch: ChannelHandle, msg) -> list:
    """Deliver ``msg`` over ``ch`` and return what arrives at the other end."""
    if ch.kind == SECURE:
        return [SecureMessage(ch.channel_id, msg)]
    with ch._lock:
        if not ch.history:
            ch.history.append([])
        ch.history[-1].append(msg)
        ch.observer.add([msg.payload])
        ch.transcript.append(msg.dump())
        if ch.script is None:
            return [msg]
        hook = ch.script.on_command if msg.is_command else ch.script.on_response
        action = hook(msg, ch.observer)
        if action is None or isinstance(action, Pass):
            return [msg]
        if isinstance(action, Drop):
            ch.transcript.append(f"! dropped {msg.name}")
            return []
        out = [action.apdu] if isinstance(action, Replace) else list(action.apdus)
        for a in out:
            _check_derivable(ch, a)
            ch.transcript.append(f"! delivered {a.dump()}")
        return out


class CardLink:
    """Terminal-side view of the card: send a command, get the response (or
    nothing) after the adversary has had its say in both directions."""

    def __init__(self, channel: ChannelHandle, card: Callable[[Apdu], Apdu]):
        self.channel = channel
        self.card = card

    def exchange(self, cmd: Apdu) -> Apdu:
        reply = None
        for m in transmit(self.channel, cmd):
            if not m.is_command:
                reply = m
                continue
            for r in transmit(self.channel, self.card(m)):
                if r.is_command:
                    raise ValueError("commands cannot be injected in place of a response")
                reply = r
        if reply is None:
            raise NoResponse(cmd.name)
        return reply


def compromise(agent: Term, secrets: dict[Term, list[Term]], knowledge: Knowledge,
               trace: Trace) -> Event:
    """Mark ``agent`` compromised and hand its long-term secrets to the
    attacker.  Unknown agents only produce a warning event."""
    if agent not in secrets:
        trace.emit(warning(f"compromise of unregistered agent {agent}"))
        return trace.events[-1]
    trace.emit(compromise_fact(agent))
    knowledge.add(secrets[agent])
    return trace.events[-1]

