"""EMV data objects and APDU envelopes.

Data objects have a structured view (named bits, labels) and a symbolic view
(a ``Term``) derived from it deterministically, so that bit flips performed
by an attacker and the cryptograms that bind the same objects always agree.
"""

from __future__ import annotations

import dataclasses
import struct
from dataclasses import dataclass
from typing import Iterable, Mapping

from .terms import Atom, Term, TermSyntaxError, Tuple, parse

# -- status words --------------------------------------------------------------

SW_SUCCESS = 0x9000
SW_PIN_BLOCKED = 0x6983
SW_CONDITIONS_NOT_SATISFIED = 0x6985


def sw_pin_failed(tries_left: int) -> int:
    if not 0 <= tries_left <= 9:
        raise ValueError("tries left must be a single digit")
    return 0x63C0 | tries_left


def is_success(sw: int | None) -> bool:
    return sw == SW_SUCCESS


def is_pin_fail(sw: int | None) -> bool:
    return sw is not None and 0x63C0 <= sw <= 0x63C9


def is_pin_blocked(sw: int | None) -> bool:
    return sw == SW_PIN_BLOCKED


VALID_TRAILERS = frozenset([SW_SUCCESS, SW_PIN_BLOCKED, SW_CONDITIONS_NOT_SATISFIED,
                            *range(0x63C0, 0x63CA)])

PIN_TRY_LIMIT = 3

# -- APDUs ----------------------------------------------------------------------

COMMAND = "command"
RESPONSE = "response"

INS = {
    "SELECT": 0xA4,
    "GET_PROCESSING_OPTIONS": 0xA8,
    "READ_RECORD": 0xB2,
    "INTERNAL_AUTHENTICATE": 0x88,
    "GET_CHALLENGE": 0x84,
    "VERIFY": 0x20,
    "GENERATE_AC": 0xAE,
    "EXTERNAL_AUTHENTICATE": 0x82,
}
_NAME_BY_INS = {v: k for k, v in INS.items()}

PSE_CONTACT = Atom("1PAY.SYS.DDF01")
PSE_CONTACTLESS = Atom("2PAY.SYS.DDF01")


class MalformedApdu(ValueError):
    pass


@dataclass(frozen=True)
class Apdu:
    direction: str
    name: str
    payload: Term
    trailer: int | None = None

    def __post_init__(self):
        if self.direction not in (COMMAND, RESPONSE):
            raise ValueError(f"bad direction {self.direction!r}")
        if self.name not in INS:
            raise ValueError(f"unknown command {self.name!r}")
        if self.direction == COMMAND and self.trailer is not None:
            raise ValueError("commands carry no trailer")
        if self.direction == RESPONSE and self.trailer not in VALID_TRAILERS:
            raise ValueError(f"bad trailer {self.trailer!r}")

    @property
    def is_command(self) -> bool:
        return self.direction == COMMAND

    def dump(self) -> str:
        arrow = ">" if self.is_command else "<"
        line = f"{arrow} {self.name} {self.payload}"
        if self.trailer is not None:
            line += f" {self.trailer:04X}"
        return line


def command(name: str, payload: Term | None = None) -> Apdu:
    return Apdu(COMMAND, name, payload if payload is not None else Tuple())


def response(name: str, payload: Term | None = None, trailer: int = SW_SUCCESS) -> Apdu:
    return Apdu(RESPONSE, name, payload if payload is not None else Tuple(), trailer)


def encode_apdu(a: Apdu) -> bytes:
    """Byte form: direction byte, INS, 4-byte big-endian length, UTF-8 payload
    text, then SW1 SW2 for responses."""
    body = str(a.payload).encode("utf-8")
    head = struct.pack(">BBI", 0 if a.is_command else 1, INS[a.name], len(body))
    tail = struct.pack(">H", a.trailer) if a.trailer is not None else b""
    return head + body + tail


def decode_apdu(data: bytes) -> Apdu:
    if len(data) < 6:
        raise MalformedApdu("short APDU")
    kind, ins, length = struct.unpack(">BBI", data[:6])
    if kind not in (0, 1) or ins not in _NAME_BY_INS:
        raise MalformedApdu("bad header")
    expected = 6 + length + (2 if kind == 1 else 0)
    if len(data) != expected:
        raise MalformedApdu("length mismatch")
    try:
        payload = parse(data[6:6 + length].decode("utf-8"))
    except (UnicodeDecodeError, TermSyntaxError) as exc:
        raise MalformedApdu(str(exc)) from exc
    try:
        if kind == 0:
            return Apdu(COMMAND, _NAME_BY_INS[ins], payload)
        (sw,) = struct.unpack(">H", data[-2:])
        return Apdu(RESPONSE, _NAME_BY_INS[ins], payload, sw)
    except ValueError as exc:
        raise MalformedApdu(str(exc)) from exc


# -- tagged records -------------------------------------------------------------
# Payloads are tuples of (tag, value) pairs so that individual data objects can
# be read, replaced and re-derived without ambiguity.

def record(items: Mapping[str, Term] | Iterable[tuple[str, Term]]) -> Term:
    pairs = items.items() if isinstance(items, Mapping) else items
    return Tuple(*(Tuple(Atom(tag), value) for tag, value in pairs))


def fields(payload: Term) -> dict[str, Term]:
    out: dict[str, Term] = {}
    if not isinstance(payload, Tuple):
        return out
    for item in payload:
        if (isinstance(item, Tuple) and len(item) == 2 and isinstance(item[0], Atom)
                and not item[0].fresh):
            out[item[0].name] = item[1]
    return out


def with_fields(payload: Term, **updates: Term) -> Term:
    current = fields(payload)
    order = list(current)
    for k in updates:
        if k not in current:
            order.append(k)
    current.update(updates)
    return record((k, current[k]) for k in order)


def without_fields(payload: Term, *names: str) -> Term:
    return record((k, v) for k, v in fields(payload).items() if k not in names)


# -- bitfields ------------------------------------------------------------------

def _mask(bit: int) -> int:
    if not 1 <= bit <= 8:
        raise ValueError("bit index must be 1..8")
    return 1 << (bit - 1)


def get_bit(obj, byte_index: int, bit_index: int) -> bool:
    if byte_index not in (1, 2):
        raise ValueError("byte index must be 1 or 2")
    value = obj.byte1 if byte_index == 1 else obj.byte2
    return bool(value & _mask(bit_index))


def set_bit(obj, byte_index: int, bit_index: int, value: bool):
    """Copy of ``obj`` (Ttq, Ctq or Aip) with one bit written."""
    if byte_index not in (1, 2):
        raise ValueError("byte index must be 1 or 2")
    attr = "byte1" if byte_index == 1 else "byte2"
    current = getattr(obj, attr)
    m = _mask(bit_index)
    new = (current | m) if value else (current & ~m & 0xFF)
    return dataclasses.replace(obj, **{attr: new})


@dataclass(frozen=True)
class _Qualifier:
    byte1: int = 0
    byte2: int = 0
    prefix = ""

    def __post_init__(self):
        for b in (self.byte1, self.byte2):
            if not 0 <= b <= 0xFF:
                raise ValueError("qualifier bytes must fit in 8 bits")

    @property
    def term(self) -> Atom:
        return Atom(f"{self.prefix}:{self.byte1:02X}{self.byte2:02X}")

    @classmethod
    def from_term(cls, t: Term):
        if not (isinstance(t, Atom) and not t.fresh
                and t.name.startswith(cls.prefix + ":") and len(t.name) == len(cls.prefix) + 5):
            raise ValueError(f"not a {cls.prefix} object: {t}")
        raw = int(t.name[len(cls.prefix) + 1:], 16)
        return cls(raw >> 8, raw & 0xFF)

    def encode(self) -> bytes:
        return bytes([self.byte1, self.byte2])

    @classmethod
    def decode(cls, data: bytes):
        if len(data) != 2:
            raise ValueError("qualifiers are two bytes")
        return cls(data[0], data[1])


@dataclass(frozen=True)
class Ttq(_Qualifier):
    """Terminal Transaction Qualifiers (tag 9F66)."""
    prefix = "TTQ"


@dataclass(frozen=True)
class Ctq(_Qualifier):
    """Card Transaction Qualifiers (tag 9F6C)."""
    prefix = "CTQ"


# Named bits as (byte, bit).
TTQ_ODA_REQUESTED = (1, 1)
TTQ_CVM_REQUIRED = (2, 7)
TTQ_ONLINE_CRYPTOGRAM_REQUIRED = (2, 8)
CTQ_ONLINE_PIN_REQUIRED = (1, 8)
CTQ_CDCVM_PERFORMED = (2, 8)
AIP_CDCVM_SUPPORTED = (1, 2)

AUTH_PROFILES = ("SDA", "DDA", "CDA", "EMV")


@dataclass(frozen=True)
class Aip:
    """Application Interchange Profile."""

    byte1: int = 0
    auth_profile: str = "EMV"
    extra: Term = Atom("AIP-data")
    byte2: int = 0

    def __post_init__(self):
        if self.auth_profile not in AUTH_PROFILES:
            raise ValueError(f"unknown auth profile {self.auth_profile!r}")

    @property
    def term(self) -> Term:
        return Tuple(Atom(f"AIP:{self.byte1:02X}{self.byte2:02X}"), Atom(self.auth_profile),
                     self.extra)

    @classmethod
    def from_term(cls, t: Term) -> Aip:
        try:
            head, profile, extra = t.items
            raw = int(head.name.split(":", 1)[1], 16)
            return cls(raw >> 8, profile.name, extra, raw & 0xFF)
        except (AttributeError, ValueError, IndexError, TypeError) as exc:
            raise ValueError(f"not an AIP: {t}") from exc

    def encode(self) -> bytes:
        return bytes([self.byte1, self.byte2]) + self.auth_profile.encode() + b"|" \
            + str(self.extra).encode()

    @classmethod
    def decode(cls, data: bytes) -> Aip:
        profile, extra = data[2:].split(b"|", 1)
        return cls(data[0], profile.decode(), parse(extra.decode()), data[1])


# -- cardholder verification ------------------------------------------------------

NO_PIN = "NoPIN"
PLAIN_PIN = "PlainPIN"
ENC_PIN = "EncPIN"
ONLINE_PIN = "OnlinePIN"
SIGNATURE = "Signature"
CDCVM = "CDCVM"
CVM_METHODS = (NO_PIN, PLAIN_PIN, ENC_PIN, ONLINE_PIN, SIGNATURE, CDCVM)
OFFLINE_PIN_METHODS = (PLAIN_PIN, ENC_PIN)


@dataclass(frozen=True)
class CvmRule:
    method: str
    condition: str = "always"

    def __post_init__(self):
        if self.method not in CVM_METHODS:
            raise ValueError(f"unknown CVM {self.method!r}")
        if self.condition not in ("always", "above-limit"):
            raise ValueError(f"unknown CVM condition {self.condition!r}")


@dataclass(frozen=True)
class CvmList:
    methods: tuple[CvmRule, ...] = ()

    @classmethod
    def of(cls, *methods: str) -> CvmList:
        return cls(tuple(CvmRule(m) for m in methods))

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(r.method for r in self.methods)

    @property
    def term(self) -> Term:
        return Tuple(*(Atom(f"CVM:{r.method}:{r.condition}") for r in self.methods))

    @classmethod
    def from_term(cls, t: Term) -> CvmList:
        if not isinstance(t, Tuple):
            raise ValueError(f"not a CVM list: {t}")
        rules = []
        for item in t:
            try:
                _, method, condition = item.name.split(":")
            except (AttributeError, ValueError) as exc:
                raise ValueError(f"not a CVM rule: {item}") from exc
            rules.append(CvmRule(method, condition))
        return cls(tuple(rules))


def cvmr_term(method: str) -> Atom:
    return Atom(f"CVMR:{method}")


def cvmr_method(t: Term) -> str:
    if isinstance(t, Atom) and t.name.startswith("CVMR:"):
        return t.name[5:]
    raise ValueError(f"not a CVM result: {t}")


# -- transaction data --------------------------------------------------------------

LOW = "Low"
HIGH = "High"

TC = Atom("TC")
ARQC = Atom("ARQC")
AAC = Atom("AAC")
CRYPTOGRAM_TYPES = (TC, ARQC, AAC)

ARC_APPROVED = Atom("ARC:3030")
ARC_DECLINED = Atom("ARC:3035")


def atc_term(atc: int) -> Atom:
    return Atom(f"ATC:{atc:04X}")


def atc_from_term(t: Term) -> int:
    if isinstance(t, Atom) and not t.fresh and t.name.startswith("ATC:"):
        return int(t.name[4:], 16)
    raise ValueError(f"not an ATC: {t}")


def amount_term(value_class: str, tag: int) -> Atom:
    return Atom(f"amount:{value_class}:{tag}")


def amount_class(t: Term) -> str:
    if isinstance(t, Atom) and t.name.startswith("amount:"):
        return t.name.split(":")[1]
    raise ValueError(f"not an amount: {t}")


@dataclass(frozen=True)
class Pdol:
    """Terminal data requested by the card for GET PROCESSING OPTIONS."""

    amount: Term
    un: Term
    ttq: Ttq | None = None
    country: Term = Atom("country:0756")
    currency: Term = Atom("currency:0756")
    date: Term = Atom("date:201017")
    type: Term = Atom("type:00")

    @property
    def value_class(self) -> str:
        return amount_class(self.amount)

    @property
    def term(self) -> Term:
        items = [self.amount, self.country, self.currency, self.date, self.type, self.un]
        if self.ttq is not None:
            items.insert(0, self.ttq.term)
        return Tuple(*items)

    @classmethod
    def from_term(cls, t: Term) -> Pdol:
        items = list(t.items) if isinstance(t, Tuple) else []
        ttq = None
        if len(items) == 7:
            ttq = Ttq.from_term(items.pop(0))
        if len(items) != 6:
            raise ValueError(f"not PDOL data: {t}")
        amount, country, currency, date, type_, un = items
        return cls(amount, un, ttq, country, currency, date, type_)


@dataclass(frozen=True)
class TransactionRecord:
    """The seven data items the parties must agree on."""

    pan: Term
    aip: Aip
    cvm: str
    ac_input: Term
    atc: int
    ac: Term
    iad: Term

    FIELDS = ("pan", "aip", "cvm", "ac_input", "atc", "ac", "iad")

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, f) for f in self.FIELDS)

    def differing(self, other: TransactionRecord) -> tuple[str, ...]:
        return tuple(f for f in self.FIELDS if getattr(self, f) != getattr(other, f))

    @property
    def term(self) -> Term:
        return Tuple(self.pan, self.aip.term, Atom(f"CVM:{self.cvm}"), self.ac_input,
                     atc_term(self.atc), self.ac, self.iad)

    def __str__(self):
        return str(self.term)
