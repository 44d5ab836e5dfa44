"""Card state machine.

``card_step`` is a pure function of the card state and one command APDU,
apart from drawing fresh nonces.  It never raises on protocol misuse: out of
phase or malformed commands are answered with status ``6985``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .. import data as d
from ..data import Aip, Apdu, Ctq, CvmList, Pdol, TransactionRecord
from ..terms import (Atom, Hash, Mac, MacPrime, Pad, Sign, Term, Tuple, WrongKey,
                     adec, derive_session_key, fresh, xor)
from ..trace import BANK, CARD, TERMINAL, Fact, running, secret

VISA_AID = Atom("A0000000031010")
MASTERCARD_AID = Atom("A0000000041010")
CONTACT_AID = Atom("A0000000999999")

PDOL_TAGS = Tuple(*(Atom(t) for t in ("9F02", "9F1A", "5F2A", "9A", "9C", "9F37")))
VISA_PDOL_TAGS = Tuple(Atom("9F66"), *PDOL_TAGS.items)
CDOL1_TAGS = Tuple(Atom("PDOL"), Atom("9F34"), Atom("decision"))
AFL = Atom("AFL:08010100")
CA_INDEX = Atom("CA:92")
EXPIRY = Atom("expiry:2512")


class ProtocolOrder(Exception):
    """A command arrived in a phase where the card does not accept it."""


@dataclass(frozen=True)
class CardState:
    kernel: str  # "Contact", "Visa" or "Mastercard"
    pan: Term
    mk: Term
    pin: Term
    bank: Term
    aip: Aip
    cvm_list: CvmList
    profile: str
    bank_cert: Term
    priv: Term | None = None
    card_cert: Term | None = None
    ssad: Term | None = None
    expiry: Term = EXPIRY
    fix3b: bool = False
    atc: int = 0
    tries_left: int = d.PIN_TRY_LIMIT
    phase: str = "idle"
    # per-transaction scratch
    nc: Term | None = None
    iad: Term | None = None
    pdol: Pdol | None = None
    challenge: Term | None = None
    verified: str | None = None
    pending_cvm_view: str | None = None
    last_ac: Term | None = None
    last_input: Term | None = None
    ctq: Ctq | None = None

    @property
    def aid(self) -> Term:
        return {"Visa": VISA_AID, "Mastercard": MASTERCARD_AID}.get(self.kernel, CONTACT_AID)

    @property
    def pse(self) -> Term:
        return d.PSE_CONTACT if self.kernel == "Contact" else d.PSE_CONTACTLESS

    @property
    def session_key(self) -> Term:
        return derive_session_key(self.mk, d.atc_term(self.atc))

    def records(self) -> Term:
        items = [("PAN", self.pan), ("expiry", self.expiry)]
        if self.kernel != "Visa":
            items += [("CVMList", self.cvm_list.term), ("CDOL1", CDOL1_TAGS)]
        items += [("CAIndex", CA_INDEX), ("BankCert", self.bank_cert)]
        if self.ssad is not None:
            items.append(("SSAD", self.ssad))
        if self.card_cert is not None:
            items.append(("CardCert", self.card_cert))
        return d.record(items)


def card_cvm_view(s: CardState, cvm_required: bool) -> str:
    """The CVM the card believes was used.  Only offline PIN verification is
    observable by the card; otherwise it assumes its own policy was
    followed, and an offline PIN it never verified counts as no CVM."""
    if s.verified:
        return s.verified
    if not cvm_required:
        return d.NO_PIN
    labels = s.cvm_list.labels
    first = labels[0] if labels else d.NO_PIN
    if first in d.OFFLINE_PIN_METHODS:
        return d.NO_PIN
    return first


def _fail(cmd: Apdu, sw: int = d.SW_CONDITIONS_NOT_SATISFIED) -> Apdu:
    return d.response(cmd.name, Tuple(), sw)


def _running(s: CardState, t: TransactionRecord) -> list[Fact]:
    return [running(s.pan, TERMINAL, CARD, TERMINAL, t),
            running(s.pan, s.bank, CARD, BANK, t)]


def card_step(s: CardState, cmd: Apdu) -> tuple[CardState, Apdu, list[Fact]]:
    if not cmd.is_command:
        raise ValueError("card_step expects a command")
    handler = _HANDLERS[cmd.name]
    try:
        return handler(s, cmd, d.fields(cmd.payload))
    except (ProtocolOrder, ValueError, KeyError, TypeError, AttributeError):
        return s, _fail(cmd), []


def _select(s, cmd, f):
    name = f["name"]
    if name == s.pse:
        return replace(s, phase="pse"), d.response(cmd.name, d.record({"AIDs": Tuple(s.aid)})), []
    if name == s.aid and s.phase in ("pse", "idle"):
        tags = VISA_PDOL_TAGS if s.kernel == "Visa" else PDOL_TAGS
        body = d.record({"AID": s.aid, "PDOL": tags})
        return replace(s, phase="selected"), d.response(cmd.name, body), []
    raise ProtocolOrder(cmd.name)


def _new_transaction(s: CardState, pdol: Pdol) -> CardState:
    return replace(s, atc=s.atc + 1, pdol=pdol, nc=None, iad=fresh("IAD"), challenge=None,
                   verified=None, pending_cvm_view=None, last_ac=None, last_input=None,
                   ctq=None)


def _gpo(s, cmd, f):
    if s.phase != "selected":
        raise ProtocolOrder(cmd.name)
    pdol = Pdol.from_term(f["PDOL"])
    if (pdol.ttq is None) != (s.kernel != "Visa"):
        raise ValueError("PDOL does not match the kernel")
    s = _new_transaction(s, pdol)
    if s.kernel != "Visa":
        body = d.record({"AIP": s.aip.term, "AFL": AFL})
        return (replace(s, phase="initiated"), d.response(cmd.name, body),
                [secret(s.session_key)])
    s, resp, facts = _visa_gpo(s, cmd, pdol)
    return s, resp, [secret(s.session_key), *facts]


def _visa_gpo(s: CardState, cmd: Apdu, pdol: Pdol):
    ttq = pdol.ttq
    cvm_required = d.get_bit(ttq, *d.TTQ_CVM_REQUIRED)
    oda = d.get_bit(ttq, *d.TTQ_ODA_REQUESTED) and s.priv is not None
    online_pin = cvm_required and d.ONLINE_PIN in s.cvm_list.labels
    ctq = Ctq()
    if online_pin:
        ctq = d.set_bit(ctq, *d.CTQ_ONLINE_PIN_REQUIRED, True)
    online = d.get_bit(ttq, *d.TTQ_ONLINE_CRYPTOGRAM_REQUIRED) or not oda or online_pin
    cid = d.ARQC if online else d.TC
    atc = d.atc_term(s.atc)
    x = pdol.term
    ac = Mac(Tuple(x, s.aip.term, atc), s.session_key)
    view = card_cvm_view(s, cvm_required)
    items = {"AIP": s.aip.term, "AFL": AFL, "IAD": s.iad, "AC": ac, "CID": cid,
             "ATC": atc, "CTQ": ctq.term}
    nc = None
    if oda:
        nc = fresh("NC")
        items["NC"] = nc
        items["SDAD"] = Sign(visa_sdad_input(nc, cid, ac, pdol, atc, ctq.term, s.iad, s.aip.term,
                                             s.fix3b), s.priv)
    t = TransactionRecord(s.pan, s.aip, view, x, s.atc, ac, s.iad)
    s = replace(s, phase="visa-ac", nc=nc, ctq=ctq, pending_cvm_view=view, last_ac=ac,
                last_input=x)
    return s, d.response(cmd.name, d.record(items)), _running(s, t)


def visa_sdad_input(nc, cid, ac, pdol: Pdol, atc, ctq, iad, aip, extended: bool) -> Term:
    """Signed dynamic data of the Visa fast-DDA path.  The extended form
    additionally binds the cryptogram and everything the terminal agrees on."""
    if extended:
        return Tuple(nc, cid, ac, pdol.term, atc, ctq, pdol.un, iad, aip)
    return Tuple(nc, ctq, pdol.un, pdol.amount, pdol.currency)


def _read_record(s, cmd, f):
    if s.phase not in ("initiated", "visa-ac"):
        raise ProtocolOrder(cmd.name)
    return s, d.response(cmd.name, s.records()), []


def _internal_authenticate(s, cmd, f):
    if s.phase != "initiated" or s.priv is None:
        raise ProtocolOrder(cmd.name)
    ddol = f["DDOL"]
    nc = fresh("NC")
    sdad = Sign(Tuple(nc, ddol), s.priv)
    return replace(s, nc=nc), d.response(cmd.name, d.record({"NC": nc, "SDAD": sdad})), []


def _get_challenge(s, cmd, f):
    if s.phase != "initiated":
        raise ProtocolOrder(cmd.name)
    ch = fresh("challenge")
    return replace(s, challenge=ch), d.response(cmd.name, d.record({"challenge": ch})), []


def _verify(s, cmd, f):
    if s.phase != "initiated":
        raise ProtocolOrder(cmd.name)
    if s.tries_left == 0:
        return s, _fail(cmd, d.SW_PIN_BLOCKED), []
    if "PIN" in f:
        method, ok = d.PLAIN_PIN, f["PIN"] == s.pin
    elif "EncPIN" in f:
        method = d.ENC_PIN
        try:
            block = adec(f["EncPIN"], s.priv) if s.priv is not None else None
        except WrongKey:
            block = None
        ok = (isinstance(block, Tuple) and len(block) == 3 and block[0] == s.pin
              and s.challenge is not None and block[1] == s.challenge)
        s = replace(s, challenge=None)
    else:
        raise ValueError("VERIFY without PIN block")
    if ok:
        return replace(s, verified=method), d.response(cmd.name), []
    left = s.tries_left - 1
    return replace(s, tries_left=left), _fail(cmd, d.sw_pin_failed(left)), []


def _cvm_required(s: CardState) -> bool:
    if s.kernel == "Contact":
        return True
    return s.pdol is not None and s.pdol.value_class == d.HIGH


def _generate_ac(s, cmd, f):
    if s.phase != "initiated":
        raise ProtocolOrder(cmd.name)
    requested = f["type"]
    if requested not in d.CRYPTOGRAM_TYPES:
        raise ValueError("unknown cryptogram type")
    x = f["CDOL1"]
    # The card never answers an ARQC request with a TC.
    cid = requested
    view = card_cvm_view(s, _cvm_required(s))
    s = replace(s, pending_cvm_view=view)
    s, body, t = _cryptogram(s, cid, x, f.get("CDA") == Atom("CDA"))
    phase = "online" if cid == d.ARQC else "done"
    return replace(s, phase=phase), d.response(cmd.name, body), _running(s, t)


def _external_authenticate(s, cmd, f):
    if s.phase != "online":
        raise ProtocolOrder(cmd.name)
    arc, arpc = f["ARC"], f["ARPC"]
    expected = MacPrime(xor(Pad(arc, 6), s.last_ac), s.session_key)
    approved = arpc == expected and arc == d.ARC_APPROVED
    cid = d.TC if approved else d.AAC
    x2 = Tuple(s.last_input, arc)
    s, body, t = _cryptogram(s, cid, x2, f.get("CDA") == Atom("CDA"))
    return replace(s, phase="done"), d.response(cmd.name, body), _running(s, t)


def cda_details(x: Term, aip: Term, atc: Term, iad: Term) -> Term:
    return Hash(Tuple(x, aip, atc, iad))


def _cryptogram(s: CardState, cid: Term, x: Term, cda: bool):
    atc = d.atc_term(s.atc)
    ac = Mac(Tuple(x, s.aip.term, atc), s.session_key)
    body = {"CID": cid, "ATC": atc}
    nc = s.nc
    if cda and s.priv is not None and s.profile == "CDA":
        nc = fresh("NC")
        un = s.pdol.un if s.pdol is not None else Atom("none")
        body["NC"] = nc
        body["SDAD"] = Sign(Tuple(nc, cid, ac, cda_details(x, s.aip.term, atc, s.iad), un), s.priv)
    else:
        body["AC"] = ac
    body["IAD"] = s.iad
    t = TransactionRecord(s.pan, s.aip, s.pending_cvm_view or d.NO_PIN, x, s.atc, ac, s.iad)
    return replace(s, nc=nc, last_ac=ac, last_input=x), d.record(body), t


_HANDLERS = {
    "SELECT": _select,
    "GET_PROCESSING_OPTIONS": _gpo,
    "READ_RECORD": _read_record,
    "INTERNAL_AUTHENTICATE": _internal_authenticate,
    "GET_CHALLENGE": _get_challenge,
    "VERIFY": _verify,
    "GENERATE_AC": _generate_ac,
    "EXTERNAL_AUTHENTICATE": _external_authenticate,
}

