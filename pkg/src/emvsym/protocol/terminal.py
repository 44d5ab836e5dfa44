"""Terminal: drives one transaction against a card link and a bank handle."""

from __future__ import annotations

from dataclasses import dataclass, field

from .. import data as d
from ..channel import NoResponse
from ..configs import TargetConfig
from ..data import Aip, Ctq, CvmList, Pdol, TransactionRecord, Ttq
from ..terms import (AEnc, Atom, BadCert, Cert, Sign, Term, Tuple, fresh,
                     verify_cert_chain, verify_sign)
from ..trace import BANK, CA, CARD, TERMINAL, Trace, commit, honest, terminal_accepts
from .bank import AuthRequest, BankHandle
from .card import cda_details, visa_sdad_input

ACCEPTED = "accepted"
DECLINED = "declined"


class Abort(Exception):
    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


# Abort reasons with a fixed meaning elsewhere.
CVM_UNAVAILABLE = "CvmUnavailable"
BAD_SIGNATURE = "BadSignature"
BAD_CERT = "BadCertChain"
BANK_DECLINE = "BankDecline"
CARD_DECLINE = "CardDecline"


@dataclass
class TerminalState:
    config: TargetConfig
    ca_keys: dict[Term, Term]
    pin_entry: Term | None = None
    amount_tag: int = 1
    un: Term | None = None
    view: dict = field(default_factory=dict)
    chosen_cvm: str | None = None
    decision: str | None = None
    oda_ok: bool = False
    card_pub: Term | None = None
    bank_id: Term = BANK
    reason: str | None = None

    @property
    def fixes(self) -> frozenset[str]:
        return frozenset(f for f in self.config.fixes if self.config.has_fix(f))

    def ttq(self) -> Ttq:
        cfg = self.config
        high = cfg.value == d.HIGH
        ttq = d.set_bit(Ttq(), *d.TTQ_ODA_REQUESTED, cfg.auth == "DDA" or cfg.has_fix("1"))
        ttq = d.set_bit(ttq, *d.TTQ_CVM_REQUIRED, high)
        return d.set_bit(ttq, *d.TTQ_ONLINE_CRYPTOGRAM_REQUIRED, high or cfg.has_fix("3a"))


def terminal_run(s: TerminalState, link, bank: BankHandle, trace: Trace) -> tuple[str, Trace]:
    """Run one transaction.  The verdict is ``accepted`` exactly when the
    terminal issued a receipt (and emitted ``TerminalAccepts``)."""
    try:
        _Run(s, link, bank, trace).run()
    except Abort as exc:
        s.reason = exc.reason
        s.decision = s.decision or "decline"
        return DECLINED, trace
    return ACCEPTED, trace


class _Run:
    def __init__(self, s: TerminalState, link, bank: BankHandle, trace: Trace):
        self.s, self.link, self.bank, self.trace = s, link, bank, trace
        self.cfg = s.config

    # -- plumbing ---------------------------------------------------------------
    def send(self, name: str, body=None, *, check: bool = True) -> tuple[dict, d.Apdu]:
        cmd = d.command(name, d.record(body or {}))
        try:
            resp = self.link.exchange(cmd)
        except NoResponse:
            raise Abort(f"NoResponse:{name}") from None
        if resp.name != name:
            raise Abort(f"UnexpectedResponse:{name}")
        if check and not d.is_success(resp.trailer):
            raise Abort(f"{CARD_DECLINE}:{name}:{resp.trailer:04X}")
        return d.fields(resp.payload), resp

    @staticmethod
    def need(f: dict, key: str) -> Term:
        if key not in f:
            raise Abort(f"MissingField:{key}")
        return f[key]

    # -- protocol ---------------------------------------------------------------
    def run(self) -> None:
        s, cfg = self.s, self.cfg
        s.un = fresh("UN")
        pse = d.PSE_CONTACT if cfg.is_contact else d.PSE_CONTACTLESS
        f, _ = self.send("SELECT", {"name": pse})
        aids = self.need(f, "AIDs")
        if not isinstance(aids, Tuple) or len(aids) == 0:
            raise Abort("NoApplication")
        self.send("SELECT", {"name": aids[0]})

        value = cfg.value or "Any"
        ttq = s.ttq() if cfg.is_visa else None
        self.pdol = Pdol(d.amount_term(value, s.amount_tag), s.un, ttq)
        s.view["pdol"] = self.pdol.term
        gpo, _ = self.send("GET_PROCESSING_OPTIONS", {"PDOL": self.pdol.term})
        try:
            self.aip = Aip.from_term(self.need(gpo, "AIP"))
        except ValueError:
            raise Abort("BadAIP") from None
        recs, _ = self.send("READ_RECORD")
        self.pan = self.need(recs, "PAN")
        self.expiry = self.need(recs, "expiry")
        s.view.update(pan=self.pan, aip=self.aip)
        bank_cert = self.need(recs, "BankCert")
        if isinstance(bank_cert, Cert) and isinstance(bank_cert.content, Tuple):
            s.bank_id = bank_cert.content[0]
        self.recs = recs
        ca_pub = s.ca_keys.get(recs.get("CAIndex"))
        if ca_pub is None:
            raise Abort("UnknownCA")
        self.ca_pub = ca_pub

        if cfg.is_visa:
            self.visa(gpo)
        else:
            self.generic()

    # -- offline data authentication ---------------------------------------------
    def chain(self, with_card: bool) -> Term | None:
        try:
            bank_pub, card_pub = verify_cert_chain(
                self.ca_pub, self.recs["BankCert"],
                self.need(self.recs, "CardCert") if with_card else None)
        except BadCert:
            raise Abort(BAD_CERT) from None
        self.bank_pub = bank_pub
        self.s.card_pub = card_pub
        return card_pub

    def card_cert_matches(self, cvm_list: Term | None) -> bool:
        content = self.recs["CardCert"].content
        if len(content) != 5:
            return False
        pan, pub, expiry, aip, cvms = content.items
        ok = pan == self.pan and pub == self.s.card_pub and expiry == self.expiry
        ok = ok and aip == self.aip.term
        return ok and (cvm_list is None or cvms == cvm_list)

    def generic_oda(self) -> None:
        cfg, s = self.cfg, self.s
        if cfg.auth == "SDA":
            self.chain(False)
            msg = Tuple(self.pan, self.expiry, self.aip.term)
            if not verify_sign(self.need(self.recs, "SSAD"), msg, self.bank_pub):
                raise Abort(BAD_SIGNATURE)
            s.oda_ok = True
            return
        self.chain(True)
        if not self.card_cert_matches(self.cvm_list_term):
            raise Abort(BAD_CERT)
        if cfg.auth == "DDA":
            ddol = Tuple(s.un)
            f, _ = self.send("INTERNAL_AUTHENTICATE", {"DDOL": ddol})
            if not verify_sign(self.need(f, "SDAD"), Tuple(self.need(f, "NC"), ddol), s.card_pub):
                raise Abort(BAD_SIGNATURE)
            s.oda_ok = True
        # CDA completes with the signature over the cryptogram.

    def visa_oda(self, gpo: dict) -> None:
        cfg, s = self.cfg, self.s
        if not (cfg.auth == "DDA" or cfg.has_fix("2")):
            return
        if "SDAD" not in gpo:
            raise Abort("MissingSDAD")
        self.chain(True)
        if not self.card_cert_matches(None):
            raise Abort(BAD_CERT)
        g = {k: self.need(gpo, k) for k in ("NC", "CID", "AC", "ATC", "CTQ", "IAD")}
        msg = visa_sdad_input(g["NC"], g["CID"], g["AC"], self.pdol, g["ATC"], g["CTQ"],
                              g["IAD"], self.aip.term, cfg.has_fix("3b"))
        if not verify_sign(gpo["SDAD"], msg, s.card_pub):
            raise Abort(BAD_SIGNATURE)
        s.oda_ok = True

    # -- cardholder verification ---------------------------------------------------
    def select_cvm(self, card_list: CvmList) -> str:
        cfg, s = self.cfg, self.s
        if cfg.is_contact:
            for m in card_list.labels:
                if m == d.ENC_PIN and s.card_pub is None:
                    continue
                if m == d.ONLINE_PIN and cfg.authz != "Online":
                    continue
                if m in (d.PLAIN_PIN, d.ENC_PIN, d.ONLINE_PIN, d.SIGNATURE, d.NO_PIN):
                    return m
            raise Abort(CVM_UNAVAILABLE)
        if cfg.value != d.HIGH:
            return d.NO_PIN
        for m in card_list.labels:
            if m == d.ONLINE_PIN:
                return m
            if m == d.CDCVM and d.get_bit(self.aip, *d.AIP_CDCVM_SUPPORTED):
                return m
        raise Abort(CVM_UNAVAILABLE)

    def perform_cvm(self, cvm: str) -> None:
        s = self.s
        if cvm == d.PLAIN_PIN:
            _, r = self.send("VERIFY", {"PIN": self.pin()}, check=False)
        elif cvm == d.ENC_PIN:
            f, _ = self.send("GET_CHALLENGE")
            block = Tuple(self.pin(), self.need(f, "challenge"), fresh("pad"))
            _, r = self.send("VERIFY", {"EncPIN": AEnc(block, s.card_pub)}, check=False)
        else:
            return
        if not d.is_success(r.trailer):
            raise Abort(f"PinFailed:{r.trailer:04X}")

    def pin(self) -> Term:
        if self.s.pin_entry is None:
            raise Abort("NoPinEntered")
        return self.s.pin_entry

    # -- acceptance -------------------------------------------------------------
    def accept(self, t_card: TransactionRecord, t_bank: TransactionRecord | None) -> None:
        s = self.s
        facts = [terminal_accepts(t_card), commit(TERMINAL, t_card.pan, CARD, TERMINAL, t_card)]
        if t_bank is not None:
            facts.append(commit(TERMINAL, s.bank_id, BANK, TERMINAL, t_bank))
        agents = [CA, TERMINAL, t_card.pan, s.bank_id]
        facts += [honest(a) for a in dict.fromkeys(agents)]
        self.trace.emit(*facts)

    def online(self, t: TransactionRecord):
        pin = self.pin() if t.cvm == d.ONLINE_PIN else None
        resp = self.bank.authorize(AuthRequest(t, t.ac, pin, self.s.bank_id))
        if resp is None or resp.arc != d.ARC_APPROVED:
            raise Abort(BANK_DECLINE)
        return resp

    # -- Visa fast path ------------------------------------------------------------
    def visa(self, gpo: dict) -> None:
        s, cfg = self.s, self.cfg
        self.visa_oda(gpo)
        try:
            ctq = Ctq.from_term(self.need(gpo, "CTQ"))
        except ValueError:
            raise Abort("BadCTQ") from None
        if d.get_bit(ctq, *d.CTQ_ONLINE_PIN_REQUIRED):
            cvm = d.ONLINE_PIN
        elif d.get_bit(ctq, *d.CTQ_CDCVM_PERFORMED):
            cvm = d.CDCVM
        elif cfg.value == d.HIGH:
            raise Abort(CVM_UNAVAILABLE)
        else:
            cvm = d.NO_PIN
        s.chosen_cvm = cvm
        cid = self.need(gpo, "CID")
        try:
            atc = d.atc_from_term(self.need(gpo, "ATC"))
        except ValueError:
            raise Abort("BadATC") from None
        t = TransactionRecord(self.pan, self.aip, cvm, self.pdol.term, atc,
                              self.need(gpo, "AC"), self.need(gpo, "IAD"))
        if cid == d.ARQC:
            s.decision = "online"
            self.online(t)
            self.accept(t, t)
        elif cid == d.TC:
            online_required = d.get_bit(self.pdol.ttq, *d.TTQ_ONLINE_CRYPTOGRAM_REQUIRED)
            if cfg.value == d.HIGH or online_required:
                raise Abort("OfflineNotAllowed")
            if not s.oda_ok:
                raise Abort("OfflineWithoutODA")
            s.decision = "offline"
            self.accept(t, None)
            self.bank.clear(t, s.bank_id)
        else:
            raise Abort(CARD_DECLINE)

    # -- contact and Mastercard flow -----------------------------------------------
    def generic(self) -> None:
        s, cfg = self.s, self.cfg
        try:
            card_list = CvmList.from_term(self.need(self.recs, "CVMList"))
        except ValueError:
            raise Abort("BadCVMList") from None
        self.cvm_list_term = card_list.term
        self.generic_oda()
        cvm = self.select_cvm(card_list)
        s.chosen_cvm = cvm
        self.perform_cvm(cvm)

        if cfg.is_contact:
            requested = d.ARQC if cfg.authz == "Online" else d.TC
        else:
            requested = d.ARQC if cfg.value == d.HIGH else d.TC
        s.decision = "online" if requested == d.ARQC else "offline"
        x = Tuple(self.pdol.term, d.cvmr_term(cvm), requested)
        t1 = self.cryptogram("GENERATE_AC", {"type": requested, "CDOL1": x}, x, cvm)
        cid = self._last_cid
        if cid == d.TC:
            if requested != d.TC:
                raise Abort("TCOnARQCRequest")
            if not s.oda_ok:
                raise Abort("OfflineWithoutODA")
            self.accept(t1, None)
            self.bank.clear(t1, s.bank_id)
            return
        if cid != d.ARQC or requested != d.ARQC:
            raise Abort(CARD_DECLINE)
        resp = self.online(t1)
        if not cfg.is_contact:
            self.accept(t1, t1)
            return
        x2 = Tuple(x, resp.arc)
        t2 = self.cryptogram("EXTERNAL_AUTHENTICATE", {"ARC": resp.arc, "ARPC": resp.arpc}, x2, cvm)
        if self._last_cid != d.TC:
            raise Abort(CARD_DECLINE)
        self.accept(t2, t1)
        self.bank.clear(t2, s.bank_id)

    def cryptogram(self, name: str, body: dict, x: Term, cvm: str) -> TransactionRecord:
        cda = self.cfg.auth == "CDA"
        body = dict(body, CDA=Atom("CDA" if cda else "noCDA"))
        f, _ = self.send(name, body)
        cid = self.need(f, "CID")
        atc_t = self.need(f, "ATC")
        iad = self.need(f, "IAD")
        try:
            atc = d.atc_from_term(atc_t)
        except ValueError:
            raise Abort("BadATC") from None
        if cda:
            sdad = self.need(f, "SDAD")
            if not (isinstance(sdad, Sign) and isinstance(sdad.msg, Tuple) and len(sdad.msg) == 5):
                raise Abort(BAD_SIGNATURE)
            nc, _, ac = sdad.msg.items[:3]
            expected = Tuple(nc, cid, ac, cda_details(x, self.aip.term, atc_t, iad), self.s.un)
            if not verify_sign(sdad, expected, self.s.card_pub):
                raise Abort(BAD_SIGNATURE)
            self.s.oda_ok = True
        else:
            ac = self.need(f, "AC")
        self._last_cid = cid
        return TransactionRecord(self.pan, self.aip, cvm, x, atc, ac, iad)
