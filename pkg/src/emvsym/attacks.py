"""Packaged man-in-the-middle scripts.

Each script is deterministic and, unless run in unsound mode, only puts terms
on the wire that the attacker can derive.  ``run_attack`` plays one
transaction of a target configuration under a script and evaluates every
property on the resulting trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from . import data as d
from .channel import PASS, AdversaryScript, Inject, Replace
from .configs import TargetConfig
from .data import Aip, Apdu, Ctq, CvmList, Pdol
from .knowledge import Knowledge
from .properties import CHECKS, SCRIPTED, Verdict, check_secrecy, secrecy_labels
from .protocol.world import OTHER_BANK, TransactionResult, World
from .terms import Cert, PubKey, Sign, Term, Tuple


class UnknownAttack(KeyError):
    pass


def _replace_fields(apdu: Apdu, **new: Term) -> Replace:
    payload = d.with_fields(apdu.payload, **new)
    if apdu.is_command:
        return Replace(d.command(apdu.name, payload))
    return Replace(d.response(apdu.name, payload, apdu.trailer))


class CtqPinBypass(AdversaryScript):
    """Tell the terminal the cardholder was verified on their device while
    the card asked for online PIN: clear the online-PIN bit of the CTQ and set
    the CDCVM bit.  Against a card without CTQ, set the CDCVM bit of the AIP
    instead."""

    name = "ctq-pin-bypass"
    description = "rewrite CTQ: online PIN required -> CDCVM performed"

    def on_response(self, apdu, k):
        if apdu.name != "GET_PROCESSING_OPTIONS":
            return PASS
        f = d.fields(apdu.payload)
        if "CTQ" in f:
            ctq = Ctq.from_term(f["CTQ"])
            ctq = d.set_bit(ctq, *d.CTQ_ONLINE_PIN_REQUIRED, False)
            ctq = d.set_bit(ctq, *d.CTQ_CDCVM_PERFORMED, True)
            return _replace_fields(apdu, CTQ=ctq.term)
        if "AIP" in f:
            aip = d.set_bit(Aip.from_term(f["AIP"]), *d.AIP_CDCVM_SUPPORTED, True)
            return _replace_fields(apdu, AIP=aip.term)
        return PASS


class TcModification(AdversaryScript):
    """Replace the cryptogram with a value of the attacker's own making.  The
    terminal cannot check a plain cryptogram; only the issuer can.  When the
    cryptogram sits inside a dynamic signature, the signature has to be
    remade under a key the attacker owns."""

    name = "tc-modification"
    description = "substitute the application cryptogram with attacker junk"

    def on_response(self, apdu, k):
        f = d.fields(apdu.payload)
        if "AC" in f:
            return _replace_fields(apdu, AC=k.invent("AC"))
        sdad = f.get("SDAD")
        if (apdu.name in ("GENERATE_AC", "EXTERNAL_AUTHENTICATE") and isinstance(sdad, Sign)
                and isinstance(sdad.msg, Tuple) and len(sdad.msg) == 5):
            items = list(sdad.msg.items)
            items[2] = k.invent("AC")
            return _replace_fields(apdu, SDAD=Sign(Tuple(*items), k.invent("privA")))
        return PASS


class MurdochOfflinePinBypass(AdversaryScript):
    """Keep the offline PIN away from the card and answer the terminal's
    VERIFY with the success status word, which is a public constant."""

    name = "murdoch-offline-pin-bypass"
    description = "drop VERIFY and answer 9000 to the terminal"

    def on_command(self, apdu, k):
        if apdu.name == "VERIFY":
            return Inject([d.response("VERIFY")])
        return PASS


class PinSecrecyDowngrade(AdversaryScript):
    """With the signing key of any bank under the CA, re-sign the card's
    static data with a plaintext-PIN-only CVM list so that the PIN crosses
    the wire in the clear.  Dynamic signatures are re-made under a key pair
    the attacker certified for itself."""

    name = "pin-secrecy-downgrade"
    description = "compromised-bank re-signing of records to force plaintext PIN"

    def __init__(self, bank: Term = OTHER_BANK):
        self.bank = bank
        self.aip: Term | None = None
        self.ddol: Term | None = None
        self.priv: Term | None = None

    def begin(self, transaction, k):
        self.aip = self.ddol = None
        if self.priv is None:
            self.priv = k.invent("privA")

    def _bank_cert(self, k: Knowledge) -> Cert:
        for t in k.known:
            if (isinstance(t, Cert) and isinstance(t.content, Tuple) and len(t.content) == 2
                    and t.content[0] == self.bank):
                return t
        raise LookupError(f"no certificate for {self.bank}")

    def on_command(self, apdu, k):
        if apdu.name == "INTERNAL_AUTHENTICATE":
            self.ddol = d.fields(apdu.payload).get("DDOL")
        return PASS

    def on_response(self, apdu, k):
        f = d.fields(apdu.payload)
        if apdu.name == "GET_PROCESSING_OPTIONS":
            self.aip = f.get("AIP")
            return PASS
        if apdu.name == "READ_RECORD" and "CVMList" in f:
            cert = self._bank_cert(k)
            bank_priv = cert.content[1].of
            cvms = CvmList.of(d.PLAIN_PIN).term
            new = {"CVMList": cvms, "BankCert": cert}
            pan, expiry = f["PAN"], f["expiry"]
            if "SSAD" in f:
                new["SSAD"] = Sign(Tuple(pan, expiry, self.aip), bank_priv)
            if "CardCert" in f:
                new["CardCert"] = Cert(Tuple(pan, PubKey(self.priv), expiry, self.aip, cvms),
                                       bank_priv)
            return _replace_fields(apdu, **new)
        if "SDAD" in f and isinstance(f["SDAD"], Sign):
            if apdu.name == "INTERNAL_AUTHENTICATE":
                msg = Tuple(f["NC"], self.ddol)
            else:
                msg = f["SDAD"].msg
            return _replace_fields(apdu, SDAD=Sign(msg, self.priv))
        return PASS


class TtqBitClear(AdversaryScript):
    """Clear the CVM-required bit of the TTQ on its way to the card, and
    claim CDCVM towards the terminal so that it does not ask for a PIN.  The
    cryptogram covers the PDOL, so the issuer should notice."""

    name = "ttq-bit-clear"
    description = "clear TTQ CVM-required bit (expected to fail)"

    def __init__(self):
        self.tampered = False

    def begin(self, transaction, k):
        self.tampered = False

    def on_command(self, apdu, k):
        if apdu.name != "GET_PROCESSING_OPTIONS":
            return PASS
        f = d.fields(apdu.payload)
        pdol = Pdol.from_term(f["PDOL"])
        if pdol.ttq is None or not d.get_bit(pdol.ttq, *d.TTQ_CVM_REQUIRED):
            return PASS
        self.tampered = True
        ttq = d.set_bit(pdol.ttq, *d.TTQ_CVM_REQUIRED, False)
        pdol = Pdol(pdol.amount, pdol.un, ttq, pdol.country, pdol.currency, pdol.date, pdol.type)
        return _replace_fields(apdu, PDOL=pdol.term)

    def on_response(self, apdu, k):
        if apdu.name != "GET_PROCESSING_OPTIONS" or not self.tampered:
            return PASS
        f = d.fields(apdu.payload)
        if "CTQ" not in f:
            return PASS
        ctq = d.set_bit(Ctq.from_term(f["CTQ"]), *d.CTQ_CDCVM_PERFORMED, True)
        return _replace_fields(apdu, CTQ=ctq.term)


class SdaCvmListTamper(AdversaryScript):
    """Swap the unsigned CVM list of an SDA card for signature-only."""

    name = "sda-cvm-list-tamper"
    description = "replace an unauthenticated CVM list with signature"

    def on_response(self, apdu, k):
        if apdu.name == "READ_RECORD" and "CVMList" in d.fields(apdu.payload):
            return _replace_fields(apdu, CVMList=CvmList.of(d.SIGNATURE).term)
        return PASS


@dataclass(frozen=True)
class AttackInfo:
    name: str
    factory: Callable[[], AdversaryScript]
    description: str
    applies: Callable[[TargetConfig], bool]
    compromise: Term | None = None


ATTACKS: dict[str, AttackInfo] = {
    info.name: info for info in [
        AttackInfo(CtqPinBypass.name, CtqPinBypass, CtqPinBypass.description,
                   lambda c: not c.is_contact),
        AttackInfo(TcModification.name, TcModification, TcModification.description,
                   lambda c: True),
        AttackInfo(MurdochOfflinePinBypass.name, MurdochOfflinePinBypass,
                   MurdochOfflinePinBypass.description, lambda c: c.is_contact),
        AttackInfo(PinSecrecyDowngrade.name, PinSecrecyDowngrade, PinSecrecyDowngrade.description,
                   lambda c: c.is_contact, compromise=OTHER_BANK),
        AttackInfo(TtqBitClear.name, TtqBitClear, TtqBitClear.description,
                   lambda c: c.is_visa),
        AttackInfo(SdaCvmListTamper.name, SdaCvmListTamper, SdaCvmListTamper.description,
                   lambda c: not c.is_visa),
    ]
}


def get_attack(name: str) -> AttackInfo:
    try:
        return ATTACKS[name]
    except KeyError:
        raise UnknownAttack(name) from None


@dataclass
class AttackOutcome:
    attack: str
    config: TargetConfig
    world: World
    script: AdversaryScript
    results: list[TransactionResult]
    verdicts: dict[str, Verdict]
    secrecy: dict[str, bool] = field(default_factory=dict)

    @property
    def trace(self):
        return self.world.trace


def run_attack(cfg: TargetConfig, name: str, *, seed: int = 0, compromise: bool = True,
               transactions: int = 1, unsound: bool = False) -> AttackOutcome:
    """Play ``transactions`` transactions of ``cfg`` under the named script.
    Raises ``UnderivableInjection`` if the script forges what it cannot."""
    info = get_attack(name)
    script = info.factory()
    world = World(cfg, script, seed=seed, unsound=unsound)
    if compromise and info.compromise is not None:
        world.compromise(info.compromise)
    results = [world.run_transaction() for _ in range(transactions)]
    verdicts = {}
    for prop, fn in CHECKS.items():
        v = fn(world.trace)
        v.method = SCRIPTED
        verdicts[prop] = v
    sv = check_secrecy(world.trace, world.knowledge)
    sv.method = SCRIPTED
    verdicts[sv.property] = sv
    return AttackOutcome(name, cfg, world, script, results, verdicts,
                         secrecy_labels(world.trace, world.knowledge))


__all__ = ["ATTACKS", "AttackInfo", "AttackOutcome", "UnknownAttack", "get_attack", "run_attack",
           "CtqPinBypass", "TcModification", "MurdochOfflinePinBypass", "PinSecrecyDowngrade",
           "TtqBitClear", "SdaCvmListTamper"]
