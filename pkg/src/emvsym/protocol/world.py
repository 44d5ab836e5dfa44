"""One analysis world: a personalised card, its issuer, a second bank, a CA,
the terminal's configuration, the attacker, and the shared trace."""

from __future__ import annotations

import copy
from dataclasses import dataclass

from .. import data as d
from ..channel import AdversaryScript, CardLink, ChannelHandle, compromise, secure_channel
from ..configs import TargetConfig, require_applicable
from ..data import Aip, Apdu, CvmList
from ..knowledge import Knowledge
from ..terms import Atom, Cert, FreshSource, PubKey, Sign, Term, Tuple, fresh, fresh_scope
from ..trace import CA, Event, Trace, honest, secret
from .bank import BankHandle, BankState, CardEntry
from .card import CA_INDEX, EXPIRY, CardState, card_step
from .terminal import TerminalState, terminal_run

ISSUER = Atom("Bank")
OTHER_BANK = Atom("BankX")


@dataclass
class TransactionResult:
    index: int
    verdict: str
    reason: str | None
    terminal: TerminalState

    @property
    def accepted(self) -> bool:
        return self.verdict == "accepted"


@dataclass(frozen=True)
class BankKeys:
    bank_id: Term
    priv: Term
    cert: Term


class World:
    """Everything one run needs.  Fresh values are numbered from ``seed`` so
    that runs with equal seeds print identically."""

    def __init__(self, config: TargetConfig, script: AdversaryScript | None = None, *,
                 unsound: bool = False, seed: int = 0, check_applicable: bool = True):
        if check_applicable:
            require_applicable(config)
        self.config = config
        self.seed = seed
        self._fresh = FreshSource(1 + 1000 * seed)
        self.results: list[TransactionResult] = []
        with fresh_scope(source=self._fresh):
            self._setup(script, unsound)

    def _setup(self, script, unsound) -> None:
        cfg = self.config
        self.trace = Trace()
        priv_ca = fresh("privCA")
        self.ca_pub = PubKey(priv_ca)
        self.bank_keys = {}
        for bid in (ISSUER, OTHER_BANK):
            priv = fresh("privB")
            self.bank_keys[bid] = BankKeys(bid, priv, Cert(Tuple(bid, PubKey(priv)), priv_ca))
        issuer = self.bank_keys[ISSUER]

        pan, mk, pin = fresh("PAN"), fresh("mk"), fresh("PIN")
        has_keypair = cfg.is_visa or cfg.auth in ("DDA", "CDA")
        priv_c = fresh("privC") if has_keypair else None
        aip = Aip(0, cfg.auth)
        cvms = CvmList.of(d.ONLINE_PIN) if cfg.is_visa else CvmList.of(cfg.cvm)
        card_cert = ssad = None
        if has_keypair:
            card_cert = Cert(Tuple(pan, PubKey(priv_c), EXPIRY, aip.term, cvms.term), issuer.priv)
        if cfg.auth == "SDA":
            ssad = Sign(Tuple(pan, EXPIRY, aip.term), issuer.priv)
        kernel = "Contact" if cfg.is_contact else cfg.kernel
        self.card = CardState(kernel, pan, mk, pin, ISSUER, aip, cvms, cfg.auth, issuer.cert,
                              priv=priv_c, card_cert=card_cert, ssad=ssad,
                              fix3b=cfg.has_fix("3b"))
        self.bank = BankHandle(BankState(ISSUER, {pan: CardEntry(mk, pin)}), self.trace,
                               secure_channel())
        self.secrets: dict[Term, list[Term]] = {
            ISSUER: [issuer.priv, mk],
            OTHER_BANK: [self.bank_keys[OTHER_BANK].priv],
            CA: [priv_ca],
        }
        public = [self.ca_pub, CA_INDEX] + [k.cert for k in self.bank_keys.values()]
        self.knowledge = Knowledge(public)
        self.channel = ChannelHandle(script=script, observer=self.knowledge, unsound=unsound)
        labelled = [pin, pan, mk, issuer.priv] + ([priv_c] if priv_c is not None else [])
        self.trace.emit(*(secret(x) for x in labelled), honest(pan), honest(ISSUER), honest(CA))

    # -- running -----------------------------------------------------------------
    def _card(self, cmd: Apdu) -> Apdu:
        self.card, resp, facts = card_step(self.card, cmd)
        self.trace.extend(facts)
        return resp

    def run_transaction(self) -> TransactionResult:
        with fresh_scope(source=self._fresh):
            n = self.channel.begin_transaction()
            ts = TerminalState(self.config, {CA_INDEX: self.ca_pub}, pin_entry=self.card.pin,
                               amount_tag=n)
            verdict, _ = terminal_run(ts, CardLink(self.channel, self._card), self.bank,
                                      self.trace)
        result = TransactionResult(n, verdict, ts.reason, ts)
        self.results.append(result)
        return result

    def compromise(self, agent: Term) -> Event:
        return compromise(agent, self.secrets, self.knowledge, self.trace)

    def fork(self, script: AdversaryScript | None = None) -> World:
        """Independent copy of the current state with a new script."""
        w = copy.copy(self)
        w.trace = self.trace.copy()
        w.knowledge = self.knowledge.copy()
        w.results = list(self.results)
        w.bank = BankHandle(self.bank.state, w.trace, self.bank.channel)
        w.channel = ChannelHandle(script=script, observer=w.knowledge,
                                  unsound=self.channel.unsound,
                                  transcript=list(self.channel.transcript),
                                  history=[list(h) for h in self.channel.history])
        w._fresh = self._fresh.copy()
        return w

    # -- convenience ----------------------------------------------------------------
    @property
    def pan(self) -> Term:
        return self.card.pan

    def transcript(self) -> str:
        return "\n".join(self.channel.transcript)
