"""Trace properties: bank acceptance, the two injective-agreement
properties, secrecy, and executability.

Every property carries the same compromise clause: a violation at step ``i``
is excused when some agent assumed ``Honest`` at step ``i`` was compromised
anywhere in the trace.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .configs import REMARK_AC, REMARK_CVM
from .data import TransactionRecord
from .knowledge import Knowledge
from .terms import Atom, Term
from .trace import BANK, CARD, TERMINAL, Claim, Event, Trace

BANK_ACCEPTS = "bank-accepts"
AUTH_TO_TERMINAL = "auth-to-terminal"
AUTH_TO_BANK = "auth-to-bank"
SECRECY = "secrecy"
EXECUTABLE = "executable"
PROPERTIES = (BANK_ACCEPTS, AUTH_TO_TERMINAL, AUTH_TO_BANK)

REMARK_OTHER = 0

HONEST_RUN = "honest-run"
SCRIPTED = "scripted-attack"
SEARCH = "bounded-search"


@dataclass
class Violation:
    event: Event
    remarks: frozenset[int]
    detail: str


@dataclass
class Verdict:
    property: str
    holds: bool
    witness: Trace | None = None
    method: str = HONEST_RUN
    violations: list[Violation] = field(default_factory=list)
    mutations: tuple = ()

    def __post_init__(self):
        if not self.holds and self.witness is None:
            raise ValueError("a failed verdict needs a witness trace")

    @property
    def remarks(self) -> frozenset[int]:
        out: frozenset[int] = frozenset()
        for v in self.violations:
            out |= v.remarks
        return out

    def __str__(self):
        if self.holds:
            return f"{self.property}: holds ({self.method})"
        marks = ",".join(str(r) for r in sorted(self.remarks))
        return f"{self.property}: violated ({marks}) ({self.method})"


def _compromised(tr: Trace) -> set[Term]:
    return {e.fact.args[0] for e in tr.of_kind("Compromise")}


def _excused(tr: Trace, step: int, compromised: set[Term]) -> bool:
    if not compromised:
        return False
    return any(e.fact.kind == "Honest" and e.fact.args[0] in compromised
               for e in tr.at_step(step))


# The cryptogram together with the data and counter it authenticates.
CRYPTOGRAM_FIELDS = ("ac", "ac_input", "atc")


def classify(t: TransactionRecord, reference: TransactionRecord | None,
             fields=("cvm",) + CRYPTOGRAM_FIELDS) -> frozenset[int]:
    """Remark codes for a disagreement between two views of a transaction:
    1 when the CVM differs, 2 when the cryptogram or what it covers differs,
    0 otherwise.  Only differences in ``fields`` are considered."""
    if reference is None:
        return frozenset({REMARK_OTHER})
    diff = set(t.differing(reference)) & set(fields)
    out = set()
    if "cvm" in diff:
        out.add(REMARK_CVM)
    if diff & set(CRYPTOGRAM_FIELDS):
        out.add(REMARK_AC)
    return frozenset(out or {REMARK_OTHER})


def _latest_running(tr: Trace, runner: Term, partner: Term, role: Term, tag: Term,
                    before: int) -> TransactionRecord | None:
    found = None
    for e in tr.events[:before]:
        f = e.fact
        if (f.kind == "Running" and f.args[0] == runner and f.args[1] == partner
                and f.args[2].role == role and f.args[2].tag == tag):
            found = f.args[2].t
    return found


def check_bank_accepts(tr: Trace) -> Verdict:
    compromised = _compromised(tr)
    declined = {e.fact.args[0] for e in tr.of_kind("BankDeclines")}
    violations = []
    for e in tr.of_kind("TerminalAccepts"):
        t = e.fact.args[0]
        if t not in declined or _excused(tr, e.step, compromised):
            continue
        ref = _latest_running(tr, t.pan, TERMINAL, CARD, TERMINAL, e.index)
        # The bank only ever declines over the cryptogram.
        violations.append(Violation(e, classify(t, ref, CRYPTOGRAM_FIELDS),
                                    f"bank declined accepted {t}"))
    return _verdict(BANK_ACCEPTS, tr, violations)


def _check_agreement(tr: Trace, tag: Term, name: str) -> Verdict:
    compromised = _compromised(tr)
    runs: dict[tuple, int] = {}
    for e in tr.of_kind("Running"):
        key = (e.fact.args[0], e.fact.args[1], e.fact.args[2])
        runs.setdefault(key, e.index)
    seen: set[tuple] = set()
    violations = []
    for e in tr.of_kind("Commit"):
        committer, partner, claim = e.fact.args
        if claim.tag != tag:
            continue
        triple = (committer, partner, claim)
        duplicate = triple in seen
        seen.add(triple)
        if _excused(tr, e.step, compromised):
            continue
        first = runs.get((partner, committer, claim))
        if duplicate:
            violations.append(Violation(e, frozenset({REMARK_OTHER}), "repeated commit"))
        elif first is None or first > e.index:
            ref = _latest_running(tr, partner, committer, claim.role, claim.tag, e.index)
            violations.append(Violation(e, classify(claim.t, ref), f"no matching run for {claim}"))
    return _verdict(name, tr, violations)


def check_auth_to_terminal(tr: Trace) -> Verdict:
    return _check_agreement(tr, TERMINAL, AUTH_TO_TERMINAL)


def check_auth_to_bank(tr: Trace) -> Verdict:
    return _check_agreement(tr, BANK, AUTH_TO_BANK)


def secret_label(x: Term) -> str:
    """``PIN``, ``PAN`` or ``keys`` for a term recorded as secret."""
    if isinstance(x, Atom) and x.name in ("PIN", "PAN"):
        return x.name
    return "keys"


def check_secrecy(tr: Trace, k: Knowledge, label: str | None = None) -> Verdict:
    """Secrecy of every recorded secret, or only of those with ``label``."""
    compromised = _compromised(tr)
    violations = []
    for e in tr.of_kind("Secret"):
        x = e.fact.args[0]
        if label is not None and secret_label(x) != label:
            continue
        if x in k and not _excused(tr, e.step, compromised):
            violations.append(Violation(e, frozenset({REMARK_OTHER}), f"{x} known to attacker"))
    return _verdict(SECRECY if label is None else f"secrecy-{label}", tr, violations)


def secrecy_labels(tr: Trace, k: Knowledge) -> dict[str, bool]:
    """Per-label secrecy: ``{"PIN": ..., "PAN": ..., "keys": ...}``."""
    return {lab: check_secrecy(tr, k, lab).holds for lab in ("PIN", "PAN", "keys")}


def check_executability(tr: Trace) -> Verdict:
    if tr.of_kind("Compromise"):
        return Verdict(EXECUTABLE, False, tr)
    facts = {(e.fact.kind, e.fact.args) for e in tr.events if e.fact.kind in ("Running", "Commit")}
    for e in tr.of_kind("Commit"):
        terminal, pan, claim = e.fact.args
        if claim.role != CARD or claim.tag != TERMINAL:
            continue
        t = claim.t
        bank_claims = [(b, c) for kind, (a, b, c) in facts
                       if kind == "Running" and a == pan and c == Claim(CARD, BANK, t)]
        needed_run = ("Running", (pan, terminal, claim))
        for bank, bclaim in bank_claims:
            if needed_run in facts and ("Commit", (bank, pan, bclaim)) in facts:
                return Verdict(EXECUTABLE, True)
    return Verdict(EXECUTABLE, False, tr)


def _verdict(name: str, tr: Trace, violations: list[Violation]) -> Verdict:
    if not violations:
        return Verdict(name, True)
    return Verdict(name, False, tr.copy(), violations=violations)


CHECKS = {
    BANK_ACCEPTS: check_bank_accepts,
    AUTH_TO_TERMINAL: check_auth_to_terminal,
    AUTH_TO_BANK: check_auth_to_bank,
}


def check_all(tr: Trace) -> dict[str, Verdict]:
    return {name: fn(tr) for name, fn in CHECKS.items()}
