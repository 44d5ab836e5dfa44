"""Bounded adversary search.

A run is one honest transaction (which fills the attacker's replay log)
followed by a second transaction in which the adversary applies up to
``budget`` mutations.  Mutation positions count the messages intercepted
during the second transaction, commands and responses alike.  Runs are
enumerated depth first: a child run extends its parent's mutation vector at
the same or a later position, using the messages the parent run actually
produced.  Several mutations on one message compose in vector order; at a
shared position a child only adds mutations listed after its parent's last
one, so every combination is tried once.

A property that survives every run is reported as holding within the bound,
which is weaker than a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from . import data as d
from .channel import DROP, PASS, AdversaryScript, Inject, Replace, UnderivableInjection
from .configs import TargetConfig, require_applicable
from .data import Apdu, Aip, Ctq, CvmList, Pdol
from .knowledge import Knowledge
from .properties import CHECKS, PROPERTIES, SEARCH, Verdict, secrecy_labels
from .protocol.world import World

DEFAULT_BUDGET = 2
DEFAULT_MAX_RUNS = 20000


class BudgetExceeded(Exception):
    pass


@dataclass(frozen=True)
class Mutation:
    kind: str
    arg: object = None

    def __str__(self):
        return self.kind if self.arg is None else f"{self.kind}:{self.arg}"


TTQ_BITS = (d.TTQ_ODA_REQUESTED, d.TTQ_CVM_REQUIRED, d.TTQ_ONLINE_CRYPTOGRAM_REQUIRED)
CTQ_BITS = (d.CTQ_ONLINE_PIN_REQUIRED, d.CTQ_CDCVM_PERFORMED)
ALPHABET = ("drop", "replay", "forge-9000", "ttq", "ctq", "aip", "ac", "trailer", "cvm-list")


def applicable(apdu: Apdu, log: list[Apdu], alphabet: Iterable[str] = ALPHABET) -> list[Mutation]:
    """Mutations that make sense for ``apdu``; ``log`` holds the messages
    seen in the honest transaction."""
    alphabet = set(alphabet)
    out = []
    f = d.fields(apdu.payload)
    if "drop" in alphabet:
        out.append(Mutation("drop"))
    if "replay" in alphabet:
        for old in log:
            if (old.direction == apdu.direction and old.name == apdu.name
                    and old != apdu):
                out.append(Mutation("replay"))
                break
    if apdu.is_command:
        if "forge-9000" in alphabet and apdu.name == "VERIFY":
            out.append(Mutation("forge-9000"))
        if "ttq" in alphabet and apdu.name == "GET_PROCESSING_OPTIONS":
            try:
                if Pdol.from_term(f["PDOL"]).ttq is not None:
                    out += [Mutation("ttq", bit) for bit in TTQ_BITS]
            except (KeyError, ValueError):
                pass
        return out
    if "ctq" in alphabet and "CTQ" in f:
        out += [Mutation("ctq", bit) for bit in CTQ_BITS]
    if "aip" in alphabet and "AIP" in f:
        out.append(Mutation("aip", d.AIP_CDCVM_SUPPORTED))
    if "ac" in alphabet and "AC" in f:
        out.append(Mutation("ac"))
    if "trailer" in alphabet and apdu.trailer != d.SW_SUCCESS:
        out.append(Mutation("trailer"))
    if "cvm-list" in alphabet and "CVMList" in f:
        try:
            present = CvmList.from_term(f["CVMList"]).labels
        except ValueError:
            present = ()
        for m in d.CVM_METHODS:
            if (m,) != present:
                out.append(Mutation("cvm-list", m))
    return out


def _flip(obj, bit):
    return d.set_bit(obj, *bit, not d.get_bit(obj, *bit))


def apply(m: Mutation, apdu: Apdu, log: list[Apdu], k: Knowledge):
    """The channel action performing ``m`` on ``apdu``."""
    f = d.fields(apdu.payload)
    if m.kind == "drop":
        return DROP
    if m.kind == "replay":
        old = next(o for o in log if o.direction == apdu.direction and o.name == apdu.name
                   and o != apdu)
        return Replace(old)
    if m.kind == "forge-9000":
        return Inject([d.response("VERIFY")])
    if m.kind == "ttq":
        pdol = Pdol.from_term(f["PDOL"])
        pdol = Pdol(pdol.amount, pdol.un, _flip(pdol.ttq, m.arg), pdol.country,
                    pdol.currency, pdol.date, pdol.type)
        return Replace(d.command(apdu.name, d.with_fields(apdu.payload, PDOL=pdol.term)))
    if m.kind == "trailer":
        return Replace(d.response(apdu.name, apdu.payload, d.SW_SUCCESS))
    if m.kind == "ctq":
        new = {"CTQ": _flip(Ctq.from_term(f["CTQ"]), m.arg).term}
    elif m.kind == "aip":
        new = {"AIP": _flip(Aip.from_term(f["AIP"]), m.arg).term}
    elif m.kind == "ac":
        new = {"AC": k.invent("AC")}
    elif m.kind == "cvm-list":
        new = {"CVMList": CvmList.of(m.arg).term}
    else:
        raise ValueError(f"unknown mutation {m}")
    return Replace(d.response(apdu.name, d.with_fields(apdu.payload, **new), apdu.trailer))


class MutationScript(AdversaryScript):
    """Applies a fixed mutation vector during one transaction and records
    every message it intercepts there."""

    name = "mutations"

    def __init__(self, vector: tuple[tuple[int, Mutation], ...], transaction: int = 2):
        self.vector: dict[int, list[Mutation]] = {}
        for pos, m in vector:
            self.vector.setdefault(pos, []).append(m)
        self.target = transaction
        self.log: list[Apdu] = []
        self.seen: list[Apdu] = []
        self._txn = 0

    def begin(self, transaction, knowledge):
        self._txn = transaction

    def _hook(self, apdu: Apdu, k: Knowledge):
        if self._txn < self.target:
            self.log.append(apdu)
            return PASS
        if self._txn > self.target:
            return PASS
        pos = len(self.seen)
        self.seen.append(apdu)
        current = apdu
        for m in self.vector.get(pos, ()):
            try:
                action = apply(m, current, self.log, k)
            except (KeyError, ValueError, StopIteration):
                continue
            if not isinstance(action, Replace):
                return action
            current = action.apdu
        return PASS if current is apdu else Replace(current)

    on_command = _hook
    on_response = _hook


@dataclass
class RunOutcome:
    vector: tuple
    world: World
    verdicts: dict[str, Verdict]
    seen: list[Apdu]
    secrecy: dict[str, bool]


def run_vector(cfg: TargetConfig, vector: tuple = (), *, seed: int = 0,
               base: World | None = None) -> RunOutcome:
    """One honest transaction, then one with ``vector`` applied."""
    script = MutationScript(vector)
    if base is None:
        world = World(cfg, script, seed=seed)
        world.run_transaction()
    else:
        world = base.fork(script)
        script.log = list(base.channel.history[0])
    world.run_transaction()
    verdicts = {name: fn(world.trace) for name, fn in CHECKS.items()}
    return RunOutcome(vector, world, verdicts, script.seen,
                      secrecy_labels(world.trace, world.knowledge))


@dataclass
class PropertyResult:
    holds: bool = True
    remarks: set[int] = field(default_factory=set)
    witness: RunOutcome | None = None


@dataclass
class SearchResult:
    config: TargetConfig
    budget: int
    runs: int
    properties: dict[str, PropertyResult]
    secrecy: dict[str, bool]

    def verdict(self, prop: str) -> Verdict:
        r = self.properties[prop]
        if r.holds:
            return Verdict(prop, True, method=SEARCH)
        w = r.witness
        v = w.verdicts[prop]
        return Verdict(prop, False, v.witness, SEARCH, v.violations, w.vector)


def explore(cfg: TargetConfig, budget: int = DEFAULT_BUDGET, *, seed: int = 0,
            max_runs: int = DEFAULT_MAX_RUNS, alphabet: Iterable[str] = ALPHABET) -> SearchResult:
    """Enumerate every run with at most ``budget`` mutations and evaluate all
    properties on each."""
    require_applicable(cfg)
    if budget < 0:
        raise ValueError("budget must be non-negative")
    alphabet = tuple(alphabet)
    base = World(cfg, seed=seed)
    base.run_transaction()
    log = list(base.channel.history[0])
    props = {p: PropertyResult() for p in PROPERTIES}
    secrecy = {"PIN": True, "PAN": True, "keys": True}
    runs = 0

    def visit(vector):
        nonlocal runs
        runs += 1
        if runs > max_runs:
            raise BudgetExceeded(f"{cfg.name}: more than {max_runs} runs")
        try:
            out = run_vector(cfg, vector, base=base)
        except UnderivableInjection:
            return
        for name, v in out.verdicts.items():
            if not v.holds:
                r = props[name]
                r.holds = False
                r.remarks |= v.remarks
                if r.witness is None:
                    r.witness = out
        for lab, ok in out.secrecy.items():
            secrecy[lab] = secrecy[lab] and ok
        if len(vector) >= budget:
            return
        last_pos, last_m = vector[-1] if vector else (0, None)
        for pos in range(last_pos, len(out.seen)):
            options = applicable(out.seen[pos], log, alphabet)
            if pos == last_pos and last_m is not None:
                options = options[options.index(last_m) + 1:] if last_m in options else []
            for m in options:
                visit(vector + ((pos, m),))

    visit(())
    return SearchResult(cfg, budget, runs, props, secrecy)


def bounded_search(cfg: TargetConfig, prop: str, budget: int = DEFAULT_BUDGET, **kw) -> Verdict:
    if prop not in PROPERTIES:
        raise ValueError(f"unknown property {prop!r}")
    return explore(cfg, budget, **kw).verdict(prop)


def replay_witness(cfg: TargetConfig, vector: tuple, *, seed: int = 0) -> dict[str, Verdict]:
    """Re-run a mutation vector from scratch and re-check every property."""
    return run_vector(cfg, vector, seed=seed).verdicts

