"""Target configurations: the 24 contact and 16 contactless analysis targets."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

CONTACT = "Contact"
CONTACTLESS = "Contactless"
VISA = "Visa"
MASTERCARD = "Mastercard"

FIX_NAMES = ("1", "2", "3a", "3b")

# Remark codes used in result tables.
REMARK_CVM = 1
REMARK_AC = 2
REMARK_NO_CVM_HIGH_VALUE = 3


class UnknownConfig(KeyError):
    pass


class InapplicableConfig(ValueError):
    def __init__(self, config: TargetConfig, reason: str, remark: int | None = None):
        super().__init__(f"{config.name}: {reason}")
        self.config = config
        self.reason = reason
        self.remark = remark


@dataclass(frozen=True)
class TargetConfig:
    generic: str
    auth: str
    cvm: str | None = None
    kernel: str | None = None
    value: str | None = None
    authz: str | None = None
    fixes: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.generic not in (CONTACT, CONTACTLESS):
            raise ValueError(f"unknown generic model {self.generic!r}")
        if self.auth == "EMV" and self.kernel != VISA:
            raise ValueError("EMV mode exists for the Visa kernel only")
        if self.cvm in ("PlainPIN", "EncPIN") and self.generic != CONTACT:
            raise ValueError("offline PIN methods exist for contact only")
        if self.generic == CONTACT and (self.kernel or self.value or not self.authz):
            raise ValueError("contact targets take an authorization type only")
        if self.generic == CONTACTLESS and (not self.kernel or not self.value or self.authz):
            raise ValueError("contactless targets take a kernel and a value class")
        unknown = set(self.fixes) - set(FIX_NAMES)
        if unknown:
            raise ValueError(f"unknown fixes {sorted(unknown)}")

    @property
    def name(self) -> str:
        if self.generic == CONTACT:
            return f"Contact_{self.auth}_{self.cvm}_{self.authz}"
        if self.kernel == VISA:
            return f"Visa_{self.auth}_{self.value}"
        return f"Mastercard_{self.auth}_{self.cvm}_{self.value}"

    @property
    def is_contact(self) -> bool:
        return self.generic == CONTACT

    @property
    def is_visa(self) -> bool:
        return self.kernel == VISA

    def has_fix(self, fix: str) -> bool:
        # The fixes are terminal changes for the Visa kernel.
        return self.is_visa and fix in self.fixes

    def with_fixes(self, fixes) -> TargetConfig:
        return replace(self, fixes=frozenset(fixes))

    def __str__(self):
        return self.name


def enumerate_configs() -> list[TargetConfig]:
    """All 40 targets in results-table order."""
    out = []
    for auth in ("SDA", "DDA", "CDA"):
        for cvm in ("PlainPIN", "OnlinePIN", "NoPIN", "EncPIN"):
            for authz in ("Online", "Offline"):
                out.append(TargetConfig(CONTACT, auth, cvm, authz=authz))
    for auth in ("EMV", "DDA"):
        for value in ("Low", "High"):
            out.append(TargetConfig(CONTACTLESS, auth, kernel=VISA, value=value))
    for auth in ("SDA", "DDA", "CDA"):
        for cvm in ("OnlinePIN", "NoPIN"):
            for value in ("Low", "High"):
                out.append(TargetConfig(CONTACTLESS, auth, cvm, kernel=MASTERCARD, value=value))
    return out


def by_name(name: str, fixes=()) -> TargetConfig:
    for c in enumerate_configs():
        if c.name == name:
            return c.with_fixes(fixes)
    raise UnknownConfig(name)


def suite(which: str) -> list[TargetConfig]:
    configs = enumerate_configs()
    if which == "contact":
        return [c for c in configs if c.is_contact]
    if which == "contactless":
        return [c for c in configs if not c.is_contact]
    if which == "all":
        return configs
    raise ValueError(f"unknown suite {which!r}")


REASON_INCOMPATIBLE = "cardholder verification method incompatible with authorization or card"
REASON_NO_CVM_HIGH = "high-value transactions without CVM are not completed contactless"


def applicability(c: TargetConfig) -> tuple[bool, str | None, int | None]:
    """``(applicable, reason, remark)``.

    Two reason classes exist: the CVM cannot be used with this card or
    authorization type (online PIN needs online authorization; enciphered
    PIN needs a card key pair, which SDA cards lack), and contactless
    high-value purchases with no CVM, which terminals refuse.
    """
    if c.is_contact:
        if c.cvm == "OnlinePIN" and c.authz == "Offline":
            return False, REASON_INCOMPATIBLE + ": online PIN requires online authorization", None
        if c.cvm == "EncPIN" and c.auth == "SDA":
            return False, REASON_INCOMPATIBLE + ": SDA card has no key pair for enciphered PIN", None
        return True, None, None
    if c.kernel == MASTERCARD and c.cvm == "NoPIN" and c.value == "High":
        return False, REASON_NO_CVM_HIGH, REMARK_NO_CVM_HIGH_VALUE
    return True, None, None


def require_applicable(c: TargetConfig) -> None:
    ok, reason, remark = applicability(c)
    if not ok:
        raise InapplicableConfig(c, reason, remark)
