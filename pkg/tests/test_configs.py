import json
from importlib import resources

import pytest

from emvsym.configs import (REASON_INCOMPATIBLE, REASON_NO_CVM_HIGH, TargetConfig, UnknownConfig,
                            applicability, by_name, enumerate_configs, suite)

INAPPLICABLE = {"Contact_SDA_OnlinePIN_Offline", "Contact_SDA_EncPIN_Online",
                "Contact_SDA_EncPIN_Offline", "Contact_DDA_OnlinePIN_Offline",
                "Contact_CDA_OnlinePIN_Offline", "Mastercard_SDA_NoPIN_High",
                "Mastercard_DDA_NoPIN_High", "Mastercard_CDA_NoPIN_High"}


def test_counts_and_names():
    configs = enumerate_configs()
    names = [c.name for c in configs]
    assert len(configs) == 40 and len(set(names)) == 40
    assert len(suite("contact")) == 24 and len(suite("contactless")) == 16
    assert "Contact_CDA_OnlinePIN_Online" in names and "Visa_DDA_High" in names


def test_names_match_reference_rows_in_order():
    golden = json.loads(resources.files("emvsym").joinpath("golden/tables.json").read_text())
    assert [r[0] for r in golden["contact"]] == [c.name for c in suite("contact")]
    assert [r[0] for r in golden["contactless"]] == [c.name for c in suite("contactless")]


def test_applicability():
    out = {c.name: applicability(c) for c in enumerate_configs()}
    assert {n for n, (ok, _, _) in out.items() if not ok} == INAPPLICABLE
    reasons = {r.split(":")[0] for ok, r, _ in out.values() if not ok}
    assert reasons == {REASON_INCOMPATIBLE, REASON_NO_CVM_HIGH}
    assert out["Mastercard_CDA_NoPIN_High"][2] == 3
    assert "key pair" in out["Contact_SDA_EncPIN_Online"][1]
    assert out["Visa_EMV_Low"] == (True, None, None)


def test_invalid_combinations():
    with pytest.raises(ValueError):
        TargetConfig("Contactless", "EMV", "NoPIN", kernel="Mastercard", value="Low")
    with pytest.raises(ValueError):
        TargetConfig("Contactless", "SDA", "PlainPIN", kernel="Mastercard", value="Low")
    with pytest.raises(ValueError):
        TargetConfig("Contact", "SDA", "NoPIN", authz="Online", fixes=frozenset({"4"}))


def test_lookup_and_fixes():
    with pytest.raises(UnknownConfig):
        by_name("Visa_EMV_Medium")
    c = by_name("Visa_EMV_High", ["1", "2"])
    assert c.has_fix("1") and not c.has_fix("3a")
    assert not by_name("Mastercard_SDA_NoPIN_Low", ["1"]).has_fix("1")
    with pytest.raises(ValueError):
        suite("everything")
