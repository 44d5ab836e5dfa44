import pytest

from emvsym import data as d
from emvsym.configs import InapplicableConfig, by_name
from emvsym.properties import AUTH_TO_BANK, AUTH_TO_TERMINAL, BANK_ACCEPTS, PROPERTIES
from emvsym.search import (BudgetExceeded, Mutation, applicable, bounded_search, explore,
                           replay_witness, run_vector)


def test_budget_zero_is_the_honest_run():
    r = explore(by_name("Contact_SDA_NoPIN_Online"), 0)
    assert r.runs == 1
    assert all(p.holds for p in r.properties.values())


def test_search_finds_and_replays():
    cfg = by_name("Contact_SDA_PlainPIN_Online")
    r = explore(cfg, 2)
    for prop in PROPERTIES:
        v = r.verdict(prop)
        assert not v.holds and v.mutations
        assert not replay_witness(cfg, v.mutations)[prop].holds
    assert r.properties[BANK_ACCEPTS].remarks == {2}


def test_clean_configuration_holds_within_bound():
    assert bounded_search(by_name("Contact_CDA_NoPIN_Offline"), AUTH_TO_BANK).holds


def test_run_cap():
    with pytest.raises(BudgetExceeded):
        explore(by_name("Contact_DDA_PlainPIN_Online"), 2, max_runs=5)


def test_rejects_bad_arguments():
    with pytest.raises(InapplicableConfig):
        explore(by_name("Mastercard_SDA_NoPIN_High"))
    with pytest.raises(ValueError):
        explore(by_name("Visa_EMV_Low"), -1)
    with pytest.raises(ValueError):
        bounded_search(by_name("Visa_EMV_Low"), "liveness")


def test_mutation_alphabet():
    gpo = d.command("GET_PROCESSING_OPTIONS", d.record({"PDOL": d.Pdol(
        d.amount_term("High", 1), d.Atom("un"), d.Ttq()).term}))
    kinds = [str(m) for m in applicable(gpo, [])]
    assert kinds[0] == "drop" and "ttq:(2, 7)" in kinds and "replay" not in kinds
    verify = d.command("VERIFY", d.record({"PIN": d.Atom("1")}))
    assert Mutation("forge-9000") in applicable(verify, [])
    assert applicable(verify, [], alphabet=["drop"]) == [Mutation("drop")]


def test_same_position_mutations_compose():
    cfg = by_name("Visa_EMV_High")
    gpo_resp = 5  # SELECT, SELECT responses, then the GPO command and its response
    vector = ((gpo_resp, Mutation("ctq", d.CTQ_ONLINE_PIN_REQUIRED)),
              (gpo_resp, Mutation("ctq", d.CTQ_CDCVM_PERFORMED)))
    out = run_vector(cfg, vector)
    assert out.seen[gpo_resp].name == "GET_PROCESSING_OPTIONS"
    assert not out.verdicts[AUTH_TO_TERMINAL].holds


def test_search_is_deterministic():
    cfg = by_name("Mastercard_DDA_OnlinePIN_Low")
    a, b = explore(cfg), explore(cfg)
    assert a.runs == b.runs
    assert {p: (r.holds, r.remarks) for p, r in a.properties.items()} == {
        p: (r.holds, r.remarks) for p, r in b.properties.items()}
