from emvsym import data as d
from emvsym.attacks import AdversaryScript
from emvsym.channel import PASS, Replace
from emvsym.configs import by_name
from emvsym.data import Aip, TransactionRecord
from emvsym.knowledge import Knowledge
from emvsym.properties import (AUTH_TO_TERMINAL, check_auth_to_bank, check_auth_to_terminal,
                               check_bank_accepts, check_executability, check_secrecy, classify,
                               secrecy_labels)
from emvsym.protocol.world import World
from emvsym.terms import Atom, Tuple
from emvsym.trace import (BANK, CARD, TERMINAL, Trace, bank_declines, commit, compromise_fact,
                          honest, running, secret, terminal_accepts)

PAN = Atom("pan", True, 1)


def txn(cvm="NoPIN", ac="ac", atc=1, iad="iad"):
    return TransactionRecord(PAN, Aip(0, "CDA"), cvm, Atom("x"), atc, Atom(ac), Atom(iad))


def test_matching_run_and_commit():
    tr = Trace()
    tr.emit(running(PAN, TERMINAL, CARD, TERMINAL, txn()))
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()))
    assert check_auth_to_terminal(tr).holds


def test_repeated_commit_breaks_injectivity():
    tr = Trace()
    tr.emit(running(PAN, TERMINAL, CARD, TERMINAL, txn()))
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()))
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()))
    v = check_auth_to_terminal(tr)
    assert not v.holds and v.remarks == {0}
    assert v.violations[0].detail == "repeated commit"


def test_commit_before_running_is_a_violation():
    tr = Trace()
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()))
    tr.emit(running(PAN, TERMINAL, CARD, TERMINAL, txn()))
    assert not check_auth_to_terminal(tr).holds


def test_remarks_name_the_disagreement():
    tr = Trace()
    tr.emit(running(PAN, TERMINAL, CARD, TERMINAL, txn(cvm="NoPIN")))
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn(cvm="PlainPIN")))
    assert check_auth_to_terminal(tr).remarks == {1}
    tr.emit(running(PAN, BANK, CARD, BANK, txn()))
    tr.emit(commit(BANK, PAN, CARD, BANK, txn(cvm="PlainPIN", ac="other")))
    assert check_auth_to_bank(tr).remarks == {1, 2}


def test_classify():
    assert classify(txn(), None) == {0}
    assert classify(txn(iad="other"), txn()) == {0}
    assert classify(txn(atc=2), txn()) == {2}
    assert classify(txn(cvm="CDCVM", ac="z"), txn(), ("cvm",)) == {1}


def test_compromise_clause():
    # Honest(A) in the same step as the claim plus Compromise(A) anywhere.
    tr = Trace()
    tr.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()), honest(Atom("BankX")))
    tr.emit(compromise_fact(Atom("BankX")))
    assert check_auth_to_terminal(tr).holds
    other = Trace()
    other.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()), honest(Atom("Bank")))
    other.emit(compromise_fact(Atom("BankX")))
    assert not check_auth_to_terminal(other).holds
    late = Trace()
    late.emit(commit(TERMINAL, PAN, CARD, TERMINAL, txn()))
    late.emit(honest(Atom("BankX")), compromise_fact(Atom("BankX")))
    assert not check_auth_to_terminal(late).holds


def test_bank_accepts():
    tr = Trace()
    tr.emit(running(PAN, TERMINAL, CARD, TERMINAL, txn()))
    tr.emit(terminal_accepts(txn(ac="forged")))
    assert check_bank_accepts(tr).holds
    tr.emit(bank_declines(txn(ac="forged")))
    v = check_bank_accepts(tr)
    assert not v.holds and v.remarks == {2}


def test_secrecy_per_label():
    pin, pan, key = Atom("PIN", True, 2), Atom("PAN", True, 4), Atom("mk", True, 3)
    tr = Trace()
    tr.emit(secret(pin), secret(pan), secret(key))
    k = Knowledge([pan])
    assert secrecy_labels(tr, k) == {"PIN": True, "PAN": False, "keys": True}
    assert not check_secrecy(tr, k).holds
    assert check_secrecy(tr, k, "keys").holds


def test_executability_needs_all_four_events():
    w = World(by_name("Contact_CDA_NoPIN_Online"))
    assert not check_executability(w.trace).holds
    w.run_transaction()
    assert check_executability(w.trace).holds


class CvmrSwap(AdversaryScript):
    """Rewrite the CVM result the terminal reports to the card."""

    def on_command(self, apdu, k):
        if apdu.name != "GENERATE_AC":
            return PASS
        f = d.fields(apdu.payload)
        x = f["CDOL1"]
        x = Tuple(x[0], d.cvmr_term("NoPIN"), *x.items[2:])
        return Replace(d.command(apdu.name, d.with_fields(apdu.payload, CDOL1=x)))


def test_cvm_result_mismatch_does_not_abort_the_card():
    w = World(by_name("Contact_DDA_PlainPIN_Offline"), CvmrSwap())
    w.run_transaction()
    responses = [a for a in w.channel.observed(1) if a.name == "GENERATE_AC"
                 and not a.is_command]
    assert responses and responses[0].trailer == d.SW_SUCCESS
    # The terminal and card now disagree on what the cryptogram covers.
    v = check_auth_to_terminal(w.trace)
    assert v.property == AUTH_TO_TERMINAL and not v.holds and 2 in v.remarks
