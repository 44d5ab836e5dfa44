import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emvsym import data as d
from emvsym.data import (Aip, Apdu, Ctq, CvmList, MalformedApdu, Pdol, TransactionRecord, Ttq,
                         decode_apdu, encode_apdu)
from emvsym.terms import Atom, Tuple
from strategies import labels, terms

N = 1000
byte = st.integers(min_value=0, max_value=255)
byte_index = st.sampled_from([1, 2])
bit_index = st.integers(min_value=1, max_value=8)
qualifier = st.sampled_from([Ttq, Ctq]).flatmap(lambda cls: st.builds(cls, byte, byte))


@settings(max_examples=N)
@given(qualifier, byte_index, bit_index, st.booleans())
def test_set_then_get_bit(q, b, i, value):
    q2 = d.set_bit(q, b, i, value)
    assert d.get_bit(q2, b, i) == value
    for bb in (1, 2):
        for ii in range(1, 9):
            if (bb, ii) != (b, i):
                assert d.get_bit(q2, bb, ii) == d.get_bit(q, bb, ii)


@settings(max_examples=N)
@given(qualifier, byte_index, bit_index)
def test_double_flip_is_identity(q, b, i):
    once = d.set_bit(q, b, i, not d.get_bit(q, b, i))
    assert once != q
    assert d.set_bit(once, b, i, d.get_bit(q, b, i)) == q


@settings(max_examples=N)
@given(qualifier)
def test_qualifier_codecs(q):
    cls = type(q)
    assert cls.from_term(q.term) == q
    assert cls.decode(q.encode()) == q
    # Bit b of byte B is worth 2**(b-1) in that byte.
    for i in range(1, 9):
        assert d.get_bit(q, 1, i) == bool(q.byte1 >> (i - 1) & 1)


@settings(max_examples=N)
@given(byte, st.sampled_from(d.AUTH_PROFILES), terms, byte)
def test_aip_codecs(b1, profile, extra, b2):
    aip = Aip(b1, profile, extra, b2)
    assert Aip.from_term(aip.term) == aip
    assert Aip.decode(aip.encode()) == aip


commands = st.sampled_from(sorted(d.INS))
trailers = st.sampled_from(sorted(d.VALID_TRAILERS))


@settings(max_examples=N)
@given(commands, terms, st.one_of(st.none(), trailers))
def test_apdu_byte_round_trip(name, payload, trailer):
    a = d.command(name, payload) if trailer is None else d.response(name, payload, trailer)
    raw = encode_apdu(a)
    assert decode_apdu(raw) == a
    with pytest.raises(MalformedApdu):
        decode_apdu(raw[:-1])


@settings(max_examples=N)
@given(st.lists(st.tuples(labels, terms), max_size=5, unique_by=lambda p: p[0]),
       labels, terms)
def test_record_fields(pairs, tag, value):
    payload = d.record(pairs)
    assert d.fields(payload) == dict(pairs)
    updated = d.fields(d.with_fields(payload, **{tag: value}))
    assert updated[tag] == value
    assert {k: v for k, v in updated.items() if k != tag} == {
        k: v for k, v in pairs if k != tag}
    assert tag not in d.fields(d.without_fields(d.record(pairs), tag))


@settings(max_examples=N)
@given(st.one_of(st.none(), qualifier.map(lambda q: Ttq(q.byte1, q.byte2))),
       st.sampled_from([d.LOW, d.HIGH]), st.integers(min_value=0, max_value=999))
def test_pdol_round_trip(ttq, value, tag):
    p = Pdol(d.amount_term(value, tag), Atom("un", fresh=True, index=tag), ttq)
    assert Pdol.from_term(p.term) == p
    assert p.value_class == value


@settings(max_examples=N)
@given(st.lists(st.sampled_from(d.CVM_METHODS), max_size=4))
def test_cvm_list_round_trip(methods):
    cl = CvmList.of(*methods)
    assert CvmList.from_term(cl.term) == cl
    assert cl.labels == tuple(methods)


@given(st.integers(min_value=0, max_value=0xFFFF))
def test_atc_codec(n):
    assert d.atc_from_term(d.atc_term(n)) == n


def test_pin_status_words():
    assert d.sw_pin_failed(2) == 0x63C2
    assert d.is_pin_fail(0x63C0) and not d.is_pin_fail(d.SW_SUCCESS)
    assert d.is_pin_blocked(d.SW_PIN_BLOCKED)
    assert d.is_success(0x9000)


def test_apdu_validation():
    with pytest.raises(ValueError):
        Apdu("command", "SELECT", Tuple(), 0x9000)
    with pytest.raises(ValueError):
        Apdu("response", "SELECT", Tuple(), 0x1234)
    with pytest.raises(ValueError):
        d.command("LAUNCH_MISSILES")
    with pytest.raises(ValueError):
        d.get_bit(Ttq(), 3, 1)
    with pytest.raises(ValueError):
        d.set_bit(Ttq(), 1, 9, True)
    with pytest.raises(ValueError):
        Ttq(256, 0)


def test_transaction_record_differences():
    t = TransactionRecord(Atom("pan"), Aip(), "NoPIN", Atom("x"), 1, Atom("ac"), Atom("iad"))
    u = TransactionRecord(Atom("pan"), Aip(), "PlainPIN", Atom("x"), 1, Atom("ac2"), Atom("iad"))
    assert t.differing(u) == ("cvm", "ac")
    assert t.differing(t) == ()
