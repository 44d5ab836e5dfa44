import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emvsym.terms import (ZERO, AEnc, Atom, BadCert, Cert, FreshSource, Hash, PubKey, Sign,
                          TermSyntaxError, Tuple, WrongKey, Xor, adec, fresh, fresh_scope,
                          parse, reduce, verify_cert_chain, verify_sign, xor)
from strategies import terms, xor_operands

N = 1000


@settings(max_examples=N)
@given(terms)
def test_text_round_trip(t):
    assert parse(str(t)) == t


@settings(max_examples=N)
@given(terms)
def test_reduce_is_idempotent(t):
    r = reduce(t)
    assert reduce(r) == r


def _parity_oracle(ops):
    # Independent normal form: operands that occur an odd number of times.
    flat = []
    for o in ops:
        flat.extend(o.operands if isinstance(o, Xor) else [o])
    return {o for o, c in Counter(flat).items() if c % 2 and o != ZERO}


@settings(max_examples=N)
@given(xor_operands, st.randoms(use_true_random=False))
def test_xor_normal_form_matches_parity_oracle(ops, rnd):
    shuffled = list(ops)
    rnd.shuffle(shuffled)
    a, b = xor(*ops), xor(*shuffled)
    assert a == b
    left = _parity_oracle(ops)
    if not left:
        assert a == ZERO
    elif len(left) == 1:
        assert a == left.pop()
    else:
        assert isinstance(a, Xor) and set(a.operands) == left


@settings(max_examples=N)
@given(xor_operands)
def test_xor_self_inverse(ops):
    x = xor(*ops)
    assert xor(x, x) == ZERO
    assert xor(x, ZERO) == x


def test_xor_nested_grouping():
    a, b, c = Atom("a"), Atom("b"), Atom("c")
    assert xor(Xor(a, b), c) == xor(a, Xor(b, c))
    assert xor(a, Xor(a, b)) == b


def test_atom_label_rules():
    with pytest.raises(ValueError):
        Atom("a'b")
    with pytest.raises(TypeError):
        PubKey()


@pytest.mark.parametrize("text", ["", "'a", "~n", "~n#", "Foo('a')", "Tuple('a' 'b')",
                                  "Sign('a')"])
def test_parse_rejects_garbage(text):
    with pytest.raises(TermSyntaxError):
        parse(text)


def test_asymmetric_decryption_needs_matching_key():
    sk, other = fresh("sk"), fresh("sk")
    c = AEnc(Atom("m"), PubKey(sk))
    assert adec(c, sk) == Atom("m")
    with pytest.raises(WrongKey):
        adec(c, other)


def test_signature_check():
    sk = fresh("sk")
    m = Tuple(Atom("a"), Atom("b"))
    assert verify_sign(Sign(m, sk), m, PubKey(sk))
    assert not verify_sign(Sign(m, sk), Atom("a"), PubKey(sk))
    assert not verify_sign(Sign(m, fresh("sk")), m, PubKey(sk))
    assert not verify_sign(Hash(m), m, PubKey(sk))


def test_certificate_chain():
    ca, bank, card = fresh("ca"), fresh("bank"), fresh("card")
    bank_cert = Cert(Tuple(Atom("B"), PubKey(bank)), ca)
    card_cert = Cert(Tuple(Atom("pan"), PubKey(card)), bank)
    assert verify_cert_chain(PubKey(ca), bank_cert, card_cert) == (PubKey(bank), PubKey(card))
    with pytest.raises(BadCert):
        verify_cert_chain(PubKey(bank), bank_cert)
    with pytest.raises(BadCert):
        verify_cert_chain(PubKey(ca), bank_cert, Cert(Tuple(Atom("pan"), PubKey(card)), ca))
    with pytest.raises(BadCert):
        verify_cert_chain(PubKey(ca), Cert(Atom("no key"), ca))


def test_fresh_scopes_are_deterministic():
    with fresh_scope(5):
        a = [fresh("x"), fresh("y")]
    with fresh_scope(5):
        b = [fresh("x"), fresh("y")]
    assert a == b and a[0].index == 5 and a[1].index == 6


def test_fresh_source_copy_is_independent():
    src = FreshSource(10)
    src("a")
    twin = src.copy()
    assert src("b").index == twin("b").index == 11
    assert src("c").index == 12


def test_structural_equality_and_hash():
    rnd = random.Random(3)
    pieces = [Atom(str(i)) for i in range(5)]
    for _ in range(50):
        xs = rnd.sample(pieces, 3)
        assert Tuple(*xs) == Tuple(*xs) and hash(Tuple(*xs)) == hash(Tuple(*list(xs)))
    assert Tuple(Atom("a")) != Hash(Atom("a"))
    with pytest.raises(AttributeError):
        Atom("a").args = ()
