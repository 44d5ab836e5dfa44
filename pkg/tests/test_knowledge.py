from itertools import combinations

from hypothesis import given, settings
from hypothesis import strategies as st

from emvsym.knowledge import Knowledge, close
from emvsym.terms import (AEnc, Atom, Cert, Hash, KDF, Mac, Pad, PubKey, Sign, Tuple, Xor,
                          fresh, reduce, subterms, xor)
from strategies import POOL, SECRET_KEYS, key_safe_terms, pool_atoms

N = 1000
CRYPTO = (PubKey, Cert, Sign, AEnc, Mac, Hash, KDF)


class Oracle:
    """Breadth-first closure with exclusive-or handled by brute force over
    subsets of the observed sums.  Slow but simple."""

    def __init__(self, observed, limit=4):
        self.limit = limit
        self.known = set()
        frontier = [reduce(t) for t in observed]
        while frontier:
            nxt = []
            for t in frontier:
                if t in self.known:
                    continue
                self.known.add(t)
                if isinstance(t, Tuple):
                    nxt.extend(t.items)
                elif isinstance(t, (Sign, Pad)):
                    nxt.append(t.msg)
                elif isinstance(t, Cert):
                    nxt.append(t.content)
            if not nxt:
                nxt = self._second_pass()
            frontier = nxt

    def _second_pass(self):
        out = []
        for t in self.known:
            if (isinstance(t, AEnc) and isinstance(t.pubkey, PubKey)
                    and self.derivable(t.pubkey.of) and t.msg not in self.known):
                out.append(t.msg)
        ops = {o for x in self.known if isinstance(x, Xor) for o in x.operands}
        for o in ops:
            if o not in self.known and self._xor_reachable({o}):
                out.append(o)
        return out

    def _residue(self, operands):
        return frozenset(o for o in operands if not self.derivable(o, use_xor=False))

    def _xor_reachable(self, target):
        sums = [self._residue(x.operands) for x in self.known if isinstance(x, Xor)]
        for r in range(len(sums) + 1):
            for combo in combinations(sums, r):
                acc = set()
                for s in combo:
                    acc ^= s
                if acc == target:
                    return True
        return False

    def derivable(self, t, budget=None, use_xor=True):
        budget = self.limit if budget is None else budget
        if t in self.known:
            return True
        if isinstance(t, Atom):
            return not t.fresh
        if isinstance(t, Xor):
            rest = self._residue(t.operands) if use_xor else {
                o for o in t.operands if not self.derivable(o, budget, False)}
            return not rest or (use_xor and self._xor_reachable(set(rest)))
        if isinstance(t, CRYPTO):
            if budget == 0:
                return False
            budget -= 1
        return all(self.derivable(c, budget, use_xor) for c in t.children)


small = st.recursive(
    pool_atoms,
    lambda ch: st.one_of(
        st.lists(ch, max_size=3).map(lambda xs: Tuple(*xs)),
        ch.map(Hash),
        st.builds(Sign, ch, pool_atoms),
        st.builds(AEnc, ch, pool_atoms.map(PubKey)),
        st.builds(Mac, ch, pool_atoms),
        st.lists(ch, min_size=2, max_size=3).map(lambda xs: Xor(*xs)),
    ),
    max_leaves=6)


@settings(max_examples=N)
@given(st.lists(small, max_size=5), st.lists(small, max_size=4))
def test_closure_agrees_with_breadth_first_oracle(observed, probes):
    k = Knowledge(observed)
    oracle = Oracle(observed)
    candidates = set(POOL) | set(probes)
    for t in observed:
        candidates.update(reduce(s) for s in subterms(t))
    for c in candidates:
        assert k.derivable(c) == oracle.derivable(reduce(c)), c


@settings(max_examples=N)
@given(st.lists(small, max_size=6))
def test_closure_is_idempotent(observed):
    k = close(Knowledge(), observed)
    again = close(k, observed)
    assert again == k
    assert close(k, k.known) == k


@settings(max_examples=N)
@given(st.lists(small, max_size=4), st.lists(small, max_size=3))
def test_closure_is_monotone(first, more):
    k1 = Knowledge(first)
    k2 = close(k1, more)
    for t in first + list(k1.known):
        assert t in k2


@settings(max_examples=N)
@given(st.lists(key_safe_terms, min_size=1, max_size=6))
def test_no_key_recovery(observed):
    # Keys used only to sign, MAC, derive or receive encryptions stay secret.
    k = Knowledge(observed)
    for key in SECRET_KEYS:
        assert key not in k


def test_xor_combination_of_two_sums():
    a, b, c = fresh("a"), fresh("b"), fresh("c")
    k = Knowledge([xor(a, b), xor(b, c)])
    assert xor(a, c) in k
    assert a not in k and b not in k
    k.add([c])
    assert a in k and b in k


def test_decryption_after_key_leak():
    sk = fresh("sk")
    secret = fresh("secret")
    k = Knowledge([AEnc(secret, PubKey(sk))])
    assert secret not in k
    k.add([sk])
    assert secret in k


def test_depth_limit_counts_crypto_layers_only():
    t = Atom("c")
    for _ in range(4):
        t = Hash(t)
    k = Knowledge(depth_limit=4)
    assert t in k
    assert Hash(t) not in k
    # Pairing is free.
    assert Tuple(Tuple(Tuple(t))) in k


def test_signature_reveals_message_not_key():
    sk, m = fresh("sk"), fresh("m")
    k = Knowledge([Sign(m, sk)])
    assert m in k and sk not in k
    assert Sign(m, sk) in k
    assert Sign(Atom("other"), sk) not in k


def test_invented_values_are_known():
    k = Knowledge()
    a = k.invent("junk")
    assert a.fresh and a in k
