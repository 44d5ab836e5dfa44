"""Hypothesis strategies shared by the property tests."""

from hypothesis import strategies as st

from emvsym.terms import (AEnc, Atom, Cert, Hash, KDF, Mac, MacPrime, Pad, PubKey, Sign, Tuple,
                          Xor)

labels = st.text(alphabet="abcdefgxyz0123456789:.-", min_size=1, max_size=6)
public_atoms = labels.map(Atom)
fresh_atoms = st.builds(lambda n, i: Atom(n, fresh=True, index=i), labels,
                        st.integers(min_value=0, max_value=10**6))
atoms = st.one_of(public_atoms, fresh_atoms)


def _extend(children):
    return st.one_of(
        st.lists(children, max_size=4).map(lambda xs: Tuple(*xs)),
        children.map(PubKey),
        children.map(Hash),
        st.builds(Cert, children, children),
        st.builds(Sign, children, children),
        st.builds(AEnc, children, children),
        st.builds(Mac, children, children),
        st.builds(MacPrime, children, children),
        st.builds(KDF, children, children),
        st.lists(children, min_size=2, max_size=4).map(lambda xs: Xor(*xs)),
        st.builds(Pad, children, st.integers(min_value=0, max_value=16)),
    )


terms = st.recursive(atoms, _extend, max_leaves=12)

# A small pool keeps collisions (and therefore cancellation) likely.
POOL = [Atom("p"), Atom("q"), Atom("n", fresh=True, index=1), Atom("m", fresh=True, index=2),
        Atom("s", fresh=True, index=3)]
pool_atoms = st.sampled_from(POOL)
xor_operands = st.lists(st.one_of(pool_atoms, pool_atoms.map(Hash)), min_size=2, max_size=7)

# Secret keys that only ever sit in key position.
SECRET_KEYS = [Atom("sk", fresh=True, index=100), Atom("mk", fresh=True, index=101)]
secret_keys = st.sampled_from(SECRET_KEYS)


def _safe_extend(children):
    return st.one_of(
        st.lists(children, max_size=3).map(lambda xs: Tuple(*xs)),
        children.map(Hash),
        secret_keys.map(PubKey),
        st.builds(Sign, children, secret_keys),
        st.builds(Cert, children, secret_keys),
        st.builds(Mac, children, secret_keys),
        st.builds(MacPrime, children, secret_keys),
        st.builds(KDF, secret_keys, children),
        st.builds(AEnc, children, secret_keys.map(PubKey)),
        st.builds(Pad, children, st.integers(min_value=0, max_value=8)),
        st.lists(children, min_size=2, max_size=3).map(lambda xs: Xor(*xs)),
    )


key_safe_terms = st.recursive(st.one_of(public_atoms, pool_atoms), _safe_extend, max_leaves=10)
