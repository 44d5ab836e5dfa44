"""Dolev-Yao attacker knowledge.

The closure of a set of observed terms is kept in two parts:

* an *analysis* set, saturated under the destructors (projection, unpadding,
  message recovery from signatures and certificates, decryption with a
  derivable private key, and any operand isolated by summing observed
  exclusive-ors, found by elimination over GF(2)); and
* synthesis on demand: a term is derivable when it is in the analysis set,
  is a public constant, or is a public constructor applied to derivable
  arguments.

``t in knowledge`` decides membership in the full closure.
"""

from __future__ import annotations

import threading
from typing import Iterable

from .terms import (AEnc, Atom, Cert, Hash, KDF, Mac, MacPrime, Pad, PubKey,
                    Sign, Term, Tuple, Xor, fresh, reduce)

DEFAULT_DEPTH_LIMIT = 4

# Constructor layers counted against the depth limit.  Pairing, padding and
# exclusive-or are free.
_CRYPTO = (PubKey, Cert, Sign, AEnc, Mac, MacPrime, Hash, KDF)


class Knowledge:
    def __init__(self, terms: Iterable[Term] = (), depth_limit: int = DEFAULT_DEPTH_LIMIT):
        self.depth_limit = depth_limit
        self._analyzed: set[Term] = set()
        self._sealed: set[AEnc] = set()
        self._xors: set[Xor] = set()
        self._lock = threading.Lock()
        self.add(terms)

    @property
    def known(self) -> frozenset[Term]:
        """The saturated analysis set (observed terms and everything
        extracted from them)."""
        return frozenset(self._analyzed)

    def copy(self) -> Knowledge:
        k = Knowledge(depth_limit=self.depth_limit)
        k._analyzed = set(self._analyzed)
        k._sealed = set(self._sealed)
        k._xors = set(self._xors)
        return k

    def add(self, terms: Iterable[Term]) -> None:
        with self._lock:
            for t in terms:
                self._learn(reduce(t))
            self._saturate()

    def invent(self, name: str) -> Atom:
        """A fresh value generated by the attacker (and hence known to it)."""
        a = fresh(name)
        self.add([a])
        return a

    def _learn(self, t: Term) -> None:
        stack = [t]
        while stack:
            t = stack.pop()
            if t in self._analyzed:
                continue
            self._analyzed.add(t)
            if isinstance(t, Tuple):
                stack.extend(t.items)
            elif isinstance(t, (Pad, Sign)):
                stack.append(t.msg)
            elif isinstance(t, Cert):
                stack.append(t.content)
            elif isinstance(t, AEnc):
                self._sealed.add(t)
            elif isinstance(t, Xor):
                self._xors.add(t)

    def _saturate(self) -> None:
        changed = True
        while changed:
            changed = False
            for c in list(self._sealed):
                pk = c.pubkey
                if isinstance(pk, PubKey) and self._derivable(pk.of, self.depth_limit):
                    self._sealed.discard(c)
                    if c.msg not in self._analyzed:
                        self._learn(c.msg)
                        changed = True
            basis = self._xor_basis(self.depth_limit)
            for o in {o for x in self._xors for o in x.operands}:
                if o not in self._analyzed and _in_span({o}, basis):
                    self._learn(o)
                    changed = True

    def _xor_basis(self, budget: int) -> list[tuple[Term, frozenset[Term]]]:
        # Observed sums as vectors over GF(2), with derivable operands
        # cancelled out, in echelon form.
        basis: list[tuple[Term, frozenset[Term]]] = []
        for x in sorted(self._xors, key=str):
            row = _reduce_row({o for o in x.operands if not self._derivable(o, budget, False)},
                              basis)
            if row:
                basis.append((min(row, key=str), frozenset(row)))
        return basis

    def _derivable(self, t: Term, budget: int, use_xor: bool = True) -> bool:
        if t in self._analyzed:
            return True
        if isinstance(t, Atom):
            return not t.fresh
        if isinstance(t, Xor):
            rest = {o for o in t.operands if not self._derivable(o, budget, use_xor)}
            return not rest or (use_xor and _in_span(rest, self._xor_basis(budget)))
        if isinstance(t, _CRYPTO):
            if budget <= 0:
                return False
            budget -= 1
        return all(self._derivable(c, budget, use_xor) for c in t.children)

    def derivable(self, t: Term) -> bool:
        return self._derivable(reduce(t), self.depth_limit)

    __contains__ = derivable

    def __eq__(self, other):
        return isinstance(other, Knowledge) and self._analyzed == other._analyzed

    def __len__(self):
        return len(self._analyzed)

    def __repr__(self):
        return f"Knowledge({len(self._analyzed)} analysed terms)"


def _reduce_row(row: set[Term], basis) -> set[Term]:
    row = set(row)
    for pivot, b in basis:
        if pivot in row:
            row ^= b
    return row


def _in_span(row: set[Term], basis) -> bool:
    return not _reduce_row(row, basis)


def close(k: Knowledge, observed: Iterable[Term]) -> Knowledge:
    """Return a new knowledge state: ``k`` plus ``observed``, closed."""
    out = k.copy()
    out.add(observed)
    return out
