"""Symbolic message terms.

Every cryptographic value exchanged in a transaction is a ``Term``: an atom
(public constant or fresh nonce/key) or a constructor applied to sub-terms.
No real cryptography is performed; equality is structural, and the only
equational theory is exclusive-or cancellation (see :func:`reduce`) plus the
destructor functions :func:`adec`, :func:`verify_sign` and
:func:`verify_cert_chain`.

Text form
---------
Terms print to a canonical s-expression-like form::

    term  := atom | CTOR "(" [arg ("," arg)*] ")"
    atom  := "'" label "'"          public constant
           | "~" label "#" index     fresh value
    arg   := term | integer          (integers only as Pad's byte count)

``CTOR`` is one of the constructor class names (``Tuple``, ``PubKey``,
``Cert``, ``Sign``, ``AEnc``, ``Mac``, ``MacPrime``, ``Hash``, ``KDF``,
``Xor``, ``Pad``).  Labels may not contain quotes, commas, parentheses or
``#``.  :func:`parse` is the inverse of ``str``.
"""

from __future__ import annotations

import contextlib
import contextvars
import threading
from typing import Iterable, Iterator

__all__ = [
    "Term", "Atom", "Tuple", "PubKey", "Cert", "Sign", "AEnc", "Mac", "MacPrime",
    "Hash", "KDF", "Xor", "Pad", "ZERO", "public", "fresh", "FreshSource",
    "fresh_scope", "reduce", "xor", "adec", "verify_sign", "verify_cert_chain",
    "derive_session_key", "subterms", "depth", "parse", "WrongKey", "BadCert",
    "TermSyntaxError",
]


class WrongKey(Exception):
    """Asymmetric decryption with a key that does not match the ciphertext."""


class BadCert(Exception):
    """A certificate in a chain was not signed by the expected key."""


class TermSyntaxError(ValueError):
    pass


class Term:
    """Immutable symbolic term with structural equality and a cached hash."""

    __slots__ = ("args", "_hash", "_text")
    arity: int | None = None

    def __init__(self, *args):
        if self.arity is not None and len(args) != self.arity:
            raise TypeError(f"{type(self).__name__} takes {self.arity} arguments")
        object.__setattr__(self, "args", tuple(args))
        object.__setattr__(self, "_hash", hash((type(self).__name__, self.args)))
        object.__setattr__(self, "_text", None)

    def __setattr__(self, name, value):
        raise AttributeError("terms are immutable")

    def __eq__(self, other):
        if self is other:
            return True
        return (type(self) is type(other) and self._hash == other._hash
                and self.args == other.args)

    def __ne__(self, other):
        return not self.__eq__(other)

    def __hash__(self):
        return self._hash

    def __str__(self):
        if self._text is None:
            inner = ", ".join(str(a) for a in self.args)
            object.__setattr__(self, "_text", f"{type(self).__name__}({inner})")
        return self._text

    def __repr__(self):
        return str(self)

    def __lt__(self, other):
        return str(self) < str(other)

    @property
    def children(self) -> tuple[Term, ...]:
        return tuple(a for a in self.args if isinstance(a, Term))

    def rebuild(self, children: Iterable[Term]) -> Term:
        return type(self)(*children)


class Atom(Term):
    __slots__ = ()

    def __init__(self, name: str, fresh: bool = False, index: int = 0):
        if any(c in name for c in "'(),#~\n"):
            raise ValueError(f"illegal character in atom label {name!r}")
        super().__init__(name, bool(fresh), index if fresh else 0)

    @property
    def name(self) -> str:
        return self.args[0]

    @property
    def fresh(self) -> bool:
        return self.args[1]

    @property
    def index(self) -> int:
        return self.args[2]

    @property
    def children(self):
        return ()

    def rebuild(self, children):
        return self

    def __str__(self):
        if self.fresh:
            return f"~{self.name}#{self.index}"
        return f"'{self.name}'"


class Tuple(Term):
    __slots__ = ()

    @property
    def items(self) -> tuple[Term, ...]:
        return self.args

    def __len__(self):
        return len(self.args)

    def __getitem__(self, i):
        return self.args[i]

    def __iter__(self) -> Iterator[Term]:
        return iter(self.args)


class PubKey(Term):
    __slots__ = ()
    arity = 1

    @property
    def of(self) -> Term:
        return self.args[0]


class Cert(Term):
    __slots__ = ()
    arity = 2

    @property
    def content(self) -> Term:
        return self.args[0]

    @property
    def signed_by(self) -> Term:
        return self.args[1]


class _Keyed(Term):
    __slots__ = ()
    arity = 2

    @property
    def msg(self) -> Term:
        return self.args[0]

    @property
    def key(self) -> Term:
        return self.args[1]


class Sign(_Keyed):
    __slots__ = ()


class AEnc(_Keyed):
    __slots__ = ()

    @property
    def pubkey(self) -> Term:
        return self.args[1]


class Mac(_Keyed):
    __slots__ = ()


class MacPrime(_Keyed):
    __slots__ = ()


class Hash(Term):
    __slots__ = ()
    arity = 1

    @property
    def msg(self) -> Term:
        return self.args[0]


class KDF(Term):
    __slots__ = ()
    arity = 2

    @property
    def master_key(self) -> Term:
        return self.args[0]

    @property
    def salt(self) -> Term:
        return self.args[1]


class Xor(Term):
    """Exclusive-or.  Built binary; :func:`reduce` flattens it to a sorted
    n-ary node with pairwise-cancelled operands."""

    __slots__ = ()

    def __init__(self, *operands: Term):
        if len(operands) < 2:
            raise TypeError("Xor needs at least two operands")
        super().__init__(*operands)

    @property
    def operands(self) -> tuple[Term, ...]:
        return self.args


class Pad(Term):
    """Right-padding of ``msg`` with ``zero_bytes`` zero bytes."""

    __slots__ = ()

    def __init__(self, msg: Term, zero_bytes: int):
        super().__init__(msg, int(zero_bytes))

    @property
    def msg(self) -> Term:
        return self.args[0]

    @property
    def zero_bytes(self) -> int:
        return self.args[1]

    @property
    def children(self):
        return (self.args[0],)

    def rebuild(self, children):
        (msg,) = children
        return Pad(msg, self.zero_bytes)


ZERO = Atom("zero")

_CONSTRUCTORS = {c.__name__: c for c in
                 (Tuple, PubKey, Cert, Sign, AEnc, Mac, MacPrime, Hash, KDF, Xor, Pad)}


def public(name: str) -> Atom:
    return Atom(name)


# -- fresh values -----------------------------------------------------------

class FreshSource:
    """Thread-safe counter handing out fresh atom indices."""

    def __init__(self, start: int = 1):
        self._next = start
        self._lock = threading.Lock()

    def __call__(self, name: str) -> Atom:
        with self._lock:
            n = self._next
            self._next += 1
        return Atom(name, fresh=True, index=n)

    def copy(self) -> FreshSource:
        with self._lock:
            return FreshSource(self._next)


_global_source = FreshSource()
_current_source: contextvars.ContextVar[FreshSource | None] = contextvars.ContextVar(
    "emvsym_fresh_source", default=None)


def fresh(name: str) -> Atom:
    """Return a fresh atom, unique within the active :func:`fresh_scope`."""
    source = _current_source.get() or _global_source
    return source(name)


@contextlib.contextmanager
def fresh_scope(start: int = 1, source: FreshSource | None = None):
    """Number fresh atoms from ``start`` inside the block (deterministic runs).
    Passing ``source`` continues an existing numbering instead."""
    token = _current_source.set(source or FreshSource(start))
    try:
        yield
    finally:
        _current_source.reset(token)


# -- equational theory --------------------------------------------------------

def _xor_normal(operands: Iterable[Term]) -> Term:
    counts: dict[Term, int] = {}
    for op in operands:
        parts = op.operands if isinstance(op, Xor) else (op,)
        for p in parts:
            if p == ZERO:
                continue
            counts[p] = counts.get(p, 0) ^ 1
    left = sorted((t for t, c in counts.items() if c), key=str)
    if not left:
        return ZERO
    if len(left) == 1:
        return left[0]
    return Xor(*left)


def reduce(t: Term) -> Term:
    """Normal form of ``t``: exclusive-or is flattened, cancelled pairwise and
    sorted; ``zero`` is its unit.  Every other constructor is free."""
    if isinstance(t, Atom):
        return t
    children = [reduce(c) for c in t.children]
    if isinstance(t, Xor):
        return _xor_normal(children)
    return t.rebuild(children)


def xor(*operands: Term) -> Term:
    return _xor_normal(reduce(o) for o in operands)


def adec(cipher: Term, privkey: Term) -> Term:
    if isinstance(cipher, AEnc) and cipher.pubkey == PubKey(privkey):
        return cipher.msg
    raise WrongKey(f"cannot decrypt {cipher} with {privkey}")


def verify_sign(sig: Term, msg: Term, pubkey: Term) -> bool:
    return (isinstance(sig, Sign) and isinstance(pubkey, PubKey)
            and sig.msg == msg and sig.key == pubkey.of)


def _check_cert(cert: Term, pubkey: Term) -> Term:
    if not (isinstance(cert, Cert) and isinstance(pubkey, PubKey)
            and cert.signed_by == pubkey.of):
        raise BadCert(f"{cert} not signed by {pubkey}")
    content = cert.content
    if not (isinstance(content, Tuple) and len(content) >= 2
            and isinstance(content[1], PubKey)):
        raise BadCert(f"certificate content carries no public key: {content}")
    return content[1]


def verify_cert_chain(ca_pub: Term, bank_cert: Term,
                      card_cert: Term | None = None) -> tuple[Term, Term | None]:
    """Check ``bank_cert`` against the CA key and ``card_cert`` (if any)
    against the bank key.  Certificate contents are tuples whose second item
    is the certified public key.  Returns ``(bank_pub, card_pub)``."""
    bank_pub = _check_cert(bank_cert, ca_pub)
    card_pub = _check_cert(card_cert, bank_pub) if card_cert is not None else None
    return bank_pub, card_pub


def derive_session_key(mk: Term, atc: Term) -> Term:
    return KDF(mk, atc)


# -- utilities ----------------------------------------------------------------

def subterms(t: Term) -> Iterator[Term]:
    yield t
    for c in t.children:
        yield from subterms(c)


def depth(t: Term) -> int:
    kids = t.children
    return 0 if not kids else 1 + max(depth(c) for c in kids)


class _Parser:
    def __init__(self, text: str):
        self.s = text
        self.i = 0

    def ws(self):
        while self.i < len(self.s) and self.s[self.i] in " \t\n":
            self.i += 1

    def expect(self, ch):
        self.ws()
        if self.s[self.i:self.i + 1] != ch:
            raise TermSyntaxError(f"expected {ch!r} at {self.i} in {self.s!r}")
        self.i += 1

    def term(self) -> Term:
        self.ws()
        if self.i >= len(self.s):
            raise TermSyntaxError("unexpected end of input")
        c = self.s[self.i]
        if c == "'":
            end = self.s.find("'", self.i + 1)
            if end < 0:
                raise TermSyntaxError("unterminated atom")
            name = self.s[self.i + 1:end]
            self.i = end + 1
            return Atom(name)
        if c == "~":
            end = self.s.find("#", self.i)
            if end < 0:
                raise TermSyntaxError("fresh atom without index")
            name = self.s[self.i + 1:end]
            j = end + 1
            while j < len(self.s) and self.s[j].isdigit():
                j += 1
            if j == end + 1:
                raise TermSyntaxError("fresh atom without index")
            index = int(self.s[end + 1:j])
            self.i = j
            return Atom(name, fresh=True, index=index)
        j = self.i
        while j < len(self.s) and self.s[j].isalpha():
            j += 1
        ctor = self.s[self.i:j]
        if ctor not in _CONSTRUCTORS:
            raise TermSyntaxError(f"unknown constructor {ctor!r}")
        self.i = j
        self.expect("(")
        args: list = []
        self.ws()
        if self.s[self.i:self.i + 1] == ")":
            self.i += 1
        else:
            while True:
                self.ws()
                if ctor == "Pad" and len(args) == 1:
                    k = self.i
                    while k < len(self.s) and self.s[k].isdigit():
                        k += 1
                    args.append(int(self.s[self.i:k]))
                    self.i = k
                else:
                    args.append(self.term())
                self.ws()
                if self.s[self.i:self.i + 1] == ",":
                    self.i += 1
                    continue
                self.expect(")")
                break
        try:
            return _CONSTRUCTORS[ctor](*args)
        except (TypeError, ValueError) as exc:
            raise TermSyntaxError(str(exc)) from exc


def parse(text: str) -> Term:
    p = _Parser(text)
    t = p.term()
    p.ws()
    if p.i != len(p.s):
        raise TermSyntaxError(f"trailing input at {p.i} in {text!r}")
    return t
