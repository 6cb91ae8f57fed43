"""Phase-free Pauli strings, weighted Pauli sums and their dense forms."""
from dataclasses import dataclass
from functools import reduce
from itertools import product

import numpy as np

from .errors import DimensionCapExceeded, LengthMismatch, NotHermitian

#: Largest qubit count for which dense ``2^n x 2^n`` matrices are built.
DENSE_QUBIT_CAP = 6

PAULI_LETTERS = "IXYZ"

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
for _m in PAULI_MATRICES.values():
    _m.setflags(write=False)


def check_dense_cap(n, cap=None):
    cap = DENSE_QUBIT_CAP if cap is None else cap
    if n > cap:
        raise DimensionCapExceeded(f"{n} qubits exceeds the dense cap of {cap}")


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli string without phase, e.g. ``PauliString("XIZ")``."""

    letters: str

    def __post_init__(self):
        if not isinstance(self.letters, str) or not self.letters:
            raise ValueError("a Pauli string needs at least one letter")
        bad = set(self.letters) - set(PAULI_LETTERS)
        if bad:
            raise ValueError(f"invalid Pauli letters {sorted(bad)} in {self.letters!r}")

    @property
    def n(self):
        return len(self.letters)

    @property
    def support(self):
        return frozenset(i for i, c in enumerate(self.letters) if c != "I")

    @property
    def weight(self):
        return len(self.support)

    def is_identity(self):
        return self.weight == 0

    def to_dense(self, cap=None):
        return pauli_to_dense(self, cap=cap)

    def __str__(self):
        return self.letters

    @classmethod
    def identity(cls, n):
        return cls("I" * n)


class WeightedPauliSum:
    """Real linear combination of Pauli strings on a fixed number of qubits.

    Duplicate strings are merged by summing their coefficients and exact zero
    coefficients are dropped. Instances are immutable.
    """

    __slots__ = ("_terms", "_n")

    def __init__(self, terms, n=None):
        merged = {}
        for coeff, p in terms:
            p = p if isinstance(p, PauliString) else PauliString(p)
            coeff = float(coeff)
            if not np.isfinite(coeff):
                raise ValueError("coefficients must be finite reals")
            if n is None:
                n = p.n
            elif p.n != n:
                raise LengthMismatch(f"term {p} does not act on {n} qubits")
            merged[p] = merged.get(p, 0.0) + coeff
        if n is None:
            raise ValueError("cannot infer the qubit count of an empty sum")
        self._n = n
        self._terms = tuple((c, p) for p, c in merged.items() if c != 0.0)

    @property
    def n(self):
        return self._n

    @property
    def terms(self):
        return self._terms

    def __len__(self):
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __eq__(self, other):
        if not isinstance(other, WeightedPauliSum):
            return NotImplemented
        return self._n == other._n and dict((p, c) for c, p in self._terms) == dict(
            (p, c) for c, p in other._terms
        )

    def __hash__(self):
        return hash((self._n, frozenset((p, c) for c, p in self._terms)))

    def __repr__(self):
        body = " + ".join(f"{c:g}*{p}" for c, p in self._terms) or "0"
        return f"WeightedPauliSum({body})"

    @property
    def identity_coefficient(self):
        for c, p in self._terms:
            if p.is_identity():
                return c
        return 0.0

    def traceless_part(self):
        return WeightedPauliSum([(c, p) for c, p in self._terms if not p.is_identity()], n=self._n)

    def to_dense(self, cap=None):
        check_dense_cap(self._n, cap)
        d = 2**self._n
        out = np.zeros((d, d), dtype=complex)
        for c, p in self._terms:
            out += c * pauli_to_dense(p, cap=cap)
        return out

    def to_json(self):
        return [{"coeff": c, "string": p.letters} for c, p in self._terms]

    @classmethod
    def from_json(cls, data, n=None):
        terms = [(t["coeff"], t["string"]) if isinstance(t, dict) else (t[0], t[1]) for t in data]
        return cls(terms, n=n)


def pauli_to_dense(p, n=None, cap=None):
    """Dense ``2^n x 2^n`` matrix of the tensor product of the letters of ``p``."""
    p = p if isinstance(p, PauliString) else PauliString(p)
    if n is not None and n != p.n:
        raise LengthMismatch(f"Pauli string {p} has length {p.n}, expected {n}")
    check_dense_cap(p.n, cap)
    return reduce(np.kron, (PAULI_MATRICES[c] for c in p.letters))


def support(p):
    return p.support


def compatible(p, q):
    """True iff ``p`` and ``q`` carry the same letter on every shared support qubit."""
    if p.n != q.n:
        raise LengthMismatch(f"{p} and {q} have different lengths")
    return all(p.letters[i] == q.letters[i] for i in p.support & q.support)


def traceless_decompose(O):
    """Split ``O`` into ``(O0, mu)`` with ``O = O0 + mu * 1`` and ``tr(O0) = 0``."""
    O = np.asarray(O, dtype=complex)
    if O.ndim != 2 or O.shape[0] != O.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {O.shape}")
    d = O.shape[0]
    mu = float(np.trace(O).real) / d
    return O - mu * np.eye(d), mu


def all_pauli_strings(n):
    return [PauliString("".join(t)) for t in product(PAULI_LETTERS, repeat=n)]


def pauli_decompose(O, tol=1e-14):
    """Expand a Hermitian matrix in the Pauli basis, ``O = sum_P (tr(P O)/d) P``."""
    O = np.asarray(O, dtype=complex)
    d = O.shape[0]
    n = int(round(np.log2(d)))
    if 2**n != d:
        raise ValueError(f"dimension {d} is not a power of two")
    check_dense_cap(n)
    terms = []
    for p in all_pauli_strings(n):
        c = np.einsum("ij,ji->", pauli_to_dense(p), O).real / d
        if abs(c) > tol:
            terms.append((c, p))
    return WeightedPauliSum(terms, n=n)


def parse_observable(data):
    """Build an observable from its JSON form.

    Accepts an ASCII Pauli string (``"XIZ"``), a list of ``{coeff, string}``
    (or ``[coeff, string]``) terms, or ``{"matrix": [[[re, im], ...], ...]}``.
    """
    from .dense import decode_matrix

    if isinstance(data, PauliString | WeightedPauliSum):
        return data
    if isinstance(data, str):
        return PauliString(data)
    if isinstance(data, list):
        return WeightedPauliSum.from_json(data)
    if isinstance(data, dict):
        if "matrix" in data:
            return decode_matrix(data["matrix"])
        if "pauli" in data:
            return PauliString(data["pauli"])
        if "terms" in data:
            return WeightedPauliSum.from_json(data["terms"])
    raise ValueError(f"cannot parse observable from {data!r}")


def observable_to_json(O):
    from .dense import encode_matrix

    if isinstance(O, PauliString):
        return O.letters
    if isinstance(O, WeightedPauliSum):
        return O.to_json()
    return {"matrix": encode_matrix(O)}


def observable_to_dense(O):
    if isinstance(O, PauliString | WeightedPauliSum):
        return O.to_dense()
    return np.asarray(O, dtype=complex)


def observable_qubits(O):
    if isinstance(O, PauliString | WeightedPauliSum):
        return O.n
    d = np.asarray(O).shape[0]
    return int(round(np.log2(d)))
