"""POVMs, frame superoperators, canonical dual frames and measurement protocols.

Operators on a ``d``-dimensional space are vectorised row-major, so the frame
superoperator ``S(rho) = sum_k tr(rho E_k) E_k`` becomes the ``d^2 x d^2``
Hermitian matrix ``sum_k vec(E_k) vec(E_k)^dag``.

A *protocol* is a family of measurement settings ("draws") chosen by the
trusted apparatus. Each draw carries its own outcome effects, which sum to the
identity; the protocol-level POVM folds the draw probabilities into the
effects.
"""
from dataclasses import dataclass, field
from functools import reduce
from itertools import product

import numpy as np

from .clifford import random_clifford_unitary, single_qubit_cliffords
from .dense import decode_matrix, encode_matrix
from .errors import (
    DimensionMismatch,
    IdentityPauli,
    InvalidPovm,
    NotEnumerable,
    NotInformationallyComplete,
    OutcomeOutOfRange,
)
from .pauli import PauliString, WeightedPauliSum, check_dense_cap, observable_to_dense

IC_RELATIVE_FLOOR = 1e-10
POVM_TOL = 1e-10

PAULI_BASES = "XYZ"


class Povm:
    """An enumerated POVM ``{E_k}`` with cached frame and dual frame."""

    def __init__(self, effects, name=None, validate=True, tol=POVM_TOL):
        effects = np.array(effects, dtype=complex)
        if effects.ndim != 3 or effects.shape[1] != effects.shape[2]:
            raise InvalidPovm(f"effects must have shape (M, d, d), got {effects.shape}")
        if validate:
            if np.abs(effects - effects.conj().transpose(0, 2, 1)).max() > tol:
                raise InvalidPovm("effects must be Hermitian")
            lam = np.linalg.eigvalsh(effects).min()
            if lam < -tol:
                raise InvalidPovm(f"effect with negative eigenvalue {lam}")
            total = effects.sum(axis=0)
            if np.abs(total - np.eye(effects.shape[1])).max() > tol:
                raise InvalidPovm("effects do not sum to the identity")
        effects.setflags(write=False)
        self.effects = effects
        self.name = name
        self._frame = None
        self._dual = None

    @property
    def d(self):
        return self.effects.shape[1]

    def __len__(self):
        return self.effects.shape[0]

    def __repr__(self):
        return f"Povm(name={self.name!r}, M={len(self)}, d={self.d})"

    @property
    def frame(self):
        if self._frame is None:
            self._frame = frame_superoperator(self)
        return self._frame

    @property
    def dual(self):
        if self._dual is None:
            self._dual = dual_frame(self)
            self._dual.setflags(write=False)
        return self._dual

    def probabilities(self, rho):
        return np.einsum("kij,ji->k", self.effects, rho).real

    def to_json(self):
        return {"name": self.name, "effects": [encode_matrix(e) for e in self.effects]}

    @classmethod
    def from_json(cls, data):
        return cls([decode_matrix(e) for e in data["effects"]], name=data.get("name"))


def frame_superoperator(povm):
    """``d^2 x d^2`` matrix of ``rho -> sum_k tr(rho E_k) E_k`` on row-major ``vec``."""
    effects = povm.effects if isinstance(povm, Povm) else np.asarray(povm)
    m, d, _ = effects.shape
    a = effects.reshape(m, d * d)
    return a.T @ a.conj()


def apply_superoperator(s, rho):
    d = rho.shape[0]
    return (s @ np.asarray(rho, dtype=complex).reshape(d * d)).reshape(d, d)


def frame_rank(povm, rel_tol=IC_RELATIVE_FLOOR):
    lam = np.linalg.eigvalsh(frame_superoperator(povm))
    return int(np.sum(lam > rel_tol * lam.max()))


def is_informationally_complete(povm, rel_tol=IC_RELATIVE_FLOOR):
    return frame_rank(povm, rel_tol) == povm.d**2


def dual_frame(povm):
    """Canonical dual frame ``rho_hat_k = S^{-1}(E_k)``, shape ``(M, d, d)``."""
    s = frame_superoperator(povm)
    lam = np.linalg.eigvalsh(s)
    if lam.min() < IC_RELATIVE_FLOOR * lam.max():
        raise NotInformationallyComplete(
            f"frame superoperator is singular (min/max eigenvalue {lam.min() / lam.max():.3e})"
        )
    m, d, _ = povm.effects.shape
    x = np.linalg.solve(s, povm.effects.reshape(m, d * d).T).T.reshape(m, d, d)
    return (x + x.conj().transpose(0, 2, 1)) / 2


def shadow_norm_exact(povm, O):
    """Worst-case second moment ``sup_sigma sum_k tr(sigma E_k) tr(O rho_hat_k)^2``.

    The objective is linear in ``sigma``, so the supremum over states is the
    largest eigenvalue of ``sum_k tr(O rho_hat_k)^2 E_k``.
    """
    if not isinstance(povm, Povm):
        raise NotEnumerable("exact shadow norms need an enumerated POVM")
    O = observable_to_dense(O)
    if O.shape != (povm.d, povm.d):
        raise DimensionMismatch(f"observable shape {O.shape} does not match POVM dimension {povm.d}")
    x = np.einsum("ij,kji->k", O, povm.dual).real
    m_o = np.einsum("k,kij->ij", x**2, povm.effects)
    val = float(np.linalg.eigvalsh(m_o).max())
    # snap round-off so sample-count ceilings stay stable
    r = round(val)
    return float(r) if abs(val - r) < 1e-9 * max(1.0, abs(val)) else val


def clifford_norm_bound(O):
    """``3 tr(O0^2)`` for the traceless part ``O0`` of ``O``."""
    O = observable_to_dense(O)
    d = O.shape[0]
    O0 = O - np.trace(O) / d * np.eye(d)
    return 3.0 * float(np.einsum("ij,ji->", O0, O0).real)


def pauli_norm_bound(P):
    """``3^w`` for a weight-``w`` Pauli string; ``V_H`` for a weighted sum."""
    if isinstance(P, WeightedPauliSum):
        from .estimators import v_H

        return v_H(P)
    P = P if isinstance(P, PauliString) else PauliString(P)
    if P.is_identity():
        raise IdentityPauli("the identity has no traceless part to estimate")
    return float(3**P.weight)


# --- single-qubit Pauli measurement data -------------------------------------------

_EIGENKETS = np.array(
    [
        [[1, 1], [1, -1]],  # X: |+>, |->
        [[1, 1j], [1, -1j]],  # Y: |+i>, |-i>
        [[1, 0], [0, 1]],  # Z: |0>, |1>
    ],
    dtype=complex,
)
_EIGENKETS[:2] /= np.sqrt(2)
# rows are <e_z|, so diag(V rho V^dag) lists the Born probabilities
_ROTATIONS = _EIGENKETS.conj()
_PROJECTORS = np.einsum("bzi,bzj->bzij", _EIGENKETS, _EIGENKETS.conj())
_LOCAL_SHADOWS = 3 * _PROJECTORS - np.eye(2)
for _a in (_EIGENKETS, _ROTATIONS, _PROJECTORS, _LOCAL_SHADOWS):
    _a.setflags(write=False)


def _kron_all(mats):
    return reduce(np.kron, mats)


def _bits(k, n):
    return [(k >> (n - 1 - q)) & 1 for q in range(n)]


class ProductOperator:
    """Tensor product of single-qubit factors, materialised lazily."""

    def __init__(self, factors):
        self.factors = tuple(np.asarray(f) for f in factors)

    def to_dense(self):
        return _kron_all(self.factors)

    def __array__(self, dtype=None, copy=None):
        out = self.to_dense()
        return out if dtype is None else out.astype(dtype)


# --- protocol draws -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProtocolDraw:
    """A measurement setting chosen by the apparatus for one round.

    ``kind`` is one of ``pauli`` (``bases``: per-qubit 0/1/2 for X/Y/Z),
    ``clifford`` (``index`` into the 24 single-qubit Cliffords, or an explicit
    ``unitary`` for two or more qubits), ``fixed_povm`` and ``process``
    (``index`` is the input-state label). ``family`` points at the protocol
    object for the last two kinds.
    """

    kind: str
    bases: tuple = None
    index: int = None
    unitary: np.ndarray = None
    family: object = field(default=None, repr=False)

    def __eq__(self, other):
        if not isinstance(other, ProtocolDraw):
            return NotImplemented
        if (self.kind, self.bases, self.index) != (other.kind, other.bases, other.index):
            return False
        if self.unitary is None or other.unitary is None:
            return self.unitary is None and other.unitary is None
        return np.array_equal(self.unitary, other.unitary)

    __hash__ = None

    @property
    def key(self):
        """Cache key; draws with explicit unitaries are keyed by identity."""
        if self.unitary is not None:
            return (self.kind, id(self))
        return (self.kind, self.bases, self.index)

    @property
    def n_outcomes(self):
        if self.kind == "pauli":
            return 2 ** len(self.bases)
        if self.kind == "clifford":
            return 2 if self.unitary is None else self.unitary.shape[0]
        return self.family.n_outcomes(self)

    def basis_letters(self):
        return "".join(PAULI_BASES[b] for b in self.bases)


def pauli_draw(letters):
    """Pauli-basis draw from letters such as ``"ZX"``."""
    return ProtocolDraw("pauli", bases=tuple(PAULI_BASES.index(c) for c in letters))


def draw_pauli_bases(n, rng):
    return ProtocolDraw("pauli", bases=tuple(int(b) for b in rng.integers(0, 3, size=n)))


def draw_clifford(n, rng):
    check_dense_cap(n)
    if n == 1:
        return ProtocolDraw("clifford", index=int(rng.integers(24)))
    u = random_clifford_unitary(n, rng)
    u.setflags(write=False)
    return ProtocolDraw("clifford", unitary=u)


def clifford_unitary(draw):
    if draw.unitary is not None:
        return draw.unitary
    return single_qubit_cliffords()[draw.index]


def draw_effects(draw):
    """Per-draw outcome effects, shape ``(outcomes, D, D)``; they sum to the identity."""
    if draw.kind == "pauli":
        n = len(draw.bases)
        return np.array(
            [_kron_all([_PROJECTORS[b, z] for b, z in zip(draw.bases, _bits(k, n))]) for k in range(2**n)]
        )
    if draw.kind == "clifford":
        u = clifford_unitary(draw)
        return np.einsum("zi,zj->zij", u.conj(), u)
    return draw.family.draw_effects(draw)


def draw_shadows(draw):
    """Dense single-shot shadows aligned with :func:`draw_effects`."""
    if draw.kind == "pauli":
        n = len(draw.bases)
        return np.array(
            [_kron_all([_LOCAL_SHADOWS[b, z] for b, z in zip(draw.bases, _bits(k, n))]) for k in range(2**n)]
        )
    if draw.kind == "clifford":
        u = clifford_unitary(draw)
        d = u.shape[0]
        return (d + 1) * np.einsum("zi,zj->zij", u.conj(), u) - np.eye(d)
    return draw.family.draw_shadows(draw)


def effect_and_shadow(draw, outcome):
    """Realized effect and matching shadow for one outcome.

    Pauli draws return the shadow as a :class:`ProductOperator`. ``outcome``
    may be an integer or, for Pauli draws, a tuple of per-qubit bits.
    """
    if draw.kind == "pauli" and not isinstance(outcome, int | np.integer):
        bits = tuple(int(b) for b in outcome)
        if len(bits) != len(draw.bases) or any(b not in (0, 1) for b in bits):
            raise OutcomeOutOfRange(f"outcome {outcome} does not match draw {draw.basis_letters()}")
        outcome = sum(b << (len(bits) - 1 - q) for q, b in enumerate(bits))
    outcome = int(outcome)
    if not 0 <= outcome < draw.n_outcomes:
        raise OutcomeOutOfRange(f"outcome {outcome} outside 0..{draw.n_outcomes - 1}")
    if draw.kind == "pauli":
        n = len(draw.bases)
        bits = _bits(outcome, n)
        effect = _kron_all([_PROJECTORS[b, z] for b, z in zip(draw.bases, bits)])
        shadow = ProductOperator([_LOCAL_SHADOWS[b, z] for b, z in zip(draw.bases, bits)])
        return effect, shadow
    return draw_effects(draw)[outcome], draw_shadows(draw)[outcome]


def born_probabilities(draw, prepared):
    """Outcome distribution of ``draw`` on a state (or a channel, for process draws)."""
    if draw.kind == "pauli":
        v = _kron_all([_ROTATIONS[b] for b in draw.bases])
        return np.einsum("ij,jk,ik->i", v, prepared, v.conj()).real
    if draw.kind == "clifford":
        u = clifford_unitary(draw)
        return np.einsum("ij,jk,ik->i", u, prepared, u.conj()).real
    return draw.family.born(draw, prepared)


def _pauli_value(P, bases, bits):
    value = 1.0
    for q in P.support:
        if PAULI_BASES[bases[q]] != P.letters[q]:
            return 0.0
        value *= -3.0 if bits[q] else 3.0
    return value


def single_shot_value(O, draw, outcome):
    """``tr(O rho_hat)`` for the shadow of ``outcome`` under ``draw``."""
    if draw.kind == "pauli" and isinstance(O, PauliString | WeightedPauliSum):
        n = len(draw.bases)
        if O.n != n:
            raise DimensionMismatch(f"observable on {O.n} qubits, draw on {n}")
        if not 0 <= int(outcome) < 2**n:
            raise OutcomeOutOfRange(f"outcome {outcome} outside 0..{2**n - 1}")
        bits = _bits(int(outcome), n)
        if isinstance(O, PauliString):
            return _pauli_value(O, draw.bases, bits)
        return float(sum(c * _pauli_value(p, draw.bases, bits) for c, p in O.terms))
    return float(shadow_values(O, draw)[int(outcome)])


def shadow_values(O, draw):
    """``tr(O rho_hat_k)`` for every outcome ``k`` of ``draw``."""
    O = observable_to_dense(O)
    shadows = draw_shadows(draw)
    if O.shape != shadows.shape[1:]:
        raise DimensionMismatch(f"observable shape {O.shape} does not match draw dimension {shadows.shape[1]}")
    return np.einsum("ij,kji->k", O, shadows).real


# --- built-in POVMs -------------------------------------------------------------------


def pauli6_povm(n=1):
    """Random-Pauli-basis POVM with effects ``3^-n (x)_j |s_j><s_j|``.

    Effect index is ``basis_index * 2^n + outcome`` with bases in
    lexicographic X < Y < Z order.
    """
    check_dense_cap(n)
    effects = []
    for bases in product(range(3), repeat=n):
        effects.extend(draw_effects(ProtocolDraw("pauli", bases=bases)) / 3**n)
    return Povm(effects, name=f"pauli6_{n}")


def clifford_povm(n=1):
    """Enumerated single-qubit Clifford POVM, 24 unitaries x 2 outcomes."""
    if n != 1:
        raise NotEnumerable("the Clifford POVM is only enumerated for one qubit")
    effects = []
    for u in single_qubit_cliffords():
        effects.extend(np.einsum("zi,zj->zij", u.conj(), u) / 24)
    return Povm(effects, name="clifford_1")


def computational_povm(n=1):
    d = 2**n
    return Povm([np.diag(np.eye(d)[k]).astype(complex) for k in range(d)], name=f"computational_{n}")


# --- protocols --------------------------------------------------------------------------


class PauliProtocol:
    """Independent uniformly random X/Y/Z basis on each of ``n`` qubits."""

    name = "pauli"

    def __init__(self, n):
        check_dense_cap(n)
        self.n = n
        self.dim = 2**n
        self._povm = None

    def sample_draws(self, n_rounds, rng):
        bases = rng.integers(0, 3, size=(n_rounds, self.n))
        return [ProtocolDraw("pauli", bases=tuple(int(b) for b in row)) for row in bases]

    def enumerate_draws(self):
        w = 1.0 / 3**self.n
        return [(w, ProtocolDraw("pauli", bases=b)) for b in product(range(3), repeat=self.n)]

    def povm(self):
        if self._povm is None:
            self._povm = pauli6_povm(self.n)
        return self._povm

    def to_json(self):
        return {"name": self.name, "n": self.n}

    def encode_draw(self, draw):
        return {"kind": "pauli", "bases": draw.basis_letters()}

    def decode_draw(self, data):
        return pauli_draw(data["bases"])


class CliffordProtocol:
    """Global Clifford rotation followed by a computational-basis measurement."""

    name = "clifford"

    def __init__(self, n):
        check_dense_cap(n)
        self.n = n
        self.dim = 2**n
        self._povm = None

    def sample_draws(self, n_rounds, rng):
        if self.n == 1:
            return [ProtocolDraw("clifford", index=int(i)) for i in rng.integers(0, 24, size=n_rounds)]
        return [draw_clifford(self.n, rng) for _ in range(n_rounds)]

    def enumerate_draws(self):
        if self.n != 1:
            raise NotEnumerable("Clifford draws are only enumerated for one qubit")
        return [(1 / 24, ProtocolDraw("clifford", index=i)) for i in range(24)]

    def povm(self):
        if self._povm is None:
            self._povm = clifford_povm(self.n)
        return self._povm

    def to_json(self):
        return {"name": self.name, "n": self.n}

    def encode_draw(self, draw):
        if draw.unitary is None:
            return {"kind": "clifford", "index": draw.index}
        return {"kind": "clifford", "unitary": encode_matrix(draw.unitary)}

    def decode_draw(self, data):
        if "index" in data:
            return ProtocolDraw("clifford", index=int(data["index"]))
        u = decode_matrix(data["unitary"])
        u.setflags(write=False)
        return ProtocolDraw("clifford", unitary=u)


class FixedPovmProtocol:
    """A single enumerated POVM applied every round."""

    name = "fixed_povm"

    def __init__(self, povm):
        self._povm = povm
        self.dim = povm.d
        self._draw = ProtocolDraw("fixed_povm", family=self)

    def sample_draws(self, n_rounds, rng):
        return [self._draw] * n_rounds

    def enumerate_draws(self):
        return [(1.0, self._draw)]

    def povm(self):
        return self._povm

    def n_outcomes(self, draw):
        return len(self._povm)

    def draw_effects(self, draw):
        return self._povm.effects

    def draw_shadows(self, draw):
        return self._povm.dual

    def born(self, draw, rho):
        return self._povm.probabilities(rho)

    def to_json(self):
        return {"name": self.name, "povm": self._povm.to_json()}

    def encode_draw(self, draw):
        return {"kind": "fixed_povm"}

    def decode_draw(self, data):
        return self._draw


def protocol_from_json(data):
    name = data["name"]
    if name == "pauli":
        return PauliProtocol(int(data["n"]))
    if name == "clifford":
        return CliffordProtocol(int(data["n"]))
    if name == "fixed_povm":
        return FixedPovmProtocol(Povm.from_json(data["povm"]))
    if name == "process":
        from .process import ProcessProtocol

        return ProcessProtocol.from_json(data)
    raise ValueError(f"unknown protocol {name!r}")


def conditional_mean(draws, O, rho):
    """``sum_draw w sum_k P(k | draw, rho) tr(O rho_hat_k)`` for enumerated draws."""
    total = 0.0
    for w, draw in draws:
        p = born_probabilities(draw, rho)
        total += w * float(p @ shadow_values(O, draw))
    return total


def conditional_second_moment(draws, O, rho):
    total = 0.0
    for w, draw in draws:
        p = born_probabilities(draw, rho)
        total += w * float(p @ shadow_values(O, draw) ** 2)
    return total

