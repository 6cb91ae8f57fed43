"""Dense Hermitian operators and density matrices on small Hilbert spaces.

Operators are plain ``numpy`` complex arrays. The ``as_*`` helpers validate
their input and hand back a read-only copy so values can be shared between
trials without defensive copying.
"""
import numpy as np

from .errors import InvalidState, NotHermitian

HERMITIAN_TOL = 1e-12
STATE_TOL = 1e-10

_SINGLE_QUBIT_KETS = {
    "0": np.array([1, 0], dtype=complex),
    "1": np.array([0, 1], dtype=complex),
    "+": np.array([1, 1], dtype=complex) / np.sqrt(2),
    "-": np.array([1, -1], dtype=complex) / np.sqrt(2),
    "r": np.array([1, 1j], dtype=complex) / np.sqrt(2),
    "l": np.array([1, -1j], dtype=complex) / np.sqrt(2),
}


def _frozen(a):
    a = np.array(a, dtype=complex)
    a.setflags(write=False)
    return a


def is_hermitian(a, tol=HERMITIAN_TOL):
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.abs(a - a.conj().T).max() <= tol


def as_hermitian(a, tol=HERMITIAN_TOL):
    """Validate ``a`` as a square Hermitian matrix and return a frozen copy."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise NotHermitian(f"expected a square matrix, got shape {a.shape}")
    if np.abs(a - a.conj().T).max() > tol:
        raise NotHermitian("matrix is not Hermitian within tolerance")
    return _frozen(a)


def check_density_matrix(rho, tol=STATE_TOL):
    """Raise :class:`InvalidState` unless ``rho`` is a valid density matrix."""
    rho = np.asarray(rho)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise InvalidState(f"expected a square matrix, got shape {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > tol:
        raise InvalidState("state is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1) > tol:
        raise InvalidState(f"state has trace {tr}")
    lam = np.linalg.eigvalsh(rho).min()
    if lam < -tol:
        raise InvalidState(f"state has negative eigenvalue {lam}")


def as_density_matrix(rho, tol=STATE_TOL):
    check_density_matrix(rho, tol)
    return _frozen(rho)


def ket_to_dm(psi):
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return _frozen(np.outer(psi, psi.conj()))


def product_state(labels):
    """Pure product state from per-qubit labels in ``{0, 1, +, -, r, l}``.

    ``r`` and ``l`` are the +1 and -1 eigenstates of Y.
    """
    psi = np.ones(1, dtype=complex)
    for c in labels:
        if c not in _SINGLE_QUBIT_KETS:
            raise InvalidState(f"unknown single-qubit label {c!r}")
        psi = np.kron(psi, _SINGLE_QUBIT_KETS[c])
    return ket_to_dm(psi)


def maximally_mixed(d):
    return _frozen(np.eye(d) / d)


def ghz_vector(n):
    psi = np.zeros(2**n, dtype=complex)
    psi[0] = psi[-1] = 1 / np.sqrt(2)
    return psi


def random_density_matrix(d, rng, rank=None):
    """Ginibre-distributed random mixed state of the given rank (full by default)."""
    rank = d if rank is None else rank
    g = rng.normal(size=(d, rank)) + 1j * rng.normal(size=(d, rank))
    rho = g @ g.conj().T
    rho = (rho + rho.conj().T) / 2
    return rho / np.trace(rho).real


def random_hermitian(d, rng):
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (g + g.conj().T) / 2


def random_traceless_hermitian(d, rng):
    h = random_hermitian(d, rng)
    return h - np.trace(h).real / d * np.eye(d)


def expectation(O, rho):
    """``tr(O rho)`` as a real number."""
    return float(np.einsum("ij,ji->", O, rho).real)


def partial_trace_keep(psi, n, keep):
    """Reduced density matrix of qubit ``keep`` for an ``n``-qubit pure state."""
    t = np.moveaxis(np.asarray(psi).reshape([2] * n), keep, 0).reshape(2, -1)
    return t @ t.conj().T


def encode_matrix(a):
    """JSON-friendly nested lists of ``[re, im]`` pairs."""
    a = np.asarray(a, dtype=complex)
    return [[[float(z.real), float(z.imag)] for z in row] for row in a]


def decode_matrix(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[-1] != 2:
        raise ValueError("matrix must be a 2-d array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]
