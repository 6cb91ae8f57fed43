"""Clifford group enumeration and uniform sampling as dense unitaries.

Group elements are identified modulo global phase. For one qubit the 24
elements are enumerated once and indexed. For ``n >= 2`` a uniformly random
Clifford is produced in two steps:

1. a uniformly random symplectic matrix over GF(2), built one hyperbolic pair
   at a time. The image of ``X_i`` is a uniform nonzero vector in the
   symplectic complement of the pairs chosen so far and the image of ``Z_i`` is
   a uniform vector of that complement pairing to 1 with it. Because the
   symplectic group acts transitively on ordered symplectic bases, every
   group element is reached with equal probability.
2. ``2n`` uniform sign bits, which select the Pauli part.

The resulting stabilizer tableau is converted to a dense unitary.
"""
from collections import deque
from functools import lru_cache, reduce

import numpy as np

from .pauli import PAULI_MATRICES, check_dense_cap

_H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
_S = np.array([[1, 0], [0, 1j]], dtype=complex)


def phase_key(u, decimals=9):
    """Hashable key identifying ``u`` up to a global phase."""
    u = np.asarray(u, dtype=complex)
    flat = u.ravel()
    idx = int(np.argmax(np.abs(flat) > 1e-6))
    v = flat * (abs(flat[idx]) / flat[idx])
    v = np.round(v, decimals) + (0.0 + 0.0j)
    return v.tobytes()


def _phase_normalize(u):
    flat = u.ravel()
    idx = int(np.argmax(np.abs(flat) > 1e-6))
    return u * (abs(flat[idx]) / flat[idx])


def _bfs_group(generators):
    d = generators[0].shape[0]
    start = np.eye(d, dtype=complex)
    seen = {phase_key(start): start}
    order = [start]
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for g in generators:
            v = _phase_normalize(g @ u)
            key = phase_key(v)
            if key not in seen:
                seen[key] = v
                order.append(v)
                queue.append(v)
    return order


@lru_cache(maxsize=None)
def _single_qubit_table():
    group = _bfs_group([_H, _S])
    assert len(group) == 24
    arr = np.array(group)
    arr.setflags(write=False)
    return arr


def single_qubit_cliffords():
    """The 24 single-qubit Cliffords (phase normalized) in a fixed order."""
    return _single_qubit_table()


def _embed(gate, qubit, n):
    mats = [np.eye(2, dtype=complex)] * n
    mats[qubit] = gate
    return reduce(np.kron, mats)


def _cnot(control, target, n):
    d = 2**n
    u = np.zeros((d, d), dtype=complex)
    for x in range(d):
        bits = [(x >> (n - 1 - q)) & 1 for q in range(n)]
        if bits[control]:
            bits[target] ^= 1
        y = sum(b << (n - 1 - q) for q, b in enumerate(bits))
        u[y, x] = 1
    return u


@lru_cache(maxsize=None)
def enumerate_clifford_group(n):
    """All n-qubit Cliffords modulo phase, by breadth-first search (n <= 2)."""
    if n > 2:
        raise ValueError("enumeration is only supported for n <= 2")
    if n == 1:
        return tuple(single_qubit_cliffords())
    gens = [_embed(_H, q, n) for q in range(n)] + [_embed(_S, q, n) for q in range(n)]
    gens += [_cnot(0, 1, n), _cnot(1, 0, n)]
    return tuple(_bfs_group(gens))


def symplectic_form(a, b):
    n = len(a) // 2
    return int((a[:n] @ b[n:] + a[n:] @ b[:n]) % 2)


def random_symplectic(n, rng):
    """Uniformly random ``2n x 2n`` symplectic matrix over GF(2).

    Row ``i`` is the image of ``X_i`` and row ``n + i`` the image of ``Z_i``,
    each written as ``(x bits | z bits)``.
    """
    pairs = []

    def project(u):
        for v, w in pairs:
            u = (u + symplectic_form(u, w) * v + symplectic_form(u, v) * w) % 2
        return u

    for _ in range(n):
        while True:
            v = project(rng.integers(0, 2, size=2 * n))
            if v.any():
                break
        while True:
            w = project(rng.integers(0, 2, size=2 * n))
            if symplectic_form(v, w) == 1:
                break
        pairs.append((v, w))
    m = np.zeros((2 * n, 2 * n), dtype=np.int64)
    for i, (v, w) in enumerate(pairs):
        m[i] = v
        m[n + i] = w
    return m


def is_symplectic(m):
    m = np.asarray(m) % 2
    n = m.shape[0] // 2
    omega = np.block([[np.zeros((n, n), int), np.eye(n, dtype=int)], [np.eye(n, dtype=int), np.zeros((n, n), int)]])
    return np.array_equal((m @ omega @ m.T) % 2, omega)


def pauli_from_bits(row):
    """Hermitian Pauli ``i^{x.z} X^x Z^z`` for a ``(x | z)`` bit row."""
    n = len(row) // 2
    letters = {(0, 0): "I", (1, 0): "X", (0, 1): "Z", (1, 1): "Y"}
    return reduce(
        np.kron, (PAULI_MATRICES[letters[(int(row[q]), int(row[n + q]))]] for q in range(n))
    )


def tableau_to_unitary(m, signs):
    """Dense unitary with ``U X_i U^dag = (-1)^{s_i} P(m_i)`` and likewise for ``Z_i``.

    The result is fixed up to a global phase.
    """
    m = np.asarray(m)
    n = m.shape[0] // 2
    d = 2**n
    images = [(-1) ** int(signs[r]) * pauli_from_bits(m[r]) for r in range(2 * n)]
    proj = np.eye(d, dtype=complex)
    for q in images[n:]:
        proj = proj @ (np.eye(d) + q) / 2
    col = int(np.argmax(np.linalg.norm(proj, axis=0)))
    psi0 = proj[:, col] / np.linalg.norm(proj[:, col])
    u = np.empty((d, d), dtype=complex)
    for x in range(d):
        psi = psi0
        for q in range(n):
            if (x >> (n - 1 - q)) & 1:
                psi = images[q] @ psi
        u[:, x] = psi
    return u


def random_clifford_unitary(n, rng):
    """Uniformly random n-qubit Clifford, as a dense ``2^n x 2^n`` unitary."""
    check_dense_cap(n)
    if n == 1:
        return single_qubit_cliffords()[int(rng.integers(24))].copy()
    m = random_symplectic(n, rng)
    signs = rng.integers(0, 2, size=2 * n)
    return tableau_to_unitary(m, signs)


def clifford_group_order(n):
    """``|C_n / U(1)| = 2^{n^2 + 2n} prod_j (4^j - 1)``."""
    order = 2 ** (n * n + 2 * n)
    for j in range(1, n + 1):
        order *= 4**j - 1
    return order
