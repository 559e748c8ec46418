"""Dense linear algebra for n-qubit operators and states.

Qubit 1 is the leftmost letter of a Pauli string and the most significant
factor of every Kronecker product; bitstrings follow the same order.
"""
from __future__ import annotations

from functools import lru_cache, reduce
from itertools import product

import numpy as np

HERMITIAN_ATOL = 1e-12

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# Columns are the +1 and -1 eigenvectors, i.e. outcome bits 0 and 1.
_EIGENBASES = {
    "X": np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2),
    "Y": np.array([[1, 1], [1j, -1j]], dtype=complex) / np.sqrt(2),
    "Z": np.eye(2, dtype=complex),
}


def kron_all(mats) -> np.ndarray:
    return reduce(np.kron, mats)


def _check_letters(p: str, allowed: str) -> None:
    if not p or any(ch not in allowed for ch in p):
        raise ValueError(f"invalid Pauli string {p!r}")


def _check_bits(b: str, n: int) -> None:
    if len(b) != n or any(ch not in "01" for ch in b):
        raise ValueError(f"bitstring {b!r} does not match {n} qubits")


def pauli_operator(p: str) -> np.ndarray:
    """Tensor product of single-qubit Pauli matrices, leftmost letter = qubit 1."""
    _check_letters(p, "IXYZ")
    return kron_all([PAULI_MATRICES[ch] for ch in p])


def basis_projector(p: str, b: str) -> np.ndarray:
    """Rank-1 projector onto the joint eigenstate of ``p`` with signs (-1)^b_i."""
    _check_letters(p, "XYZ")
    _check_bits(b, len(p))
    vec = kron_all([_EIGENBASES[ch][:, int(bit)] for ch, bit in zip(p, b)])
    return np.outer(vec, vec.conj())


def basis_rotation(p: str) -> np.ndarray:
    """Unitary V with V|b> equal to the eigenvector of ``p`` labelled by b."""
    _check_letters(p, "XYZ")
    return kron_all([_EIGENBASES[ch] for ch in p])


@lru_cache(maxsize=None)
def pauli_bases(n: int) -> tuple[str, ...]:
    """All full-weight measurement bases in lexicographic order (X < Y < Z)."""
    return tuple("".join(t) for t in product("XYZ", repeat=n))


@lru_cache(maxsize=None)
def bitstrings(n: int) -> tuple[str, ...]:
    return tuple("".join(t) for t in product("01", repeat=n))


def outcome_signs(n: int) -> np.ndarray:
    """Eigenvalue of the full-weight Pauli on each outcome, (-1)^(sum of bits)."""
    parity = np.array([s.count("1") % 2 for s in bitstrings(n)])
    return 1.0 - 2.0 * parity


def is_hermitian(a: np.ndarray, atol: float = HERMITIAN_ATOL) -> bool:
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.allclose(a, a.conj().T, rtol=0, atol=atol)


def eig_hermitian(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigen-decomposition with eigenvalues sorted in descending order.

    Raises ValueError for non-Hermitian input. Callers must not depend on
    eigenvector phases or on ordering within degenerate subspaces.
    """
    a = np.asarray(a)
    if not is_hermitian(a):
        raise ValueError("eig_hermitian requires a Hermitian matrix")
    vals, vecs = np.linalg.eigh(a)
    return vals[::-1], vecs[:, ::-1]


def hermitian_part(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.conj().T)


def trace_distance(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Half the trace norm of rho - sigma."""
    rho, sigma = np.asarray(rho), np.asarray(sigma)
    if rho.shape != sigma.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    diff = hermitian_part(rho - sigma)
    return 0.5 * float(np.abs(np.linalg.eigvalsh(diff)).sum())


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-12:
        raise ValueError(f"state vector has norm {norm}, expected 1")
    return np.outer(psi, psi.conj())


def num_qubits(dim: int) -> int:
    n = int(round(np.log2(dim)))
    if 2**n != dim or n < 1:
        raise ValueError(f"dimension {dim} is not a power of two")
    return n


def random_density(dim: int, rank: int | None = None, rng=None) -> np.ndarray:
    """Random density matrix from the induced (Ginibre) measure."""
    rng = np.random.default_rng(rng)
    rank = dim if rank is None else rank
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_hermitian(dim: int, rng=None, scale: float = 1.0) -> np.ndarray:
    rng = np.random.default_rng(rng)
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return scale * hermitian_part(g)
