"""Dense spin-operator algebra.

Operators are plain ``numpy`` complex arrays.  State vectors are 1-D arrays,
deviation density matrices are 2-D traceless Hermitian arrays.  The basis is
ordered by magnetic quantum number ``m = +j, ..., -j``; for ``j = 3/2`` the
four levels are labelled ``|00>, |01>, |10>, |11>``.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-10


def _as_spin(j) -> Fraction:
    spin = Fraction(j).limit_denominator(4)
    if spin <= 0 or (2 * spin).denominator != 1 or abs(float(spin) - float(j)) > 1e-12:
        raise ValueError(f"spin must be a positive half-integer, got {j!r}")
    return spin


def spin_matrices(j=Fraction(3, 2)):
    """Return ``(Ix, Iy, Iz)`` for spin ``j`` in the ``m = +j ... -j`` basis.

    Built from the raising operator
    ``<m+1|I+|m> = sqrt(j(j+1) - m(m+1))``.  For ``j = 3/2`` the ``Iy``
    off-diagonal entries are ``-i*sqrt(3)/2, -i, -i*sqrt(3)/2`` above the
    diagonal.
    """
    spin = _as_spin(j)
    jf = float(spin)
    dim = int(2 * spin) + 1
    m = jf - np.arange(dim)
    iplus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        # row k-1 has m = m[k] + 1
        iplus[k - 1, k] = np.sqrt(jf * (jf + 1) - m[k] * (m[k] + 1))
    iminus = iplus.conj().T
    ix = (iplus + iminus) / 2
    iy = (iplus - iminus) / 2j
    iz = np.diag(m).astype(complex)
    return ix, iy, iz


def raising(j=Fraction(3, 2)) -> np.ndarray:
    ix, iy, _ = spin_matrices(j)
    return ix + 1j * iy


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - a.conj().T), initial=0.0) < tol


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    return np.max(np.abs(u @ u.conj().T - np.eye(u.shape[0]))) < tol


def expm_generator(h: np.ndarray, t: float) -> np.ndarray:
    """``exp(-i h t)`` for Hermitian ``h`` via eigendecomposition."""
    h = np.asarray(h, dtype=complex)
    # eigenvalues scale with |h|, so judge hermiticity relative to it
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if not is_hermitian(h, HERMITIAN_TOL * scale):
        raise ValueError("generator must be Hermitian")
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def basis_state(dim: int, index: int) -> np.ndarray:
    psi = np.zeros(dim, dtype=complex)
    psi[index] = 1.0
    return psi


def uniform_state(dim: int) -> np.ndarray:
    return np.full(dim, 1 / np.sqrt(dim), dtype=complex)


def pseudopure(psi: np.ndarray) -> np.ndarray:
    """Deviation ``2|psi><psi| - (2/dim) 1``, traceless.

    For ``dim = 4`` the excess of the marked level over the others is 2, the
    same as the largest population difference produced from ``Iz`` by one
    double-quantum 90 degree pulse on levels 1 and 3.
    """
    psi = np.asarray(psi, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    dim = psi.size
    return 2 * np.outer(psi, psi.conj()) - (2 / dim) * np.eye(dim)


def equilibrium(j=Fraction(3, 2)) -> np.ndarray:
    """High-temperature equilibrium deviation, ``Iz``."""
    return spin_matrices(j)[2]


def check_deviation(rho: np.ndarray, tol: float = 1e-10) -> None:
    rho = np.asarray(rho)
    if not is_hermitian(rho, tol):
        raise ValueError("deviation matrix is not Hermitian")
    if abs(np.trace(rho)) > tol:
        raise ValueError("deviation matrix is not traceless")


def conjugate(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return u @ rho @ u.conj().T


def fidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Overlap of two states of the same kind.

    Vectors give ``|<a|b>|^2`` (inputs are normalised).  Deviation matrices
    give the normalised Hilbert-Schmidt overlap
    ``Tr(AB) / sqrt(Tr A^2 Tr B^2)``, which lies in ``[-1, 1]``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 1:
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            raise ValueError("zero-norm state")
        return float(abs(np.vdot(a, b)) ** 2 / (na * nb) ** 2)
    if a.ndim != 2:
        raise ValueError("expected a state vector or a deviation matrix")
    aa = np.real(np.trace(a @ a))
    bb = np.real(np.trace(b @ b))
    if aa <= 0 or bb <= 0:
        raise ValueError("zero-norm deviation")
    return float(np.real(np.trace(a @ b)) / np.sqrt(aa * bb))
