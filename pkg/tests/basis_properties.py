"""Random inputs and residuals for the structural properties of the Lanczos basis.

Residuals are measured by the diagnostics module on the dense basis converted
to tensor trains; only commutators of large full-rank inputs are formed densely.
"""

import numpy as np

from mpotrace import tt_core as tt
from mpotrace.diagnostics import check_commutation, check_symmetry, check_traceless
from mpotrace.oracle import dense_global_lanczos
from mpotrace.spin_hamiltonians import PAULI

from conftest import exchange, random_hermitian

KINDS = ("symmetric", "persymmetric", "centrosymmetric", "hermitian", "perhermitian", "centrohermitian")
PROPERTIES = ("traceless", "commutation") + KINDS + ("parity",)
MAX_BASIS = 8
# random dense inputs are full rank as tensor trains; their exact products
# outgrow memory beyond L = 5, so larger commutators are formed densely
TT_COMMUTATION_MAX_DIM = 32


def _traceless(H):
    return H - np.trace(H) / H.shape[0] * np.eye(H.shape[0])


def random_input(prop: str, rng, L: int) -> np.ndarray:
    """A random Hermitian matrix on ``L`` qubits that has the structure ``prop`` needs."""
    n = 2**L
    H = random_hermitian(rng, n)
    J = exchange(L)
    if prop == "traceless":
        return _traceless(H)
    if prop == "symmetric":
        return random_hermitian(rng, n, complex_=False)
    if prop == "persymmetric":
        return (H + J @ H.T @ J) / 2
    if prop in ("centrosymmetric", "perhermitian"):
        # for Hermitian input both reduce to commuting with the exchange matrix
        return (H + J @ H @ J) / 2
    if prop == "centrohermitian":
        return (H + J @ H.conj() @ J) / 2
    if prop == "parity":
        # anticommutes with Z on the first site
        R = np.kron(PAULI["Z"], np.eye(n // 2))
        return (H - R @ H @ R) / 2
    return H


def lanczos_basis(A: np.ndarray, K: int = MAX_BASIS) -> list[np.ndarray]:
    """``U_1 .. U_m`` from a dense run, ``m <= K`` (stops at breakdown)."""
    jac, basis = dense_global_lanczos(A, K, retain_all=True)
    return basis[:len(jac.alphas)]


def parity_residual(A: np.ndarray, U: np.ndarray, degree: int) -> float:
    """Relative weight of ``U`` on the powers of ``A`` with the wrong parity.

    ``U`` should be an even (odd) polynomial in ``A`` when ``degree`` is
    even (odd); the powers of the other parity, up to ``degree + 1``, are
    orthonormalized and ``U`` is projected onto them.
    """
    B = A / np.linalg.norm(A, 2)
    powers, P = [], np.eye(A.shape[0], dtype=A.dtype)
    for j in range(degree + 2):
        if j % 2 != degree % 2:
            powers.append(P.ravel())
        P = P @ B
    if not powers:
        return 0.0
    Q, s, _ = np.linalg.svd(np.array(powers).T, full_matrices=False)
    Q = Q[:, s > 1e-10 * s[0]]
    u = U.ravel()
    return float(np.linalg.norm(Q.conj().T @ u) / np.linalg.norm(u))


def dense_commutation(A: np.ndarray, U: np.ndarray) -> float:
    """``||A U - U A||_F / (||A||_F ||U||_F)``, as in the diagnostics module."""
    return float(np.linalg.norm(A @ U - U @ A) / (np.linalg.norm(A) * np.linalg.norm(U)))


def residuals(prop: str, A: np.ndarray) -> list[float]:
    """The residual of ``prop`` for each basis element it applies to."""
    basis = lanczos_basis(A)
    if prop == "traceless":
        return [check_traceless(tt.from_dense(U)) for U in basis[1:]]
    if prop == "commutation":
        if A.shape[0] > TT_COMMUTATION_MAX_DIM:
            return [dense_commutation(A, U) for U in basis]
        At = tt.from_dense(A)
        return [check_commutation(At, tt.from_dense(U)) for U in basis]
    if prop in KINDS:
        return [check_symmetry(tt.from_dense(U), prop) for U in basis]
    if prop == "parity":
        return [parity_residual(A, U, i) for i, U in enumerate(basis)]
    raise ValueError(prop)
