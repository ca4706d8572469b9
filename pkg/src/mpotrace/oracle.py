"""Dense reference implementations for desk-scale verification."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .krylov import (JacobiMatrix, LanczosMode, SpectralFunction, StoppingCriteria, assemble_jacobi,
                     check_stop, quadrature)
from .spin_hamiltonians import PAULI, Boundary, InteractionSpec

__all__ = [
    "DenseOperator",
    "dense_trace_fn",
    "dense_global_lanczos",
    "lanczos_residual",
    "dense_hamiltonian",
    "dense_tfim",
]

DENSE_CAP = 2**12


@dataclass
class DenseOperator:
    """Square matrix of size ``2^L``."""

    matrix: np.ndarray
    L: int

    def __post_init__(self):
        m = np.asarray(self.matrix)
        if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] != 2**self.L:
            raise ValueError(f"expected a {2**self.L}x{2**self.L} matrix, got {m.shape}")
        if m.shape[0] > DENSE_CAP:
            raise ValueError(f"dense size {m.shape[0]} exceeds cap {DENSE_CAP}")
        self.matrix = m

    @classmethod
    def wrap(cls, A) -> "DenseOperator":
        if isinstance(A, DenseOperator):
            return A
        A = np.asarray(A)
        return cls(A, int(round(np.log2(A.shape[0]))))


def _hermitian(A: np.ndarray, tol: float = 1e-10) -> None:
    nrm = np.linalg.norm(A)
    if nrm > 0 and np.linalg.norm(A - A.conj().T) > tol * nrm:
        raise ValueError("matrix is not Hermitian")


def dense_trace_fn(A, f: SpectralFunction) -> float:
    """``sum_k f(lambda_k)`` over the full spectrum."""
    A = DenseOperator.wrap(A).matrix
    _hermitian(A)
    lam = np.linalg.eigvalsh(A)
    return float(np.sum(f(lam)))


def dense_global_lanczos(A, K: int, retain_all: bool = False,
                         mode: LanczosMode | str = LanczosMode.VANILLA,
                         breakdown_tol: float = 1e-12,
                         f: SpectralFunction | None = None,
                         rel_change_tol: float | None = None):
    """The global Lanczos recurrence in dense arithmetic, started from the identity.

    Returns ``(jacobi, basis)``. ``basis`` holds ``U_1 .. U_i`` when
    ``retain_all`` is set, otherwise the last two; in both cases the
    normalized next residual ``U_{i+1}`` is appended (zero at breakdown)
    so :func:`lanczos_residual` can close the relation. ``jacobi.alphas``
    are the computed coefficients regardless of mode.

    With ``f`` and ``rel_change_tol`` the run also stops, like the tensor-train
    driver, once the quadrature estimate changes by less than the tolerance.
    """
    A = DenseOperator.wrap(A).matrix
    mode = LanczosMode.parse(mode)
    fast = mode is LanczosMode.CHIRAL_FAST
    N = A.shape[0]
    jac = JacobiMatrix()
    v = np.eye(N, dtype=A.dtype)
    beta = np.linalg.norm(v)
    jac.beta1 = float(beta)
    u_prev = None
    basis = []
    stop = StoppingCriteria(K, rel_change_tol) if f is not None and rel_change_tol else None
    estimates = []
    for _ in range(K):
        u = v / beta
        v = A @ u
        if u_prev is not None:
            v = v - beta * u_prev
        alpha = float(np.vdot(u, v).real)
        if not fast:
            v = v - alpha * u
        jac.alphas.append(alpha)
        basis.append(u)
        if not retain_all and len(basis) > 2:
            basis.pop(0)
        beta = float(np.linalg.norm(v))
        jac.betas.append(beta)
        u_prev = u
        if beta <= breakdown_tol * jac.beta1:
            jac.betas[-1] = 0.0
            break
        if stop is not None:
            estimates.append(quadrature(assemble_jacobi(jac), jac.beta1, f))
            if check_stop(estimates, stop):
                break
    nxt = v / beta if jac.betas[-1] > 0 else np.zeros_like(v)
    basis.append(nxt)
    return jac, basis


def lanczos_residual(A, basis, j: JacobiMatrix) -> float:
    """``||A U_i - U_i (T_i (x) I) - beta_{i+1} U_{i+1} E_i^T||_F / ||A||_F``.

    ``basis`` is ``[U_1, ..., U_i, U_{i+1}]``; the block relation is
    evaluated block column by block column.
    """
    A = DenseOperator.wrap(A).matrix
    i = len(j.alphas)
    if len(basis) != i + 1:
        raise ValueError(f"need {i + 1} basis matrices for {i} coefficients, got {len(basis)}")
    N = A.shape[0]
    for U in basis:
        if U.shape != (N, N):
            raise ValueError(f"basis matrix of shape {U.shape} does not match A {A.shape}")
    T = assemble_jacobi(j, i)
    total = 0.0
    for col in range(i):
        block = A @ basis[col]
        for row in range(max(0, col - 1), min(i, col + 2)):
            block = block - T[row, col] * basis[row]
        if col == i - 1:
            block = block - j.betas[i - 1] * basis[i]
        total += float(np.linalg.norm(block) ** 2)
    nrm = np.linalg.norm(A)
    return float(np.sqrt(total) / nrm) if nrm > 0 else float(np.sqrt(total))


def _kron_all(ops):
    out = np.eye(1)
    for o in ops:
        out = np.kron(out, o)
    return out


def dense_hamiltonian(spec: InteractionSpec) -> np.ndarray:
    """Kronecker-sum definition of an interaction spec (independent of the MPO builder)."""
    L = spec.length
    if 2**L > DENSE_CAP:
        raise ValueError(f"dense size {2**L} exceeds cap {DENSE_CAP}")
    I = PAULI["I"]
    cplx = any(t.axis == "y" for t in spec.terms)
    H = np.zeros((2**L, 2**L), dtype=complex if cplx else float)
    for t in spec.terms:
        s = PAULI[t.axis.upper()]
        i = t.length
        for j in range(L - i + 1):
            H = H + t.couplings[j] * _kron_all([I] * j + [s] * i + [I] * (L - i - j))
        if spec.boundary is Boundary.PERIODIC:
            for k in range(1, i):
                h = t.couplings[L - i + k]
                H = H + h * _kron_all([s] * k + [I] * (L - i) + [s] * (i - k))
    return H


def dense_tfim(L: int, J: float = 1.0, g: float = 1.0) -> np.ndarray:
    """``J sum X_s X_{s+1} + g sum Z_s`` with open boundaries."""
    X, Z, I = PAULI["X"], PAULI["Z"], PAULI["I"]
    H = np.zeros((2**L, 2**L))
    for s in range(L - 1):
        H += J * _kron_all([I] * s + [X, X] + [I] * (L - s - 2))
    for s in range(L):
        H += g * _kron_all([I] * s + [Z] + [I] * (L - s - 1))
    return H
