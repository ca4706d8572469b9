"""Structural checks on Krylov basis operators.

In exact arithmetic every basis operator produced from the identity start
inherits tracelessness, commutation with ``A`` and the (per/centro)
symmetric or Hermitian structure of ``A``, and all diagonal coefficients
vanish when the spectrum of ``A`` is symmetric about zero. Deviations
therefore measure truncation damage. All residuals are normalized by
operand norms so thresholds are scale-free.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import tt_core as tt
from .tt_core import CompressionSettings, TensorTrainOperator

__all__ = [
    "SymmetryKind",
    "DiagnosticsRecord",
    "MonitorSettings",
    "AlphaWarning",
    "AlphaMonitor",
    "exchange_mpo",
    "check_traceless",
    "check_commutation",
    "check_symmetry",
    "monitor_alphas",
    "symmetry_kinds_of",
    "audit",
]


class SymmetryKind(str, enum.Enum):
    SYMMETRIC = "symmetric"
    PERSYMMETRIC = "persymmetric"
    CENTROSYMMETRIC = "centrosymmetric"
    HERMITIAN = "hermitian"
    PERHERMITIAN = "perhermitian"
    CENTROHERMITIAN = "centrohermitian"

    @property
    def real_kind(self) -> bool:
        return self in (SymmetryKind.SYMMETRIC, SymmetryKind.PERSYMMETRIC, SymmetryKind.CENTROSYMMETRIC)


@dataclass
class DiagnosticsRecord:
    iteration: int
    trace_abs: float | None = None
    trace_residual: float | None = None
    commutation_residual: float | None = None
    symmetry_residuals: dict[str, float] = field(default_factory=dict)
    alpha_abs: float | None = None
    warnings: list[str] = field(default_factory=list)


@dataclass
class MonitorSettings:
    """Which checks run inside the Lanczos loop, and how often.

    ``expect_zero_alpha=None`` lets the driver decide (chiral modes expect
    vanishing diagonal coefficients).
    """

    trace: bool = True
    alpha: bool = True
    commutation_every: int = 5
    symmetry_every: int = 5
    warn_tol: float = 1e-6
    expect_zero_alpha: bool | None = None


@dataclass(frozen=True)
class AlphaWarning:
    iteration: int
    alpha: float

    def __str__(self):
        return f"alpha_{self.iteration} = {self.alpha:.3e}"


@dataclass
class AlphaMonitor:
    """Iterations whose diagonal coefficient exceeds ``tol * beta1``.

    An empty list is necessary for an accurate estimate but does not
    certify it, hence ``certifies_accuracy`` is always False.
    """

    warnings: list[AlphaWarning]
    tol: float
    certifies_accuracy: bool = False

    def __iter__(self):
        return iter(self.warnings)

    def __len__(self):
        return len(self.warnings)

    def __bool__(self):
        return bool(self.warnings)

    @property
    def iterations(self) -> list[int]:
        return [w.iteration for w in self.warnings]


def exchange_mpo(L: int, d: int = 2) -> TensorTrainOperator:
    """Exchange (anti-diagonal) permutation as a bond-1 product of per-site flips."""
    return tt.product_mpo([np.fliplr(np.eye(d))] * L)


def check_traceless(U: TensorTrainOperator) -> float:
    """``|Tr U| / ||U||_F``."""
    nrm = tt.frobenius_norm(U)
    if nrm == 0:
        return 0.0
    return abs(tt.trace(U)) / nrm


def check_commutation(A: TensorTrainOperator, U: TensorTrainOperator,
                      settings: CompressionSettings | None = None,
                      with_uncertainty: bool = False):
    """``||A U - U A||_F / (||A||_F ||U||_F)``.

    With ``settings`` the two products are compressed first; their
    compression residuals bound how much of the result may be truncation
    error and are returned as the uncertainty when requested.
    """
    na, nu = tt.frobenius_norm(A), tt.frobenius_norm(U)
    if na == 0 or nu == 0:
        return (0.0, 0.0) if with_uncertainty else 0.0
    AU = tt.multiply(A, U, settings)
    UA = tt.multiply(U, A, settings)
    val = tt.difference_norm(AU, UA) / (na * nu)
    if not with_uncertainty:
        return val
    unc = (AU.residual * tt.frobenius_norm(AU) + UA.residual * tt.frobenius_norm(UA)) / (na * nu)
    return val, unc


def check_symmetry(U: TensorTrainOperator, kind: SymmetryKind | str) -> float:
    """Residual of one structural property, normalized by ``||U||_F``.

    symmetric ``U - U^T``; persymmetric ``U J - J U^T``; centrosymmetric
    ``J U - U J``; the Hermitian variants replace ``U^T`` by ``U^*`` and, for
    centrohermitian, ``U J`` by ``conj(U) J``.
    """
    kind = SymmetryKind(kind)
    nrm = tt.frobenius_norm(U)
    if nrm == 0:
        return 0.0
    J = exchange_mpo(U.length, U.physical_dim)
    if kind is SymmetryKind.SYMMETRIC:
        lhs, rhs = U, U.transpose()
    elif kind is SymmetryKind.HERMITIAN:
        lhs, rhs = U, U.adjoint()
    elif kind is SymmetryKind.PERSYMMETRIC:
        lhs, rhs = tt.multiply(U, J), tt.multiply(J, U.transpose())
    elif kind is SymmetryKind.PERHERMITIAN:
        lhs, rhs = tt.multiply(U, J), tt.multiply(J, U.adjoint())
    elif kind is SymmetryKind.CENTROSYMMETRIC:
        lhs, rhs = tt.multiply(J, U), tt.multiply(U, J)
    else:
        lhs, rhs = tt.multiply(J, U), tt.multiply(U.conj(), J)
    return tt.difference_norm(lhs, rhs) / nrm


def symmetry_kinds_of(A: TensorTrainOperator, tol: float = 1e-10) -> list[SymmetryKind]:
    """Kinds ``A`` satisfies; the three real kinds only count for real ``A``."""
    out = []
    for kind in SymmetryKind:
        if kind.real_kind and not A.is_real:
            continue
        if check_symmetry(A, kind) <= tol:
            out.append(kind)
    return out


def monitor_alphas(j, tol: float) -> AlphaMonitor:
    """Flag every ``|alpha_i| > tol * beta1`` of a Jacobi matrix."""
    scale = tol * j.beta1
    warns = [AlphaWarning(i + 1, float(a)) for i, a in enumerate(j.alphas) if abs(a) > scale]
    return AlphaMonitor(warns, tol)


class IterationMonitor:
    """Per-iteration checks appended to the Lanczos report."""

    def __init__(self, A: TensorTrainOperator, settings: MonitorSettings,
                 compression: CompressionSettings | None = None, expect_zero_alpha: bool = False):
        self.A = A
        self.settings = settings
        self.compression = compression
        self.expect_zero_alpha = (expect_zero_alpha if settings.expect_zero_alpha is None
                                  else settings.expect_zero_alpha)
        self.traceless = abs(tt.trace(A)) <= 1e-12 * max(tt.frobenius_norm(A), 1e-300) * np.sqrt(A.dim)
        self.kinds = symmetry_kinds_of(A) if settings.symmetry_every > 0 else []

    def record(self, i: int, u: TensorTrainOperator, alpha: float | None, jac) -> DiagnosticsRecord:
        s = self.settings
        rec = DiagnosticsRecord(iteration=i)
        if s.trace:
            rec.trace_abs = abs(tt.trace(u))
            rec.trace_residual = check_traceless(u)
            # the starting element is I / sqrt(N); only later elements are traceless
            if self.traceless and i > 1 and rec.trace_residual > s.warn_tol:
                rec.warnings.append("trace")
        if s.alpha and alpha is not None:
            rec.alpha_abs = abs(alpha)
            if self.expect_zero_alpha and rec.alpha_abs > s.warn_tol * jac.beta1:
                rec.warnings.append("alpha")
        if s.commutation_every > 0 and i % s.commutation_every == 0:
            rec.commutation_residual = check_commutation(self.A, u)
            if rec.commutation_residual > s.warn_tol:
                rec.warnings.append("commutation")
        if s.symmetry_every > 0 and i % s.symmetry_every == 0:
            for kind in self.kinds:
                r = check_symmetry(u, kind)
                rec.symmetry_residuals[kind.value] = r
                if r > s.warn_tol:
                    rec.warnings.append(f"symmetry:{kind.value}")
        return rec


def audit(A: TensorTrainOperator | None, basis: dict[int, TensorTrainOperator],
          alphas=None, beta1: float | None = None) -> list[tuple[str, str, float]]:
    """Run every check on stored basis operators; rows are ``(check, label, value)``.

    Without ``A`` only operator-intrinsic checks (trace, symmetry kinds the
    operator itself nearly has) are reported.
    """
    rows: list[tuple[str, str, float]] = []
    kinds = symmetry_kinds_of(A) if A is not None else list(SymmetryKind)
    for idx in sorted(basis):
        U = basis[idx]
        label = f"U_{idx}" if idx > 0 else "operator"
        rows.append(("trace_abs", label, float(abs(tt.trace(U)))))
        rows.append(("trace_resid", label, check_traceless(U)))
        if A is not None:
            rows.append(("commute_resid", label, check_commutation(A, U)))
        for kind in kinds:
            if kind.real_kind and not U.is_real and A is None:
                continue
            rows.append((f"sym:{kind.value}", label, check_symmetry(U, kind)))
    keys = sorted(k for k in basis if k > 0)
    for a, b in zip(keys, keys[1:]):
        if b == a + 1:
            ip = tt.inner_product(basis[a], basis[b])
            rows.append(("orthogonality", f"<U_{a},U_{b}>", float(abs(ip))))
    if alphas is not None and beta1:
        for i, a in enumerate(alphas, start=1):
            rows.append(("alpha_rel", f"alpha_{i}", abs(a) / beta1))
    return rows
