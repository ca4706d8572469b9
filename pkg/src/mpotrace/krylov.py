"""Global Lanczos on tensor-train operators with Gauss quadrature for Tr f(A)."""

from __future__ import annotations

import csv
import enum
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg as sla

from . import tt_core as tt
from .tt_core import CompressionSettings, CompressionWarning, NumericalFailure, TensorTrainOperator

log = logging.getLogger(__name__)

__all__ = [
    "LanczosMode",
    "JacobiMatrix",
    "KrylovState",
    "StoppingCriteria",
    "SpectralFunction",
    "QuadratureReport",
    "QuadratureRule",
    "run_lanczos",
    "assemble_jacobi",
    "quadrature",
    "gauss_rule",
    "check_stop",
    "CSV_COLUMNS",
]

CSV_COLUMNS = ("iter", "alpha", "beta", "estimate", "rel_change", "max_bond",
               "trace_resid", "commute_resid", "alpha_warn", "wall_ms")

HERMITICITY_TOL = 1e-6
WITNESS_TOL = 1e-10
_STOP_FLOOR = 1e-300


class LanczosMode(str, enum.Enum):
    VANILLA = "vanilla"
    CHIRAL_FAST = "chiral_fast"
    CHIRAL_SAFE = "chiral_safe"
    AUTO = "auto"

    @classmethod
    def parse(cls, value) -> "LanczosMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"chiralfast": "chiral_fast", "chiralsafe": "chiral_safe", "fast": "chiral_fast",
                   "safe": "chiral_safe", "improved": "chiral_fast"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ValueError(f"unknown Lanczos mode {value!r}; expected one of "
                             f"{[m.value for m in cls]}") from None


@dataclass
class JacobiMatrix:
    """Coefficients of the symmetric tridiagonal projection ``T_i``.

    ``betas[k]`` couples basis elements ``k+1`` and ``k+2`` (i.e. it holds
    ``beta_{k+2}``); ``len(betas) == len(alphas)`` once an iteration has
    finished, the last entry being the norm of the residual that would
    start the next iteration. A terminal zero marks breakdown.
    """

    alphas: list[float] = field(default_factory=list)
    betas: list[float] = field(default_factory=list)
    beta1: float = 0.0

    def __len__(self):
        return len(self.alphas)

    def copy(self) -> "JacobiMatrix":
        return JacobiMatrix(list(self.alphas), list(self.betas), self.beta1)


@dataclass(frozen=True)
class StoppingCriteria:
    max_iterations: int = 100
    rel_change_tol: float = 1e-6
    breakdown_tol: float = 1e-12

    def __post_init__(self):
        if int(self.max_iterations) != self.max_iterations or self.max_iterations < 1:
            raise ValueError(f"max_iterations must be a positive integer, got {self.max_iterations!r}")
        if not self.rel_change_tol > 0:
            raise ValueError(f"rel_change_tol must be > 0, got {self.rel_change_tol!r}")
        if not self.breakdown_tol > 0:
            raise ValueError(f"breakdown_tol must be > 0, got {self.breakdown_tol!r}")


@dataclass(frozen=True)
class SpectralFunction:
    """Scalar function applied to Ritz values.

    Use the constructors :meth:`exp_neg_beta`, :meth:`power`,
    :meth:`identity` and :meth:`tabulated`.
    """

    name: str
    params: tuple = ()
    fn: Callable = field(default=None, compare=False, repr=False)

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))

    @classmethod
    def exp_neg_beta(cls, beta: float = 1.0) -> "SpectralFunction":
        beta = float(beta)
        return cls("exp_neg_beta", (("beta", beta),), lambda x: np.exp(-beta * x))

    @classmethod
    def power(cls, p: float) -> "SpectralFunction":
        p = float(p)
        if p == int(p) and p >= 0:
            q = int(p)
            return cls("power", (("p", p),), lambda x: x**q)
        return cls("power", (("p", p),), lambda x: np.power(x, p))

    @classmethod
    def identity(cls) -> "SpectralFunction":
        return cls("identity", (), lambda x: x)

    @classmethod
    def tabulated(cls, xs, ys) -> "SpectralFunction":
        """Piecewise-linear interpolation of samples; constant beyond the ends."""
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("tabulated function needs >= 2 strictly increasing abscissae")
        return cls("tabulated", (("xs", tuple(xs)), ("ys", tuple(ys))), lambda x: np.interp(x, xs, ys))

    @classmethod
    def from_name(cls, name: str, **params) -> "SpectralFunction":
        name = name.strip().lower()
        if name == "exp_neg_beta":
            return cls.exp_neg_beta(params.get("beta", 1.0))
        if name == "power":
            return cls.power(params.get("p", params.get("power", 2)))
        if name == "identity":
            return cls.identity()
        raise ValueError(f"unknown spectral function {name!r}")


@dataclass
class KrylovState:
    """Everything the three-term recurrence needs to continue."""

    u_prev: TensorTrainOperator | None
    u_curr: TensorTrainOperator | None
    v: TensorTrainOperator
    jacobi: JacobiMatrix
    iteration: int = 0
    estimates: list[float] = field(default_factory=list)
    diagnostics: list = field(default_factory=list)


@dataclass
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    value: float


@dataclass
class QuadratureReport:
    """Result of :func:`run_lanczos`."""

    estimates: list[float]
    jacobi: JacobiMatrix
    function: SpectralFunction
    mode: LanczosMode
    mode_used: LanczosMode
    iterations: int = 0
    breakdown: bool = False
    converged: bool = False
    witness: object = None
    mode_reason: str = ""
    stored_alphas: list[float] = field(default_factory=list)
    computed_alphas: list[float | None] = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    wall_ms: list[float] = field(default_factory=list)
    max_bonds: list[int] = field(default_factory=list)
    compression_residuals: list[float] = field(default_factory=list)
    compression_warnings: int = 0
    hermiticity_residual: float = 0.0
    ritz_values: np.ndarray | None = None
    weights: np.ndarray | None = None
    basis: list[TensorTrainOperator] | None = None

    @property
    def estimate(self) -> float:
        return self.estimates[-1] if self.estimates else float("nan")

    @property
    def max_abs_alpha(self) -> float:
        vals = [abs(a) for a in self.computed_alphas if a is not None]
        return max(vals) if vals else 0.0

    def rel_changes(self) -> list[float | None]:
        out: list[float | None] = [None]
        for prev, cur in zip(self.estimates, self.estimates[1:]):
            out.append(abs(cur - prev) / max(abs(prev), _STOP_FLOOR))
        return out

    def csv_rows(self) -> list[dict]:
        """One row per iteration with the columns of :data:`CSV_COLUMNS`."""
        betas = [self.jacobi.beta1] + list(self.jacobi.betas)
        rel = self.rel_changes()
        rows = []
        for i in range(self.iterations):
            rec = self.diagnostics[i] if i < len(self.diagnostics) else None
            rows.append({
                "iter": i + 1,
                "alpha": _fmt(self.jacobi.alphas[i]),
                "beta": _fmt(betas[i]),
                "estimate": _fmt(self.estimates[i]),
                "rel_change": _fmt(rel[i]),
                "max_bond": self.max_bonds[i] if i < len(self.max_bonds) else "",
                "trace_resid": _fmt(getattr(rec, "trace_residual", None)),
                "commute_resid": _fmt(getattr(rec, "commutation_residual", None)),
                "alpha_warn": int(bool(rec and any(w.startswith("alpha") for w in rec.warnings))),
                "wall_ms": _fmt(self.wall_ms[i] if i < len(self.wall_ms) else None),
            })
        return rows

    def write_csv(self, fh) -> None:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.csv_rows())

    def summary(self) -> str:
        lines = [
            f"estimate: {self.estimate:.15g}",
            f"iterations: {self.iterations}",
            f"breakdown: {self.breakdown}",
            f"converged: {self.converged}",
            f"mode_requested: {self.mode.value}",
            f"mode: {self.mode_used.value}",
            f"witness: {self.witness if self.witness is not None else 'none'}",
        ]
        if self.mode_reason:
            lines.append(f"mode_reason: {self.mode_reason}")
        lines += [
            f"function: {self.function.name} {dict(self.function.params) if self.function.params else ''}".rstrip(),
            f"beta1: {self.jacobi.beta1:.15g}",
            f"max_abs_alpha: {self.max_abs_alpha:.3e}",
            f"hermiticity_residual: {self.hermiticity_residual:.3e}",
            f"compression_warnings: {self.compression_warnings}",
            "per_iteration_compression_residual: "
            + " ".join(f"{r:.3e}" for r in self.compression_residuals),
        ]
        return "\n".join(lines) + "\n"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def assemble_jacobi(j: JacobiMatrix, i: int | None = None) -> np.ndarray:
    """Dense ``i x i`` symmetric tridiagonal matrix from stored coefficients."""
    if i is None:
        i = len(j.alphas)
    if i < 1 or i > len(j.alphas) or len(j.betas) < i - 1:
        raise IndexError(f"cannot assemble T_{i} from {len(j.alphas)} alphas and {len(j.betas)} betas")
    T = np.diag(np.asarray(j.alphas[:i], dtype=float))
    if i > 1:
        off = np.asarray(j.betas[:i - 1], dtype=float)
        T += np.diag(off, 1) + np.diag(off, -1)
    return T


def gauss_rule(T: np.ndarray, beta1: float) -> tuple[np.ndarray, np.ndarray]:
    """Ritz values and quadrature weights ``beta1^2 |V[0, k]|^2`` of ``T``."""
    T = np.asarray(T, dtype=float)
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise ValueError(f"T must be square, got {T.shape}")
    if not np.allclose(T, T.T, rtol=0, atol=1e-14 * max(1.0, np.abs(T).max(initial=0))):
        raise ValueError("T must be symmetric")
    n = T.shape[0]
    try:
        if n == 1:
            lam, vec = T[0:1, 0].copy(), np.ones((1, 1))
        elif np.count_nonzero(np.triu(T, 2)) == 0:
            lam, vec = sla.eigh_tridiagonal(np.diag(T), np.diag(T, 1))
        else:
            lam, vec = np.linalg.eigh(T)
    except (np.linalg.LinAlgError, sla.LinAlgError) as exc:
        raise NumericalFailure(f"eigendecomposition of T failed: {exc}") from exc
    return lam, beta1**2 * np.abs(vec[0]) ** 2


def quadrature(T: np.ndarray, beta1: float, f: SpectralFunction) -> float:
    """Gauss quadrature ``beta1^2 e1^T V f(Lambda) V^* e1``."""
    lam, w = gauss_rule(T, beta1)
    return float(np.sum(w * f(lam)))


def check_stop(estimates: Sequence[float], stop: StoppingCriteria, iteration: int | None = None) -> bool:
    """True once the relative change of the last two estimates is below tolerance
    or the iteration budget is exhausted."""
    if iteration is not None and iteration >= stop.max_iterations:
        return True
    if len(estimates) < 2:
        return False
    prev, last = estimates[-2], estimates[-1]
    return abs(last - prev) / max(abs(prev), _STOP_FLOOR) < stop.rel_change_tol


def hermiticity_residual(A: TensorTrainOperator) -> float:
    nrm = tt.frobenius_norm(A)
    if nrm == 0.0:
        return 0.0
    return tt.difference_norm(A, A.adjoint()) / nrm


def _resolve_mode(A, mode, witness):
    if mode is not LanczosMode.AUTO:
        return mode, ""
    if witness is None:
        reason = "no chiral witness available; running vanilla"
        log.info(reason)
        return LanczosMode.VANILLA, reason
    from .spin_hamiltonians import verify_anticommutation

    resid = verify_anticommutation(A, witness)
    if resid <= WITNESS_TOL:
        return LanczosMode.CHIRAL_FAST, f"witness {witness} verified (residual {resid:.1e})"
    reason = f"witness {witness} rejected (residual {resid:.3e}); running vanilla"
    log.warning(reason)
    return LanczosMode.VANILLA, reason


def run_lanczos(A: TensorTrainOperator,
                f: SpectralFunction,
                mode: LanczosMode | str = LanczosMode.VANILLA,
                settings: CompressionSettings | None = None,
                stop: StoppingCriteria | None = None,
                *,
                witness=None,
                monitors=None,
                monitor_alpha: bool = False,
                retain_basis: bool = False,
                check_hermitian: bool = True,
                callback=None) -> QuadratureReport:
    """Approximate ``Tr f(A)`` by global Lanczos started from the identity.

    Each iteration normalizes the residual, multiplies by ``A``, removes the
    previous basis element and (except in ``CHIRAL_FAST``) the projection on
    the current one, then evaluates the Gauss rule of the current Jacobi
    matrix. ``CHIRAL_SAFE`` performs the same orthogonalizations as
    ``VANILLA`` but stores zeros on the diagonal of ``T``; ``AUTO`` uses
    ``CHIRAL_FAST`` only if ``witness`` verifiably anticommutes with ``A``.

    Args:
        A: Hermitian operator.
        f: function applied to the Ritz values.
        mode: execution mode.
        settings: compression applied after every product and sum.
        stop: iteration budget, relative-change and breakdown tolerances.
        witness: optional Pauli string consulted in ``AUTO`` mode.
        monitors: optional :class:`mpotrace.diagnostics.MonitorSettings`.
        monitor_alpha: in ``CHIRAL_FAST`` evaluate ``alpha_i`` read-only.
        retain_basis: keep every ``U_i`` in the report (for audits at small L).
        check_hermitian: measure ``||A - A^*|| / ||A||`` before starting.
        callback: called as ``callback(state)`` after every iteration.

    Raises:
        NumericalFailure: ``A`` is not Hermitian within tolerance.
    """
    mode = LanczosMode.parse(mode)
    settings = settings or CompressionSettings()
    stop = stop or StoppingCriteria()
    herm = hermiticity_residual(A) if check_hermitian else 0.0
    if herm > HERMITICITY_TOL:
        raise NumericalFailure(f"operator is not Hermitian: ||A - A^*|| / ||A|| = {herm:.3e}")
    mode_used, reason = _resolve_mode(A, mode, witness)
    fast = mode_used is LanczosMode.CHIRAL_FAST
    zero_diag = mode_used in (LanczosMode.CHIRAL_FAST, LanczosMode.CHIRAL_SAFE)

    diag_monitor = None
    if monitors is not None:
        from .diagnostics import IterationMonitor

        diag_monitor = IterationMonitor(A, monitors, settings, expect_zero_alpha=zero_diag)
        if fast and monitors.alpha:
            monitor_alpha = True

    report = QuadratureReport(estimates=[], jacobi=JacobiMatrix(), function=f, mode=mode,
                              mode_used=mode_used, witness=witness, mode_reason=reason,
                              hermiticity_residual=herm)
    if retain_basis:
        report.basis = []
    jac = report.jacobi
    state = KrylovState(u_prev=None, u_curr=None, v=tt.identity_mpo(A.length, A.physical_dim),
                        jacobi=jac, estimates=report.estimates, diagnostics=report.diagnostics)

    beta = tt.frobenius_norm(state.v)
    jac.beta1 = beta
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", CompressionWarning)
        for i in range(1, stop.max_iterations + 1):
            t0 = time.perf_counter()
            u = tt.scalar_multiply(1.0 / beta, state.v)
            v = tt.multiply(A, u, settings)
            resid = v.residual
            if state.u_curr is not None:
                v = tt.add(v, tt.scalar_multiply(-beta, state.u_curr), settings)
                resid = max(resid, v.residual)
            alpha = None
            if not fast or monitor_alpha:
                alpha = _real_inner(u, v)
            if not fast:
                v = tt.add(v, tt.scalar_multiply(-alpha, u), settings)
                resid = max(resid, v.residual)
            jac.alphas.append(0.0 if zero_diag else alpha)
            report.stored_alphas.append(jac.alphas[-1])
            report.computed_alphas.append(alpha)

            lam, w = gauss_rule(assemble_jacobi(jac, i), jac.beta1)
            report.estimates.append(float(np.sum(w * f(lam))))
            report.ritz_values, report.weights = lam, w

            beta = tt.frobenius_norm(v)
            jac.betas.append(beta)
            state.u_prev, state.u_curr, state.v = state.u_curr, u, v
            state.iteration = i
            report.iterations = i
            report.max_bonds.append(max(u.bond_dimension, v.bond_dimension))
            report.compression_residuals.append(resid)
            if retain_basis:
                report.basis.append(u)
            report.wall_ms.append(1e3 * (time.perf_counter() - t0))

            if diag_monitor is not None:
                report.diagnostics.append(diag_monitor.record(i, u, alpha, jac))
            if callback is not None:
                callback(state)

            if beta <= stop.breakdown_tol * jac.beta1:
                jac.betas[-1] = 0.0
                report.breakdown = True
                report.converged = True
                break
            if check_stop(report.estimates, stop):
                report.converged = True
                break
        report.compression_warnings = sum(issubclass(w.category, CompressionWarning) for w in caught)
        for w in caught:
            if not issubclass(w.category, CompressionWarning):
                warnings.warn_explicit(w.message, w.category, w.filename, w.lineno)
    return report


def _real_inner(u, v) -> float:
    val = tt.inner_product(u, v)
    if isinstance(val, complex):
        if abs(val.imag) > 1e-8 * max(1.0, abs(val.real)):
            raise NumericalFailure(f"<U_i, V_i> has imaginary part {val.imag:.3e}; A is not Hermitian")
        val = val.real
    return float(val)


def estimate_from_coefficients(jac: JacobiMatrix, f: SpectralFunction, i: int | None = None) -> float:
    """Re-evaluate the quadrature from stored coefficients only."""
    return quadrature(assemble_jacobi(jac, i), jac.beta1, f)


def relative_error(estimate: float, exact: float) -> float:
    return abs(estimate - exact) / abs(exact) if exact != 0 else abs(estimate)
