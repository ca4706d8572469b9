"""Tensor-train (matrix product operator) representation and arithmetic.

Public cores use the layout ``(left bond, right bond, row, column)``.
Internally each site is kept as ``(left, row, column, right)`` so that the
two physical indices can be fused into one ``d*d`` leg and the operator can
be handled like a matrix product state during canonicalization, SVD
truncation and variational sweeps.
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla

__all__ = [
    "TensorTrainOperator",
    "CompressionSettings",
    "CompressionInfo",
    "CompressionWarning",
    "NumericalFailure",
    "DenseCapExceeded",
    "identity_mpo",
    "product_mpo",
    "trace",
    "inner_product",
    "frobenius_norm",
    "difference_norm",
    "scalar_multiply",
    "add",
    "multiply",
    "compress",
    "to_dense",
    "from_dense",
    "to_bytes",
    "from_bytes",
    "save",
    "load",
]

DENSE_CAP = 2**12
EXACT_BOND = 2**31 - 1

# Below this relative SVD residual the sweeps cannot improve anything that
# ||X||^2 - ||C||^2 is able to resolve in double precision.
_ALS_MIN_RESIDUAL = 1e-7
_ZERO_TOL = 1e-12


class NumericalFailure(ArithmeticError):
    """Raised when floating-point results contradict a structural assumption."""


class DenseCapExceeded(ValueError):
    """Raised when a dense reconstruction would exceed the configured size cap."""


class CompressionWarning(RuntimeWarning):
    """Variational sweeps stopped at ``max_sweeps`` before reaching ``sweep_tol``."""


@dataclass(frozen=True)
class CompressionSettings:
    """Bond cap and sweep parameters used by :func:`compress`.

    ``svd_cutoff`` drops singular values below ``svd_cutoff * s_max`` at every
    bond. The default is set at double-precision noise so that exact runs do
    not carry numerically-zero bond directions; the effective bond is then
    decided by ``max_bond``.
    """

    max_bond: int = 50
    svd_cutoff: float = 1e-14
    max_sweeps: int = 4
    sweep_tol: float = 1e-8

    def __post_init__(self):
        if int(self.max_bond) != self.max_bond or self.max_bond < 1:
            raise ValueError(f"max_bond must be a positive integer, got {self.max_bond!r}")
        if not 0.0 <= self.svd_cutoff < 1.0:
            raise ValueError(f"svd_cutoff must lie in [0, 1), got {self.svd_cutoff!r}")
        if int(self.max_sweeps) != self.max_sweeps or self.max_sweeps < 0:
            raise ValueError(f"max_sweeps must be a non-negative integer, got {self.max_sweeps!r}")
        if self.sweep_tol < 0:
            raise ValueError(f"sweep_tol must be non-negative, got {self.sweep_tol!r}")

    @classmethod
    def exact(cls) -> "CompressionSettings":
        """Settings that never truncate beyond floating-point noise."""
        return cls(max_bond=EXACT_BOND, svd_cutoff=1e-14, max_sweeps=0)


@dataclass
class CompressionInfo:
    """Outcome of one compression.

    ``residual`` is ``||result - input||_F / ||input||_F``; ``history`` holds
    the residual after SVD truncation followed by one entry per full sweep.
    """

    residual: float = 0.0
    history: list[float] = field(default_factory=list)
    sweeps: int = 0
    converged: bool = True


class TensorTrainOperator:
    """Operator on ``C^(d^L)`` stored as a chain of ``L`` core tensors.

    Entry ``A[i_1..i_L, j_1..j_L]`` is the product of the core slices
    ``C_k[:, :, i_k, j_k]``. Boundary bonds are 1.

    Args:
        cores: sequence of arrays of shape ``(D_{k-1}, D_k, d, d)``.
    """

    __slots__ = ("_sites", "info")

    def __init__(self, cores, info: CompressionInfo | None = None):
        sites = [np.ascontiguousarray(np.transpose(np.asarray(c), (0, 2, 3, 1))) for c in cores]
        self._sites = _validate_sites(sites)
        self.info = info

    @classmethod
    def _from_sites(cls, sites, info=None, validate=False):
        obj = cls.__new__(cls)
        obj._sites = _validate_sites(list(sites)) if validate else list(sites)
        obj.info = info
        return obj

    @property
    def cores(self) -> list[np.ndarray]:
        return [np.transpose(s, (0, 3, 1, 2)) for s in self._sites]

    @property
    def length(self) -> int:
        return len(self._sites)

    @property
    def physical_dim(self) -> int:
        return self._sites[0].shape[1]

    @property
    def bond_dims(self) -> list[int]:
        """Bond dimensions ``D_0 .. D_L`` including the trivial boundaries."""
        return [s.shape[0] for s in self._sites] + [self._sites[-1].shape[3]]

    @property
    def bond_dimension(self) -> int:
        return max(self.bond_dims)

    @property
    def dtype(self):
        return np.result_type(*self._sites)

    @property
    def is_real(self) -> bool:
        return not np.iscomplexobj(np.empty(0, dtype=self.dtype))

    @property
    def residual(self) -> float:
        return 0.0 if self.info is None else self.info.residual

    @property
    def dim(self) -> int:
        return self.physical_dim ** self.length

    def conj(self) -> "TensorTrainOperator":
        if self.is_real:
            return self
        return TensorTrainOperator._from_sites([s.conj() for s in self._sites])

    def transpose(self) -> "TensorTrainOperator":
        return TensorTrainOperator._from_sites([s.transpose(0, 2, 1, 3) for s in self._sites])

    def adjoint(self) -> "TensorTrainOperator":
        return self.transpose().conj()

    def to_dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        return to_dense(self, cap=cap)

    def __neg__(self):
        return scalar_multiply(-1.0, self)

    def __repr__(self):
        return (f"TensorTrainOperator(L={self.length}, d={self.physical_dim}, "
                f"bonds={self.bond_dims[1:-1]}, dtype={self.dtype})")


def _validate_sites(sites):
    if len(sites) < 1:
        raise ValueError("a tensor-train operator needs at least one core")
    d = None
    for k, s in enumerate(sites):
        if s.ndim != 4:
            raise ValueError(f"core {k} must be 4-dimensional, got shape {s.shape}")
        if s.shape[1] != s.shape[2]:
            raise ValueError(f"core {k} has non-square physical legs {s.shape[1:3]}")
        if d is None:
            d = s.shape[1]
        elif s.shape[1] != d:
            raise ValueError(f"core {k} has physical dimension {s.shape[1]}, expected {d}")
        if k > 0 and sites[k - 1].shape[3] != s.shape[0]:
            raise ValueError(f"bond mismatch between cores {k - 1} and {k}: "
                             f"{sites[k - 1].shape[3]} != {s.shape[0]}")
    if sites[0].shape[0] != 1 or sites[-1].shape[3] != 1:
        raise ValueError("boundary bond dimensions must be 1")
    return sites


def _check_compatible(X: TensorTrainOperator, Y: TensorTrainOperator):
    if X.length != Y.length or X.physical_dim != Y.physical_dim:
        raise ValueError(f"operator shapes differ: L={X.length}, d={X.physical_dim} "
                         f"vs L={Y.length}, d={Y.physical_dim}")


def _mps_view(sites):
    return [s.reshape(s.shape[0], -1, s.shape[3]) for s in sites]


def _op_view(mps, d):
    return [m.reshape(m.shape[0], d, d, m.shape[2]) for m in mps]


# --------------------------------------------------------------------------
# construction


def identity_mpo(L: int, d: int = 2) -> TensorTrainOperator:
    """Identity on ``C^(d^L)`` with bond dimension 1."""
    if L < 1:
        raise ValueError(f"L must be >= 1, got {L}")
    if d < 1:
        raise ValueError(f"d must be >= 1, got {d}")
    eye = np.eye(d).reshape(1, d, d, 1)
    return TensorTrainOperator._from_sites([eye.copy() for _ in range(L)])


def product_mpo(ops) -> TensorTrainOperator:
    """Kronecker product ``ops[0] (x) ops[1] (x) ...`` as a bond-1 operator."""
    ops = [np.asarray(o) for o in ops]
    if not ops:
        raise ValueError("need at least one local operator")
    return TensorTrainOperator._from_sites([o.reshape(1, *o.shape, 1) for o in ops], validate=True)


def zero_mpo(L: int, d: int = 2, dtype=float) -> TensorTrainOperator:
    return TensorTrainOperator._from_sites([np.zeros((1, d, d, 1), dtype=dtype) for _ in range(L)])


# --------------------------------------------------------------------------
# contractions


def trace(X: TensorTrainOperator):
    """Trace, computed site by site in time linear in ``L``."""
    env = np.ones((1,), dtype=X.dtype)
    for s in X._sites:
        env = env @ np.einsum("aiib->ab", s)
    val = env[0]
    return val.real.item() if X.is_real else complex(val)


def inner_product(X: TensorTrainOperator, Y: TensorTrainOperator):
    """Frobenius inner product ``Tr X^* Y``."""
    _check_compatible(X, Y)
    env = np.ones((1, 1), dtype=np.result_type(X.dtype, Y.dtype))
    for x, y in zip(_mps_view(X._sites), _mps_view(Y._sites)):
        tmp = np.tensordot(env, y, axes=(1, 0))
        env = np.tensordot(x.conj(), tmp, axes=((0, 1), (0, 1)))
    val = env[0, 0]
    if np.iscomplexobj(val):
        return complex(val)
    return float(val)


def frobenius_norm(X: TensorTrainOperator) -> float:
    """``sqrt(<X, X>)``.

    Raises:
        NumericalFailure: if the self inner product is noticeably negative or
            complex, which cannot happen for a valid operator.
    """
    sq = inner_product(X, X)
    scale = sum(float(np.vdot(s, s).real) for s in X._sites) or 1.0
    tol = 1e-10 * max(abs(sq), 1e-300) + 1e-13 * scale
    if isinstance(sq, complex):
        if abs(sq.imag) > max(tol, 1e-10 * abs(sq.real)):
            raise NumericalFailure(f"self inner product has imaginary part {sq.imag:.3e}")
        sq = sq.real
    if sq < -tol:
        raise NumericalFailure(f"negative squared norm {sq:.3e}")
    return float(np.sqrt(max(sq, 0.0)))


def _canonical_norm(sites) -> float:
    """Norm via a QR sweep; stable even when the operator is a tiny difference."""
    mps = _mps_view(sites)
    r = np.ones((1, 1), dtype=mps[0].dtype)
    for m in mps:
        a = np.tensordot(r, m, axes=(1, 0))
        rows = a.shape[0] * a.shape[1]
        r = np.linalg.qr(a.reshape(rows, a.shape[2]), mode="r")
    return float(np.linalg.norm(r))


def difference_norm(X: TensorTrainOperator, Y: TensorTrainOperator) -> float:
    """``||X - Y||_F`` computed without forming ``<X,X> + <Y,Y> - 2 Re<X,Y>``."""
    return _canonical_norm(_direct_sum(X, scalar_multiply(-1.0, Y))._sites)


def to_dense(X: TensorTrainOperator, cap: int = DENSE_CAP) -> np.ndarray:
    """Full ``d^L x d^L`` matrix. Refuses when ``d^L > cap``."""
    n = X.dim
    if n > cap:
        raise DenseCapExceeded(f"dense size {n} exceeds cap {cap}")
    s0 = X._sites[0]
    t = s0[0]
    for s in X._sites[1:]:
        r, c, _ = t.shape
        t = np.einsum("rcD,Dije->ricje", t, s).reshape(r * s.shape[1], c * s.shape[2], s.shape[3])
    return t[:, :, 0]


def from_dense(M, d: int = 2, settings: CompressionSettings | None = None) -> TensorTrainOperator:
    """Tensor-train decomposition of a dense ``d^L x d^L`` matrix by sequential SVD."""
    M = np.asarray(M)
    n = M.shape[0]
    if M.ndim != 2 or M.shape[1] != n:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    L = int(round(np.log(n) / np.log(d)))
    if d**L != n:
        raise ValueError(f"matrix size {n} is not a power of {d}")
    settings = settings or CompressionSettings.exact()
    t = M.reshape((d,) * (2 * L))
    perm = [ax for k in range(L) for ax in (k, L + k)]
    t = t.transpose(perm).reshape(1, -1)
    mps = []
    for _ in range(L - 1):
        Dl = t.shape[0]
        t = t.reshape(Dl * d * d, -1)
        u, sv, vh = _svd(t)
        chi = _choose_rank(sv, settings.max_bond, settings.svd_cutoff)
        mps.append(u[:, :chi].reshape(Dl, d * d, chi))
        t = sv[:chi, None] * vh[:chi]
    mps.append(t.reshape(t.shape[0], d * d, 1))
    return TensorTrainOperator._from_sites(_op_view(mps, d))


# --------------------------------------------------------------------------
# arithmetic


def scalar_multiply(c, X: TensorTrainOperator) -> TensorTrainOperator:
    """``c * X``; the factor is absorbed into the first core."""
    sites = list(X._sites)
    sites[0] = c * sites[0]
    return TensorTrainOperator._from_sites(sites)


def _direct_sum(X: TensorTrainOperator, Y: TensorTrainOperator) -> TensorTrainOperator:
    _check_compatible(X, Y)
    L, d = X.length, X.physical_dim
    dtype = np.result_type(X.dtype, Y.dtype)
    if L == 1:
        return TensorTrainOperator._from_sites([X._sites[0] + Y._sites[0]])
    sites = []
    for k, (x, y) in enumerate(zip(X._sites, Y._sites)):
        if k == 0:
            s = np.concatenate([x, y], axis=3)
        elif k == L - 1:
            s = np.concatenate([x, y], axis=0)
        else:
            a, b = x.shape[0], y.shape[0]
            c, e = x.shape[3], y.shape[3]
            s = np.zeros((a + b, d, d, c + e), dtype=dtype)
            s[:a, :, :, :c] = x
            s[a:, :, :, c:] = y
        sites.append(s.astype(dtype, copy=False))
    return TensorTrainOperator._from_sites(sites)


def _direct_product(X: TensorTrainOperator, Y: TensorTrainOperator) -> TensorTrainOperator:
    _check_compatible(X, Y)
    sites = []
    for x, y in zip(X._sites, Y._sites):
        a, d, _, b = x.shape
        c, _, _, e = y.shape
        z = np.einsum("aijb,cjke->acikbe", x, y, optimize=True)
        sites.append(z.reshape(a * c, d, d, b * e))
    return TensorTrainOperator._from_sites(sites)


def add(X: TensorTrainOperator, Y: TensorTrainOperator,
        settings: CompressionSettings | None = None) -> TensorTrainOperator:
    """``X + Y`` by block-diagonal core concatenation, then compression.

    With ``settings=None`` the exact sum is returned uncompressed; its bond
    dimensions are the sums of the operands' bond dimensions.
    """
    s = _direct_sum(X, Y)
    if settings is None:
        return s
    return compress(s, settings)


def multiply(A: TensorTrainOperator, X: TensorTrainOperator,
             settings: CompressionSettings | None = None) -> TensorTrainOperator:
    """Matrix product ``A @ X`` formed core-wise, then compression.

    With ``settings=None`` the exact product (bond dims multiply) is returned.
    """
    p = _direct_product(A, X)
    if settings is None:
        return p
    return compress(p, settings)


# --------------------------------------------------------------------------
# compression


def _svd(m):
    try:
        return sla.svd(m, full_matrices=False, check_finite=False)
    except np.linalg.LinAlgError:
        return sla.svd(m, full_matrices=False, check_finite=False, lapack_driver="gesvd")


def _choose_rank(sv, max_bond, cutoff) -> int:
    if sv.size == 0:
        return 1
    chi = sv.size
    if cutoff > 0 and sv[0] > 0:
        chi = int(np.count_nonzero(sv > cutoff * sv[0]))
    return max(1, min(chi, max_bond))


def _left_canonicalize(mps):
    mps = list(mps)
    for k in range(len(mps) - 1):
        a, p, b = mps[k].shape
        q, r = np.linalg.qr(mps[k].reshape(a * p, b))
        mps[k] = q.reshape(a, p, q.shape[1])
        mps[k + 1] = np.tensordot(r, mps[k + 1], axes=(1, 0))
    return mps, float(np.linalg.norm(mps[-1]))


def _svd_truncate(mps, max_bond, cutoff):
    """Right-to-left truncation of a left-canonical chain; returns discarded weight."""
    mps = list(mps)
    discarded = 0.0
    for k in range(len(mps) - 1, 0, -1):
        a, p, b = mps[k].shape
        u, sv, vh = _svd(mps[k].reshape(a, p * b))
        chi = _choose_rank(sv, max_bond, cutoff)
        discarded += float(np.sum(sv[chi:] ** 2))
        mps[k] = vh[:chi].reshape(chi, p, b)
        mps[k - 1] = np.tensordot(mps[k - 1], u[:, :chi] * sv[:chi], axes=(2, 0))
    return mps, discarded


def _right_env(y, x, env):
    # env[c, d] over sites to the right; returns env over this site as well
    t = np.tensordot(x, env, axes=(2, 1))            # (bx, p, cy)
    return np.tensordot(y.conj(), t, axes=((1, 2), (1, 2)))   # (ay, bx)


def _als_sweeps(x_mps, y_mps, norm_x, settings):
    """Alternating single-site least-squares refinement of ``y`` towards ``x``.

    ``y`` must be right-canonical with its centre on site 0. Each local
    update replaces the centre core by the projection of ``x`` onto the
    current environment, so ``||x - y||`` cannot increase.
    """
    L = len(x_mps)
    y = list(y_mps)
    dtype = np.result_type(x_mps[0], y[0])
    renv = [None] * (L + 1)
    renv[L] = np.ones((1, 1), dtype=dtype)
    for k in range(L - 1, 0, -1):
        renv[k] = _right_env(y[k], x_mps[k], renv[k + 1])
    lenv = [None] * (L + 1)
    lenv[0] = np.ones((1, 1), dtype=dtype)

    def centre(k):
        t = np.tensordot(lenv[k], x_mps[k], axes=(1, 0))         # (ay, p, bx)
        return t, np.tensordot(t, renv[k + 1], axes=(2, 1))     # (ay, p, cy)

    history = []
    converged = False
    sweeps = 0
    sq_x = norm_x**2
    c = None
    for _ in range(settings.max_sweeps):
        for k in range(L - 1):
            t, c = centre(k)
            a, p, b = c.shape
            q, _ = np.linalg.qr(c.reshape(a * p, b))
            y[k] = q.reshape(a, p, q.shape[1])
            lenv[k + 1] = np.tensordot(y[k].conj(), t, axes=((0, 1), (0, 1)))
        for k in range(L - 1, 0, -1):
            _, c = centre(k)
            a, p, b = c.shape
            q, _ = np.linalg.qr(c.reshape(a, p * b).conj().T)
            y[k] = q.conj().T.reshape(q.shape[1], p, b)
            renv[k] = _right_env(y[k], x_mps[k], renv[k + 1])
        _, c = centre(0)
        y[0] = c
        sweeps += 1
        res = float(np.sqrt(max(sq_x - float(np.vdot(c, c).real), 0.0))) / norm_x
        prev = history[-1] if history else None
        history.append(res)
        if prev is not None and abs(prev - res) <= settings.sweep_tol * max(prev, 1e-300):
            converged = True
            break
    return y, history, sweeps, converged


def compress(X: TensorTrainOperator, settings: CompressionSettings) -> TensorTrainOperator:
    """Reduce bond dimensions to at most ``settings.max_bond``.

    Pipeline: left-canonicalize by QR, truncate right-to-left by SVD, then
    refine with alternating single-site least-squares sweeps until the
    relative residual changes by less than ``sweep_tol`` or ``max_sweeps``
    full sweeps have run. The achieved relative residual is stored in
    ``result.info``.
    """
    d = X.physical_dim
    if X.length == 1:
        return TensorTrainOperator._from_sites(list(X._sites), info=CompressionInfo(0.0, [0.0]))
    mps, nrm = _left_canonicalize(_mps_view(X._sites))
    if nrm == 0.0:
        return TensorTrainOperator._from_sites(
            [np.zeros((1, d, d, 1), dtype=X.dtype) for _ in range(X.length)],
            info=CompressionInfo(0.0, [0.0]))
    mps, discarded = _svd_truncate(mps, settings.max_bond, settings.svd_cutoff)
    res = float(np.sqrt(discarded)) / nrm
    info = CompressionInfo(residual=res, history=[res])
    if settings.max_sweeps > 0 and res > _ALS_MIN_RESIDUAL:
        mps, hist, sweeps, converged = _als_sweeps(_mps_view(X._sites), mps, nrm, settings)
        info.history.extend(hist)
        info.sweeps = sweeps
        info.converged = converged
        info.residual = hist[-1]
        if not converged:
            warnings.warn(f"compression stopped after {sweeps} sweeps at residual {hist[-1]:.3e}",
                          CompressionWarning, stacklevel=2)
    return TensorTrainOperator._from_sites(_op_view(mps, d), info=info)


# --------------------------------------------------------------------------
# binary container

_MAGIC = b"TTOP"
_VERSION = 1


def to_bytes(X: TensorTrainOperator) -> bytes:
    """Serialize to the ``TTOP`` container.

    Layout (little-endian): magic ``b"TTOP"``, ``uint32`` version, ``uint32``
    L, ``uint32`` d; then per core four ``uint64`` shape entries
    ``(D_left, D_right, d, d)`` followed by the row-major entries as
    ``float64`` pairs (real, imaginary).
    """
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<III", _VERSION, X.length, X.physical_dim))
    for core in X.cores:
        buf.write(struct.pack("<4Q", *core.shape))
        buf.write(np.ascontiguousarray(core, dtype="<c16").tobytes())
    return buf.getvalue()


def from_bytes(data: bytes) -> TensorTrainOperator:
    """Inverse of :func:`to_bytes`. Raises ``ValueError`` on malformed input."""
    if len(data) < 16 or data[:4] != _MAGIC:
        raise ValueError("not a TTOP container (bad magic)")
    version, L, d = struct.unpack_from("<III", data, 4)
    if version != _VERSION:
        raise ValueError(f"unsupported TTOP version {version}")
    off = 16
    cores = []
    for k in range(L):
        if off + 32 > len(data):
            raise ValueError(f"truncated TTOP container at core {k}")
        shape = struct.unpack_from("<4Q", data, off)
        off += 32
        if shape[2] != d or shape[3] != d:
            raise ValueError(f"core {k} physical shape {shape[2:]} does not match d={d}")
        n = int(np.prod(shape))
        if off + 16 * n > len(data):
            raise ValueError(f"truncated TTOP container at core {k}")
        vals = np.frombuffer(data, dtype="<c16", count=n, offset=off).reshape(shape)
        off += 16 * n
        cores.append(vals.astype(np.complex128))
    if off != len(data):
        raise ValueError("trailing bytes after last core")
    if all(not np.any(c.imag) for c in cores):
        cores = [c.real.copy() for c in cores]
    return TensorTrainOperator(cores)


def save(path, X: TensorTrainOperator) -> None:
    Path(path).write_bytes(to_bytes(X))


def load(path) -> TensorTrainOperator:
    return from_bytes(Path(path).read_bytes())
