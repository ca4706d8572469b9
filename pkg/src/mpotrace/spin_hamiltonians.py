"""Spin-chain Hamiltonians as MPOs and Pauli-string chiral witnesses.

A chiral witness is a Hermitian, unitary Pauli string ``R`` with
``R H = -H R``. Its existence forces the spectrum of ``H`` to be symmetric
about zero, which is what allows the Lanczos driver to skip the diagonal
orthogonalization.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import tt_core as tt
from .tt_core import CompressionSettings, TensorTrainOperator

__all__ = [
    "Boundary",
    "Term",
    "InteractionSpec",
    "PauliString",
    "PAULI",
    "tfim_spec",
    "pauli_terms",
    "build_hamiltonian",
    "pauli_string_to_mpo",
    "construct_chiral_unitary",
    "verify_anticommutation",
    "anticommutes",
    "witness_classes",
    "WITNESS_CLASSES",
    "hamiltonian_from_terms",
    "expected_couplings",
]

PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1.0j], [1.0j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}
AXES = ("x", "y", "z")

# alpha' used to flip a single axis; the third axis flips any two.
_FLIP = {"x": "z", "y": "x", "z": "x"}


class Boundary(str, enum.Enum):
    OPEN = "open"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class Term:
    """Blocks ``sigma_axis^(x length)`` at every offset, weighted per offset.

    ``couplings`` lists ``L - length + 1`` open-chain weights (offsets
    ``0 .. L-length``) and, for periodic chains, ``length - 1`` further
    weights for the wrapped blocks ``sigma^(x k) I ... I sigma^(x length-k)``,
    ``k = 1 .. length-1``.
    """

    axis: str
    length: int
    couplings: tuple[float, ...]

    @classmethod
    def uniform(cls, axis: str, length: int, value: float, L: int, boundary="open") -> "Term":
        n = expected_couplings(length, L, Boundary(boundary))
        return cls(axis, length, (float(value),) * n)

    @property
    def uniform_value(self) -> float | None:
        if self.couplings and all(c == self.couplings[0] for c in self.couplings):
            return self.couplings[0]
        return None


def expected_couplings(length: int, L: int, boundary: Boundary) -> int:
    n = L - length + 1
    if boundary is Boundary.PERIODIC:
        n += length - 1
    return n


@dataclass(frozen=True)
class InteractionSpec:
    terms: tuple[Term, ...]
    length: int
    boundary: Boundary = Boundary.OPEN

    def __post_init__(self):
        object.__setattr__(self, "boundary", Boundary(self.boundary))
        object.__setattr__(self, "terms", tuple(self.terms))
        self.validate()

    def validate(self) -> None:
        if int(self.length) != self.length or self.length < 1:
            raise ValueError(f"chain length must be a positive integer, got {self.length!r}")
        if not self.terms:
            raise ValueError("an interaction spec needs at least one term")
        for n, t in enumerate(self.terms):
            if t.axis not in AXES:
                raise ValueError(f"term {n}: axis must be one of {AXES}, got {t.axis!r}")
            if int(t.length) != t.length or t.length < 1:
                raise ValueError(f"term {n}: block length must be >= 1, got {t.length!r}")
            if t.length > self.length:
                raise ValueError(f"term {n}: block length {t.length} exceeds chain length {self.length}")
            want = expected_couplings(t.length, self.length, self.boundary)
            if len(t.couplings) != want:
                raise ValueError(f"term {n}: expected {want} couplings for "
                                 f"{self.boundary.value} boundary, got {len(t.couplings)}")

    @property
    def uniform(self) -> bool:
        return all(t.uniform_value is not None for t in self.terms)

    def structure(self) -> dict[str, set[int]]:
        """Map axis -> set of block lengths present."""
        out: dict[str, set[int]] = {}
        for t in self.terms:
            out.setdefault(t.axis, set()).add(t.length)
        return out


def tfim_spec(L: int, J: float = 1.0, g: float = 1.0, boundary="open") -> InteractionSpec:
    """Transverse-field Ising chain ``J sum X X + g sum Z``."""
    terms = [Term.uniform("z", 1, g, L, boundary)]
    if L >= 2:
        terms.insert(0, Term.uniform("x", 2, J, L, boundary))
    return InteractionSpec(tuple(terms), L, Boundary(boundary))


# --------------------------------------------------------------------------
# Pauli strings


@dataclass(frozen=True)
class PauliString:
    """Kronecker product of single-site Paulis times a global phase.

    ``source`` records which construction produced a witness.
    """

    labels: str
    phase: complex = 1.0
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        labels = self.labels.upper()
        if not labels or any(c not in PAULI for c in labels):
            raise ValueError(f"invalid Pauli labels {self.labels!r}")
        object.__setattr__(self, "labels", labels)
        if not np.isclose(abs(self.phase), 1.0):
            raise ValueError(f"phase must have unit modulus, got {self.phase!r}")

    def __len__(self):
        return len(self.labels)

    def __str__(self):
        ph = complex(self.phase)
        prefix = {1: "", -1: "-", 1j: "i", -1j: "-i"}.get(ph, f"({ph})")
        return prefix + self.labels

    @classmethod
    def from_str(cls, s: str) -> "PauliString":
        s = s.strip()
        phase = 1.0
        for p, v in (("-i", -1j), ("i", 1j), ("-", -1.0), ("+", 1.0)):
            if s.startswith(p) and len(s) > len(p) and s[len(p)].upper() in PAULI:
                phase, s = v, s[len(p):]
                break
        return cls(s, phase)

    @property
    def is_hermitian(self) -> bool:
        # a product of Hermitian Paulis is Hermitian; only a real phase keeps it so
        return abs(complex(self.phase).imag) < 1e-12

    def anticommutes_with(self, other: "PauliString | str") -> bool:
        return anticommutes(self.labels, other if isinstance(other, str) else other.labels)

    def to_mpo(self) -> TensorTrainOperator:
        return pauli_string_to_mpo(self)

    def to_dense(self) -> np.ndarray:
        out = np.array([[complex(self.phase)]])
        for c in self.labels:
            out = np.kron(out, PAULI[c])
        if np.all(out.imag == 0):
            out = out.real
        return out


def anticommutes(p: str, q: str) -> bool:
    """Two Pauli strings anticommute iff they differ non-trivially on an odd number of sites."""
    if len(p) != len(q):
        raise ValueError(f"Pauli strings have different lengths {len(p)} and {len(q)}")
    n = sum(1 for a, b in zip(p, q) if a != "I" and b != "I" and a != b)
    return n % 2 == 1


def pauli_string_to_mpo(R: PauliString | str) -> TensorTrainOperator:
    """Bond-dimension-1 MPO of a Pauli string (phase folded into site 0)."""
    if isinstance(R, str):
        R = PauliString.from_str(R)
    ops = [PAULI[c] for c in R.labels]
    ph = complex(R.phase)
    if ph.imag == 0 and all(c != "Y" for c in R.labels):
        ops[0] = ph.real * ops[0]
    else:
        ops = [np.asarray(o, dtype=complex) for o in ops]
        ops[0] = ph * ops[0]
    return tt.product_mpo(ops)


def _block_sites(L: int, boundary: Boundary, length: int):
    """Yield the site sets of every block, in coupling order."""
    for j in range(L - length + 1):
        yield tuple(range(j, j + length))
    if boundary is Boundary.PERIODIC:
        for k in range(1, length):
            yield tuple(range(k)) + tuple(range(L - (length - k), L))


def pauli_terms(spec: InteractionSpec) -> dict[str, float]:
    """``H`` as ``{labels: coefficient}`` with coinciding strings merged."""
    L = spec.length
    out: dict[str, float] = {}
    for t in spec.terms:
        ax = t.axis.upper()
        for sites, h in zip(_block_sites(L, spec.boundary, t.length), t.couplings):
            labels = ["I"] * L
            for s in sites:
                labels[s] = ax
            key = "".join(labels)
            out[key] = out.get(key, 0.0) + float(h)
    return out


# --------------------------------------------------------------------------
# MPO construction


def build_hamiltonian(spec: InteractionSpec) -> TensorTrainOperator:
    """Exact MPO by a finite-automaton construction.

    State 0 means "no block started", the last state "block completed".
    An open block of length ``i`` owns ``i - 1`` intermediate states shared
    by all offsets; each wrapped periodic block owns one carry state that
    runs from site 0 to site ``L-1``. The bond dimension is therefore at most
    ``2 + sum(i - 1)`` for open chains (plus one per wrapped block).
    """
    spec.validate()
    L = spec.length
    periodic = spec.boundary is Boundary.PERIODIC
    complex_ops = any(t.axis == "y" for t in spec.terms)
    dtype = complex if complex_ops else float

    chains = []   # (term, first state index)
    wraps = []    # (term, k, coupling, state index)
    nstates = 1
    for t in spec.terms:
        if t.length > 1:
            chains.append((t, nstates))
            nstates += t.length - 1
    if periodic:
        for t in spec.terms:
            for k in range(1, t.length):
                wraps.append((t, k, t.couplings[L - t.length + k], nstates))
                nstates += 1
    done = nstates
    D = nstates + 1

    eye = PAULI["I"]
    sites = []
    for n in range(L):
        W = np.zeros((D, 2, 2, D), dtype=dtype)
        W[0, :, :, 0] = eye
        W[done, :, :, done] = eye
        for t in spec.terms:
            sig = PAULI[t.axis.upper()]
            if t.length == 1 and n <= L - 1:
                W[0, :, :, done] += t.couplings[n] * sig
        for t, s0 in chains:
            sig = PAULI[t.axis.upper()]
            if n <= L - t.length:
                W[0, :, :, s0] += t.couplings[n] * sig
            for p in range(t.length - 2):
                W[s0 + p, :, :, s0 + p + 1] += sig
            W[s0 + t.length - 2, :, :, done] += sig
        for t, k, h, s in wraps:
            sig = PAULI[t.axis.upper()]
            right_start = L - (t.length - k)
            if n == 0:
                W[0, :, :, s] += h * sig
            elif n == L - 1:
                W[s, :, :, done] += sig
            else:
                W[s, :, :, s] += sig if (n < k or n >= right_start) else eye
        sites.append(W)
    sites[0] = sites[0][0:1]
    sites[-1] = sites[-1][..., done:done + 1]
    return TensorTrainOperator._from_sites(sites, validate=True)


# --------------------------------------------------------------------------
# chiral witnesses


def _third(a: str, b: str) -> str:
    (c,) = set(AXES) - {a, b}
    return c


def _grid(L: int, period: int, axis: str) -> str:
    """``(I^(period-1) sigma_axis)^(L // period) I^(L % period)``."""
    full = L // period
    return ("I" * (period - 1) + axis.upper()) * full + "I" * (L % period)


def _uniform(L: int, axis: str) -> str:
    return axis.upper() * L


def _is_odd(n: int) -> bool:
    return n % 2 == 1


def _single_obc(spec, st):
    if spec.boundary is Boundary.OPEN and len(st) == 1:
        (ax, lengths), = st.items()
        if len(lengths) == 1:
            (i,) = lengths
            return _grid(spec.length, i, _FLIP[ax])
    return None


def _single_pbc_odd(spec, st):
    if spec.boundary is Boundary.PERIODIC and len(st) == 1:
        (ax, lengths), = st.items()
        if len(lengths) == 1 and _is_odd(next(iter(lengths))):
            return _uniform(spec.length, _FLIP[ax])
    return None


def _double_obc_different(spec, st):
    if spec.boundary is not Boundary.OPEN or len(st) != 2:
        return None
    if any(len(v) != 1 for v in st.values()):
        return None
    (a, (i,)), (b, (k,)) = ((ax, tuple(v)) for ax, v in sorted(st.items()))
    g = _third(a, b)
    L = spec.length
    if i == k:
        return _grid(L, i, g)
    labels = []
    for s in range(L):
        on_i = (s + 1) % i == 0 and s < i * (L // i)
        on_k = (s + 1) % k == 0 and s < k * (L // k)
        if on_i and on_k:
            labels.append(g)
        elif on_i:
            labels.append(b)      # one flip per sigma_a block
        elif on_k:
            labels.append(a)      # one flip per sigma_b block
        else:
            labels.append("I")
    return "".join(labels).upper()


def _double_obc_equal(spec, st):
    if spec.boundary is Boundary.OPEN and len(st) == 1:
        (ax, lengths), = st.items()
        if len(lengths) == 2 and all(_is_odd(n) for n in lengths):
            return _uniform(spec.length, _FLIP[ax])
    return None


def _double_obc_div(spec, st):
    if spec.boundary is Boundary.OPEN and len(st) == 1:
        (ax, lengths), = st.items()
        if len(lengths) == 2:
            k, i = sorted(lengths)
            if i % k == 0 and _is_odd(i // k):
                return _grid(spec.length, k, _FLIP[ax])
    return None


def _double_pbc_odd(spec, st):
    if spec.boundary is Boundary.PERIODIC and len(st) == 2:
        if all(len(v) == 1 and _is_odd(next(iter(v))) for v in st.values()):
            a, b = sorted(st)
            return _uniform(spec.length, _third(a, b))
    return None


def _triple_obc_odd(spec, st):
    if spec.boundary is not Boundary.OPEN or len(st) != 3:
        return None
    if any(len(v) != 1 for v in st.values()):
        return None
    lengths = {ax: next(iter(v)) for ax, v in st.items()}
    L = spec.length
    for a, b, g in itertools.permutations(AXES):
        i, k, m = lengths[a], lengths[b], lengths[g]
        if _is_odd(i) and _is_odd(m) and i < k:
            return (b.upper() * (k - 1) + a.upper()) * (L // k) + b.upper() * (L % k)
    return None


def _triple_obc_two(spec, st):
    if spec.boundary is not Boundary.OPEN or len(st) != 2:
        return None
    items = sorted(st.items())
    for (a, la), (b, lb) in (items, items[::-1]):
        if len(la) == 1 and len(lb) == 2:
            (i,) = la
            if all(_is_odd(n) for n in la | lb) and i < max(lb):
                return _uniform(spec.length, _third(a, b))
    return None


def _generalized_odd(spec, st):
    L = spec.length
    all_odd = all(_is_odd(n) for v in st.values() for n in v)
    if len(st) == 1:
        (ax, lengths), = st.items()
        if all_odd:
            return _uniform(L, _FLIP[ax])
        if spec.boundary is Boundary.OPEN:
            k = min(lengths)
            if all(n % k == 0 and _is_odd(n // k) for n in lengths):
                return _grid(L, k, _FLIP[ax])
        return None
    if len(st) == 2 and all_odd:
        a, b = sorted(st)
        return _uniform(L, _third(a, b))
    return None


WITNESS_CLASSES = (
    ("single_obc", _single_obc),
    ("single_pbc_odd", _single_pbc_odd),
    ("double_obc_different", _double_obc_different),
    ("double_obc_equal", _double_obc_equal),
    ("double_obc_div", _double_obc_div),
    ("double_pbc_odd", _double_pbc_odd),
    ("triple_obc_odd", _triple_obc_odd),
    ("triple_obc_two", _triple_obc_two),
    ("generalized_odd", _generalized_odd),
)


def witness_classes(spec: InteractionSpec) -> list[tuple[str, str]]:
    """Every class whose hypotheses ``spec`` meets, with the proposed labels
    (verified or not), in dispatch order."""
    st = spec.structure()
    out = []
    for name, rule in WITNESS_CLASSES:
        labels = rule(spec, st)
        if labels is not None:
            out.append((name, labels))
    return out


def construct_chiral_unitary(spec: InteractionSpec) -> PauliString | None:
    """First verified Pauli-string witness ``R`` with ``R H = -H R``, or None.

    Candidate constructions are tried most specific first; a candidate is
    returned only if it anticommutes with every Pauli term of ``H``. None
    does not mean the spectrum is asymmetric.
    """
    terms = [k for k, v in pauli_terms(spec).items() if v != 0.0] or list(pauli_terms(spec))
    for name, labels in witness_classes(spec):
        if all(anticommutes(labels, t) for t in terms):
            return PauliString(labels, 1.0, source=name)
    return None


def verify_anticommutation(H, R: PauliString | str,
                           settings: CompressionSettings | None = None) -> float:
    """``||R H + H R||_F / ||H||_F``.

    ``H`` may be a :class:`TensorTrainOperator` (MPO arithmetic), an
    :class:`InteractionSpec` or a ``{labels: coefficient}`` mapping; the
    latter two are evaluated exactly by Pauli symbol algebra: distinct Pauli
    strings are Frobenius-orthogonal, so only commuting terms contribute,
    each with ``2 |c|``.
    """
    if isinstance(R, str):
        R = PauliString.from_str(R)
    if isinstance(H, InteractionSpec):
        H = pauli_terms(H)
    if isinstance(H, Mapping):
        total = sum(abs(c) ** 2 for c in H.values())
        for k in H:
            if len(k) != len(R):
                raise ValueError(f"term {k!r} and witness {R} have different lengths")
        if total == 0:
            return 0.0
        bad = sum(abs(c) ** 2 for k, c in H.items() if not anticommutes(R.labels, k))
        return float(2.0 * np.sqrt(bad / total))
    if not isinstance(H, TensorTrainOperator):
        raise TypeError(f"unsupported operator type {type(H).__name__}")
    if H.length != len(R):
        raise ValueError(f"operator has {H.length} sites, witness has {len(R)}")
    Rm = pauli_string_to_mpo(R)
    nrm = tt.frobenius_norm(H)
    if nrm == 0:
        return 0.0
    RH = tt.multiply(Rm, H, settings)
    HR = tt.multiply(H, Rm, settings)
    return tt.difference_norm(RH, tt.scalar_multiply(-1.0, HR)) / nrm


def hamiltonian_from_terms(terms: Mapping[str, float] | Iterable) -> TensorTrainOperator:
    """Exact MPO of an arbitrary Pauli sum (bond dims add, then exact compression)."""
    items = terms.items() if isinstance(terms, Mapping) else terms
    out = None
    for labels, c in items:
        op = tt.scalar_multiply(c, pauli_string_to_mpo(labels))
        out = op if out is None else tt.add(out, op, CompressionSettings.exact())
    if out is None:
        raise ValueError("empty Pauli sum")
    return out
