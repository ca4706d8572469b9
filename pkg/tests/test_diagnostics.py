import numpy as np
import pytest

from mpotrace import tt_core as tt
from mpotrace.diagnostics import (AlphaMonitor, MonitorSettings, SymmetryKind, audit,
                                  check_commutation, check_symmetry, check_traceless, exchange_mpo,
                                  monitor_alphas, symmetry_kinds_of)
from mpotrace.krylov import SpectralFunction, StoppingCriteria, run_lanczos
from mpotrace.oracle import dense_global_lanczos, dense_tfim
from mpotrace.spin_hamiltonians import build_hamiltonian, pauli_string_to_mpo, tfim_spec
from mpotrace.tt_core import CompressionSettings

from conftest import exchange
from basis_properties import PROPERTIES, dense_commutation, parity_residual, random_input, residuals

EXP = SpectralFunction.exp_neg_beta(1.0)


def test_exchange_string_is_antidiagonal_permutation():
    for L in range(1, 9):
        J = exchange_mpo(L)
        assert J.bond_dimension == 1
        assert np.array_equal(J.to_dense(), exchange(L))


# -- trace ----------------------------------------------------------------------------

def test_traceless_examples():
    for L in (1, 3, 6):
        N = 2**L
        Iop = tt.identity_mpo(L)
        assert np.isclose(check_traceless(Iop), np.sqrt(N))
        assert tt.trace(Iop) == N
    _, basis = dense_global_lanczos(dense_tfim(4), 6, retain_all=True)
    # the first basis element after the identity start is H / ||H||
    assert check_traceless(tt.from_dense(basis[1])) <= 1e-12
    assert check_traceless(pauli_string_to_mpo("ZZZ")) == 0.0


# -- commutation ---------------------------------------------------------------------

def test_commutation_examples():
    A = build_hamiltonian(tfim_spec(5, 0.8, 1.1))
    assert check_commutation(A, tt.identity_mpo(5)) <= 1e-15
    assert check_commutation(A, A) <= 1e-15
    _, basis = dense_global_lanczos(dense_tfim(2), 10, retain_all=True)
    H2 = build_hamiltonian(tfim_spec(2))
    for U in basis[:-1]:
        assert check_commutation(H2, tt.from_dense(U)) <= 1e-10


def test_commutation_detects_and_bounds():
    A = build_hamiltonian(tfim_spec(4))
    U = pauli_string_to_mpo("ZIII")
    val, unc = check_commutation(A, U, CompressionSettings(max_bond=2), with_uncertainty=True)
    assert val > 0.05 and unc >= 0.0
    with pytest.raises(ValueError):
        check_commutation(A, tt.identity_mpo(3))


# -- symmetry ------------------------------------------------------------------------

@pytest.mark.parametrize("kind", list(SymmetryKind))
def test_identity_has_every_symmetry(kind):
    assert check_symmetry(tt.identity_mpo(4), kind) <= 1e-15


def test_symmetry_examples():
    assert check_symmetry(pauli_string_to_mpo("XX"), "centrosymmetric") <= 1e-15
    # J (Z x I) J = -(Z x I), so ||J U - U J|| = 2 ||U||
    U = pauli_string_to_mpo("ZI")
    Ud, J = U.to_dense(), exchange(2)
    dense = np.linalg.norm(J @ Ud - Ud @ J) / np.linalg.norm(Ud)
    assert dense == pytest.approx(2.0)
    assert check_symmetry(U, SymmetryKind.CENTROSYMMETRIC) == pytest.approx(2.0)


def _dense_residual(U, kind):
    J = exchange(int(np.log2(U.shape[0])))
    lhs, rhs = {
        "symmetric": (U, U.T),
        "persymmetric": (U @ J, J @ U.T),
        "centrosymmetric": (J @ U, U @ J),
        "hermitian": (U, U.conj().T),
        "perhermitian": (U @ J, J @ U.conj().T),
        "centrohermitian": (J @ U, U.conj() @ J),
    }[kind]
    return np.linalg.norm(lhs - rhs) / np.linalg.norm(U)


@pytest.mark.parametrize("kind", [k.value for k in SymmetryKind])
def test_symmetry_residual_matches_dense(kind):
    rng = np.random.default_rng(3)
    M = rng.standard_normal((8, 8)) + 1j * rng.standard_normal((8, 8))
    assert check_symmetry(tt.from_dense(M), kind) == pytest.approx(_dense_residual(M, kind), rel=1e-10)


def test_symmetry_kinds_of_tfim():
    kinds = symmetry_kinds_of(build_hamiltonian(tfim_spec(4)))
    assert SymmetryKind.SYMMETRIC in kinds and SymmetryKind.HERMITIAN in kinds
    # the field term is odd under the global flip, so TFIM is not centrosymmetric
    assert SymmetryKind.CENTROSYMMETRIC not in kinds


# -- alpha monitor -----------------------------------------------------------------------

def test_monitor_alphas_examples():
    jac, _ = dense_global_lanczos(dense_tfim(4), 30, f=EXP, rel_change_tol=1e-12)
    mon = monitor_alphas(jac, 1e-8)
    assert isinstance(mon, AlphaMonitor) and not mon
    assert mon.certifies_accuracy is False

    shifted = dense_tfim(3) + np.eye(8)
    jac, _ = dense_global_lanczos(shifted, 10)
    mon = monitor_alphas(jac, 1e-8)
    assert mon.iterations[0] == 1
    assert mon.warnings[0].alpha == pytest.approx(1.0)


def test_monitor_alphas_under_truncation():
    H = build_hamiltonian(tfim_spec(8))
    r = run_lanczos(H, EXP, "chiral_safe", CompressionSettings(max_bond=2), StoppingCriteria(30, 1e-10))
    jac = r.jacobi.copy()
    jac.alphas = [a for a in r.computed_alphas]
    mon = monitor_alphas(jac, 1e-8)
    assert all(isinstance(i, int) and 1 <= i <= r.iterations for i in mon.iterations)
    assert mon.certifies_accuracy is False


# -- in-loop monitor -------------------------------------------------------------------------

def test_iteration_monitor_records():
    H = build_hamiltonian(tfim_spec(4))
    mon = MonitorSettings(commutation_every=2, symmetry_every=3)
    r = run_lanczos(H, EXP, "chiral_fast", CompressionSettings.exact(), StoppingCriteria(9, 1e-300),
                    monitors=mon)
    assert [d.iteration for d in r.diagnostics] == list(range(1, r.iterations + 1))
    assert r.diagnostics[0].trace_residual == pytest.approx(4.0)   # U_1 = I / 4
    assert all(d.trace_residual <= 1e-10 for d in r.diagnostics[1:])
    assert r.diagnostics[1].commutation_residual is not None
    assert r.diagnostics[0].commutation_residual is None
    assert set(r.diagnostics[2].symmetry_residuals) == {"symmetric", "hermitian"}
    assert all(d.alpha_abs is not None and d.alpha_abs < 1e-12 for d in r.diagnostics)
    assert not any(d.warnings for d in r.diagnostics)


def test_iteration_monitor_flags_truncation_damage():
    H = build_hamiltonian(tfim_spec(10))
    r = run_lanczos(H, EXP, "chiral_fast", CompressionSettings(max_bond=3), StoppingCriteria(20, 1e-300),
                    monitors=MonitorSettings(commutation_every=1, symmetry_every=0))
    assert any("commutation" in d.warnings for d in r.diagnostics)


def test_audit_rows():
    H = build_hamiltonian(tfim_spec(3))
    r = run_lanczos(H, EXP, "vanilla", CompressionSettings.exact(), StoppingCriteria(5, 1e-300),
                    retain_basis=True)
    basis = {i + 1: U for i, U in enumerate(r.basis)}
    rows = audit(H, basis, r.jacobi.alphas, r.jacobi.beta1)
    checks = {c for c, _, _ in rows}
    assert {"trace_abs", "trace_resid", "commute_resid", "orthogonality", "alpha_rel"} <= checks
    assert all(v >= 0 for _, _, v in rows)
    rows = audit(None, {0: tt.identity_mpo(3)})
    assert ("trace_abs", "operator", 8.0) in rows


# -- structural properties (reduced sample; the acceptance module runs 100) ----

@pytest.mark.parametrize("prop", PROPERTIES)
def test_basis_properties_on_random_inputs(prop):
    rng = np.random.default_rng(20 + PROPERTIES.index(prop))
    for _ in range(5):
        A = random_input(prop, rng, int(rng.integers(2, 5)))
        assert max(residuals(prop, A)) <= 1e-8


def test_dense_commutation_matches_diagnostics():
    rng = np.random.default_rng(6)
    A = random_input("commutation", rng, 3)
    U = random_input("hermitian", rng, 3)
    assert dense_commutation(A, U) == pytest.approx(
        check_commutation(tt.from_dense(A), tt.from_dense(U)), rel=1e-10)


def test_parity_residual_detects_mixed_parity():
    rng = np.random.default_rng(4)
    A = random_input("parity", rng, 3)
    B = A / np.linalg.norm(A, 2)
    assert parity_residual(A, B @ B, 2) <= 1e-12
    assert parity_residual(A, B @ B + 0.1 * B, 2) > 1e-3
