"""Trace functions ``Tr f(A)`` of Hermitian matrix product operators.

Global Lanczos on tensor-train operators combined with Gauss quadrature,
with a chiral fast path for Hamiltonians whose spectrum is symmetric about
zero and runtime diagnostics of the Krylov basis.
"""

from .tt_core import (
    CompressionInfo,
    CompressionSettings,
    CompressionWarning,
    DenseCapExceeded,
    NumericalFailure,
    TensorTrainOperator,
    add,
    compress,
    difference_norm,
    frobenius_norm,
    from_dense,
    identity_mpo,
    inner_product,
    load,
    multiply,
    product_mpo,
    save,
    scalar_multiply,
    to_dense,
    trace,
)
from .krylov import (
    JacobiMatrix,
    LanczosMode,
    QuadratureReport,
    SpectralFunction,
    StoppingCriteria,
    assemble_jacobi,
    quadrature,
    run_lanczos,
)
from .spin_hamiltonians import (
    Boundary,
    InteractionSpec,
    PauliString,
    Term,
    build_hamiltonian,
    construct_chiral_unitary,
    pauli_string_to_mpo,
    tfim_spec,
    verify_anticommutation,
)
from .diagnostics import (
    SymmetryKind,
    check_commutation,
    check_symmetry,
    check_traceless,
    monitor_alphas,
)

__version__ = "0.1.0"
