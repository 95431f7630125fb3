"""Quantum dynamical semigroups on finite spin-lattice windows.

Finite sup-norm windows of a lattice of N-level sites carry full matrix
algebras; shell-supported weights define commutator couplings, drift
terms and two flavors of dissipative generator on them, and a
repeated-interaction noise lattice dilates the resulting semigroups by
exactly unitary (or first-order block) step operators.  Everything is
dense, desk-scale and exhaustively cross-checkable.
"""

from spinqds.lattice import (
    CapacityError,
    LocalOperator,
    ShellFamily,
    Window,
    WindowMismatchError,
    boundary_sites,
    commutator,
    embed,
    embed_block,
    embed_into,
    gns_inner,
    identity,
    make_shell_family,
    make_window,
    normalized_trace,
    pauli_matrices,
    shell_sites,
    support,
)
from spinqds.lindblad import (
    CpReport,
    GnsOperator,
    Superoperator,
    adjoint_shell_op,
    cp_certify,
    g_op,
    lindblad_form_superop,
    remark_lindblad_superop,
    semigroup,
    semigroup_on_gns,
    shell_commutator_op,
)
from spinqds.dilation import (
    DiscretizedExponentialVector,
    HPCoefficients,
    StepSequence,
    ToyFockGrid,
    assemble_coefficients,
    build_exact_steps,
    build_first_order_steps,
    check_ito_unitarity,
    dual_steps,
    evans_hudson_flow,
    evolve,
    exp_inner,
    exp_vector,
    matrix_element,
    step_first_order,
    step_unitary_exact,
    theta_map,
    vacuum_expectation_flow,
)

__version__ = "0.1.0"
