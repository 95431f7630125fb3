"""Shell commutator operators, generators, semigroups, CP certification."""

import numpy as np
import pytest

from spinqds.lattice import (
    LocalOperator,
    embed_into,
    make_shell_family,
    make_window,
    matrix_units,
    pauli_matrices,
)
from spinqds.lindblad import (
    ALGEBRA_FORM,
    GNS_FORM,
    Superoperator,
    adjoint_shell_op,
    choi_matrix,
    cp_certify,
    g_op,
    lindblad_form_superop,
    remark_lindblad_superop,
    semigroup,
    semigroup_on_gns,
    shell_commutator_op,
    unvec,
    vec,
)
from spinqds.studies import random_shell_family

EYE, SX, SY, SZ = pauli_matrices()


def sigma_x_family():
    w0 = make_window(0, 1)
    return make_shell_family([(0, LocalOperator(w0, 2, SX))], local_dim=2, dim=1)


def zero_family():
    w0 = make_window(0, 1)
    return make_shell_family([(0, LocalOperator(w0, 2, np.zeros((2, 2))))],
                             local_dim=2, dim=1)


# --- vectorization convention --------------------------------------------------


def test_vec_unvec_roundtrip():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(5, 5)) + 1j * rng.normal(size=(5, 5))
    assert np.array_equal(unvec(vec(x)), x)


def test_vec_is_column_stacking():
    x = np.array([[1, 2], [3, 4]])
    assert np.array_equal(vec(x), [1, 3, 2, 4])


def test_sandwich_identity():
    rng = np.random.default_rng(1)
    a, x, b = (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)) for _ in range(3))
    assert np.max(np.abs(np.kron(b.T, a) @ vec(x) - vec(a @ x @ b))) < 1e-12


# --- shell commutator operators --------------------------------------------------


def test_commutator_op_zero_shells():
    c = shell_commutator_op(zero_family(), 0)
    assert np.max(np.abs(c.matrix)) == 0


def test_commutator_op_sigma_x_spectrum():
    # ad_{sigma_x} on 2x2 matrices has eigenvalues {2, -2, 0, 0}.
    c = shell_commutator_op(sigma_x_family(), 0)
    eigs = np.sort(np.linalg.eigvals(c.matrix).real)
    assert np.allclose(eigs, [-2, 0, 0, 2], atol=1e-12)


def test_commutator_op_matches_direct_commutator():
    rng = np.random.default_rng(2)
    fam = random_shell_family(rng, 1)
    c = shell_commutator_op(fam, 1)
    r = fam.partial_sum(1)
    x = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    lhs = unvec(c.matrix @ vec(x))
    rhs = r.matrix @ x - x @ r.matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-12


@pytest.mark.parametrize("p,m", [(0, 1), (0, 2), (1, 2)])
def test_commutator_op_restriction_tower(p, m):
    rng = np.random.default_rng(3 + p + m)
    fam = random_shell_family(rng, 2)
    c_p = shell_commutator_op(fam, p)
    c_m = shell_commutator_op(fam, m)
    w_m = c_m.window
    for unit in matrix_units(c_p.window):
        x = LocalOperator(c_p.window, 2, unit)
        lhs = c_m.apply(embed_into(x, w_m))
        rhs = embed_into(c_p.apply(x), w_m)
        assert np.max(np.abs(lhs.matrix - rhs.matrix)) < 1e-12


def test_commutator_op_invariance_of_embedded_subalgebra():
    # Level-2 operator maps the embedded level-1 algebra into itself.
    rng = np.random.default_rng(6)
    fam = random_shell_family(rng, 2)
    c2 = shell_commutator_op(fam, 2)
    w1, w2 = make_window(1, 1), c2.window
    x = LocalOperator(w1, 2, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
    image = c2.apply(embed_into(x, w2))
    # Re-embedding its restriction must reproduce it exactly.
    c1 = shell_commutator_op(fam, 1)
    again = embed_into(c1.apply(x), w2)
    assert np.max(np.abs(image.matrix - again.matrix)) < 1e-12


def test_level_above_max_shell_rejected():
    with pytest.raises(ValueError, match="exceeds"):
        shell_commutator_op(sigma_x_family(), 1)


# --- adjoint identity -------------------------------------------------------------


def test_adjoint_op_selfadjoint_shells():
    fam = sigma_x_family()
    assert np.array_equal(adjoint_shell_op(fam, 0).matrix,
                          shell_commutator_op(fam, 0).matrix)


def test_adjoint_op_is_conjugate_transpose():
    w0 = make_window(0, 1)
    fam = make_shell_family([(0, LocalOperator(w0, 2, SX + 1j * SZ))],
                            local_dim=2, dim=1)
    assert np.max(np.abs(adjoint_shell_op(fam, 0).matrix
                         - shell_commutator_op(fam, 0).matrix.conj().T)) < 1e-12


def test_adjoint_pairing_identity_on_all_basis_pairs():
    # Oracle: <[r*, x], y> and <x, [r, y]> evaluated as direct traces, over
    # every pair of matrix units of the window algebra.
    rng = np.random.default_rng(7)
    fam = random_shell_family(rng, 1)
    r = fam.partial_sum(1).matrix
    side = r.shape[0]
    c = shell_commutator_op(fam, 1).matrix
    c_star = adjoint_shell_op(fam, 1).matrix
    units = matrix_units(make_window(1, 1))
    for x in units:
        cx_star = (r.conj().T @ x - x @ r.conj().T).conj().T
        for y in units:
            lhs_direct = np.trace(cx_star @ y) / side
            rhs_direct = np.trace(x.conj().T @ (r @ y - y @ r)) / side
            assert abs(lhs_direct - rhs_direct) < 1e-12
            lhs = np.vdot(c_star @ vec(x), vec(y)) / side
            rhs = np.vdot(vec(x), c @ vec(y)) / side
            assert abs(lhs - lhs_direct) < 1e-12 and abs(rhs - rhs_direct) < 1e-12


# --- drift term -----------------------------------------------------------------


def test_g_op_zero_shells():
    assert np.max(np.abs(g_op(zero_family(), 0).matrix)) == 0


def test_g_op_sigma_x_spectrum():
    # G = -1/2 ad^2 with ad spectrum {2,-2,0,0} gives {0, 0, -2, -2}.
    g = g_op(sigma_x_family(), 0)
    assert np.allclose(np.sort(np.linalg.eigvalsh(g.matrix)), [-2, -2, 0, 0],
                       atol=1e-12)


def test_g_op_negative_semidefinite_selfadjoint():
    rng = np.random.default_rng(8)
    for _ in range(5):
        fam = random_shell_family(rng, 1)
        g = g_op(fam, 1).matrix
        assert np.max(np.abs(g - g.conj().T)) < 1e-12
        assert np.linalg.eigvalsh(g).max() <= 1e-12


# --- contraction semigroup --------------------------------------------------------


def test_semigroup_on_gns_at_zero():
    g = g_op(sigma_x_family(), 0)
    assert np.max(np.abs(semigroup_on_gns(g, 0.0).matrix - np.eye(4))) == 0


def test_semigroup_on_gns_sigma_x_eigenvalues():
    g = g_op(sigma_x_family(), 0)
    for t in (0.2, 0.7):
        eigs = np.sort(np.linalg.eigvalsh(semigroup_on_gns(g, t).matrix))
        expected = np.sort([1.0, 1.0, np.exp(-2 * t), np.exp(-2 * t)])
        assert np.allclose(eigs, expected, atol=1e-12)


def test_semigroup_on_gns_law_and_contraction():
    rng = np.random.default_rng(9)
    fam = random_shell_family(rng, 1)
    g = g_op(fam, 1)
    s, t = 0.3, 0.45
    lhs = semigroup_on_gns(g, s).matrix @ semigroup_on_gns(g, t).matrix
    rhs = semigroup_on_gns(g, s + t).matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-10
    assert np.linalg.norm(semigroup_on_gns(g, t).matrix, 2) <= 1 + 1e-10


def test_semigroup_on_gns_leaves_embedded_algebra_invariant():
    rng = np.random.default_rng(10)
    fam = random_shell_family(rng, 2)
    g2 = g_op(fam, 2)
    g1 = g_op(fam, 1)
    w1, w2 = g1.window, g2.window
    x = LocalOperator(w1, 2, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
    t = 0.4
    lhs = semigroup_on_gns(g2, t).apply(embed_into(x, w2))
    rhs = embed_into(semigroup_on_gns(g1, t).apply(x), w2)
    assert np.max(np.abs(lhs.matrix - rhs.matrix)) < 1e-10


def test_semigroup_rejects_bad_time():
    g = g_op(sigma_x_family(), 0)
    with pytest.raises(ValueError):
        semigroup_on_gns(g, float("nan"))
    with pytest.raises(ValueError):
        semigroup_on_gns(g, -0.1)


# --- sandwich-form generator ------------------------------------------------------


def test_lindblad_form_annihilates_identity():
    lf = lindblad_form_superop(sigma_x_family(), 0)
    assert lf.identity_defect() < 1e-12


def test_lindblad_form_kills_commuting_operand():
    # For self-adjoint shells L(X) = 0 whenever [X, C] = 0; X = C itself.
    fam = sigma_x_family()
    c = shell_commutator_op(fam, 0)
    lf = lindblad_form_superop(fam, 0)
    assert np.max(np.abs(lf.apply(c.matrix))) < 1e-12


def test_lindblad_form_against_term_oracle():
    # Oracle: assemble all 16x16 entries from the three terms one unit at a time.
    fam = sigma_x_family()
    c = shell_commutator_op(fam, 0).matrix
    g = -0.5 * c.conj().T @ c
    lf = lindblad_form_superop(fam, 0)
    oracle = np.zeros((16, 16), dtype=complex)
    for col in range(16):
        e = np.zeros(16, dtype=complex)
        e[col] = 1.0
        x = unvec(e)
        image = c.conj().T @ x @ c + x @ g + g.conj().T @ x
        oracle[:, col] = vec(image)
    assert np.max(np.abs(lf.matrix - oracle)) < 1e-12


def test_lindblad_form_sesquilinear_terms():
    # <u, L(X) v> decomposes into the three sesquilinear terms.
    rng = np.random.default_rng(11)
    fam = sigma_x_family()
    c = shell_commutator_op(fam, 0).matrix
    g = -0.5 * c.conj().T @ c
    lf = lindblad_form_superop(fam, 0)
    u = rng.normal(size=4) + 1j * rng.normal(size=4)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    x = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    lhs = np.vdot(u, lf.apply(x) @ v)
    rhs = np.vdot(u, x @ (g @ v)) + np.vdot(g @ u, x @ v) + np.vdot(c @ u, x @ (c @ v))
    assert abs(lhs - rhs) < 1e-12


def test_gns_form_capacity():
    from spinqds.lattice import CapacityError

    rng = np.random.default_rng(12)
    fam = random_shell_family(rng, 1)
    with pytest.raises(CapacityError):
        lindblad_form_superop(fam, 1, cap=256)


# --- algebra-form dissipator -------------------------------------------------------


def test_remark_lindblad_annihilates_identity():
    la = remark_lindblad_superop(sigma_x_family(), 0)
    assert la.identity_defect() < 1e-13


def test_remark_lindblad_single_site_action():
    # Oracle (by hand): L(X) = sx X sx - X, so L(sz) = -2 sz.
    la = remark_lindblad_superop(sigma_x_family(), 0)
    assert np.max(np.abs(la.apply(SZ) + 2 * SZ)) < 1e-13
    assert np.max(np.abs(la.apply(SX))) < 1e-13


def test_remark_lindblad_half_commutator_form():
    # The jump form equals 1/2 sum {W^dag [X,W] + [W^dag,X] W} term by term.
    rng = np.random.default_rng(13)
    fam = random_shell_family(rng, 1)
    la = remark_lindblad_superop(fam, 1)
    x = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    w1 = make_window(1, 1)
    acc = np.zeros_like(x)
    for level, weight in fam.shells:
        w = embed_into(weight, w1).matrix
        acc += 0.5 * (w.conj().T @ (x @ w - w @ x) + (w.conj().T @ x - x @ w.conj().T) @ w)
    assert np.max(np.abs(la.apply(x) - acc)) < 1e-12


def test_remark_lindblad_stable_under_level_increase():
    rng = np.random.default_rng(14)
    fam = random_shell_family(rng, 2)
    l1 = remark_lindblad_superop(fam, 1)
    l2 = remark_lindblad_superop(fam, 2)
    w1, w2 = l1.window, l2.window
    x = LocalOperator(w1, 2, rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8)))
    lhs = l2.apply(embed_into(x, w2).matrix)
    rhs = embed_into(LocalOperator(w1, 2, l1.apply(x.matrix)), w2).matrix
    assert np.max(np.abs(lhs - rhs)) < 1e-12


# --- semigroups of the generators ----------------------------------------------------


def test_semigroup_identity_at_zero():
    la = remark_lindblad_superop(sigma_x_family(), 0)
    assert np.max(np.abs(semigroup(la, 0.0).matrix - np.eye(4))) == 0


@pytest.mark.parametrize("flavor", [GNS_FORM, ALGEBRA_FORM])
def test_semigroup_conservative(flavor):
    fam = sigma_x_family()
    gen = (lindblad_form_superop if flavor == GNS_FORM else remark_lindblad_superop)(fam, 0)
    for t in (0.1, 0.5, 1.0):
        assert semigroup(gen, t).identity_defect() < 1e-10


def test_semigroup_sigma_x_decay():
    la = remark_lindblad_superop(sigma_x_family(), 0)
    for t in (0.1, 0.5, 1.0):
        got = semigroup(la, t).apply(SZ)
        assert np.max(np.abs(got - np.exp(-2 * t) * SZ)) < 1e-12


def test_semigroup_requires_generator():
    la = remark_lindblad_superop(sigma_x_family(), 0)
    tmap = semigroup(la, 0.5)
    with pytest.raises(ValueError, match="generator"):
        semigroup(tmap, 0.5)


def test_flavor_mixing_rejected():
    fam = sigma_x_family()
    lg = lindblad_form_superop(fam, 0)
    la = remark_lindblad_superop(fam, 0)
    with pytest.raises(ValueError, match="flavor"):
        _ = lg @ la


# --- Choi / CP -------------------------------------------------------------------


def test_choi_of_identity_map():
    side = 4
    ident = Superoperator(make_window(0, 1), 2, ALGEBRA_FORM,
                          np.eye(side), generator=False)
    choi = choi_matrix(ident)
    eigs = np.linalg.eigvalsh(choi)
    assert abs(eigs[-1] - 2.0) < 1e-12 and np.all(eigs[:-1] > -1e-12)
    assert abs(np.linalg.matrix_rank(choi) - 1) == 0
    report = cp_certify(ident)
    assert report.min_choi_eigenvalue > -1e-12
    assert report.identity_defect == 0


def test_choi_of_transpose_map_not_cp():
    # Transpose map: T(E_ab) = E_ba; canonical non-CP witness.
    side = 2
    mat = np.zeros((4, 4))
    for a in range(side):
        for b in range(side):
            mat[b + side * a, a + side * b] = 1.0
    transpose = Superoperator(make_window(0, 1), 2, ALGEBRA_FORM, mat)
    report = cp_certify(transpose)
    assert abs(report.min_choi_eigenvalue + 1.0) < 1e-12


def test_cp_of_sigma_x_semigroup():
    la = remark_lindblad_superop(sigma_x_family(), 0)
    report = cp_certify(semigroup(la, 0.3))
    assert report.min_choi_eigenvalue > -1e-10
    assert report.hermiticity_defect < 1e-12


def test_cp_on_time_grid_random_models():
    rng = np.random.default_rng(15)
    for _ in range(3):
        fam = random_shell_family(rng, 2)
        gen = remark_lindblad_superop(fam, 1)
        for t in (0.1, 0.4, 1.0):
            report = cp_certify(semigroup(gen, t))
            assert report.min_choi_eigenvalue > -1e-10
            assert report.identity_defect < 1e-10


def test_generator_consistency_first_order_in_h():
    fam = sigma_x_family()
    gen = remark_lindblad_superop(fam, 0)
    defects = []
    eye = np.eye(gen.matrix.shape[0])
    for h in (1e-2, 5e-3, 2.5e-3):
        t_h = semigroup(gen, h)
        defects.append(np.linalg.norm((t_h.matrix - eye) / h - gen.matrix, 2))
    for d0, d1 in zip(defects, defects[1:]):
        assert 1.7 <= d0 / d1 <= 2.3
