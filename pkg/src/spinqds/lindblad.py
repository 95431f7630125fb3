"""Structure maps and semigroups on vectorized window algebras.

Vectorization is column-stacking throughout: ``vec(x) = x.reshape(-1,
order="F")``, so ``vec(a @ x @ b) = kron(b.T, a) @ vec(x)``.  Under the
normalized-trace inner product the rescaled matrix units are an
orthonormal basis of the vectorized algebra, and the inner product of
vectorized elements is the standard one up to a constant factor; the
adjoint of a matrix acting on vectorized elements is therefore its plain
conjugate transpose.

Two superoperator flavors appear:

* ``gns_form`` acts on operators over the vectorized algebra (side is the
  square of the vector-space side) and realises the sandwich generator
  ``X -> C^dag X C + X G + G^dag X``.
* ``algebra_form`` acts on the algebra itself and realises the dissipator
  ``X -> 1/2 sum_j { W_j^dag [X, W_j] + [W_j^dag, X] W_j }``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from spinqds.lattice import (
    DEFAULT_DIM_CAP,
    LocalOperator,
    ShellFamily,
    Window,
    WindowMismatchError,
    _check_cap,
    embed_into,
    make_window,
)

GNS_FORM = "gns_form"
ALGEBRA_FORM = "algebra_form"

CONSERVATIVITY_TOL = 1e-12


def vec(x: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(x).reshape(-1, order="F")

def unvec(v: np.ndarray) -> np.ndarray:
    side = int(round(np.sqrt(v.size)))
    return np.asarray(v).reshape(side, side, order="F")


def left_mult_matrix(a: np.ndarray) -> np.ndarray:
    """Matrix of ``x -> a x`` on vectorized elements."""
    side = a.shape[0]
    return np.kron(np.eye(side, dtype=np.complex128), a)

def right_mult_matrix(b: np.ndarray) -> np.ndarray:
    """Matrix of ``x -> x b`` on vectorized elements."""
    side = b.shape[0]
    return np.kron(b.T, np.eye(side, dtype=np.complex128))

def commutator_matrix(r: np.ndarray) -> np.ndarray:
    """Matrix of ``x -> r x - x r`` on vectorized elements."""
    return left_mult_matrix(r) - right_mult_matrix(r)


@dataclass(frozen=True, eq=False)
class GnsOperator:
    """An operator on the vectorized algebra of a window."""

    window: Window
    local_dim: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        side = self.local_dim ** (2 * self.window.n_sites())
        if mat.shape != (side, side):
            raise ValueError(f"matrix shape {mat.shape}, expected side {side}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def apply(self, x: LocalOperator) -> LocalOperator:
        if x.window != self.window or x.local_dim != self.local_dim:
            raise WindowMismatchError("operand window does not match the operator")
        return LocalOperator(self.window, self.local_dim, unvec(self.matrix @ vec(x.matrix)))

    def adjoint(self) -> "GnsOperator":
        return GnsOperator(self.window, self.local_dim, self.matrix.conj().T)


@dataclass(frozen=True, eq=False)
class Superoperator:
    """A map on operators, stored as a matrix on vectorized operands.

    ``flavor`` fixes the operand space: ``algebra_form`` operands are
    window-algebra elements, ``gns_form`` operands are operators on the
    vectorized algebra.  ``generator`` marks maps intended as semigroup
    generators; these must annihilate the identity operand.
    """

    window: Window
    local_dim: int
    flavor: str
    matrix: np.ndarray
    generator: bool = False

    def __post_init__(self) -> None:
        if self.flavor not in (GNS_FORM, ALGEBRA_FORM):
            raise ValueError(f"unknown flavor {self.flavor!r}")
        mat = np.ascontiguousarray(self.matrix, dtype=np.complex128)
        side = self.operand_side**2
        if mat.shape != (side, side):
            raise ValueError(f"matrix shape {mat.shape}, expected side {side}")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        if self.generator:
            defect = self.identity_defect()
            scale = max(np.max(np.abs(mat)), 1.0)
            if defect > CONSERVATIVITY_TOL * scale:
                raise ValueError(
                    f"generator does not annihilate the identity (defect {defect:.3e})")

    @property
    def operand_side(self) -> int:
        s = self.window.n_sites()
        return self.local_dim ** (2 * s if self.flavor == GNS_FORM else s)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.complex128)
        if x.shape != (self.operand_side,) * 2:
            raise ValueError(f"operand shape {x.shape}, expected side {self.operand_side}")
        return unvec(self.matrix @ vec(x))

    def identity_defect(self) -> float:
        """Operator norm of (map applied to the identity) minus identity."""
        eye = np.eye(self.operand_side, dtype=np.complex128)
        image = unvec(self.matrix @ vec(eye))
        target = np.zeros_like(eye) if self.generator else eye
        return float(np.linalg.norm(image - target, 2))

    def _binary_check(self, other: "Superoperator") -> None:
        if (self.window, self.local_dim, self.flavor) != (
                other.window, other.local_dim, other.flavor):
            raise ValueError(
                f"cannot mix superoperators of flavor {self.flavor!r}/{other.flavor!r} "
                "or different windows")

    def __add__(self, other: "Superoperator") -> "Superoperator":
        self._binary_check(other)
        return Superoperator(self.window, self.local_dim, self.flavor,
                             self.matrix + other.matrix)

    def __sub__(self, other: "Superoperator") -> "Superoperator":
        self._binary_check(other)
        return Superoperator(self.window, self.local_dim, self.flavor,
                             self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> "Superoperator":
        return Superoperator(self.window, self.local_dim, self.flavor,
                             self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "Superoperator") -> "Superoperator":
        self._binary_check(other)
        return Superoperator(self.window, self.local_dim, self.flavor,
                             self.matrix @ other.matrix)


@dataclass(frozen=True)
class CpReport:
    """Complete-positivity certificate for a superoperator."""

    min_choi_eigenvalue: float
    identity_defect: float
    hermiticity_defect: float

    def is_cp(self, tol: float = 1e-10) -> bool:
        return self.min_choi_eigenvalue >= -tol

    def is_conservative(self, tol: float = 1e-10) -> bool:
        return self.identity_defect <= tol


def shell_commutator_op(family: ShellFamily, level: int,
                        cap: int | None = DEFAULT_DIM_CAP) -> GnsOperator:
    """Commutator with the partial shell sum through ``level``.

    Matrix of ``x -> [r_level, x]`` on the window algebra of that level.
    """
    if level > family.max_shell:
        raise ValueError(f"level {level} exceeds available shells ({family.max_shell})")
    r = family.partial_sum(level, cap)
    return GnsOperator(r.window, family.local_dim, commutator_matrix(r.matrix))


def adjoint_shell_op(family: ShellFamily, level: int,
                     cap: int | None = DEFAULT_DIM_CAP) -> GnsOperator:
    """Commutator with the adjoint partial sum: ``x -> [r_level^dag, x]``.

    Coincides with the inner-product adjoint of :func:`shell_commutator_op`.
    """
    if level > family.max_shell:
        raise ValueError(f"level {level} exceeds available shells ({family.max_shell})")
    r = family.partial_sum(level, cap)
    return GnsOperator(r.window, family.local_dim, commutator_matrix(r.matrix.conj().T))


def g_op(family: ShellFamily, level: int,
         cap: int | None = DEFAULT_DIM_CAP) -> GnsOperator:
    """Drift term ``-1/2 [r^dag, .][r, .]``; self-adjoint and <= 0."""
    c = shell_commutator_op(family, level, cap)
    c_star = adjoint_shell_op(family, level, cap)
    return GnsOperator(c.window, c.local_dim, -0.5 * (c_star.matrix @ c.matrix))


def semigroup_on_gns(g: GnsOperator, t: float) -> GnsOperator:
    """Contraction semigroup element ``exp(t g)`` on the vectorized algebra."""
    if not np.isfinite(t):
        raise ValueError(f"time must be finite, got {t}")
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    return GnsOperator(g.window, g.local_dim, scipy.linalg.expm(t * g.matrix))


def lindblad_form_superop(family: ShellFamily, level: int,
                          cap: int | None = DEFAULT_DIM_CAP) -> Superoperator:
    """Sandwich-form generator on operators over the vectorized algebra.

    ``X -> C^dag X C + X G + G^dag X`` with C the shell commutator and
    G = -1/2 C^dag C, both at the given level.  The operand space squares
    the vector-space dimension, so this flavor is only viable for very
    small windows; its full matrix side is checked against ``cap``.
    """
    c = shell_commutator_op(family, level, cap)
    s = c.window.n_sites()
    _check_cap(family.local_dim ** (4 * s), cap,
               f"gns_form superoperator at level {level}")
    cm = c.matrix
    gm = -0.5 * (cm.conj().T @ cm)
    mat = (np.kron(cm.T, cm.conj().T)
           + right_mult_matrix(gm)
           + left_mult_matrix(gm.conj().T))
    return Superoperator(c.window, family.local_dim, GNS_FORM, mat, generator=True)


def remark_lindblad_superop(family: ShellFamily, level: int,
                            cap: int | None = DEFAULT_DIM_CAP) -> Superoperator:
    """Dissipator built from the shell weights, acting on the algebra itself.

    ``X -> 1/2 sum_{k<=level} { W_k^dag [X, W_k] + [W_k^dag, X] W_k }``,
    equal to the standard jump form ``sum W^dag X W - 1/2 {W^dag W, X}``.
    """
    if level > family.max_shell:
        raise ValueError(f"level {level} exceeds available shells ({family.max_shell})")
    window = make_window(level, family.dim, family.local_dim, cap)
    side = family.local_dim ** window.n_sites()
    mat = np.zeros((side * side, side * side), dtype=np.complex128)
    for k, weight in family.shells:
        if k > level:
            continue
        w = embed_into(weight, window).matrix
        wdw = w.conj().T @ w
        mat += np.kron(w.T, w.conj().T)
        mat -= 0.5 * (left_mult_matrix(wdw) + right_mult_matrix(wdw))
    return Superoperator(window, family.local_dim, ALGEBRA_FORM, mat, generator=True)


def semigroup(generator: Superoperator, t: float) -> Superoperator:
    """Semigroup element ``exp(t L)`` of a generator-flavor superoperator."""
    if not generator.generator:
        raise ValueError("semigroup() expects a generator superoperator")
    if not np.isfinite(t):
        raise ValueError(f"time must be finite, got {t}")
    if t < 0:
        raise ValueError(f"time must be >= 0, got {t}")
    mat = scipy.linalg.expm(t * generator.matrix)
    return Superoperator(generator.window, generator.local_dim, generator.flavor, mat)


def choi_matrix(superop: Superoperator | np.ndarray) -> np.ndarray:
    """Choi matrix ``sum_ab E_ab (x) T(E_ab)`` of a superoperator matrix."""
    mat = superop.matrix if isinstance(superop, Superoperator) else np.asarray(superop)
    side = int(round(np.sqrt(mat.shape[0])))
    # Row index of mat is i + side*j (column stacking), columns a + side*b.
    m4 = mat.reshape(side, side, side, side)  # [j, i, b, a]
    return m4.transpose(3, 1, 2, 0).reshape(side * side, side * side)


def cp_certify(superop: Superoperator) -> CpReport:
    """Choi-spectrum certificate: min eigenvalue, unitality, hermiticity."""
    choi = choi_matrix(superop)
    herm_defect = float(np.max(np.abs(choi - choi.conj().T)))
    eigs = np.linalg.eigvalsh(0.5 * (choi + choi.conj().T))
    return CpReport(
        min_choi_eigenvalue=float(eigs[0]),
        identity_defect=superop.identity_defect(),
        hermiticity_defect=herm_defect,
    )
