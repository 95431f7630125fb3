"""Repeated-interaction dilations on a discretized noise lattice.

Continuous Fock-space noise is replaced by a uniform time grid with one
(1+m)-dimensional probe slot per step; slot component 0 is the vacuum and
components 1..m are the noise channels.  Step operators act on
``system (x) slot`` (system index slow, so a step matrix is assembled from
an (m+1) x (m+1) grid of system-sized blocks).

Exact unitarity per step is preserved for creation/annihilation-only
models by exponentiating the anti-selfadjoint step generator; general
coefficient tables use a first-order block step whose unitarity defect is
O(h^{3/2}).  Vacuum expectations and exponential-vector matrix elements
are evaluated by slot-wise contraction, so their cost is linear in the
number of steps and no full noise-space vector is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from spinqds import kernels
from spinqds.lattice import (
    DEFAULT_DIM_CAP,
    LocalOperator,
    ShellFamily,
    embed_into,
    make_window,
)
from spinqds.lindblad import (
    GnsOperator,
    left_mult_matrix,
    right_mult_matrix,
)

EXACT_SCHEME = "exact_exponential"
FIRST_ORDER_SCHEME = "first_order_block"

MAX_NOISE_DIM = 16384


def _as_matrix(op) -> np.ndarray:
    if isinstance(op, (GnsOperator, LocalOperator)):
        return op.matrix
    return np.asarray(op, dtype=np.complex128)


def noise_blocks(mat: np.ndarray, sys_dim: int, slot_dim: int) -> np.ndarray:
    """Slot-indexed system blocks of an operator on system (x) slot.

    Returns an array of shape (slot, slot, sys, sys) with entry (a, b) the
    system operator ``<a| mat |b>``.
    """
    return mat.reshape(sys_dim, slot_dim, sys_dim, slot_dim).transpose(1, 3, 0, 2)


def from_noise_blocks(blocks: np.ndarray) -> np.ndarray:
    """Inverse of :func:`noise_blocks`."""
    slot_dim, _, sys_dim, _ = blocks.shape
    return blocks.transpose(2, 0, 3, 1).reshape(sys_dim * slot_dim, sys_dim * slot_dim)


# ---------------------------------------------------------------------------
# Coefficient tables


@dataclass(frozen=True, eq=False)
class HPCoefficients:
    """Coefficient blocks of a noise-driven unitary evolution.

    ``scattering[i, j]`` holds the channel-scattering block with upper
    index i and lower index j; ``blocks[i, j]`` the derived coefficient
    with upper index i and lower index j, indices running 0..m with 0 the
    time/vacuum slot.
    """

    channels: int
    hamiltonian: np.ndarray
    jump_ops: tuple[np.ndarray, ...]
    scattering: np.ndarray
    blocks: np.ndarray

    @property
    def system_dim(self) -> int:
        return self.hamiltonian.shape[0]


def scattering_unitary(scattering: np.ndarray) -> np.ndarray:
    """Assemble ``sum_ij S^i_j (x) |e_i><e_j|`` on system (x) channels."""
    m = scattering.shape[0]
    d = scattering.shape[2]
    return scattering.transpose(2, 0, 3, 1).reshape(d * m, d * m)


def assemble_coefficients(hamiltonian, jump_ops: Sequence, scattering=None, *,
                          herm_tol: float = 1e-12,
                          unitary_tol: float = 1e-10) -> HPCoefficients:
    """Fill the full (m+1) x (m+1) coefficient table from (H, L_i, S^i_j).

    The table is::

        blocks[i, j] = S^i_j - delta_ij I    for i, j >= 1
        blocks[i, 0] = L_i                   for i >= 1
        blocks[0, j] = -sum_k L_k^dag S^k_j  for j >= 1
        blocks[0, 0] = -(1j H + 1/2 sum_k L_k^dag L_k)

    Validates that H is self-adjoint and the scattering block matrix is
    unitary; ``scattering=None`` means the identity (no channel mixing).
    """
    h_mat = _as_matrix(hamiltonian)
    jumps = tuple(_as_matrix(op) for op in jump_ops)
    m = len(jumps)
    if m < 1:
        raise ValueError("at least one noise channel is required")
    d = h_mat.shape[0]
    for op in jumps:
        if op.shape != (d, d):
            raise ValueError(f"jump operator shape {op.shape} does not match system dim {d}")
    if scattering is None:
        scat = np.zeros((m, m, d, d), dtype=np.complex128)
        for i in range(m):
            scat[i, i] = np.eye(d)
    else:
        scat = np.asarray(scattering, dtype=np.complex128)
        if scat.shape != (m, m, d, d):
            raise ValueError(f"scattering shape {scat.shape}, expected {(m, m, d, d)}")

    herm_defect = float(np.max(np.abs(h_mat - h_mat.conj().T)))
    if herm_defect > herm_tol * max(1.0, float(np.max(np.abs(h_mat)))):
        raise ValueError(f"hamiltonian is not self-adjoint (defect {herm_defect:.3e})")
    su = scattering_unitary(scat)
    unitary_defect = float(np.linalg.norm(su.conj().T @ su - np.eye(d * m), 2))
    if unitary_defect > unitary_tol:
        raise ValueError(f"scattering block matrix is not unitary (defect {unitary_defect:.3e})")

    blocks = np.zeros((m + 1, m + 1, d, d), dtype=np.complex128)
    eye = np.eye(d, dtype=np.complex128)
    for i in range(1, m + 1):
        for j in range(1, m + 1):
            blocks[i, j] = scat[i - 1, j - 1] - (eye if i == j else 0.0)
        blocks[i, 0] = jumps[i - 1]
    for j in range(1, m + 1):
        blocks[0, j] = -sum(jumps[k].conj().T @ scat[k, j - 1] for k in range(m))
    blocks[0, 0] = -(1j * h_mat + 0.5 * sum(op.conj().T @ op for op in jumps))
    return HPCoefficients(channels=m, hamiltonian=h_mat, jump_ops=jumps,
                          scattering=scat, blocks=blocks)


@dataclass(frozen=True)
class ItoReport:
    """Defect norms of the algebraic unitarity conditions on a table."""

    markov_defect: float
    theta_identity_defect: float
    scattering_defect: float

    def passed(self, tol: float = 1e-10) -> bool:
        return max(self.markov_defect, self.theta_identity_defect,
                   self.scattering_defect) <= tol


def check_ito_unitarity(coeffs: HPCoefficients) -> ItoReport:
    """Evaluate the unitarity conditions on an assembled (or altered) table.

    The Markov defect is ``|| Re(blocks[0,0]) + 1/2 sum_k L_k^dag L_k ||``
    so a table whose time block forgot the 1/2 shows up with defect equal
    to half the jump-sum norm.
    """
    m, d = coeffs.channels, coeffs.system_dim
    l00 = coeffs.blocks[0, 0]
    jump_sum = sum(coeffs.blocks[k, 0].conj().T @ coeffs.blocks[k, 0]
                   for k in range(1, m + 1))
    markov = float(np.linalg.norm(0.5 * (l00 + l00.conj().T) + 0.5 * jump_sum, 2))
    theta_eye = theta_map(coeffs, 0, 0, np.eye(d, dtype=np.complex128))
    theta_defect = float(np.linalg.norm(theta_eye, 2))
    su = scattering_unitary(coeffs.scattering)
    eye = np.eye(d * m)
    scat = max(float(np.linalg.norm(su.conj().T @ su - eye, 2)),
               float(np.linalg.norm(su @ su.conj().T - eye, 2)))
    return ItoReport(markov_defect=markov, theta_identity_defect=theta_defect,
                     scattering_defect=scat)


def theta_map(coeffs: HPCoefficients, i: int, j: int, x) -> np.ndarray:
    """Structure map with upper index i, lower index j applied to ``x``.

    ``theta^i_j(X) = X L^i_j + (L^j_i)^dag X + sum_k (L^k_i)^dag X L^k_j``.
    """
    m = coeffs.channels
    if not (0 <= i <= m and 0 <= j <= m):
        raise IndexError(f"channel indices must lie in 0..{m}, got ({i}, {j})")
    x_mat = _as_matrix(x)
    blocks = coeffs.blocks
    out = x_mat @ blocks[i, j] + blocks[j, i].conj().T @ x_mat
    for k in range(1, m + 1):
        out += blocks[k, i].conj().T @ x_mat @ blocks[k, j]
    return out


def theta_generator_matrix(coeffs: HPCoefficients) -> np.ndarray:
    """Matrix of ``theta^0_0`` on vectorized system operators."""
    blocks = coeffs.blocks
    mat = right_mult_matrix(blocks[0, 0]) + left_mult_matrix(blocks[0, 0].conj().T)
    for k in range(1, coeffs.channels + 1):
        mat += np.kron(blocks[k, 0].T, blocks[k, 0].conj().T)
    return mat


# ---------------------------------------------------------------------------
# Noise grid and exponential vectors


@dataclass(frozen=True)
class ToyFockGrid:
    """Uniform time lattice carrying one probe slot per step."""

    t_final: float
    steps: int
    channels: int = 1

    def __post_init__(self) -> None:
        if self.t_final <= 0 or not np.isfinite(self.t_final):
            raise ValueError(f"t_final must be positive and finite, got {self.t_final}")
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.channels < 1:
            raise ValueError(f"channels must be >= 1, got {self.channels}")

    @property
    def h(self) -> float:
        return self.t_final / self.steps

    @property
    def slot_dim(self) -> int:
        return 1 + self.channels

    def times(self) -> np.ndarray:
        """Left endpoints of the time cells."""
        return np.arange(self.steps) * self.h


@dataclass(frozen=True, eq=False)
class DiscretizedExponentialVector:
    """Per-slot amplitudes (1, sqrt(h) f_1(t_k), ..., sqrt(h) f_m(t_k))."""

    grid: ToyFockGrid
    amplitudes: np.ndarray

    def __post_init__(self) -> None:
        amps = np.ascontiguousarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (self.grid.steps, self.grid.slot_dim):
            raise ValueError(f"amplitude shape {amps.shape}, expected "
                             f"{(self.grid.steps, self.grid.slot_dim)}")
        if not np.all(amps[:, 0] == 1.0):
            raise ValueError("slot component 0 must have amplitude 1 in every step")
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    def squared_norm(self) -> float:
        return float(np.prod(np.sum(np.abs(self.amplitudes) ** 2, axis=1)).real)

    def full_vector(self) -> np.ndarray:
        """Dense tensor product of the slot amplitudes (small grids only)."""
        dim = self.grid.slot_dim ** self.grid.steps
        if dim > MAX_NOISE_DIM:
            raise ValueError(f"noise dimension {dim} exceeds the dense cap {MAX_NOISE_DIM}")
        out = np.ones(1, dtype=np.complex128)
        for k in range(self.grid.steps):
            out = np.kron(out, self.amplitudes[k])
        return out


def exp_vector(f, grid: ToyFockGrid) -> DiscretizedExponentialVector:
    """Discretized exponential vector of a step function.

    ``f`` may be None (vacuum), a scalar, an m-vector, or a callable of
    time returning either; it is sampled at the left endpoint of each
    cell and scaled by sqrt(h) into the channel amplitudes.
    """
    m = grid.channels
    amps = np.zeros((grid.steps, grid.slot_dim), dtype=np.complex128)
    amps[:, 0] = 1.0
    if f is not None:
        root_h = np.sqrt(grid.h)
        for k, t in enumerate(grid.times()):
            val = f(t) if callable(f) else f
            val = np.atleast_1d(np.asarray(val, dtype=np.complex128))
            if val.shape != (m,):
                raise ValueError(f"step function must give {m} channel values, got {val.shape}")
            if not np.all(np.isfinite(val)):
                raise ValueError(f"step function is not finite at t={t}")
            amps[k, 1:] = root_h * val
    return DiscretizedExponentialVector(grid=grid, amplitudes=amps)


def exp_inner(left: DiscretizedExponentialVector,
              right: DiscretizedExponentialVector) -> complex:
    """Pairing ``<e(f), e(g)> = prod_k (1 + h sum conj(f) g)``."""
    if left.grid != right.grid:
        raise ValueError("exponential vectors live on different grids")
    per_slot = np.sum(left.amplitudes.conj() * right.amplitudes, axis=1)
    return complex(np.prod(per_slot))


# ---------------------------------------------------------------------------
# Step operators


def step_unitary_exact(coupling, h: float) -> np.ndarray:
    """Exactly unitary one-slot step for a single creation/annihilation pair.

    Equals ``exp(sqrt(h) (C (x) sigma+ - C^dag (x) sigma-))`` on
    system (x) C^2, built in closed form from the spectral decompositions
    of C^dag C and C C^dag:  the vacuum block is ``cos(sqrt(h C^dag C))``
    and the off-diagonal blocks carry ``sqrt(h) C sinc(sqrt(h C^dag C))``.
    """
    if h <= 0 or not np.isfinite(h):
        raise ValueError(f"step size must be positive and finite, got {h}")
    c = _as_matrix(coupling)
    d = c.shape[0]
    cdc = c.conj().T @ c
    ccd = c @ c.conj().T
    omega, u = np.linalg.eigh(cdc)
    mu, w = np.linalg.eigh(ccd)
    s_om = np.sqrt(np.clip(h * omega, 0.0, None))
    s_mu = np.sqrt(np.clip(h * mu, 0.0, None))
    cos00 = (u * np.cos(s_om)) @ u.conj().T
    cos11 = (w * np.cos(s_mu)) @ w.conj().T
    sinc_om = (u * np.sinc(s_om / np.pi)) @ u.conj().T
    sinc_mu = (w * np.sinc(s_mu / np.pi)) @ w.conj().T
    root_h = np.sqrt(h)
    blocks = np.empty((2, 2, d, d), dtype=np.complex128)
    blocks[0, 0] = cos00
    blocks[1, 1] = cos11
    blocks[1, 0] = root_h * (c @ sinc_om)
    blocks[0, 1] = -root_h * (c.conj().T @ sinc_mu)
    return from_noise_blocks(blocks)


def step_first_order(coeffs: HPCoefficients, h: float) -> np.ndarray:
    """First-order block step for a general coefficient table.

    The vacuum block is ``I + h blocks[0,0]``, the creation/annihilation
    blocks carry ``sqrt(h)`` times the corresponding table entries, and
    the channel blocks carry the scattering matrices with an O(h)
    correction that keeps the unitarity defect at O(h^{3/2}).
    """
    if h <= 0 or not np.isfinite(h):
        raise ValueError(f"step size must be positive and finite, got {h}")
    m, d = coeffs.channels, coeffs.system_dim
    eye = np.eye(d, dtype=np.complex128)
    root_h = np.sqrt(h)
    blocks = np.zeros((m + 1, m + 1, d, d), dtype=np.complex128)
    blocks[0, 0] = eye + h * coeffs.blocks[0, 0]
    # The channel-block correction -(h/2) sum_l S^i_l (L^0_l)^dag L^0_j kills
    # the O(h) residue of the annihilation blocks in V^dag V; it reduces to
    # -(h/2) C C^dag for a single plain channel.
    gram = np.einsum("lab,jbc->ljac", coeffs.blocks[0, 1:].conj().transpose(0, 2, 1),
                     coeffs.blocks[0, 1:])
    for i in range(1, m + 1):
        blocks[i, 0] = root_h * coeffs.blocks[i, 0]
        blocks[0, i] = root_h * coeffs.blocks[0, i]
        for j in range(1, m + 1):
            correction = sum(coeffs.scattering[i - 1, l] @ gram[l, j - 1]
                             for l in range(m))
            blocks[i, j] = coeffs.scattering[i - 1, j - 1] - 0.5 * h * correction
    return from_noise_blocks(blocks)


@dataclass(frozen=True, eq=False)
class StepSequence:
    """The per-slot unitaries of a discretized noise evolution.

    ``unitaries[k]`` acts on system (x) slot k; slot k is consumed at step
    k (increasing k).  Time-homogeneous builders store one shared matrix
    K times, so memory stays flat.
    """

    grid: ToyFockGrid
    unitaries: tuple[np.ndarray, ...]
    scheme: str

    def __post_init__(self) -> None:
        if self.scheme not in (EXACT_SCHEME, FIRST_ORDER_SCHEME):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if len(self.unitaries) != self.grid.steps:
            raise ValueError(f"{len(self.unitaries)} step operators for "
                             f"{self.grid.steps} grid steps")
        side = self.unitaries[0].shape[0]
        if side % self.grid.slot_dim:
            raise ValueError(f"step side {side} is not divisible by slot dim "
                             f"{self.grid.slot_dim}")

    @property
    def slot_dim(self) -> int:
        return self.grid.slot_dim

    @property
    def sys_dim(self) -> int:
        return self.unitaries[0].shape[0] // self.grid.slot_dim

    def homogeneous(self) -> bool:
        first = self.unitaries[0]
        return all(u is first for u in self.unitaries)

    def step_blocks(self, k: int) -> np.ndarray:
        return noise_blocks(self.unitaries[k], self.sys_dim, self.slot_dim)

    def unitarity_defect(self) -> float:
        """Largest ``||V^dag V - I||`` over the distinct step operators."""
        seen: dict[int, float] = {}
        for u in self.unitaries:
            if id(u) not in seen:
                eye = np.eye(u.shape[0])
                seen[id(u)] = float(np.linalg.norm(u.conj().T @ u - eye, 2))
        return max(seen.values())


def build_exact_steps(coupling, grid: ToyFockGrid) -> StepSequence:
    """Homogeneous exact-exponential sequence for one noise channel."""
    if grid.channels != 1:
        raise ValueError("the exact-exponential scheme handles exactly one channel")
    v = step_unitary_exact(coupling, grid.h)
    return StepSequence(grid=grid, unitaries=(v,) * grid.steps, scheme=EXACT_SCHEME)


def build_first_order_steps(coeffs: HPCoefficients, grid: ToyFockGrid) -> StepSequence:
    """Homogeneous first-order block sequence for a coefficient table."""
    if grid.channels != coeffs.channels:
        raise ValueError(f"grid has {grid.channels} channels, coefficients "
                         f"{coeffs.channels}")
    v = step_first_order(coeffs, grid.h)
    return StepSequence(grid=grid, unitaries=(v,) * grid.steps, scheme=FIRST_ORDER_SCHEME)


def dual_steps(steps: StepSequence) -> StepSequence:
    """Time-reversed dual sequence: slots reversed, each step adjointed.

    For exact-exponential steps this is exactly the sequence built from
    the negated coupling.  Not defined for the first-order block scheme.
    """
    if steps.scheme != EXACT_SCHEME:
        raise ValueError("the dual sequence is only defined for the exact-exponential scheme")
    adjoints: dict[int, np.ndarray] = {}
    flipped = tuple(adjoints.setdefault(id(u), u.conj().T)
                    for u in reversed(steps.unitaries))
    return StepSequence(grid=steps.grid, unitaries=flipped, scheme=steps.scheme)


# ---------------------------------------------------------------------------
# Evolutions and expectations


def evolve(steps: StepSequence, psi: np.ndarray, *,
           max_noise_dim: int = MAX_NOISE_DIM) -> np.ndarray:
    """Apply the step unitaries to a dense system (x) all-slots vector.

    Step k acts on the system factor and slot k only, in increasing k.
    The dense noise space grows as slot_dim**steps, so this path is capped;
    expectation values should go through the slot-wise contractions instead.
    """
    ds, dn, big_k = steps.sys_dim, steps.slot_dim, steps.grid.steps
    noise_dim = dn**big_k
    if noise_dim > max_noise_dim:
        raise ValueError(f"noise dimension {dn}**{big_k} = {noise_dim} exceeds "
                         f"the dense cap {max_noise_dim}")
    psi = np.asarray(psi, dtype=np.complex128)
    if psi.shape != (ds * noise_dim,):
        raise ValueError(f"state has {psi.shape}, expected ({ds * noise_dim},)")
    tensor = psi.reshape((ds,) + (dn,) * big_k)
    for k in range(big_k):
        v4 = steps.unitaries[k].reshape(ds, dn, ds, dn)
        tensor = np.tensordot(v4, tensor, axes=([2, 3], [0, k + 1]))
        tensor = np.moveaxis(tensor, 1, k + 1)
    return tensor.reshape(-1)


def system_with_noise(u: np.ndarray, noise: DiscretizedExponentialVector) -> np.ndarray:
    """Dense product state ``u (x) e`` for :func:`evolve`."""
    return np.kron(np.asarray(u, dtype=np.complex128), noise.full_vector())


def vacuum_transfer(steps: StepSequence) -> np.ndarray:
    """Vacuum-to-vacuum compression of the whole evolution.

    The product of the per-step vacuum blocks in application order; for
    exact steps this converges to the contraction semigroup of the drift.
    """
    if steps.homogeneous():
        v00 = np.ascontiguousarray(steps.step_blocks(0)[0, 0])
        eye = np.eye(steps.sys_dim, dtype=np.complex128)
        return kernels.repeated_apply(v00, eye, steps.grid.steps)
    out = np.eye(steps.sys_dim, dtype=np.complex128)
    for k in range(steps.grid.steps):
        out = steps.step_blocks(k)[0, 0] @ out
    return out


def apply_vacuum_chain(steps: StepSequence, block: np.ndarray) -> np.ndarray:
    """Vacuum compression applied to a block of system vectors."""
    block = np.ascontiguousarray(block, dtype=np.complex128)
    if steps.homogeneous():
        v00 = np.ascontiguousarray(steps.step_blocks(0)[0, 0])
        return kernels.repeated_apply(v00, block, steps.grid.steps)
    out = block
    for k in range(steps.grid.steps):
        out = steps.step_blocks(k)[0, 0] @ out
    return out


def transfer_operator(steps: StepSequence, left: DiscretizedExponentialVector,
                      right: DiscretizedExponentialVector) -> np.ndarray:
    """System operator ``<e(f)| U |e(g)>`` by slot-wise contraction."""
    if left.grid != steps.grid or right.grid != steps.grid:
        raise ValueError("exponential vectors must live on the step grid")
    if steps.homogeneous():
        blocks = np.ascontiguousarray(steps.step_blocks(0))
        return kernels.amplitude_chain(blocks, left.amplitudes, right.amplitudes)
    out = np.eye(steps.sys_dim, dtype=np.complex128)
    for k in range(steps.grid.steps):
        blocks = steps.step_blocks(k)
        tk = np.einsum("a,b,abij->ij", left.amplitudes[k].conj(),
                       right.amplitudes[k], blocks)
        out = tk @ out
    return out


def transfer_apply(steps: StepSequence, left: DiscretizedExponentialVector,
                   right: DiscretizedExponentialVector,
                   block: np.ndarray) -> np.ndarray:
    """Slot-contracted chain applied to a block of system vectors.

    Same contraction as :func:`transfer_operator` but without forming the
    full operator product, so it stays cheap for large system dimensions
    with few input vectors.
    """
    if left.grid != steps.grid or right.grid != steps.grid:
        raise ValueError("exponential vectors must live on the step grid")
    out = np.ascontiguousarray(block, dtype=np.complex128)
    lamp, ramp = left.amplitudes, right.amplitudes
    constant = (steps.homogeneous()
                and np.all(lamp == lamp[0]) and np.all(ramp == ramp[0]))
    if constant:
        blocks = steps.step_blocks(0)
        tk = np.einsum("a,b,abij->ij", lamp[0].conj(), ramp[0], blocks)
        return kernels.repeated_apply(np.ascontiguousarray(tk), out, steps.grid.steps)
    blocks = steps.step_blocks(0) if steps.homogeneous() else None
    for k in range(steps.grid.steps):
        bk = blocks if blocks is not None else steps.step_blocks(k)
        tk = np.einsum("a,b,abij->ij", lamp[k].conj(), ramp[k], bk)
        out = tk @ out
    return out


def matrix_element(steps: StepSequence, u: np.ndarray, v: np.ndarray,
                   left: DiscretizedExponentialVector,
                   right: DiscretizedExponentialVector) -> complex:
    """``<u e(f), U v e(g)>`` without forming the noise space."""
    column = np.asarray(v, dtype=np.complex128).reshape(-1, 1)
    image = transfer_apply(steps, left, right, column)
    return complex(np.vdot(np.asarray(u), image[:, 0]))


def _vacuum_kraus(steps: StepSequence, k: int) -> np.ndarray:
    return np.ascontiguousarray(steps.step_blocks(k)[:, 0])


def vacuum_expectation_flow(steps: StepSequence, x: np.ndarray) -> np.ndarray:
    """Vacuum expectation of the Heisenberg flow applied to ``x``.

    Computes ``<e(0)| U^dag (x (x) I) U |e(0)>`` by contracting one slot
    at a time: each step contributes the completely positive map
    ``X -> sum_a V[a,0]^dag X V[a,0]`` built from its first block column.
    """
    x = np.ascontiguousarray(x, dtype=np.complex128)
    if x.shape != (steps.sys_dim,) * 2:
        raise ValueError(f"operand shape {x.shape}, expected side {steps.sys_dim}")
    if steps.homogeneous():
        ops = _vacuum_kraus(steps, 0)
        return kernels.kraus_power(ops, x, steps.grid.steps)
    out = x
    for k in reversed(range(steps.grid.steps)):
        ops = _vacuum_kraus(steps, k)
        out = np.matmul(ops.conj().transpose(0, 2, 1), np.matmul(out, ops)).sum(axis=0)
    return out


# ---------------------------------------------------------------------------
# Heisenberg flow on the window algebra


def evans_hudson_flow(family: ShellFamily, level: int, x: LocalOperator,
                      grid: ToyFockGrid, *, cap: int | None = DEFAULT_DIM_CAP,
                      return_history: bool = False):
    """Vacuum-compressed repeated-interaction flow on the window algebra.

    One noise channel per shell weight with level <= ``level``; each step
    conjugates by ``exp(sqrt(h) sum_j (W_j (x) sigma_j+ - W_j^dag (x)
    sigma_j-))`` and compresses the fresh slot against the vacuum.  The
    result converges to the dissipator semigroup of the same weights at
    first order in h.

    With ``return_history=True``, returns the list of all intermediate
    algebra elements (one per step, final included).
    """
    window = make_window(level, family.dim, family.local_dim, cap)
    if x.window != window or x.local_dim != family.local_dim:
        raise ValueError(f"operand must live on {window}")
    weights = [w for k, w in family.shells if k <= level]
    m = len(weights)
    if m == 0:
        raise ValueError(f"no shell weights at or below level {level}")
    if grid.channels != m:
        raise ValueError(f"grid has {grid.channels} channels but the family "
                         f"contributes {m} weights at level {level}")
    ds = x.side
    dn = 1 + m
    gen = np.zeros((ds * dn, ds * dn), dtype=np.complex128)
    for j, weight in enumerate(weights, start=1):
        w = embed_into(weight, window).matrix
        slot_raise = np.zeros((dn, dn), dtype=np.complex128)
        slot_raise[j, 0] = 1.0
        gen += np.kron(w, slot_raise) - np.kron(w.conj().T, slot_raise.conj().T)
    v = scipy.linalg.expm(np.sqrt(grid.h) * gen)
    ops = np.ascontiguousarray(noise_blocks(v, ds, dn)[:, 0])

    def wrap(mat: np.ndarray) -> LocalOperator:
        return LocalOperator(window, family.local_dim, mat)

    if not return_history:
        return wrap(kernels.kraus_power(ops, x.matrix, grid.steps))
    history = []
    current = x.matrix
    for _ in range(grid.steps):
        current = kernels.kraus_power(ops, current, 1)
        history.append(wrap(current))
    return history


def flow_generator_consistency(steps: StepSequence, generator: np.ndarray) -> float:
    """Defect ``||(Phi_h - id)/h - theta||`` of one step against a generator.

    ``generator`` is the matrix of the expected structure map on
    vectorized system operators.
    """
    ds = steps.sys_dim
    ops = _vacuum_kraus(steps, 0)
    phi = np.zeros((ds * ds, ds * ds), dtype=np.complex128)
    for a in range(ops.shape[0]):
        phi += np.kron(ops[a].T, ops[a].conj().T)
    diff = (phi - np.eye(ds * ds)) / steps.grid.h - generator
    return float(np.linalg.norm(diff, 2))
