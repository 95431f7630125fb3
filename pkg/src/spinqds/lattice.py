"""Finite windows of a spin-lattice tensor algebra.

A window of radius ``n`` in ``Z^d`` is the sup-norm box of sites
``{j : max_i |j_i| <= n}``; the algebra attached to it is the full matrix
algebra on ``(C^N)^{tensor #sites}`` realised as dense complex matrices.
Sites are ordered lexicographically and that order fixes the Kronecker
factor order everywhere (first site = slowest index).

The normalized trace ``tr(x) = Tr(x) / side`` makes inclusions of windows
trace-compatible, and ``<x, y> = tr(x^dag y)`` is the inner product every
Hilbert-space construction downstream lives on.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np

Site = tuple[int, ...]

DEFAULT_DIM_CAP = 256
DEFAULT_SUPPORT_TOL = 1e-10


class CapacityError(ValueError):
    """A requested object would exceed the configured matrix-size cap."""


class WindowMismatchError(ValueError):
    """Two operands live on different windows or local dimensions."""


def site_norm(site: Site) -> int:
    """Sup-norm of a lattice site (max of component magnitudes)."""
    return max(abs(c) for c in site)


def _as_site(site: Sequence[int]) -> Site:
    return tuple(int(c) for c in site)


@dataclass(frozen=True)
class Window:
    """A sup-norm box of lattice sites with a fixed canonical order.

    ``dim`` is the lattice dimension d, ``radius`` the box radius n and
    ``sites`` the lexicographically ordered tuple of all sites with
    sup-norm at most n.
    """

    radius: int
    dim: int
    sites: tuple[Site, ...]

    @cached_property
    def _positions(self) -> dict[Site, int]:
        return {site: k for k, site in enumerate(self.sites)}

    def __contains__(self, site: Sequence[int]) -> bool:
        return _as_site(site) in self._positions

    def position(self, site: Sequence[int]) -> int:
        """Index of ``site`` in the canonical order."""
        try:
            return self._positions[_as_site(site)]
        except KeyError:
            raise WindowMismatchError(f"site {tuple(site)} is not in {self}") from None

    def n_sites(self) -> int:
        return len(self.sites)

    def __repr__(self) -> str:  # noqa: D105
        return f"Window(radius={self.radius}, dim={self.dim}, {len(self.sites)} sites)"


def _check_cap(side: int, cap: int | None, what: str) -> None:
    if cap is not None and side > cap:
        raise CapacityError(f"{what} needs matrix side {side} > cap {cap}")


def make_window(radius: int, dim: int, local_dim: int = 2,
                cap: int | None = DEFAULT_DIM_CAP) -> Window:
    """Window of the given radius in ``Z^dim``.

    The Hilbert-space side ``local_dim ** (2*radius+1)**dim`` is checked
    against ``cap`` (pass ``cap=None`` to skip the check).
    """
    if dim < 1:
        raise ValueError(f"lattice dimension must be >= 1, got {dim}")
    if radius < 0:
        raise ValueError(f"window radius must be >= 0, got {radius}")
    n_sites = (2 * radius + 1) ** dim
    _check_cap(local_dim**n_sites,
               cap, f"window of radius {radius} in Z^{dim} ({n_sites} sites)")
    sites = tuple(itertools.product(range(-radius, radius + 1), repeat=dim))
    return Window(radius=radius, dim=dim, sites=sites)


def boundary_sites(radius: int, dim: int) -> tuple[Site, ...]:
    """Sites at sup-norm exactly ``radius``, in canonical order."""
    if radius < 1:
        raise ValueError("boundary of a radius-0 window is not defined; radius must be >= 1")
    return tuple(s for s in itertools.product(range(-radius, radius + 1), repeat=dim)
                 if site_norm(s) == radius)


def shell_sites(level: int, dim: int) -> tuple[Site, ...]:
    """Allowed support of a shell weight at the given level.

    Level 0 is the single origin site; level >= 1 is the boundary of the
    radius-``level`` window.
    """
    if level == 0:
        return ((0,) * dim,)
    return boundary_sites(level, dim)


@dataclass(frozen=True, eq=False)
class LocalOperator:
    """A dense complex matrix acting on the window's tensor-product space."""

    window: Window
    local_dim: int
    matrix: np.ndarray

    def __post_init__(self) -> None:
        mat = np.asarray(self.matrix, dtype=np.complex128)
        side = self.local_dim ** self.window.n_sites()
        if mat.shape != (side, side):
            raise ValueError(
                f"matrix shape {mat.shape} does not match window side {side}")
        mat = np.ascontiguousarray(mat)
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)

    @property
    def side(self) -> int:
        return self.matrix.shape[0]

    def adjoint(self) -> "LocalOperator":
        return LocalOperator(self.window, self.local_dim, self.matrix.conj().T)

    def _binary_check(self, other: "LocalOperator") -> None:
        if self.window != other.window or self.local_dim != other.local_dim:
            raise WindowMismatchError(
                f"operands live on different windows: {self.window} vs {other.window}")

    def __add__(self, other: "LocalOperator") -> "LocalOperator":
        self._binary_check(other)
        return LocalOperator(self.window, self.local_dim, self.matrix + other.matrix)

    def __sub__(self, other: "LocalOperator") -> "LocalOperator":
        self._binary_check(other)
        return LocalOperator(self.window, self.local_dim, self.matrix - other.matrix)

    def __neg__(self) -> "LocalOperator":
        return LocalOperator(self.window, self.local_dim, -self.matrix)

    def __mul__(self, scalar: complex) -> "LocalOperator":
        return LocalOperator(self.window, self.local_dim, self.matrix * scalar)

    __rmul__ = __mul__

    def __matmul__(self, other: "LocalOperator") -> "LocalOperator":
        self._binary_check(other)
        return LocalOperator(self.window, self.local_dim, self.matrix @ other.matrix)

    def norm(self) -> float:
        """Operator (spectral) norm."""
        return float(np.linalg.norm(self.matrix, 2))


def identity(window: Window, local_dim: int = 2) -> LocalOperator:
    side = local_dim ** window.n_sites()
    return LocalOperator(window, local_dim, np.eye(side, dtype=np.complex128))


def embed(factors: Mapping[Sequence[int], np.ndarray], window: Window,
          local_dim: int = 2) -> LocalOperator:
    """Tensor product of per-site factors, identity at unkeyed sites.

    ``factors`` maps sites of the window to ``local_dim x local_dim``
    matrices; the Kronecker product runs over the window's canonical site
    order.
    """
    placed: dict[int, np.ndarray] = {}
    for site, factor in factors.items():
        pos = window.position(site)
        mat = np.asarray(factor, dtype=np.complex128)
        if mat.shape != (local_dim, local_dim):
            raise ValueError(
                f"factor at site {tuple(site)} has shape {mat.shape}, "
                f"expected ({local_dim}, {local_dim})")
        placed[pos] = mat
    eye = np.eye(local_dim, dtype=np.complex128)
    out = np.ones((1, 1), dtype=np.complex128)
    for pos in range(window.n_sites()):
        out = np.kron(out, placed.get(pos, eye))
    return LocalOperator(window, local_dim, out)


def embed_block(block: np.ndarray, sites: Sequence[Sequence[int]], window: Window,
                local_dim: int = 2) -> LocalOperator:
    """Place a joint operator on the given sites, identity elsewhere.

    ``block`` acts on the tensor factors listed in ``sites`` (in the order
    given); unlike :func:`embed` it need not factor into single-site
    pieces.
    """
    site_list = [_as_site(s) for s in sites]
    if len(set(site_list)) != len(site_list):
        raise ValueError(f"duplicate sites in {site_list}")
    positions = [window.position(s) for s in site_list]
    k = len(site_list)
    s = window.n_sites()
    block = np.asarray(block, dtype=np.complex128)
    if block.shape != (local_dim**k,) * 2:
        raise ValueError(
            f"block shape {block.shape} does not match {k} sites of local dim {local_dim}")
    rest = local_dim ** (s - k)
    full = np.kron(block, np.eye(rest, dtype=np.complex128))
    # Factor order is currently [given sites..., remaining sites...]; permute
    # tensor axes so factor p ends up at the window position of its site.
    order = positions + [p for p in range(s) if p not in set(positions)]
    perm = np.argsort(order)  # perm[t] = current axis holding target position t
    axes = list(perm) + [s + p for p in perm]
    full = full.reshape((local_dim,) * (2 * s)).transpose(axes).reshape(full.shape)
    return LocalOperator(window, local_dim, full)


def embed_into(x: LocalOperator, window: Window) -> LocalOperator:
    """Embed an operator from its window into a larger enclosing window."""
    for site in x.window.sites:
        if site not in window:
            raise WindowMismatchError(
                f"{x.window} is not contained in {window} (site {site} missing)")
    return embed_block(x.matrix, x.window.sites, window, x.local_dim)


def normalized_trace(x: LocalOperator) -> complex:
    """Matrix trace divided by the matrix side."""
    return complex(np.trace(x.matrix) / x.side)


def gns_inner(x: LocalOperator, y: LocalOperator) -> complex:
    """Inner product ``tr(x^dag y)`` with the normalized trace."""
    x._binary_check(y)
    return complex(np.vdot(x.matrix, y.matrix) / x.side)


def gns_norm(x: LocalOperator) -> float:
    return float(np.sqrt(max(gns_inner(x, x).real, 0.0)))


def _partial_identity_at(x: np.ndarray, pos: int, n_sites: int, local_dim: int) -> np.ndarray:
    """Best approximation of x that is identity at tensor position ``pos``.

    Traces out factor ``pos``, renormalizes, and re-tensors the identity in
    the same position.
    """
    n = local_dim
    tensor = x.reshape((n,) * (2 * n_sites))
    reduced = np.trace(tensor, axis1=pos, axis2=n_sites + pos) / n
    rest = n_sites - 1
    side_rest = n**rest
    full = np.kron(reduced.reshape(side_rest, side_rest), np.eye(n, dtype=np.complex128))
    # Factor order is [others..., pos]; rotate pos back into place.
    order = [p for p in range(n_sites) if p != pos] + [pos]
    perm = np.argsort(order)
    axes = list(perm) + [n_sites + p for p in perm]
    return full.reshape((n,) * (2 * n_sites)).transpose(axes).reshape(x.shape)


def support(x: LocalOperator, tol: float = DEFAULT_SUPPORT_TOL) -> frozenset[Site]:
    """Sites where ``x`` fails to act as the identity factor.

    Decided numerically: site j is in the support iff replacing the j-th
    factor by (partial trace / N) tensor identity moves some entry by more
    than ``tol``.
    """
    if tol <= 0:
        raise ValueError("support tolerance must be positive")
    n_sites = x.window.n_sites()
    out = []
    for pos, site in enumerate(x.window.sites):
        approx = _partial_identity_at(x.matrix, pos, n_sites, x.local_dim)
        if np.max(np.abs(x.matrix - approx)) > tol:
            out.append(site)
    return frozenset(out)


def commutator(a: LocalOperator, x: LocalOperator) -> LocalOperator:
    """``a x - x a`` on a common window."""
    a._binary_check(x)
    return LocalOperator(a.window, a.local_dim, a.matrix @ x.matrix - x.matrix @ a.matrix)


def matrix_units(window: Window, local_dim: int = 2) -> np.ndarray:
    """All matrix units of the window algebra, stacked as (side**2, side, side).

    Unit (a, b) sits at index ``a * side + b``.  Rescaled by
    ``sqrt(side)`` they are orthonormal for :func:`gns_inner`.
    """
    side = local_dim ** window.n_sites()
    units = np.zeros((side * side, side, side), dtype=np.complex128)
    for a in range(side):
        for b in range(side):
            units[a * side + b, a, b] = 1.0
    return units


@dataclass(frozen=True, eq=False)
class ShellFamily:
    """Finitely many shell weights W_k, each supported on shell level k.

    ``shells`` is a tuple of (level, weight) pairs with the weight stored on
    the window of its own level; levels are strictly increasing.  Use
    :func:`make_shell_family` to get support validation.
    """

    local_dim: int
    dim: int
    shells: tuple[tuple[int, LocalOperator], ...]

    @property
    def max_shell(self) -> int:
        return max((level for level, _ in self.shells), default=0)

    def partial_sum(self, level: int, cap: int | None = DEFAULT_DIM_CAP) -> LocalOperator:
        """Sum of the weights through ``level``, embedded into that window."""
        window = make_window(level, self.dim, self.local_dim, cap)
        total = identity(window, self.local_dim) * 0.0
        for k, weight in self.shells:
            if k <= level:
                total = total + embed_into(weight, window)
        return total

    def shell_norms(self) -> list[tuple[int, float]]:
        """Spectral norm of each weight, by level."""
        return [(k, w.norm()) for k, w in self.shells]


def make_shell_family(shells: Iterable[tuple[int, LocalOperator]], *,
                      local_dim: int = 2, dim: int = 1, validate: bool = True,
                      support_tol: float = DEFAULT_SUPPORT_TOL) -> ShellFamily:
    """Build a :class:`ShellFamily`, checking each weight's support.

    Every weight must be supported inside its level's shell sites (the
    origin for level 0, the sup-norm sphere otherwise).
    """
    entries = sorted(shells, key=lambda kv: kv[0])
    levels = [k for k, _ in entries]
    if len(set(levels)) != len(levels):
        raise ValueError(f"duplicate shell levels {levels}")
    for k, weight in entries:
        if weight.local_dim != local_dim or weight.window.dim != dim:
            raise WindowMismatchError(
                f"shell {k} weight does not match local_dim={local_dim}, dim={dim}")
        if weight.window.radius < k:
            raise WindowMismatchError(
                f"shell {k} weight lives on {weight.window}, too small for its level")
        if validate:
            allowed = set(shell_sites(k, dim))
            leaked = set(support(weight, support_tol)) - allowed
            if leaked:
                raise ValueError(
                    f"shell {k} weight has support outside its shell: {sorted(leaked)}")
    return ShellFamily(local_dim=local_dim, dim=dim, shells=tuple(entries))


def pauli_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(I, X, Y, Z) for a 2-level site."""
    eye = np.eye(2, dtype=np.complex128)
    sx = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    sy = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
    sz = np.array([[1, 0], [0, -1]], dtype=np.complex128)
    return eye, sx, sy, sz
