"""Pure numpy implementations of the step-chain kernels.

These are the fallback for :mod:`spinqds.kernels._core`; both backends
implement the same four operations on C-contiguous complex128 arrays and
must agree to rounding error (the test suite checks parity).
"""

from __future__ import annotations

import numpy as np


def repeated_apply(mat: np.ndarray, block: np.ndarray, count: int) -> np.ndarray:
    """Apply ``mat`` to ``block`` from the left ``count`` times."""
    out = block.astype(np.complex128, copy=True)
    for _ in range(count):
        out = mat @ out
    return out


def chain_product(mats: np.ndarray) -> np.ndarray:
    """Product of a stack of matrices in application order.

    ``mats`` has shape (K, d, d); the result is ``mats[K-1] @ ... @ mats[0]``,
    i.e. index 0 acts first.
    """
    d = mats.shape[1]
    out = np.eye(d, dtype=np.complex128)
    for k in range(mats.shape[0]):
        out = mats[k] @ out
    return out


def kraus_power(ops: np.ndarray, x: np.ndarray, count: int) -> np.ndarray:
    """Apply the map ``X -> sum_a ops[a]^dag X ops[a]`` ``count`` times."""
    adj = np.ascontiguousarray(ops.conj().transpose(0, 2, 1))
    out = x.astype(np.complex128, copy=True)
    for _ in range(count):
        out = np.matmul(adj, np.matmul(out, ops)).sum(axis=0)
    return out


def amplitude_chain(blocks: np.ndarray, famp: np.ndarray, gamp: np.ndarray) -> np.ndarray:
    """Chain of slot-contracted transfer matrices.

    Per step k the transfer matrix is
    ``T_k = sum_{a,b} conj(famp[k,a]) * gamp[k,b] * blocks[a,b]`` and the
    result is ``T_{K-1} @ ... @ T_0`` (step 0 acts first).  ``blocks`` has
    shape (dn, dn, ds, ds) and the amplitude arrays (K, dn).
    """
    steps = famp.shape[0]
    ds = blocks.shape[2]
    out = np.eye(ds, dtype=np.complex128)
    fbar = famp.conj()
    for k in range(steps):
        tk = np.einsum("a,b,abij->ij", fbar[k], gamp[k], blocks)
        out = tk @ out
    return out
