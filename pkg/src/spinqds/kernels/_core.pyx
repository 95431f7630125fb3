# cython: boundscheck=False, wraparound=False, cdivision=True
"""BLAS-backed step-chain kernels.

Same contract as :mod:`spinqds.kernels.pure`; the point of the compiled
version is to strip the per-step Python/numpy dispatch overhead from long
chains of small matrix products.
"""

import numpy as np

from scipy.linalg.cython_blas cimport zgemm


cdef inline void _matmul(double complex* a, double complex* b, double complex* c,
                         int p, int q, int r, double complex beta) noexcept nogil:
    # Row-major C[p,r] (+)= A[p,q] @ B[q,r] through column-major zgemm.
    cdef char tn = b'N'
    cdef double complex one = 1.0
    zgemm(&tn, &tn, &r, &p, &q, &one, b, &r, a, &q, &beta, c, &r)


def _contiguous(arr):
    # Memoryviews need writable buffers; immutable inputs get copied.
    out = np.ascontiguousarray(arr, dtype=np.complex128)
    if not out.flags.writeable:
        out = out.copy()
    return out


def repeated_apply(mat, block, int count):
    """Apply ``mat`` to ``block`` from the left ``count`` times."""
    cdef double complex[:, ::1] m = _contiguous(mat)
    out_arr = np.array(block, dtype=np.complex128, order="C")
    tmp_arr = np.empty_like(out_arr)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[:, ::1] tmp = tmp_arr
    cdef int d = m.shape[0], b = out.shape[1], k
    cdef double complex zero = 0.0
    with nogil:
        for k in range(count):
            _matmul(&m[0, 0], &out[0, 0], &tmp[0, 0], d, d, b, zero)
            out, tmp = tmp, out
    return out_arr if count % 2 == 0 else tmp_arr


def chain_product(mats):
    """Product ``mats[K-1] @ ... @ mats[0]`` of a (K, d, d) stack."""
    cdef double complex[:, :, ::1] m = _contiguous(mats)
    cdef int steps = m.shape[0], d = m.shape[1], k
    out_arr = np.eye(d, dtype=np.complex128)
    tmp_arr = np.empty_like(out_arr)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[:, ::1] tmp = tmp_arr
    cdef double complex zero = 0.0
    with nogil:
        for k in range(steps):
            _matmul(&m[k, 0, 0], &out[0, 0], &tmp[0, 0], d, d, d, zero)
            out, tmp = tmp, out
    return out_arr if steps % 2 == 0 else tmp_arr


def kraus_power(ops, x, int count):
    """Apply ``X -> sum_a ops[a]^dag X ops[a]`` ``count`` times."""
    cdef double complex[:, :, ::1] o = _contiguous(ops)
    cdef double complex[:, :, ::1] adj = _contiguous(np.conj(ops).transpose(0, 2, 1))
    acc_arr = np.array(x, dtype=np.complex128, order="C")
    nxt_arr = np.empty_like(acc_arr)
    scratch = np.empty_like(acc_arr)
    cdef double complex[:, ::1] acc = acc_arr
    cdef double complex[:, ::1] nxt = nxt_arr
    cdef double complex[:, ::1] tmp = scratch
    cdef int r = o.shape[0], d = o.shape[1], k, a, i, j
    cdef double complex zero = 0.0, one = 1.0
    with nogil:
        for k in range(count):
            for i in range(d):
                for j in range(d):
                    nxt[i, j] = 0.0
            for a in range(r):
                _matmul(&acc[0, 0], &o[a, 0, 0], &tmp[0, 0], d, d, d, zero)
                _matmul(&adj[a, 0, 0], &tmp[0, 0], &nxt[0, 0], d, d, d, one)
            acc, nxt = nxt, acc
    return acc_arr if count % 2 == 0 else nxt_arr


def amplitude_chain(blocks, famp, gamp):
    """Chain of slot-contracted transfer matrices (see the pure twin)."""
    cdef double complex[:, :, :, ::1] blk = _contiguous(blocks)
    cdef double complex[:, ::1] f = _contiguous(famp)
    cdef double complex[:, ::1] g = _contiguous(gamp)
    cdef int steps = f.shape[0], dn = blk.shape[0], ds = blk.shape[2]
    cdef int k, a, b, i, j
    out_arr = np.eye(ds, dtype=np.complex128)
    tmp_arr = np.empty_like(out_arr)
    tk_arr = np.empty_like(out_arr)
    cdef double complex[:, ::1] out = out_arr
    cdef double complex[:, ::1] tmp = tmp_arr
    cdef double complex[:, ::1] tk = tk_arr
    cdef double complex w, zero = 0.0
    with nogil:
        for k in range(steps):
            for i in range(ds):
                for j in range(ds):
                    tk[i, j] = 0.0
            for a in range(dn):
                for b in range(dn):
                    w = f[k, a].conjugate() * g[k, b]
                    if w != 0.0:
                        for i in range(ds):
                            for j in range(ds):
                                tk[i, j] = tk[i, j] + w * blk[a, b, i, j]
            _matmul(&tk[0, 0], &out[0, 0], &tmp[0, 0], ds, ds, ds, zero)
            out, tmp = tmp, out
    return out_arr if steps % 2 == 0 else tmp_arr
