# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled spatial convolution kernels (same contracts as _kernels_py).

Each frame is unfolded into a column buffer in C and multiplied with one
dgemm call, so the reduction length is C_in*p*p rather than C_in.
"""

import numpy as np
cimport numpy as cnp
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()


cdef void _im2col(double[:, :, :, ::1] x, Py_ssize_t t, Py_ssize_t p,
                  double[:, ::1] col) noexcept nogil:
    cdef Py_ssize_t cin = x.shape[0], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t c = p // 2
    cdef Py_ssize_t ci, i, j, y, xx, r, sy, x0, x1
    for ci in range(cin):
        for i in range(p):
            for j in range(p):
                r = (ci * p + i) * p + j
                x0 = c - j if c - j > 0 else 0
                x1 = w + c - j if w + c - j < w else w
                for y in range(h):
                    sy = y + i - c
                    if sy < 0 or sy >= h:
                        for xx in range(w):
                            col[r, y * w + xx] = 0.0
                        continue
                    for xx in range(x0):
                        col[r, y * w + xx] = 0.0
                    for xx in range(x0, x1):
                        col[r, y * w + xx] = x[ci, t, sy, xx + j - c]
                    for xx in range(x1, w):
                        col[r, y * w + xx] = 0.0


cdef void _col2im_add(double[:, ::1] col, Py_ssize_t t, Py_ssize_t p,
                      double[:, :, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t cin = out.shape[0], h = out.shape[2], w = out.shape[3]
    cdef Py_ssize_t c = p // 2
    cdef Py_ssize_t ci, i, j, y, xx, r, sy, x0, x1
    for ci in range(cin):
        for i in range(p):
            for j in range(p):
                r = (ci * p + i) * p + j
                x0 = c - j if c - j > 0 else 0
                x1 = w + c - j if w + c - j < w else w
                for y in range(h):
                    sy = y + i - c
                    if sy < 0 or sy >= h:
                        continue
                    for xx in range(x0, x1):
                        out[ci, t, sy, xx + j - c] += col[r, y * w + xx]


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] k):
    cdef Py_ssize_t cin = x.shape[0], n = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t cout = k.shape[0], p = k.shape[2]
    cdef int m = <int>(h * w), nn = <int>cout, kk = <int>(cin * p * p)
    cdef int lda = m, ldb = kk, ldc = <int>(n * h * w)
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t t
    out_arr = np.empty((cout, n, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] col = np.empty((kk, m))
    cdef double[:, :, :, ::1] kc = k
    for t in range(n):
        _im2col(x, t, p, col)
        # out[:, t]^T (HW x Cout) = col^T (HW x KK) @ K^T (KK x Cout), column-major
        dgemm(b"N", b"N", &m, &nn, &kk, &one, &col[0, 0], &lda,
              &kc[0, 0, 0, 0], &ldb, &zero, &out[0, t, 0, 0], &ldc)
    return out_arr


def conv2d_grad_input(double[:, :, :, ::1] g, double[:, :, :, ::1] k):
    cdef Py_ssize_t cout = g.shape[0], n = g.shape[1], h = g.shape[2], w = g.shape[3]
    cdef Py_ssize_t cin = k.shape[1], p = k.shape[2]
    cdef int m = <int>(h * w), nn = <int>(cin * p * p), kk = <int>cout
    cdef int lda = <int>(n * h * w), ldb = nn, ldc = m
    cdef double one = 1.0, zero = 0.0
    cdef Py_ssize_t t
    out_arr = np.zeros((cin, n, h, w))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] col = np.empty((nn, m))
    for t in range(n):
        dgemm(b"N", b"T", &m, &nn, &kk, &one, &g[0, t, 0, 0], &lda,
              &k[0, 0, 0, 0], &ldb, &zero, &col[0, 0], &ldc)
        _col2im_add(col, t, p, out)
    return out_arr


def conv2d_grad_kernel(double[:, :, :, ::1] g, double[:, :, :, ::1] x, int p):
    cdef Py_ssize_t cout = g.shape[0], n = g.shape[1], h = g.shape[2], w = g.shape[3]
    cdef Py_ssize_t cin = x.shape[0]
    cdef int m = <int>(cin * p * p), nn = <int>cout, kk = <int>(h * w)
    cdef int lda = kk, ldb = <int>(n * h * w), ldc = m
    cdef double one = 1.0
    cdef Py_ssize_t t
    out_arr = np.zeros((cout, cin, p, p))
    cdef double[:, :, :, ::1] out = out_arr
    cdef double[:, ::1] col = np.empty((m, kk))
    for t in range(n):
        _im2col(x, t, p, col)
        dgemm(b"T", b"N", &m, &nn, &kk, &one, &col[0, 0], &lda,
              &g[0, t, 0, 0], &ldb, &one, &out[0, 0, 0, 0], &ldc)
    return out_arr
