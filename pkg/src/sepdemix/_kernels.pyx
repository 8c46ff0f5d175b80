# cython: language_level=3
"""Compiled twins of the kernels in ``_kernels_py``.

The fused loops avoid the temporaries and the per-call overhead that
dominate the numpy versions at the small (K, N, rank) sizes used by the
factored solver.
"""
import numpy as np
cimport numpy as cnp

from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

IMPLEMENTATION = "cython"


# noexcept: otherwise every call re-acquires the GIL to poll for errors
cdef inline double complex _conj(double complex z) noexcept nogil:
    return z.conjugate()


cdef inline double _abs2(double complex z) noexcept nogil:
    return z.real * z.real + z.imag * z.imag


cdef void _matmul(const double complex* A, const double complex* B, double complex* C,
                  int m, int k, int n, double beta) noexcept nogil:
    """Row-major ``C (m x n) = A (m x k) @ B (k x n) + beta * C``."""
    cdef char tn = b'N'
    cdef double complex one = 1.0, b = beta
    if m == 0 or n == 0:
        return
    # column-major BLAS sees the transposes: C^T = B^T A^T
    zgemm(&tn, &tn, &n, &m, &k, &one, <double complex*>B, &n, <double complex*>A, &k, &b, C, &n)


cdef void _adjmul(const double complex* A, const double complex* D, double complex* C,
                  int l, int k, int n, double beta) noexcept nogil:
    """Row-major ``C (k x n) = A^H @ D + beta * C`` with A of shape (l, k), D of shape (l, n)."""
    cdef char tn = b'N', tc = b'C'
    cdef double complex one = 1.0, b = beta
    if k == 0 or n == 0:
        return
    # C^T = D^T conj(A), i.e. D_cm (n x l) times A_cm^H (l x k)
    zgemm(&tn, &tc, &n, &k, &l, &one, <double complex*>D, &n, <double complex*>A, &k, &b, C, &n)


def _c128(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def circular_convolve_direct(x, w):
    cdef const double complex[::1] xv = _c128(x)
    cdef const double complex[::1] wv = _c128(w)
    cdef Py_ssize_t L = xv.shape[0]
    out = np.zeros(L, dtype=np.complex128)
    cdef double complex[::1] ov = out
    cdef Py_ssize_t n, k, j
    cdef double complex acc
    with nogil:
        for n in range(L):
            acc = 0
            j = n
            for k in range(L):
                acc = acc + xv[k] * wv[j]
                j -= 1
                if j < 0:
                    j = L - 1
            ov[n] = acc
    return out


def forward_rows(b_rows, Z, c_rows, double scale):
    cdef const double complex[:, ::1] bv = _c128(b_rows)
    cdef const double complex[:, ::1] zv = _c128(Z)
    cdef const double complex[:, ::1] cv = _c128(c_rows)
    cdef int L = bv.shape[0], K = bv.shape[1], N = cv.shape[1]
    W_arr = np.empty((L, N), dtype=np.complex128)
    cdef double complex[:, ::1] W = W_arr
    out = np.empty(L, dtype=np.complex128)
    cdef double complex[::1] ov = out
    cdef Py_ssize_t l, n
    cdef double complex acc
    with nogil:
        _matmul(&bv[0, 0], &zv[0, 0], &W[0, 0], L, K, N, 0.0)
        for l in range(L):
            acc = 0
            for n in range(N):
                acc = acc + W[l, n] * cv[l, n]
            ov[l] = scale * acc
    return out


def adjoint_rows(b_rows, y, c_rows, double scale):
    cdef const double complex[:, ::1] bv = _c128(b_rows)
    cdef const double complex[::1] yv = _c128(y)
    cdef const double complex[:, ::1] cv = _c128(c_rows)
    cdef int L = bv.shape[0], K = bv.shape[1], N = cv.shape[1]
    D_arr = np.empty((L, N), dtype=np.complex128)
    cdef double complex[:, ::1] D = D_arr
    out = np.empty((K, N), dtype=np.complex128)
    cdef double complex[:, ::1] ov = out
    cdef Py_ssize_t l, n
    cdef double complex w
    with nogil:
        for l in range(L):
            w = scale * yv[l]
            for n in range(N):
                D[l, n] = w * _conj(cv[l, n])
        _adjmul(&bv[0, 0], &D[0, 0], &ov[0, 0], L, K, N, 0.0)
    return out


def factored_residual_grad(b_rows, c_rows, U, V, y, double scale, double lam):
    cdef const double complex[:, ::1] bv = _c128(b_rows)
    cdef const double complex[:, ::1] cv = _c128(c_rows)
    cdef const double complex[:, ::1] uv = _c128(U)
    cdef const double complex[:, ::1] vv = _c128(V)
    cdef const double complex[::1] yv = _c128(y)
    cdef int L = bv.shape[0], K = bv.shape[1], N = cv.shape[1]
    cdef int rk = uv.shape[1]
    # the penalty gradient seeds the outputs; the gemm below accumulates onto it
    gU_arr = np.multiply(lam, U, dtype=np.complex128)
    gV_arr = np.multiply(lam, V, dtype=np.complex128)
    cdef double complex[:, ::1] gU = gU_arr
    cdef double complex[:, ::1] gV = gV_arr
    P_arr = np.empty((L, rk), dtype=np.complex128)
    Q_arr = np.empty((L, rk), dtype=np.complex128)
    cdef double complex[:, ::1] P = P_arr
    cdef double complex[:, ::1] Q = Q_arr
    cdef Py_ssize_t l, j
    cdef double complex pred, sr, p
    cdef double value = 0.0
    with nogil:
        _matmul(&bv[0, 0], &uv[0, 0], &P[0, 0], L, K, rk, 0.0)
        _matmul(&cv[0, 0], &vv[0, 0], &Q[0, 0], L, N, rk, 0.0)
        for l in range(L):
            pred = 0
            for j in range(rk):
                pred = pred + P[l, j] * Q[l, j]
            sr = scale * pred - yv[l]
            value += _abs2(sr)
            sr = scale * sr
            # overwrite P, Q in place with the weights of the two gradient products
            for j in range(rk):
                p = P[l, j]
                P[l, j] = sr * _conj(Q[l, j])
                Q[l, j] = sr * _conj(p)
        value *= 0.5
        _adjmul(&bv[0, 0], &P[0, 0], &gU[0, 0], L, K, rk, 1.0)
        _adjmul(&cv[0, 0], &Q[0, 0], &gV[0, 0], L, N, rk, 1.0)
    return value, gU_arr, gV_arr


def column_norm_residuals(G, X):
    cdef const double complex[:, :, ::1] gv = _c128(G)
    cdef const double complex[:, ::1] xv = _c128(X)
    cdef Py_ssize_t R = gv.shape[0], K = gv.shape[1], S = gv.shape[2]
    cdef Py_ssize_t S2 = xv.shape[1]
    out = np.empty((R, S2), dtype=np.float64)
    cdef double[:, ::1] ov = out
    cdef Py_ssize_t r, k, s, j
    cdef double complex t
    cdef double acc
    with nogil:
        for r in range(R):
            for s in range(S2):
                acc = 0.0
                for k in range(K):
                    t = 0
                    for j in range(S):
                        t = t + gv[r, k, j] * xv[j, s]
                    acc += _abs2(t)
                ov[r, s] = acc - 1.0
    return out
