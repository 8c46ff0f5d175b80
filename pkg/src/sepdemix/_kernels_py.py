"""Pure-numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels`` extension. Arrays are complex128 unless stated otherwise.
"""
import numpy as np

IMPLEMENTATION = "python"


def circular_convolve_direct(x, w):
    """O(L^2) circular convolution, ``out[n] = sum_k x[k] w[(n - k) % L]``."""
    L = x.shape[0]
    idx = (np.arange(L)[:, None] - np.arange(L)[None, :]) % L
    return w[idx] @ x


def forward_rows(b_rows, Z, c_rows, scale):
    """``out[l] = scale * b_rows[l] @ Z @ c_rows[l]`` for every row ``l``."""
    return scale * np.einsum("ln,ln->l", b_rows @ Z, c_rows)


def adjoint_rows(b_rows, y, c_rows, scale):
    """Adjoint of :func:`forward_rows`: ``scale * sum_l conj(b_l) y_l conj(c_l)^T``."""
    return scale * (b_rows.conj().T @ (y[:, None] * c_rows.conj()))


def factored_residual_grad(b_rows, c_rows, U, V, y, scale, lam):
    """Data term and real-coordinate gradients of the factored least squares.

    Returns ``(0.5 * ||A(U V^T) - y||^2, gU, gV)``. The gradients include the
    balance penalty ``0.5 * lam * (||U||^2 + ||V||^2)``; its value is left to
    the caller so that a tiny residual is not swamped by the penalty.
    Gradients are complex arrays whose real and imaginary parts are the
    partial derivatives w.r.t. the real and imaginary parts of U and V.
    """
    P = b_rows @ U
    Q = c_rows @ V
    r = scale * np.einsum("lj,lj->l", P, Q) - y
    half_sq = 0.5 * np.vdot(r, r).real
    sr = scale * r
    gU = b_rows.conj().T @ (sr[:, None] * Q.conj())
    gV = c_rows.conj().T @ (sr[:, None] * P.conj())
    if lam:
        gU += lam * U
        gV += lam * V
    return half_sq, gU, gV


def column_norm_residuals(G, X):
    """``out[r, s] = ||G[r] @ X[:, s]||^2 - 1`` for a stack G of shape (R, K, S)."""
    P = np.matmul(G, X)
    return np.einsum("rks,rks->rs", P.conj(), P).real - 1.0
