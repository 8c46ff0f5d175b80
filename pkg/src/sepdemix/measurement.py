"""Circular convolution, the unitary DFT and the lifted measurement operator.

Conventions
-----------
The DFT is unitary: ``dft(x)[l] = L**-0.5 * sum_n x[n] exp(-2j*pi*l*n/L)``.
Under it the convolution theorem reads::

    dft(x (*) w) = sqrt(L) * dft(x) * dft(w)

Lifted matrices are ``K x N`` with ``lift(m, h) = outer(h, m)``, i.e. the
kernel coefficients index rows and the signal coefficients index columns.
The operator rows are the plain (unconjugated) rows of ``dft(B)`` and
``dft(C)``, and the ``sqrt(L)`` is kept separately as
``convention_constant``, so that::

    forward(lift(m, h))[l] = sqrt(L) * (dft(B) h)[l] * (dft(C) m)[l]
                           = dft(conv(C m, B h))[l]
"""
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ValidationError

#: Lengths up to this use the direct O(L^2) convolution.
DIRECT_CONVOLUTION_MAX = 32


def dft(x, axis=0):
    """Unitary DFT along ``axis``."""
    return np.fft.fft(x, axis=axis, norm="ortho")


def idft(x, axis=0):
    """Inverse of :func:`dft`."""
    return np.fft.ifft(x, axis=axis, norm="ortho")


def dft_matrix(L):
    """Dense unitary DFT matrix, the O(L^2) reference for :func:`dft`."""
    n = np.arange(L)
    return np.exp(-2j * np.pi * np.outer(n, n) / L) / np.sqrt(L)


def dft_direct(x):
    """O(L^2) DFT by explicit matrix product (oracle path, meant for L <= 64)."""
    x = np.asarray(x, dtype=np.complex128)
    return dft_matrix(x.shape[0]) @ x


def circular_convolve(x, w, method="auto"):
    """Circular convolution ``(x (*) w)[n] = sum_k x[k] w[(n - k) mod L]``.

    ``method`` is ``"direct"``, ``"fft"`` or ``"auto"`` (direct for short
    inputs, FFT otherwise). Both paths agree to round-off.
    """
    x = np.asarray(x, dtype=np.complex128)
    w = np.asarray(w, dtype=np.complex128)
    if x.ndim != 1 or x.shape != w.shape:
        raise ValidationError(f"length mismatch: {x.shape} vs {w.shape}")
    if method == "auto":
        method = "direct" if x.shape[0] <= DIRECT_CONVOLUTION_MAX else "fft"
    if method == "direct":
        return kernels.circular_convolve_direct(x, w)
    if method == "fft":
        return np.fft.ifft(np.fft.fft(x) * np.fft.fft(w))
    raise ValueError(f"unknown method {method!r}")


def lift(m, h):
    """Rank-1 lifted matrix ``outer(h, m)`` of shape (K, N)."""
    return np.outer(np.asarray(h), np.asarray(m))


def lift_pairs(M, H):
    """Sum of ``lift(M[:, s], H[:, s])`` over columns, i.e. ``H @ M.T``."""
    M = np.asarray(M)
    H = np.asarray(H)
    if M.ndim != 2 or H.ndim != 2 or M.shape[1] != H.shape[1]:
        raise ValidationError(f"non-conforming factors: M{M.shape}, H{H.shape}")
    return H @ M.T


@dataclass(frozen=True)
class LiftedOperator:
    """The linear map from K x N matrices to the L Fourier-domain measurements.

    ``forward(Z)[l] = convention_constant * b_rows[l] @ Z @ c_rows[l]``.
    """

    b_rows: np.ndarray
    c_rows: np.ndarray
    convention_constant: float

    @property
    def L(self):
        return self.b_rows.shape[0]

    @property
    def K(self):
        return self.b_rows.shape[1]

    @property
    def N(self):
        return self.c_rows.shape[1]

    @property
    def shape(self):
        return (self.L, self.K * self.N)

    def forward(self, Z):
        return forward(self, Z)

    def adjoint(self, y):
        return adjoint(self, y)

    def to_dense(self):
        """Dense L x (K*N) matrix acting on row-major ``Z.ravel()``."""
        rows = self.b_rows[:, :, None] * self.c_rows[:, None, :]
        return self.convention_constant * rows.reshape(self.L, -1)

    def describe(self):
        return {
            "L": self.L,
            "K": self.K,
            "N": self.N,
            "dft": "unitary",
            "lift": "Z = outer(h, m), shape (K, N)",
            "convention_constant": self.convention_constant,
        }


def build_lifted_operator(coding):
    """Precompute the operator rows from the coding matrices."""
    B = np.asarray(coding.B, dtype=np.complex128)
    C = np.asarray(coding.C, dtype=np.complex128)
    if B.shape[0] != C.shape[0]:
        raise ValidationError(f"B has {B.shape[0]} rows but C has {C.shape[0]}")
    L = B.shape[0]
    b_rows = np.ascontiguousarray(dft(B, axis=0))
    c_rows = np.ascontiguousarray(dft(C, axis=0))
    b_rows.setflags(write=False)
    c_rows.setflags(write=False)
    return LiftedOperator(b_rows=b_rows, c_rows=c_rows, convention_constant=float(np.sqrt(L)))


def forward(op, Z):
    Z = np.asarray(Z)
    if Z.shape != (op.K, op.N):
        raise ValidationError(f"expected Z of shape {(op.K, op.N)}, got {Z.shape}")
    return kernels.forward_rows(op.b_rows, Z, op.c_rows, op.convention_constant)


def adjoint(op, y):
    y = np.asarray(y)
    if y.shape != (op.L,):
        raise ValidationError(f"expected y of length {op.L}, got shape {y.shape}")
    return kernels.adjoint_rows(op.b_rows, y, op.c_rows, op.convention_constant)


def forward_naive(op, Z):
    """Per-row evaluation of the forward map; reference for tests."""
    c = op.convention_constant
    return np.array([c * (op.b_rows[l] @ Z @ op.c_rows[l]) for l in range(op.L)])
