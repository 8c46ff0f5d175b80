"""Kernel backend selection.

The compiled extension is used when it imports cleanly; otherwise the
pure-numpy module is used. Setting ``SEPDEMIX_PURE_PYTHON=1`` forces the
fallback, which is how the benchmark and the parity tests reach both.
"""
import os

from . import _kernels_py as python_backend

compiled_backend = None
if not os.environ.get("SEPDEMIX_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend

IMPLEMENTATION = backend.IMPLEMENTATION
circular_convolve_direct = backend.circular_convolve_direct
forward_rows = backend.forward_rows
adjoint_rows = backend.adjoint_rows
factored_residual_grad = backend.factored_residual_grad
column_norm_residuals = backend.column_norm_residuals

__all__ = [
    "IMPLEMENTATION",
    "adjoint_rows",
    "backend",
    "circular_convolve_direct",
    "column_norm_residuals",
    "compiled_backend",
    "factored_residual_grad",
    "forward_rows",
    "python_backend",
]
