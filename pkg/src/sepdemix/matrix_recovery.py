"""Per-receiver recovery of the rank-S lifted matrix.

The nuclear-norm program is replaced by its factored (Burer-Monteiro) form

    min_{U, V}  0.5 * ||A(U V^T) - y||^2 + 0.5 * lam * (||U||^2 + ||V||^2)

with U of shape (K, rank) and V of shape (N, rank). At a balanced optimum
the penalty equals ``lam * ||U V^T||_*``, so the factored problem is the
penalized form of nuclear-norm minimization with an explicit rank cap.

Complex variables are handled as pairs of real coordinates: the gradient of
a complex block is the complex array whose real/imaginary parts are the
partial derivatives w.r.t. the real/imaginary parts of the block.
"""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError, SolverDivergedError
from .model import complex_normal


@dataclass(frozen=True)
class SolverOptions:
    """Options of :func:`recover_matrix`.

    ``lam`` is the absolute penalty weight; when None it defaults to
    ``lam_rel * ||y||``, which keeps the solver scale-equivariant.
    ``grad_tol`` is relative to ``||y||**1.5`` (the scaling of the gradient)
    and ``resid_tol`` to ``||y||``. An attempt also ends when the objective
    falls by less than a fraction ``progress_rtol`` over ``progress_window``
    iterations: at a spurious stationary point the gradient never drops
    below ``grad_tol`` in floating point, yet the line search keeps
    accepting negligible steps.
    """

    rank: int
    lam: float = None
    lam_rel: float = 1e-12
    max_iters: int = 3000
    grad_tol: float = 1e-13
    resid_tol: float = 1e-10
    max_restarts: int = 5
    tau: float = 0.0
    stall_tol: float = 1e-5
    memory: int = 10
    progress_window: int = 50
    progress_rtol: float = 1e-8

    def __post_init__(self):
        if self.rank < 1:
            raise ConfigurationError(f"rank must be >= 1, got {self.rank}")
        if self.lam is not None and self.lam < 0:
            raise ConfigurationError("lam must be nonnegative")
        if self.lam_rel < 0:
            raise ConfigurationError("lam_rel must be nonnegative")
        if min(self.grad_tol, self.resid_tol, self.stall_tol) <= 0:
            raise ConfigurationError("tolerances must be positive")
        if self.progress_window < 0 or self.progress_rtol < 0:
            raise ConfigurationError("progress_window and progress_rtol must be nonnegative")
        if self.max_iters < 1 or self.max_restarts < 1:
            raise ConfigurationError("max_iters and max_restarts must be >= 1")
        if self.tau < 0:
            raise ConfigurationError("tau must be nonnegative")

    def penalty(self, y_norm):
        return self.lam if self.lam is not None else self.lam_rel * y_norm


@dataclass
class RecoveredMatrix:
    Z_hat: np.ndarray
    resid: float
    iters: int
    restarts_used: int
    converged: bool
    U: np.ndarray = None
    V: np.ndarray = None
    # objective values at accepted iterates, one array per attempt
    history: list = field(default_factory=list, repr=False)


def objective_and_gradient(op, U, V, y_hat, lam):
    """Value and gradients of the factored objective at ``(U, V)``."""
    U = np.asarray(U, dtype=np.complex128)
    V = np.asarray(V, dtype=np.complex128)
    if U.ndim != 2 or V.ndim != 2 or U.shape[0] != op.K or V.shape[0] != op.N:
        raise ConfigurationError(f"factor shapes {U.shape}, {V.shape} do not fit K={op.K}, N={op.N}")
    if U.shape[1] != V.shape[1]:
        raise ConfigurationError(f"factor ranks differ: {U.shape[1]} vs {V.shape[1]}")
    half_sq, gU, gV = kernels.factored_residual_grad(
        op.b_rows, op.c_rows, U, V, y_hat, op.convention_constant, lam
    )
    value = half_sq
    if lam:
        value += 0.5 * lam * (np.vdot(U, U).real + np.vdot(V, V).real)
    return value, gU, gV


class _Factored:
    """Objective over the packed complex vector ``[U.ravel(), V.ravel()]``."""

    def __init__(self, op, y, rank, lam):
        self.op = op
        self.y = np.asarray(y, dtype=np.complex128)
        self.rank = rank
        self.lam = lam
        self.nU = op.K * rank

    def unpack(self, x):
        return x[: self.nU].reshape(self.op.K, self.rank), x[self.nU :].reshape(self.op.N, self.rank)

    def __call__(self, x):
        U, V = self.unpack(x)
        half_sq, gU, gV = kernels.factored_residual_grad(
            self.op.b_rows, self.op.c_rows, U, V, self.y, self.op.convention_constant, self.lam
        )
        value = half_sq
        if self.lam:
            value += 0.5 * self.lam * np.vdot(x, x).real
        return value, np.sqrt(2.0 * half_sq), np.concatenate([gU.ravel(), gV.ravel()])


def _rdot(a, b):
    return np.vdot(a, b).real


def _lbfgs(fun, x, max_iters, memory, resid_target, grad_target, c1=1e-4, window=0, progress_rtol=0.0):
    """Limited-memory BFGS with Armijo backtracking on a complex vector.

    Returns ``(x, resid, iters, reason, values)``; ``values`` lists the
    objective at every accepted iterate, which is non-increasing. With
    ``window > 0`` the run stops as "stalled" once ``window`` iterations
    reduce the objective by less than ``progress_rtol`` relative.
    """
    f, resid, g = fun(x)
    values = [f]
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    it = 0
    reason = "max_iters"
    while True:
        if not np.isfinite(f):
            raise SolverDivergedError("non-finite objective", {"iters": it, "value": f})
        if resid <= resid_target:
            reason = "resid"
            break
        gnorm = np.linalg.norm(g)
        if gnorm <= grad_target:
            reason = "grad"
            break
        if it >= max_iters:
            break
        if window and it >= window and values[-1] >= values[-1 - window] * (1.0 - progress_rtol):
            reason = "stalled"
            break

        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y in zip(reversed(S), reversed(Y)):
            a = _rdot(s, q) / _rdot(y, s)
            alphas.append(a)
            q -= a * y
        if S:
            gamma = _rdot(S[-1], Y[-1]) / _rdot(Y[-1], Y[-1])
        else:
            gamma = np.linalg.norm(x) / gnorm if np.any(x) else 1.0 / gnorm
        d = gamma * q
        for (s, y), a in zip(zip(S, Y), reversed(alphas)):
            b = _rdot(y, d) / _rdot(y, s)
            d += (a - b) * s
        d = -d
        slope = _rdot(g, d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -g * (np.linalg.norm(x) / gnorm if np.any(x) else 1.0 / gnorm)
            slope = _rdot(g, d)

        t = 1.0
        for _ in range(60):
            x_new = x + t * d
            f_new, resid_new, g_new = fun(x_new)
            if np.isfinite(f_new) and f_new <= f + c1 * t * slope:
                break
            t *= 0.5
        else:
            reason = "line_search"
            break
        if not f_new <= f:
            # Armijo with round-off can admit a microscopic increase
            reason = "line_search"
            break

        s = x_new - x
        y = g_new - g
        sy = _rdot(s, y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x, f, resid, g = x_new, f_new, resid_new, g_new
        values.append(f)
        it += 1
    return x, resid, it, reason, np.asarray(values)


def recover_matrix(op, y_hat, opts, rng):
    """Recover a rank-``opts.rank`` matrix Z with ``forward(op, Z) ~ y_hat``.

    Each attempt starts from a complex Gaussian pair (U, V) scaled so that
    ``||U||_F = ||V||_F = (||y|| / sqrt(L))**0.5``. An attempt that ends at a
    stationary point (or the iteration cap) with relative residual above
    ``opts.stall_tol`` triggers a fresh restart. The best-residual attempt
    is returned; a later attempt replaces it only if strictly better.
    """
    y_hat = np.asarray(y_hat, dtype=np.complex128)
    y_norm = float(np.linalg.norm(y_hat))
    rank = opts.rank
    if y_norm == 0.0:
        Z = np.zeros((op.K, op.N), dtype=np.complex128)
        return RecoveredMatrix(Z, 0.0, 0, 0, True, np.zeros((op.K, rank)), np.zeros((op.N, rank)))

    lam = opts.penalty(y_norm)
    fun = _Factored(op, y_hat, rank, lam)
    if opts.tau > 0:
        resid_target = max(opts.resid_tol * y_norm, opts.tau)
    else:
        resid_target = opts.resid_tol * y_norm
    converged_level = max(opts.resid_tol * y_norm, opts.tau * (1.0 + opts.resid_tol))
    grad_target = opts.grad_tol * y_norm**1.5
    init_scale = np.sqrt(y_norm / op.convention_constant)

    best = None
    total_iters = 0
    history = []
    for attempt in range(opts.max_restarts):
        U0 = complex_normal(rng, (op.K, rank))
        V0 = complex_normal(rng, (op.N, rank))
        U0 *= init_scale / np.linalg.norm(U0)
        V0 *= init_scale / np.linalg.norm(V0)
        x0 = np.concatenate([U0.ravel(), V0.ravel()])
        x, resid, iters, reason, values = _lbfgs(
            fun, x0, opts.max_iters, opts.memory, resid_target, grad_target,
            window=opts.progress_window, progress_rtol=opts.progress_rtol,
        )
        total_iters += iters
        history.append(values)
        if best is None or resid < best[1] - 1e-14 * max(1.0, best[1]):
            best = (x, resid, attempt)
        if best[1] <= converged_level or resid <= opts.stall_tol * y_norm:
            break

    x, resid, attempt = best
    U, V = fun.unpack(x)
    return RecoveredMatrix(
        Z_hat=U @ V.T,
        resid=float(resid),
        iters=total_iters,
        restarts_used=len(history) - 1,
        converged=bool(resid <= converged_level),
        U=U.copy(),
        V=V.copy(),
        history=history,
    )
