"""Recovery of the signal and kernel coefficients from the lifted matrices.

Each recovered ``Z_r = H_r M^T`` only determines its factors up to an
invertible S x S transform. With a reference receiver ``r0`` whose SVD
signal factor is ``Mt0``, the true factors are

    M   = Mt0 @ T
    H_r = G_r @ inv(T).T,      G_r = Ht_r @ Tc_r.T,   Tc_r = pinv(Mt0) @ Mt_r

so only the S x S matrix T is unknown. Unit-norm constraints on the kernel
columns (one-sided) or on both kernel and signal columns (two-sided) turn
into quadratic equations in T, solved here by trust-region dogleg.

Orientation: lifted matrices are K x N with ``lift(m, h) = outer(h, m)``,
so plain transposes appear where a conjugate-transpose convention on the
kernel side would use ``^*``. The two are related by conjugating H.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dogleg import solve_dogleg
from .errors import DegenerateFactorizationError, RankDeficientError, ReconstructionError
from .model import complex_normal

#: Residual value returned for (numerically) singular transforms.
SINGULAR_SENTINEL = 1e6


@dataclass(frozen=True)
class FactoredReceiver:
    M_tilde: np.ndarray  # N x S, orthogonal columns with M_tilde^* M_tilde = diag(sigma)
    H_tilde: np.ndarray  # K x S
    sigma: np.ndarray  # S singular values, descending
    rank_deficient: bool = False

    def product(self):
        return self.H_tilde @ self.M_tilde.T


@dataclass
class TransformOptions:
    tol: float = 1e-8
    max_restarts: int = 20  # total attempts
    max_iters: int = 200
    rel_step: float = 1e-7
    cond_limit: float = 1e12


@dataclass
class TransformSolution:
    T: np.ndarray
    resid_norm: float
    restarts_used: int
    converged: bool
    cond: float
    spurious: bool = False
    attempts: list = field(default_factory=list, repr=False)


def factorize_rank_s(Z, S, rank_gap_tol=1e-6, strict=True):
    """Truncated rank-S SVD split as ``Z ~ H_tilde @ M_tilde.T``.

    Both factors carry ``sqrt(sigma)``. With ``strict`` a singular-value gap
    ``sigma_S / sigma_1 <= rank_gap_tol`` raises; otherwise the result is
    flagged ``rank_deficient``.
    """
    Z = np.asarray(Z, dtype=np.complex128)
    if not np.all(np.isfinite(Z)):
        raise RankDeficientError("matrix has non-finite entries")
    U, sigma, Vh = np.linalg.svd(Z, full_matrices=False)
    if S > sigma.size:
        raise RankDeficientError(f"cannot take rank {S} from a {Z.shape} matrix")
    sigma = sigma[:S]
    deficient = not (sigma[0] > 0 and sigma[-1] / sigma[0] > rank_gap_tol)
    if deficient and strict:
        ratio = sigma[-1] / sigma[0] if sigma[0] > 0 else 0.0
        raise RankDeficientError(f"sigma_S/sigma_1 = {ratio:.3e} <= {rank_gap_tol:g}")
    root = np.sqrt(sigma)
    H_tilde = U[:, :S] * root
    M_tilde = Vh[:S].T * root
    return FactoredReceiver(M_tilde=M_tilde, H_tilde=H_tilde, sigma=sigma, rank_deficient=deficient)


def cross_transforms(factored, r0=0):
    """Transforms from each receiver's signal factor to the reference one.

    Returns ``(T_cross, G)`` with ``T_cross[r] = pinv(Mt_r0) @ Mt_r`` and
    ``G[r] = Ht_r @ T_cross[r].T``; ``T_cross[r0]`` is the identity.
    """
    ref = factored[r0]
    S = ref.M_tilde.shape[1]
    gram = ref.M_tilde.conj().T @ ref.M_tilde
    if np.linalg.cond(gram) > 1e14:
        raise DegenerateFactorizationError("reference signal factor is singular")
    pinv = np.linalg.solve(gram, ref.M_tilde.conj().T)
    T_cross, G = [], []
    for r, fr in enumerate(factored):
        if fr.M_tilde.shape[1] != S:
            raise DegenerateFactorizationError("receivers were factored with different ranks")
        Tc = np.eye(S, dtype=np.complex128) if r == r0 else pinv @ fr.M_tilde
        T_cross.append(Tc)
        G.append(fr.H_tilde @ Tc.T)
    return T_cross, G


def _inverse_transpose(T, cond_limit):
    """``inv(T).T`` or None when T is numerically singular."""
    if not np.all(np.isfinite(T)):
        return None
    c = np.linalg.cond(T)
    if not np.isfinite(c) or c > cond_limit:
        return None
    return np.linalg.inv(T).T


def _stack(G):
    return np.ascontiguousarray(np.stack([np.asarray(g, dtype=np.complex128) for g in G]))


def residuals_one_sided(T, G, cond_limit=1e12):
    """Kernel-norm residuals ``||(G_r inv(T).T)[:, s]||^2 - 1``, length R*S (r-major)."""
    T = np.asarray(T, dtype=np.complex128)
    X = _inverse_transpose(T, cond_limit)
    if X is None:
        return np.full(len(G) * T.shape[0], SINGULAR_SENTINEL)
    return kernels.column_norm_residuals(_stack(G), X).ravel()


def residuals_two_sided(T, M_tilde_r0, G, cond_limit=1e12):
    """Signal-norm residuals ``||Mt0 T[:, s]||^2 - 1`` followed by the one-sided ones."""
    T = np.asarray(T, dtype=np.complex128)
    X = _inverse_transpose(T, cond_limit)
    if X is None:
        return np.full((len(G) + 1) * T.shape[0], SINGULAR_SENTINEL)
    signal = kernels.column_norm_residuals(np.asarray(M_tilde_r0, dtype=np.complex128)[None], T)
    kernel = kernels.column_norm_residuals(_stack(G), X)
    return np.concatenate([signal.ravel(), kernel.ravel()])


def make_residual_fn(mode, G, M_tilde_r0=None, cond_limit=1e12):
    """Residual function of T for the given constraint mode."""
    G = _stack(G)
    if mode == "one_sided":
        return lambda T: residuals_one_sided(T, G, cond_limit)
    if mode == "two_sided":
        return lambda T: residuals_two_sided(T, M_tilde_r0, G, cond_limit)
    raise ValueError(f"unknown mode {mode!r}")


def pack_transform(T):
    return np.concatenate([T.real.ravel(), T.imag.ravel()])


def unpack_transform(x, S):
    n = S * S
    return (x[:n] + 1j * x[n:]).reshape(S, S)


def _random_start(rng, S):
    T = complex_normal(rng, (S, S))
    return T / np.linalg.norm(T, axis=0, keepdims=True)


def solve_transform(residual_fn, S, opts=None, rng=None, accept=None):
    """Find T with ``residual_fn(T) ~ 0`` by dogleg over its 2 S^2 real entries.

    Up to ``opts.max_restarts`` attempts are made from random complex
    Gaussian starts with unit-norm columns. A converged attempt ends the
    search unless ``accept(T)`` is given and returns False; such roots are
    reported as spurious. The best attempt is returned, ranked by
    (accepted, converged, residual), earlier attempts winning ties.
    """
    opts = opts or TransformOptions()
    rng = rng if rng is not None else np.random.default_rng()

    def F(x):
        return residual_fn(unpack_transform(x, S))

    best = None
    attempts = []
    for attempt in range(opts.max_restarts):
        x0 = pack_transform(_random_start(rng, S))
        res = solve_dogleg(F, x0, tol=opts.tol, max_iters=opts.max_iters, rel_step=opts.rel_step)
        T = unpack_transform(res.x, S)
        ok = res.converged and (accept is None or bool(accept(T)))
        rank = (ok, res.converged, -res.resid_norm)
        attempts.append((res.status, res.resid_norm, ok))
        if best is None or rank > best[0]:
            best = (rank, T, res)
        if ok:
            break

    (ok, converged, _), T, res = best
    cond = float(np.linalg.cond(T)) if np.all(np.isfinite(T)) else float("inf")
    return TransformSolution(
        T=T,
        resid_norm=res.resid_norm,
        restarts_used=len(attempts) - 1,
        converged=converged,
        cond=cond,
        spurious=converged and not ok,
        attempts=attempts,
    )


def reconstruct_vectors(factored_r0, G, T, cond_limit=1e12):
    """``M_hat = Mt0 @ T`` and ``H_hat[r] = G[r] @ inv(T).T``."""
    T = np.asarray(T, dtype=np.complex128)
    X = _inverse_transpose(T, cond_limit)
    if X is None:
        raise ReconstructionError("basis transform is singular")
    M_hat = factored_r0.M_tilde @ T
    H_hat = [np.asarray(g) @ X for g in G]
    return M_hat, H_hat


def true_transform(factored_r0, M):
    """Oracle transform ``pinv(Mt0) @ M`` from known signal coefficients."""
    return np.linalg.pinv(factored_r0.M_tilde) @ M
