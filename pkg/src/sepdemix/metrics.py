"""Ambiguity-aware scoring of recovered signal/kernel pairs.

Recovered pairs are matched to the truth by signal columns, then each pair
gets one unit phase ``alpha_s``: the signal estimate is multiplied by it and
the kernel estimates by its conjugate, which leaves ``outer(h, m)``
unchanged.
"""
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import ValidationError

SUCCESS_THRESHOLD = 1e-3
EXHAUSTIVE_MAX_S = 6


@dataclass
class ErrorReport:
    permutation: np.ndarray  # permutation[s] = recovered column matched to true column s
    phases: np.ndarray
    signal_errors: np.ndarray  # length S
    kernel_errors: np.ndarray  # R x S
    max_error: float
    avg_error: float
    success: bool

    def to_dict(self):
        return {
            "permutation": [int(p) for p in self.permutation],
            "phases": [[float(p.real), float(p.imag)] for p in self.phases],
            "signal_errors": [float(e) for e in self.signal_errors],
            "kernel_errors": [[float(e) for e in row] for row in self.kernel_errors],
            "max_error": float(self.max_error),
            "avg_error": float(self.avg_error),
            "success": bool(self.success),
        }


def _similarity(M_true, M_hat):
    num = np.abs(M_true.conj().T @ M_hat)
    den = np.outer(np.linalg.norm(M_true, axis=0), np.linalg.norm(M_hat, axis=0))
    with np.errstate(invalid="ignore", divide="ignore"):
        sim = np.where(den > 0, num / den, 0.0)
    return sim


def match_pairs(M_true, M_hat):
    """Assignment maximizing the summed absolute cosine similarity of columns.

    Exhaustive over all permutations for S <= 6, Hungarian otherwise.
    """
    M_true = np.asarray(M_true)
    M_hat = np.asarray(M_hat)
    if M_true.shape != M_hat.shape:
        raise ValidationError(f"shape mismatch {M_true.shape} vs {M_hat.shape}")
    S = M_true.shape[1]
    sim = _similarity(M_true, M_hat)
    if S <= EXHAUSTIVE_MAX_S:
        rows = np.arange(S)
        best, best_score = None, -np.inf
        for perm in itertools.permutations(range(S)):
            score = sim[rows, perm].sum()
            if score > best_score + 1e-15:
                best, best_score = perm, score
        return np.array(best)
    _, cols = linear_sum_assignment(-sim)
    return cols


def optimal_phase(v_true, v_hat):
    """Unit scalar ``a`` minimizing ``||v_true - a * v_hat||``."""
    ip = np.vdot(v_hat, v_true)
    return ip / abs(ip) if abs(ip) > 0 else 1.0 + 0.0j


def aligned_errors(truth, M_hat, H_hat, perm=None, threshold=SUCCESS_THRESHOLD):
    """Relative errors after matching pairs and fixing each pair's phase."""
    M_true = np.asarray(truth.M)
    M_hat = np.asarray(M_hat)
    if perm is None:
        perm = match_pairs(M_true, M_hat)
    perm = np.asarray(perm)
    S = M_true.shape[1]
    R = len(truth.H)
    if sorted(perm.tolist()) != list(range(S)):
        raise ValidationError(f"invalid permutation {perm}")
    m_norms = np.linalg.norm(M_true, axis=0)
    if np.any(m_norms == 0) or any(np.any(np.linalg.norm(h, axis=0) == 0) for h in truth.H):
        raise ValidationError("true vectors must be nonzero")

    phases = np.empty(S, dtype=np.complex128)
    signal_errors = np.empty(S)
    kernel_errors = np.empty((R, S))
    for s in range(S):
        j = perm[s]
        a = optimal_phase(M_true[:, s], M_hat[:, j])
        phases[s] = a
        signal_errors[s] = np.linalg.norm(M_true[:, s] - a * M_hat[:, j]) / m_norms[s]
        for r in range(R):
            h = truth.H[r][:, s]
            kernel_errors[r, s] = np.linalg.norm(h - np.conj(a) * H_hat[r][:, j]) / np.linalg.norm(h)
    all_errors = np.concatenate([signal_errors, kernel_errors.ravel()])
    max_error = float(np.max(all_errors))
    return ErrorReport(
        permutation=perm,
        phases=phases,
        signal_errors=signal_errors,
        kernel_errors=kernel_errors,
        max_error=max_error,
        avg_error=float(np.mean(all_errors)),
        success=max_error < threshold,
    )


def is_success(report, threshold=SUCCESS_THRESHOLD):
    """Strict reading of the success rule: every vector error below threshold."""
    return bool(report.max_error < threshold)
