"""One end-to-end trial: generate, measure, recover matrices, recover vectors, score."""
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import SepDemixError
from .matrix_recovery import SolverOptions, recover_matrix
from .measurement import build_lifted_operator
from .metrics import SUCCESS_THRESHOLD, aligned_errors
from .model import ProblemConfig, generate_instance, make_rng
from .vector_recovery import (
    TransformOptions,
    cross_transforms,
    factorize_rank_s,
    make_residual_fn,
    reconstruct_vectors,
    solve_transform,
)

FAILURE_CATEGORIES = ("none", "matrix_recovery", "transform_nonconverged", "transform_spurious")


@dataclass
class TrialRecord:
    L: int
    K: int
    N: int
    S: int
    R: int
    mode: str
    tau: float
    trial: int
    seed: int
    matrix_resid: list = field(default_factory=list)
    matrix_err: list = field(default_factory=list)
    transform_converged: bool = False
    transform_resid: float = float("nan")
    max_vec_err: float = float("inf")
    avg_vec_err: float = float("inf")
    success: bool = False
    failure_category: str = "matrix_recovery"
    wall_ms: float = 0.0
    transform_attempts: int = 0
    spurious_rejections: int = 0
    report: object = field(default=None, repr=False)

    @property
    def matrix_resid_max(self):
        return max(self.matrix_resid) if self.matrix_resid else float("nan")

    @property
    def matrix_err_max(self):
        return max(self.matrix_err) if self.matrix_err else float("nan")

    def to_dict(self):
        d = asdict(self)
        d.pop("report")
        d["matrix_resid_max"] = self.matrix_resid_max
        d["matrix_err_max"] = self.matrix_err_max
        if self.report is not None:
            d["report"] = self.report.to_dict()
        return d


@dataclass
class TrialOptions:
    """Solver knobs for :func:`run_trial`.

    ``oracle_restarts`` lets the transform solver keep restarting while a
    converged root fails the ground-truth check (harness mode). It applies
    to both constraint modes; None restricts it to one-sided mode.
    """

    threshold: float = SUCCESS_THRESHOLD
    matrix: dict = field(default_factory=dict)
    transform: dict = field(default_factory=dict)
    rank_slack: int = 0
    r0: int = 0
    oracle_restarts: bool = True
    random_basis: bool = False


def run_trial(cfg, seed=None, trial=0, options=None):
    """Run the whole pipeline for one instance.

    Stage failures are recorded in ``failure_category``; only configuration
    errors propagate.
    """
    if not isinstance(cfg, ProblemConfig):
        raise TypeError("cfg must be a ProblemConfig")
    options = options or TrialOptions()
    if seed is not None:
        cfg = cfg.replace(seed=int(seed))
    t0 = time.perf_counter()
    rec = TrialRecord(
        L=cfg.L, K=cfg.K, N=cfg.N, S=cfg.S, R=cfg.R, mode=cfg.mode, tau=cfg.tau,
        trial=int(trial), seed=int(cfg.seed),
    )
    coding, truth, meas = generate_instance(cfg, random_basis=options.random_basis)
    op = build_lifted_operator(coding)
    threshold = options.threshold

    try:
        mopts = SolverOptions(rank=cfg.S + options.rank_slack, tau=cfg.tau, **options.matrix)
        recovered = []
        for r in range(cfg.R):
            res = recover_matrix(op, meas.y_hat[r], mopts, make_rng(cfg.seed, "matrix", r))
            Z = truth.lifted(r)
            rec.matrix_resid.append(float(res.resid))
            rec.matrix_err.append(float(np.linalg.norm(res.Z_hat - Z) / np.linalg.norm(Z)))
            recovered.append(res.Z_hat)

        factored = [factorize_rank_s(Z, cfg.S) for Z in recovered]
        _, G = cross_transforms(factored, options.r0)
        ref = factored[options.r0]
        residual_fn = make_residual_fn(cfg.mode, G, ref.M_tilde)

        oracle = options.oracle_restarts
        if oracle is None:
            oracle = cfg.mode == "one_sided"
        accept = None
        if oracle:
            def accept(T):
                M_hat, H_hat = reconstruct_vectors(ref, G, T)
                return aligned_errors(truth, M_hat, H_hat, threshold=threshold).success

        sol = solve_transform(
            residual_fn, cfg.S, TransformOptions(**options.transform), make_rng(cfg.seed, "transform"), accept
        )
        rec.transform_converged = bool(sol.converged)
        rec.transform_attempts = len(sol.attempts)
        rec.spurious_rejections = sum(1 for status, _, ok in sol.attempts if status == "converged" and not ok)
        rec.transform_resid = float(sol.resid_norm)
        M_hat, H_hat = reconstruct_vectors(ref, G, sol.T)
        report = aligned_errors(truth, M_hat, H_hat, threshold=threshold)
        rec.report = report
        rec.max_vec_err = report.max_error
        rec.avg_vec_err = report.avg_error
        rec.success = report.success
        if rec.success:
            rec.failure_category = "none"
        elif rec.matrix_err_max >= threshold:
            rec.failure_category = "matrix_recovery"
        elif not sol.converged:
            rec.failure_category = "transform_nonconverged"
        else:
            rec.failure_category = "transform_spurious"
    except SepDemixError:
        rec.success = False
        if rec.matrix_err and rec.matrix_err_max < threshold and len(rec.matrix_err) == cfg.R:
            rec.failure_category = "transform_nonconverged"
        else:
            rec.failure_category = "matrix_recovery"
    rec.wall_ms = (time.perf_counter() - t0) * 1e3
    return rec
