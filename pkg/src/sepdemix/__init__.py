"""Separable joint blind deconvolution and demixing.

Each of R receivers observes a sum of S circular convolutions of unknown
signals with unknown kernels, both living in known subspaces. Recovery runs
in two stages: a rank-S lifted matrix per receiver (factored least squares
with a nuclear-norm style penalty), then an S x S basis transform shared by
all receivers, pinned down by unit-norm constraints.
"""
from . import kernels
from .errors import (
    ConfigurationError,
    DegenerateFactorizationError,
    RankDeficientError,
    ReconstructionError,
    SepDemixError,
    SolverDivergedError,
    ValidationError,
)
from .harness import (
    CSV_COLUMNS,
    SweepConfig,
    SweepResult,
    detect_threshold,
    format_report,
    is_statistically_monotone,
    load_csv,
    run_sweep,
)
from .matrix_recovery import RecoveredMatrix, SolverOptions, objective_and_gradient, recover_matrix
from .measurement import (
    LiftedOperator,
    adjoint,
    build_lifted_operator,
    circular_convolve,
    dft,
    forward,
    idft,
    lift,
    lift_pairs,
)
from .metrics import ErrorReport, aligned_errors, is_success, match_pairs
from .model import (
    CodingMatrices,
    GroundTruth,
    MeasurementSet,
    ProblemConfig,
    compute_coherence,
    generate_coding,
    generate_ground_truth,
    generate_instance,
    synthesize_measurements,
)
from .pipeline import TrialOptions, TrialRecord, run_trial
from .vector_recovery import (
    FactoredReceiver,
    TransformOptions,
    TransformSolution,
    cross_transforms,
    factorize_rank_s,
    reconstruct_vectors,
    residuals_one_sided,
    residuals_two_sided,
    solve_transform,
)

__version__ = "0.1.0"
