"""Problem instances: configuration, random generation and synthetic data.

All randomness is drawn from Philox streams keyed by ``(seed, tag, ...)``,
so each generator owns an independent stream and adding draws to one never
shifts another.
"""
import hashlib
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ValidationError
from .measurement import circular_convolve, dft, lift_pairs

MODES = ("one_sided", "two_sided")

_MASK64 = (1 << 64) - 1


def derive_seed(seed, *tags):
    """Stable 64-bit seed from a base seed and any number of tags."""
    text = "\x1f".join([str(int(seed) & _MASK64)] + [str(t) for t in tags])
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def make_rng(seed, *tags):
    """Counter-based generator for the stream ``(seed, *tags)``."""
    return np.random.Generator(np.random.Philox(derive_seed(seed, *tags)))


def complex_normal(rng, shape):
    """I.i.d. standard circular complex Gaussian entries (unit variance)."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


@dataclass(frozen=True)
class ProblemConfig:
    L: int
    K: int
    N: int
    S: int
    R: int
    tau: float = 0.0
    mode: str = "two_sided"
    seed: int = 0

    def __post_init__(self):
        for name in ("L", "K", "N", "S", "R"):
            if int(getattr(self, name)) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.K > self.L or self.N > self.L:
            raise ConfigurationError(
                f"subspace dimensions exceed L: K={self.K}, N={self.N}, L={self.L}"
            )
        if self.S > min(self.K, self.N):
            raise ConfigurationError(f"S={self.S} exceeds min(K, N)={min(self.K, self.N)}")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not self.tau >= 0:
            raise ConfigurationError(f"tau must be nonnegative, got {self.tau}")
        if self.mode == "two_sided" and self.R < self.S:
            raise ConfigurationError(f"two_sided mode needs R >= S (R={self.R}, S={self.S})")
        if self.receiver_warning:
            warnings.warn(
                f"one_sided mode with R={self.R} < S+1={self.S + 1}: the transform "
                "system is underdetermined",
                stacklevel=3,
            )

    @property
    def receiver_warning(self):
        """True when one-sided recovery runs below its working regime R >= S+1."""
        return self.mode == "one_sided" and self.R < self.S + 1

    def replace(self, **changes):
        values = self.to_dict()
        values.update(changes)
        return ProblemConfig(**values)

    def to_dict(self):
        return {
            "L": self.L,
            "K": self.K,
            "N": self.N,
            "S": self.S,
            "R": self.R,
            "tau": self.tau,
            "mode": self.mode,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class CodingMatrices:
    B: np.ndarray  # L x K, orthonormal columns
    C: np.ndarray  # L x N, i.i.d. complex Gaussian


@dataclass(frozen=True)
class GroundTruth:
    M: np.ndarray  # N x S, shared signal coefficients
    H: list  # R matrices, each K x S

    def lifted(self, r):
        return lift_pairs(self.M, self.H[r])


@dataclass(frozen=True)
class MeasurementSet:
    y_hat: list
    y_time: list = None
    noise_norm: np.ndarray = field(default=None)


def _rng_for(cfg, rng, tag):
    return rng if rng is not None else make_rng(cfg.seed, tag)


def haar_orthonormal(rng, L, K):
    """L x K matrix with orthonormal columns, Haar distributed."""
    Q, R = np.linalg.qr(complex_normal(rng, (L, K)))
    d = np.diag(R)
    return Q * (d / np.abs(d))


def generate_coding(cfg, rng=None, random_basis=False):
    """Coding matrices B (kernels) and C (signals) shared by every receiver.

    By default B holds the first K standard basis vectors; with
    ``random_basis`` it is a Haar-random orthonormal L x K matrix.
    """
    rng = _rng_for(cfg, rng, "coding")
    if random_basis:
        B = haar_orthonormal(rng, cfg.L, cfg.K)
    else:
        B = np.eye(cfg.L, cfg.K, dtype=np.complex128)
    C = complex_normal(rng, (cfg.L, cfg.N))
    return CodingMatrices(B=B, C=C)


def _normalize_columns(A):
    return A / np.linalg.norm(A, axis=0, keepdims=True)


def generate_ground_truth(cfg, rng=None):
    """Gaussian coefficients; kernel columns always unit norm, signal columns
    unit norm only in two-sided mode."""
    rng = _rng_for(cfg, rng, "truth")
    M = complex_normal(rng, (cfg.N, cfg.S))
    if cfg.mode == "two_sided":
        M = _normalize_columns(M)
    H = [_normalize_columns(complex_normal(rng, (cfg.K, cfg.S))) for _ in range(cfg.R)]
    return GroundTruth(M=M, H=H)


def synthesize_measurements(coding, truth, cfg, rng=None):
    """Time-domain sums of convolutions plus noise, and their unitary DFTs.

    Noise is a complex Gaussian vector rescaled to norm exactly ``cfg.tau``
    (the unitary DFT preserves it in the Fourier domain).
    """
    rng = _rng_for(cfg, rng, "noise")
    X = coding.C @ truth.M
    y_time, y_hat, noise_norm = [], [], []
    for r in range(cfg.R):
        W = coding.B @ truth.H[r]
        y = np.zeros(cfg.L, dtype=np.complex128)
        for s in range(cfg.S):
            y += circular_convolve(X[:, s], W[:, s])
        e = complex_normal(rng, cfg.L)
        if cfg.tau > 0:
            e *= cfg.tau / np.linalg.norm(e)
            y = y + e
            noise_norm.append(float(np.linalg.norm(dft(e))))
        else:
            noise_norm.append(0.0)
        y_time.append(y)
        y_hat.append(dft(y))
    return MeasurementSet(y_hat=y_hat, y_time=y_time, noise_norm=np.array(noise_norm))


def generate_instance(cfg, random_basis=False):
    """``(coding, truth, measurements)`` from the streams keyed by ``cfg.seed``."""
    coding = generate_coding(cfg, random_basis=random_basis)
    truth = generate_ground_truth(cfg)
    meas = synthesize_measurements(coding, truth, cfg)
    return coding, truth, meas


def check_orthonormal(B, tol=1e-10):
    G = B.conj().T @ B
    dev = np.max(np.abs(G - np.eye(G.shape[0])))
    if dev > tol:
        raise ValidationError(f"B columns are not orthonormal (max deviation {dev:.3e})")


def compute_coherence(coding):
    """Kernel-subspace coherence ``(L/K) * max_l ||dft(B)[l]||^2``.

    Lies in ``[1, L/K]`` for orthonormal B.
    """
    B = np.asarray(coding.B)
    check_orthonormal(B)
    L, K = B.shape
    rows = dft(B, axis=0)
    return float(L / K * np.max(np.sum(np.abs(rows) ** 2, axis=1)))


# -- JSON serialization -------------------------------------------------------

INSTANCE_FORMAT = "sepdemix-instance/1"


def complex_to_json(a):
    """Complex array -> nested lists with each entry as ``[re, im]``."""
    a = np.asarray(a, dtype=np.complex128)
    return np.stack([a.real, a.imag], axis=-1).tolist()


def complex_from_json(data):
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 0 or arr.shape[-1] != 2:
        raise ValidationError("complex arrays must be encoded as [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def instance_to_dict(cfg, coding, truth, meas=None):
    out = {
        "format": INSTANCE_FORMAT,
        "config": cfg.to_dict(),
        "B": complex_to_json(coding.B),
        "C": complex_to_json(coding.C),
        "M": complex_to_json(truth.M),
        "H": [complex_to_json(H) for H in truth.H],
    }
    if meas is not None:
        out["y_hat"] = [complex_to_json(y) for y in meas.y_hat]
        if meas.y_time is not None:
            out["y_time"] = [complex_to_json(y) for y in meas.y_time]
        out["noise_norm"] = [float(v) for v in meas.noise_norm]
    return out


def instance_from_dict(data):
    if data.get("format") != INSTANCE_FORMAT:
        raise ValidationError(f"unsupported instance format {data.get('format')!r}")
    cfg = ProblemConfig(**data["config"])
    coding = CodingMatrices(B=complex_from_json(data["B"]), C=complex_from_json(data["C"]))
    truth = GroundTruth(M=complex_from_json(data["M"]), H=[complex_from_json(h) for h in data["H"]])
    meas = None
    if "y_hat" in data:
        y_time = [complex_from_json(y) for y in data["y_time"]] if "y_time" in data else None
        meas = MeasurementSet(
            y_hat=[complex_from_json(y) for y in data["y_hat"]],
            y_time=y_time,
            noise_norm=np.asarray(data["noise_norm"], dtype=np.float64),
        )
    return cfg, coding, truth, meas
