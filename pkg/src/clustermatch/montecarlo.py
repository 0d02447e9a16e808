"""Monte Carlo oracle for descriptor statistics under position noise.

Random streams are derived from ``(seed, purpose, block)`` through
:class:`numpy.random.SeedSequence`, with a fixed block of trials per stream.
Trial ``t`` therefore always sees the same draws no matter how many trials
are requested or how many workers share the work.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .descriptor import Cluster, MIN_POINTS, descriptor_array
from .errors import TooFewPoints, ValidationError
from .matching import squared_mahalanobis
from .metrics import chi2_threshold
from .unscented import DescriptorDistribution, NoiseModel

BLOCK = 256

# stream purposes; keep values stable, they are part of the reproducibility contract
STREAM_CLUSTER = 0
STREAM_TRIALS = 1
STREAM_PADDING_STUDY = 2
STREAM_DATASET = 3
STREAM_CALIBRATION = 4


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def standard_normal_trials(seed: int, start: int, stop: int, shape, purpose: int = STREAM_TRIALS) -> np.ndarray:
    """Standard-normal draws of ``shape`` for trials ``start..stop-1``."""
    shape = tuple(shape)
    out = np.empty((stop - start,) + shape)
    b0, b1 = start // BLOCK, (stop - 1) // BLOCK
    for b in range(b0, b1 + 1):
        z = stream(seed, purpose, b).standard_normal((BLOCK,) + shape)
        lo = max(start, b * BLOCK)
        hi = min(stop, (b + 1) * BLOCK)
        out[lo - start : hi - start] = z[lo - b * BLOCK : hi - b * BLOCK]
    return out


def simulate_initial_cluster(n: int, rng: np.random.Generator, low: float = 0.0, high: float = 1.0, frame_id: int = 0) -> Cluster:
    """``n`` points with every coordinate uniform on ``[low, high)``."""
    if n < MIN_POINTS:
        raise TooFewPoints(f"cluster needs at least {MIN_POINTS} points, got {n}")
    if not high > low:
        raise ValidationError(f"empty coordinate range [{low}, {high})")
    return Cluster(rng.uniform(low, high, size=(n, 3)), frame_id=frame_id, source="simulated")


def perturb(c: Cluster, noise: NoiseModel, rng: np.random.Generator) -> Cluster:
    z = rng.standard_normal(c.points.shape)
    return c.with_points(c.points + z * noise.axis_sigmas())


@dataclass(frozen=True)
class McConfig:
    trials: int = 10_000
    seed: int = 0
    noise: NoiseModel = NoiseModel(0.01)
    n_flowers: int = 3

    def __post_init__(self):
        if self.trials < 1:
            raise ValidationError(f"trials must be >= 1, got {self.trials}")
        if self.n_flowers < MIN_POINTS:
            raise TooFewPoints(f"n_flowers must be >= {MIN_POINTS}, got {self.n_flowers}")


@dataclass(frozen=True, eq=False)
class McStats:
    mean: np.ndarray
    cov: np.ndarray
    trials: int
    degenerate: bool = False
    samples: np.ndarray | None = None


def sample_stats(samples) -> McStats:
    """Sample mean and (n-1)-normalised covariance of descriptor samples."""
    s = np.asarray(samples, dtype=float)
    n = s.shape[0]
    mean = s.mean(axis=0)
    if n < 2:
        return McStats(mean, np.zeros((s.shape[1], s.shape[1])), n, degenerate=True, samples=s)
    r = s - mean
    cov = r.T @ r / (n - 1)
    return McStats(mean, 0.5 * (cov + cov.T), n, samples=s)


def mc_descriptor_samples(c: Cluster, cfg: McConfig, workers: int = 1) -> np.ndarray:
    """Descriptors of ``cfg.trials`` independently perturbed copies of ``c``."""
    pts = c.points
    sig = cfg.noise.axis_sigmas()
    n_blocks = -(-cfg.trials // BLOCK)

    def run(b):
        lo, hi = b * BLOCK, min(cfg.trials, (b + 1) * BLOCK)
        z = standard_normal_trials(cfg.seed, lo, hi, pts.shape)
        return descriptor_array(pts + z * sig)

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(run, range(n_blocks)))
    else:
        parts = [run(b) for b in range(n_blocks)]
    return np.concatenate(parts, axis=0)


def mc_descriptor_stats(c: Cluster, cfg: McConfig, workers: int = 1, keep_samples: bool = False) -> McStats:
    samples = mc_descriptor_samples(c, cfg, workers=workers)
    st = sample_stats(samples)
    if keep_samples:
        return st
    return McStats(st.mean, st.cov, st.trials, st.degenerate)


def outlier_percentage(samples, dist: DescriptorDistribution, confidence: float = 0.95) -> float:
    """Percent of samples whose squared Mahalanobis distance exceeds the chi-square gate."""
    if isinstance(samples, McStats):
        if samples.samples is None:
            raise ValidationError("McStats has no retained samples; rerun with keep_samples=True")
        samples = samples.samples
    d2 = squared_mahalanobis(samples, dist)
    return 100.0 * float(np.count_nonzero(d2 > chi2_threshold(confidence, 2))) / d2.size
