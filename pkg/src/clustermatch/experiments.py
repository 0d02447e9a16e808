"""Noise-sweep and padding-study experiments built on the core modules."""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .descriptor import descriptor_array
from .matching import DESCRIPTOR_DOF, gate, precision_matrix
from .metrics import chi2_threshold, frobenius_distance
from .montecarlo import (
    STREAM_CLUSTER,
    STREAM_PADDING_STUDY,
    McConfig,
    mc_descriptor_stats,
    outlier_percentage,
    simulate_initial_cluster,
    stream,
)
from .descriptor import Cluster
from .unscented import NoiseModel, UtParams, ut_descriptor_distribution

DEFAULT_NOISE_GRID = (0.01, 0.02, 0.03, 0.04, 0.05)


@dataclass(frozen=True)
class SweepRow:
    noise: float
    frobenius_norm: float
    outlier_pct: float
    ut_mean: tuple
    mc_mean: tuple


def seeded_cluster(seed: int, n_flowers: int, low: float = 0.0, high: float = 1.0) -> Cluster:
    return simulate_initial_cluster(n_flowers, stream(seed, STREAM_CLUSTER), low, high)


def noise_sweep(
    noises=DEFAULT_NOISE_GRID,
    trials: int = 10_000,
    seed: int = 0,
    n_flowers: int = 3,
    confidence: float = 0.95,
    ut: UtParams | None = None,
    extent: tuple[float, float] = (0.0, 1.0),
    cluster: Cluster | None = None,
    workers: int = 1,
) -> list[SweepRow]:
    """UT against Monte Carlo for one seeded cluster at each noise level.

    The same standard-normal draws are reused at every noise level, so the
    rows differ only through the noise scale.
    """
    ut = ut or UtParams()
    c = cluster if cluster is not None else seeded_cluster(seed, n_flowers, *extent)
    rows = []
    for s in noises:
        noise = NoiseModel(s)
        dist = ut_descriptor_distribution(c, noise, ut)
        mc = mc_descriptor_stats(c, McConfig(trials, seed, noise, len(c)), workers=workers, keep_samples=True)
        rows.append(
            SweepRow(
                noise=float(s),
                frobenius_norm=frobenius_distance(mc.cov, dist.cov),
                outlier_pct=outlier_percentage(mc, dist, confidence),
                ut_mean=tuple(dist.mean.tolist()),
                mc_mean=tuple(mc.mean.tolist()),
            )
        )
    return rows


def write_sweep_csv(rows, f) -> None:
    w = csv.writer(f, lineterminator="\n")
    w.writerow(["noise", "frobenius_norm", "outlier_pct"])
    for r in rows:
        w.writerow([repr(r.noise), repr(r.frobenius_norm), repr(r.outlier_pct)])


@dataclass(frozen=True)
class Arm:
    noise: float
    padding: float = 0.0
    label: str = ""


@dataclass(frozen=True)
class ArmResult:
    label: str
    noise: float
    padding: float
    samples: int
    correct_matches: int
    false_positives: int
    avg_false_positives: float | None


@dataclass(frozen=True)
class StudySamples:
    truths: tuple  # per-sample (n_i, 3) arrays
    z: tuple  # matching standard-normal draws


def padding_study_samples(
    samples: int, seed: int, min_flowers: int = 3, max_flowers: int = 6, extent=(0.0, 1.0)
) -> StudySamples:
    counts = stream(seed, STREAM_PADDING_STUDY, 0).integers(min_flowers, max_flowers + 1, size=samples)
    truths = stream(seed, STREAM_PADDING_STUDY, 1).uniform(extent[0], extent[1], size=(samples, max_flowers, 3))
    z = stream(seed, STREAM_PADDING_STUDY, 2).standard_normal((samples, max_flowers, 3))
    return StudySamples(
        tuple(truths[i, : counts[i]] for i in range(samples)),
        tuple(z[i, : counts[i]] for i in range(samples)),
    )


def _group_gate(means, precisions, obs, threshold, chunk=256):
    """Matched matrix for one flower-count group, rows = references."""
    m = len(obs)
    out = np.empty((m, m), dtype=bool)
    for a in range(0, m, chunk):
        b = min(m, a + chunk)
        r = obs[None, :, :] - means[a:b, None, :]
        d2 = np.einsum("rci,rij,rcj->rc", r, precisions[a:b], r)
        out[a:b] = gate(d2, threshold)
    return out


def run_arm(
    data: StudySamples,
    arm: Arm,
    confidence: float = 0.95,
    ut: UtParams | None = None,
    workers: int = 1,
) -> ArmResult:
    """Correct matches and false positives for one (noise, padding) setting.

    Reference sample i is the UT distribution of the true cluster i. Its
    observation is the true cluster plus noise at the arm's level. Observation
    i matching reference i is a correct match. Any other observation with the
    same flower count that passes reference i's gate is a false positive.
    """
    ut = ut or UtParams()
    noise = NoiseModel(arm.noise)
    threshold = chi2_threshold(confidence, DESCRIPTOR_DOF)

    def build(i):
        return ut_descriptor_distribution(Cluster(data.truths[i]), noise, ut, arm.padding)

    idx = range(len(data.truths))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            dists = list(ex.map(build, idx))
    else:
        dists = [build(i) for i in idx]
    counts = np.array([t.shape[0] for t in data.truths])
    obs = np.array([descriptor_array(t + arm.noise * z) for t, z in zip(data.truths, data.z)])
    means = np.array([d.mean for d in dists])
    precisions = np.array([precision_matrix(d) for d in dists])

    correct = 0
    fp_of_correct = []
    total_fp = 0
    for n in np.unique(counts):
        g = np.flatnonzero(counts == n)
        matched = _group_gate(means[g], precisions[g], obs[g], threshold)
        diag = np.diagonal(matched)
        fp = matched.sum(axis=1) - diag
        correct += int(diag.sum())
        total_fp += int(fp.sum())
        fp_of_correct.append(fp[diag])
    fpc = np.concatenate(fp_of_correct)
    return ArmResult(
        label=arm.label,
        noise=arm.noise,
        padding=arm.padding,
        samples=len(data.truths),
        correct_matches=correct,
        false_positives=total_fp,
        avg_false_positives=float(fpc.mean()) if fpc.size else None,
    )


def padding_study(
    arms,
    samples: int = 10_000,
    seed: int = 0,
    min_flowers: int = 3,
    max_flowers: int = 6,
    confidence: float = 0.95,
    ut: UtParams | None = None,
    extent=(0.0, 1.0),
    workers: int = 1,
) -> list[ArmResult]:
    """Run every arm on the same seeded clusters and noise draws."""
    data = padding_study_samples(samples, seed, min_flowers, max_flowers, extent)
    return [run_arm(data, a, confidence, ut, workers) for a in arms]
