"""Mahalanobis gating of observed descriptors against reference distributions."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .descriptor import descriptor_array
from .errors import ClusterMatchError, PairError, SingularCovariance, ValidationError
from .metrics import chi2_threshold
from .unscented import DescriptorDistribution, NoiseModel, UtParams, ut_descriptor_distribution

if TYPE_CHECKING:
    from .datasets import Dataset

MAX_CONDITION = 1e12
DESCRIPTOR_DOF = 2


def precision_matrix(dist: DescriptorDistribution) -> np.ndarray:
    cov = dist.cov
    if not np.any(cov) or np.linalg.cond(cov) > MAX_CONDITION:
        raise SingularCovariance(
            "descriptor covariance is singular or ill-conditioned; add padding or assume more noise"
        )
    return np.linalg.inv(cov)


def squared_mahalanobis(x, dist: DescriptorDistribution) -> np.ndarray:
    """Squared Mahalanobis distance for one descriptor or an ``(M, 2)`` stack."""
    inv = precision_matrix(dist)
    r = np.asarray(x, dtype=float) - dist.mean
    return np.einsum("...i,ij,...j->...", r, inv, r)


def mahalanobis(x, dist: DescriptorDistribution) -> float:
    return math.sqrt(float(squared_mahalanobis(x, dist)))


@dataclass(frozen=True)
class MatchConfig:
    confidence: float = 0.95
    padding: float = 0.0
    require_count: bool = True

    def __post_init__(self):
        if not (0.0 < self.confidence < 1.0):
            raise ValidationError(f"confidence must lie in (0, 1), got {self.confidence}")
        if self.padding < 0:
            raise ValidationError(f"padding must be >= 0, got {self.padding}")

    @property
    def threshold(self) -> float:
        return chi2_threshold(self.confidence, DESCRIPTOR_DOF)


@dataclass(frozen=True)
class MatchResult:
    matched: bool
    d2: float
    threshold: float
    count_ok: bool
    frame_id: int = 0


def gate(d2, threshold):
    """Inside the gate; a distance exactly on the threshold is an outlier."""
    return d2 < threshold


def is_match(
    x, n_observed: int, dist: DescriptorDistribution, cfg: MatchConfig | None = None, frame_id: int = 0
) -> MatchResult:
    cfg = cfg or MatchConfig()
    d2 = float(squared_mahalanobis(x, dist))
    threshold = cfg.threshold
    count_ok = (n_observed == dist.flower_count) or not cfg.require_count
    return MatchResult(bool(gate(d2, threshold) and count_ok), d2, threshold, count_ok, frame_id)


@dataclass(eq=False)
class MatchReport:
    """All-pairs verdicts of observed frames against reference distributions.

    Rows index reference frames and columns index observed frames, both in
    dataset order. When ``aligned`` is true, the pair at equal positions is
    the correct match and every other match in that row is a false positive.
    """

    reference_ids: np.ndarray
    observed_ids: np.ndarray
    d2: np.ndarray
    count_ok: np.ndarray
    threshold: float
    confidence: float
    padding: float
    aligned: bool = True
    reference_name: str = ""
    observed_name: str = ""

    @property
    def matched(self) -> np.ndarray:
        return gate(self.d2, self.threshold) & self.count_ok

    def result(self, i: int, j: int) -> MatchResult:
        return MatchResult(
            bool(self.matched[i, j]), float(self.d2[i, j]), self.threshold, bool(self.count_ok[i, j]),
            int(self.observed_ids[j]),
        )

    def diagonal(self) -> np.ndarray:
        k = min(self.matched.shape)
        return self.matched[np.arange(k), np.arange(k)]

    def false_positives(self) -> np.ndarray:
        """Per reference row, matches at any position other than the aligned one."""
        m = self.matched
        fp = m.sum(axis=1)
        k = min(m.shape)
        fp[:k] -= m[np.arange(k), np.arange(k)]
        return fp

    def summary(self) -> dict:
        m = self.matched
        out = {
            "reference": self.reference_name,
            "observed": self.observed_name,
            "n_reference": int(m.shape[0]),
            "n_observed": int(m.shape[1]),
            "confidence": self.confidence,
            "threshold": self.threshold,
            "padding": self.padding,
            "aligned": self.aligned,
            "total_matches": int(m.sum()),
        }
        if self.aligned:
            diag = self.diagonal()
            fp = self.false_positives()
            k = diag.size
            correct = int(diag.sum())
            out.update(
                n_diagonal=k,
                correct_matches=correct,
                diagonal_match_rate=correct / k if k else None,
                off_diagonal_matches=int(fp.sum()),
                avg_false_positives=float(fp[:k][diag].mean()) if correct else None,
            )
        else:
            out.update(
                n_diagonal=None,
                correct_matches=None,
                diagonal_match_rate=None,
                off_diagonal_matches=None,
                avg_false_positives=None,
            )
        return out

    def per_reference(self) -> list[dict]:
        rows = []
        m = self.matched
        fp = self.false_positives() if self.aligned else None
        diag = self.diagonal() if self.aligned else None
        for i, rid in enumerate(self.reference_ids):
            row = {"ref_frame": int(rid), "matches": int(m[i].sum())}
            if self.aligned:
                row["correct"] = bool(diag[i]) if i < diag.size else None
                row["false_positives"] = int(fp[i])
            rows.append(row)
        return rows

    def write_csv(self, path_or_file) -> None:
        header = ["ref_frame", "obs_frame", "d2", "threshold", "count_ok", "matched"]
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        f = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
        try:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(header)
            m = self.matched
            t = repr(self.threshold)
            for i, rid in enumerate(self.reference_ids.tolist()):
                d2row = self.d2[i].tolist()
                okrow = self.count_ok[i].tolist()
                mrow = m[i].tolist()
                w.writerows(
                    (rid, oid, repr(d2row[j]), t, int(okrow[j]), int(mrow[j]))
                    for j, oid in enumerate(self.observed_ids.tolist())
                )
        finally:
            if own:
                f.close()


def reference_distributions(
    reference: "Dataset", noise: NoiseModel, ut: UtParams | None = None, padding: float = 0.0, workers: int = 1
) -> list[DescriptorDistribution]:
    ut = ut or UtParams()

    def build(c):
        try:
            return ut_descriptor_distribution(c, noise, ut, padding)
        except ClusterMatchError as exc:
            raise PairError(c.frame_id, None, exc) from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(build, reference.frames))
    return [build(c) for c in reference.frames]


def match_datasets(
    reference: "Dataset",
    observed: "Dataset",
    noise: NoiseModel,
    ut: UtParams | None = None,
    cfg: MatchConfig | None = None,
    aligned: bool = True,
    workers: int = 1,
) -> MatchReport:
    """Gate every observed frame against every reference frame's distribution."""
    cfg = cfg or MatchConfig()
    if not reference.frames or not observed.frames:
        raise ValidationError("both datasets must contain at least one frame")
    dists = reference_distributions(reference, noise, ut, cfg.padding, workers)
    obs_desc = np.empty((len(observed.frames), 2))
    obs_n = np.empty(len(observed.frames), dtype=int)
    for j, c in enumerate(observed.frames):
        try:
            obs_desc[j] = descriptor_array(c.points)
        except ClusterMatchError as exc:
            raise PairError(None, c.frame_id, exc) from exc
        obs_n[j] = len(c)
    d2 = np.empty((len(dists), len(observed.frames)))
    count_ok = np.empty(d2.shape, dtype=bool)
    for i, dist in enumerate(dists):
        try:
            d2[i] = squared_mahalanobis(obs_desc, dist)
        except SingularCovariance as exc:
            raise PairError(reference.frames[i].frame_id, None, exc) from exc
        count_ok[i] = (obs_n == dist.flower_count) if cfg.require_count else True
    return MatchReport(
        reference_ids=np.array([c.frame_id for c in reference.frames]),
        observed_ids=np.array([c.frame_id for c in observed.frames]),
        d2=d2,
        count_ok=count_ok,
        threshold=cfg.threshold,
        confidence=cfg.confidence,
        padding=cfg.padding,
        aligned=aligned,
        reference_name=reference.name,
        observed_name=observed.name,
    )
