"""Unscented-transform propagation of point uncertainty into descriptor space."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .descriptor import Cluster, descriptor_array, MIN_POINTS
from .errors import CholeskyFailure, DegenerateScaling, TooFewPoints, ValidationError

CHOLESKY_RETRIES = 3
SYMMETRY_TOL = 1e-9
PSD_TOL = 1e-12


@dataclass(frozen=True)
class UtParams:
    """Sigma-point scaling parameters.

    ``dim`` is the state dimension L; it may be left as ``None`` and
    supplied per call, since it depends on the cluster size.
    """

    alpha: float = 1e-3
    beta: float = 2.0
    kappa: float = 0.0
    dim: int | None = None

    def __post_init__(self):
        if not (1e-4 <= self.alpha <= 1.0):
            warnings.warn(
                f"alpha={self.alpha} lies outside the usual range [1e-4, 1]", RuntimeWarning, stacklevel=3
            )
        if self.dim is not None and self.dim < 1:
            raise ValidationError(f"state dimension must be >= 1, got {self.dim}")

    def with_dim(self, dim: int) -> "UtParams":
        return UtParams(self.alpha, self.beta, self.kappa, dim)


def _dim(p: UtParams, dim: int | None) -> int:
    L = p.dim if dim is None else dim
    if L is None or L < 1:
        raise ValidationError(f"state dimension must be >= 1, got {L}")
    return int(L)


def ut_lambda(p: UtParams, dim: int | None = None) -> float:
    L = _dim(p, dim)
    lam = p.alpha**2 * (L + p.kappa) - L
    if L + lam == 0:
        raise DegenerateScaling(f"L + lambda = 0 for alpha={p.alpha}, kappa={p.kappa}, L={L}")
    return lam


def ut_weights(p: UtParams, dim: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Mean and covariance weights, each of length 2L+1."""
    L = _dim(p, dim)
    ut_lambda(p, L)
    # L + lambda == alpha^2 (L + kappa); forming it directly avoids cancellation
    scale = p.alpha**2 * (L + p.kappa)
    wm = np.full(2 * L + 1, 1.0 / (2.0 * scale))
    wc = wm.copy()
    # lambda / (L + lambda) == 1 - sum of the other weights; this form keeps the sum at 1
    w0 = 1.0 - math.fsum(wm[1:])
    wm[0] = w0
    wc[0] = w0 + 1.0 - p.alpha**2 + p.beta
    return wm, wc


@dataclass(frozen=True)
class SigmaPointSet:
    points: np.ndarray  # (L, 2L+1), one sigma point per column
    mean_weights: np.ndarray
    cov_weights: np.ndarray

    @property
    def dim(self) -> int:
        return self.points.shape[0]


def cholesky_factor(cov) -> np.ndarray:
    """Lower Cholesky factor with a small diagonal jitter on failure."""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    L = cov.shape[0]
    jitter = 1e-12 * np.trace(cov) / L
    a = cov
    for attempt in range(CHOLESKY_RETRIES + 1):
        try:
            return np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            if attempt == CHOLESKY_RETRIES or not jitter > 0:
                break
            a = a + jitter * np.eye(L)
    raise CholeskyFailure("covariance is not positive semi-definite")


def sigma_points(mean, cov, p: UtParams) -> SigmaPointSet:
    mean = np.asarray(mean, dtype=float).ravel()
    L = mean.size
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (L, L):
        raise ValidationError(f"covariance shape {cov.shape} does not match mean length {L}")
    if not np.allclose(cov, cov.T, rtol=0.0, atol=SYMMETRY_TOL * max(1.0, np.abs(cov).max())):
        raise CholeskyFailure("covariance is not symmetric")
    ut_lambda(p, L)
    scale = p.alpha**2 * (L + p.kappa)
    if scale <= 0:
        raise DegenerateScaling(f"L + lambda = {scale} <= 0; increase kappa")
    wm, wc = ut_weights(p, L)
    spread = math.sqrt(scale) * cholesky_factor(cov)
    pts = np.empty((L, 2 * L + 1))
    pts[:, 0] = mean
    pts[:, 1 : L + 1] = mean[:, None] + spread
    pts[:, L + 1 :] = mean[:, None] - spread
    return SigmaPointSet(pts, wm, wc)


def unscented_transform(
    fn: Callable[[np.ndarray], np.ndarray], mean, cov, p: UtParams
) -> tuple[np.ndarray, np.ndarray, SigmaPointSet]:
    """Propagate a Gaussian through ``fn`` using sigma points.

    ``fn`` receives all sigma points at once as a ``(2L+1, L)`` array (one per
    row) and must return a ``(2L+1, M)`` array.

    Outputs are accumulated as offsets from the central sigma point. With a
    small ``alpha`` the centre weight is of order ``-1/alpha**2`` and summing
    raw outputs would lose most significant digits.
    """
    sp = sigma_points(mean, cov, p)
    y = np.asarray(fn(sp.points.T), dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    d = y - y[0]
    shift = sp.mean_weights[1:] @ d[1:]
    y_mean = y[0] + shift
    r = d - shift
    y_cov = (sp.cov_weights[:, None] * r).T @ r
    y_cov = 0.5 * (y_cov + y_cov.T)
    return y_mean, y_cov, sp


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian position noise in meters.

    ``sigma`` is either one standard deviation applied to every coordinate,
    or a per-axis ``(sx, sy, sz)`` triple.
    """

    sigma: float | tuple[float, float, float]

    def __post_init__(self):
        s = np.atleast_1d(np.asarray(self.sigma, dtype=float))
        if s.size not in (1, 3) or not np.all(s > 0) or not np.all(np.isfinite(s)):
            raise ValidationError(f"noise sigma must be positive (scalar or per-axis triple), got {self.sigma!r}")
        if s.size == 3:
            object.__setattr__(self, "sigma", tuple(float(x) for x in s))
        else:
            object.__setattr__(self, "sigma", float(s[0]))

    def axis_sigmas(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.sigma, dtype=float), (3,)).copy()

    def prior_cov(self, n_points: int) -> np.ndarray:
        """Diagonal prior over the row-major flattened coordinates [x1, y1, z1, x2, ...]."""
        return np.diag(np.tile(self.axis_sigmas() ** 2, n_points))


@dataclass(frozen=True, eq=False)
class DescriptorDistribution:
    """Gaussian tolerance region around a reference descriptor."""

    mean: np.ndarray
    cov: np.ndarray
    flower_count: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if mean.shape != (2,) or cov.shape != (2, 2):
            raise ValidationError(f"expected mean (2,) and cov (2, 2), got {mean.shape} and {cov.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ValidationError("distribution contains non-finite values")
        if abs(cov[0, 1] - cov[1, 0]) > SYMMETRY_TOL:
            raise ValidationError(f"covariance asymmetry {abs(cov[0, 1] - cov[1, 0]):.3g} exceeds {SYMMETRY_TOL}")
        if np.linalg.eigvalsh(cov).min() < -PSD_TOL:
            raise ValidationError("covariance is not positive semi-definite")
        if int(self.flower_count) != self.flower_count or self.flower_count < 1:
            raise ValidationError(f"flower_count must be a positive integer, got {self.flower_count!r}")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        object.__setattr__(self, "flower_count", int(self.flower_count))

    def __eq__(self, other):
        return (
            isinstance(other, DescriptorDistribution)
            and self.flower_count == other.flower_count
            and np.array_equal(self.mean, other.mean)
            and np.array_equal(self.cov, other.cov)
        )

    def padded(self, padding: float) -> "DescriptorDistribution":
        return DescriptorDistribution(self.mean, self.cov + padding * np.eye(2), self.flower_count, dict(self.meta))


def ut_descriptor_distribution(
    c: Cluster, noise: NoiseModel, p: UtParams | None = None, padding: float = 0.0
) -> DescriptorDistribution:
    """Descriptor-space Gaussian for a cluster with noisy point positions.

    The prior mean is the flattened cluster coordinates and the prior
    covariance comes from ``noise``. ``padding`` is added to both diagonal
    entries of the resulting covariance.
    """
    if padding < 0:
        raise ValidationError(f"padding must be >= 0, got {padding}")
    n = len(c)
    if n < MIN_POINTS:
        raise TooFewPoints(f"descriptor needs at least {MIN_POINTS} points, got {n}")
    p = p or UtParams()
    mean, cov, _ = unscented_transform(
        lambda x: descriptor_array(x.reshape(-1, n, 3)),
        c.points.reshape(-1),
        noise.prior_cov(n),
        p,
    )
    if padding:
        cov = cov + padding * np.eye(2)
    return DescriptorDistribution(mean, cov, n)
