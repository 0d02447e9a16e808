"""Matrix comparison and chi-square gating utilities."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammainc

from .errors import DimensionMismatch, InvalidConfidence, InvalidDof

CHI2_ABS_TOL = 1e-8


def frobenius_norm(a) -> float:
    a = np.asarray(a, dtype=float)
    return float(np.sqrt(np.sum(np.abs(a) ** 2)))


def frobenius_distance(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes differ: {a.shape} vs {b.shape}")
    return frobenius_norm(a - b)


def _check_chi2_args(confidence, dof):
    if not (isinstance(dof, (int, np.integer)) and not isinstance(dof, bool)) or dof < 1:
        raise InvalidDof(f"degrees of freedom must be a positive integer, got {dof!r}")
    if not (0.0 < confidence < 1.0):
        raise InvalidConfidence(f"confidence must lie strictly between 0 and 1, got {confidence!r}")


def chi2_cdf(x: float, dof: int) -> float:
    """P(X <= x) for X ~ chi-square(dof), via the regularized lower incomplete gamma."""
    if x <= 0:
        return 0.0
    return float(gammainc(dof / 2.0, x / 2.0))


def chi2_threshold_bisect(confidence: float, dof: int, tol: float = CHI2_ABS_TOL) -> float:
    """Invert the chi-square CDF by bracketed bisection."""
    _check_chi2_args(confidence, dof)
    lo, hi = 0.0, dof + 20.0 * math.sqrt(2.0 * dof)
    # extreme confidences can sit beyond the default bracket
    while chi2_cdf(hi, dof) < confidence:
        lo, hi = hi, 2.0 * hi
    for _ in range(200):
        if hi - lo <= tol / 4:
            break
        mid = 0.5 * (lo + hi)
        if chi2_cdf(mid, dof) < confidence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def chi2_threshold(confidence: float, dof: int = 2) -> float:
    """Squared-distance gate t with P(chi2_dof <= t) = confidence.

    dof=2 uses the exact closed form ``-2 ln(1 - confidence)``.
    """
    _check_chi2_args(confidence, dof)
    if dof == 2:
        return -2.0 * math.log1p(-confidence)
    return chi2_threshold_bisect(confidence, dof)


def confidence_ellipse(mean, cov, confidence: float) -> dict:
    """Geometry of the confidence ellipse of a 2D Gaussian.

    Semi-axis lengths are ``sqrt(eigenvalue * chi2_threshold(confidence, 2))``,
    ordered major first; ``angle_rad`` is the major-axis direction measured
    from the first coordinate axis.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.shape != (2, 2):
        raise DimensionMismatch(f"expected a 2x2 covariance, got {cov.shape}")
    t = chi2_threshold(confidence, 2)
    vals, vecs = np.linalg.eigh(cov)
    order = vals.argsort()[::-1]
    vals, vecs = np.clip(vals[order], 0.0, None), vecs[:, order]
    # fix the eigenvector sign so output is reproducible
    for j in range(2):
        if vecs[np.argmax(np.abs(vecs[:, j])), j] < 0:
            vecs[:, j] = -vecs[:, j]
    return {
        "center": [float(x) for x in np.asarray(mean, dtype=float)],
        "confidence": float(confidence),
        "chi2_threshold": t,
        "semi_axes": [float(math.sqrt(v * t)) for v in vals],
        "axis_directions": [[float(x) for x in vecs[:, j]] for j in range(2)],
        "angle_rad": float(math.atan2(vecs[1, 0], vecs[0, 0])),
    }
