"""Conditional Wasserstein distance estimators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from . import _kernels
from .distributions import Gaussian, UniformSphere, UnsupportedFamilyError, _check_compatible
from .numerics import psd_sqrt

MAX_ASSIGNMENT = 2000
ESTIMATORS = ("gaussian_w2", "sphere_exact", "empirical_w1")


@dataclass(frozen=True)
class CwdReport:
    per_class: tuple  # ((label, distance, estimator), ...)
    total: float
    estimator: str

    def to_dict(self):
        return {
            "estimator": self.estimator,
            "total": self.total,
            "per_class": [{"label": l, "distance": d} for l, d, _ in self.per_class],
        }


def _report(labels, weights, dists, tag):
    dists = [max(float(d), 0.0) for d in dists]
    total = float(sum(w * d for w, d in zip(weights, dists)))
    return CwdReport(tuple((int(l), d, tag) for l, d in zip(labels, dists)), total, tag)


def gaussian_w2(m1, c1, m2, c2) -> float:
    """W2 between N(m1, c1) and N(m2, c2) (covariances, not roots)."""
    m1, m2 = np.asarray(m1, float), np.asarray(m2, float)
    r1 = psd_sqrt(c1)
    cross = r1 @ np.asarray(c2, float) @ r1
    cross = psd_sqrt(0.5 * (cross + cross.T))
    sq = float(np.sum((m1 - m2) ** 2) + np.trace(c1) + np.trace(c2) - 2.0 * np.trace(cross))
    return float(np.sqrt(max(sq, 0.0)))


def cwd_gaussian(D, Dt) -> CwdReport:
    """Per-class closed-form W2; an upper bound on the W1-based cwd."""
    _check_compatible(D, Dt)
    dists = []
    for c in D.classes:
        a, b = c.conditional, Dt.conditional(c.label)
        if not (isinstance(a, Gaussian) and isinstance(b, Gaussian)):
            raise UnsupportedFamilyError("cwd_gaussian needs Gaussian conditionals")
        dists.append(gaussian_w2(a.mean, a.cov, b.mean, b.cov))
    return _report(D.labels, D.weights, dists, "gaussian_w2")


def cwd_sphere(D, Dt) -> CwdReport:
    """Concentric uniform spheres: the radial map is optimal, cost |r - r~|."""
    _check_compatible(D, Dt)
    dists = []
    for c in D.classes:
        a, b = c.conditional, Dt.conditional(c.label)
        if not (isinstance(a, UniformSphere) and isinstance(b, UniformSphere)):
            raise UnsupportedFamilyError("cwd_sphere needs UniformSphere conditionals")
        if not np.allclose(a.center, b.center, rtol=0, atol=1e-12):
            raise UnsupportedFamilyError("spheres are not concentric")
        dists.append(abs(a.radius - b.radius))
    return _report(D.labels, D.weights, dists, "sphere_exact")


def cost_matrix(A, B, metric="l2"):
    kind = {"l2": "euclidean", "linf": "chebyshev"}[metric]
    return cdist(np.asarray(A, float), np.asarray(B, float), kind)


def empirical_w1(A, B, metric="l2", return_matching=False):
    """Exact W1 between two equal-size point clouds with uniform weights."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    n = A.shape[0]
    if n != B.shape[0] or n == 0:
        raise ValueError(f"point clouds must be nonempty and equal-size ({n} vs {B.shape[0]})")
    if n > MAX_ASSIGNMENT:
        raise ValueError(f"{n} points exceeds the exact-assignment cap of {MAX_ASSIGNMENT}")
    C = cost_matrix(A, B, metric)
    cols = _kernels.assignment(C)
    value = float(np.sum(C[np.arange(n), cols]) / n)
    return (value, cols) if return_matching else value


def cwd_empirical(SA, SB, metric="l2") -> CwdReport:
    """Per-class exact assignment W1, weighted by SA's class frequencies."""
    ca, cb = SA.class_counts(), SB.class_counts()
    if ca != cb:
        raise ValueError(f"class counts differ: {ca} vs {cb}")
    n = len(SA)
    labels = sorted(ca)
    dists = [empirical_w1(SA.of_class(l), SB.of_class(l), metric) for l in labels]
    return _report(labels, [ca[l] / n for l in labels], dists, "empirical_w1")
