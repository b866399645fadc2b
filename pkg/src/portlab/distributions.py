"""Labeled distributions with class-conditional samplers.

Sampling is keyed: class ``y`` of any distribution draws from
``rng.child(y)``. Two distributions sampled with the same seed therefore share
their base noise per class (matched samples), which is what the mixture and
adversarial-shift constructions rely on.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .classifiers import LinearClassifier
from .numerics import Rng, as_rng, sample_gaussian, sample_sphere, sym_eig

_MIX_KEY = 0x6D6978  # "mix"
METRICS = ("l2", "linf")


class UnsupportedFamilyError(TypeError):
    pass


class IncompatibleDistributionsError(ValueError):
    pass


def _fresh(rng: Rng) -> Rng:
    return Rng(rng.seed, rng.key)


# -- class conditionals -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Gaussian:
    mean: np.ndarray
    cov_sqrt: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=np.float64))
        cs = np.asarray(self.cov_sqrt, dtype=np.float64)
        if cs.ndim == 0:
            cs = float(cs) * np.eye(self.mean.shape[0])
        object.__setattr__(self, "cov_sqrt", cs)
        if cs.shape != (self.dim, self.dim):
            raise ValueError(f"cov_sqrt {cs.shape} does not match dim {self.dim}")

    @property
    def dim(self):
        return self.mean.shape[0]

    @property
    def cov(self):
        return self.cov_sqrt @ self.cov_sqrt.T

    def sample(self, n, rng):
        return sample_gaussian(rng, self.mean, self.cov_sqrt, n)


@dataclass(frozen=True, eq=False)
class UniformSphere:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64))
        if not self.radius > 0:
            raise ValueError("radius must be positive")

    @property
    def dim(self):
        return self.center.shape[0]

    def sample(self, n, rng):
        return sample_sphere(rng, self.center, self.radius, n)


@dataclass(frozen=True, eq=False)
class Empirical:
    """Resamples (with replacement) from a fixed point cloud."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        if pts.shape[0] == 0:
            raise ValueError("empirical conditional needs at least one point")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self):
        return self.points.shape[1]

    def sample(self, n, rng):
        idx = rng.gen.integers(0, self.points.shape[0], size=n)
        return self.points[idx].copy()


@dataclass(frozen=True, eq=False)
class AdversarialShift:
    """``x + alpha * (x' - x)`` with ``x'`` the nearest L2 point labelled != ``label``."""

    base: object
    classifier: LinearClassifier
    label: int
    alpha: float

    def __post_init__(self):
        if not isinstance(self.classifier, LinearClassifier):
            raise UnsupportedFamilyError("adversarial shift needs an exact (linear) classifier")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")

    @property
    def dim(self):
        return self.base.dim

    def sample(self, n, rng):
        x = self.base.sample(n, rng)
        if self.alpha == 0.0:
            return x
        target = self.classifier.nearest_adversarial(x, np.full(n, self.label))
        return x + self.alpha * (target - x)


@dataclass(frozen=True, eq=False)
class Mixture:
    """Per-draw choice of ``first`` with probability ``p``, else ``second``.

    Both components are drawn from the same stream so that a mixture point
    coincides with the matching ``first`` or ``second`` point.
    """

    first: object
    second: object
    p: float

    @property
    def dim(self):
        return self.first.dim

    def sample(self, n, rng):
        coins = rng.child(_MIX_KEY).uniform(n) < self.p
        a = self.first.sample(n, _fresh(rng))
        b = self.second.sample(n, _fresh(rng))
        return np.where(coins[:, None], a, b)

    def draw_sources(self, n, rng):
        """Boolean mask: True where the draw came from ``first``."""
        return rng.child(_MIX_KEY).uniform(n) < self.p


# -- labeled distribution / dataset -------------------------------------------


@dataclass(frozen=True)
class ClassSpec:
    label: int
    weight: float
    conditional: object


@dataclass(frozen=True, eq=False)
class LabeledDistribution:
    classes: tuple
    metric: str = "l2"

    def __post_init__(self):
        classes = tuple(c if isinstance(c, ClassSpec) else ClassSpec(*c) for c in self.classes)
        object.__setattr__(self, "classes", classes)
        if not classes:
            raise ValueError("distribution needs at least one class")
        labels = [c.label for c in classes]
        if len(set(labels)) != len(labels) or min(labels) < 0:
            raise ValueError("labels must be distinct non-negative integers")
        w = np.array([c.weight for c in classes])
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("class weights must be positive and sum to 1")
        if len({c.conditional.dim for c in classes}) != 1:
            raise ValueError("all conditionals must share a dimension")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")

    @property
    def dim(self):
        return self.classes[0].conditional.dim

    @property
    def labels(self):
        return [c.label for c in self.classes]

    @property
    def weights(self):
        return [c.weight for c in self.classes]

    def conditional(self, label):
        for c in self.classes:
            if c.label == label:
                return c.conditional
        raise KeyError(label)


@dataclass(frozen=True, eq=False)
class Dataset:
    points: np.ndarray
    labels: np.ndarray
    note: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts.reshape(0, 0) if pts.size == 0 else pts[:, None]
        lab = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if pts.shape[0] != lab.shape[0]:
            raise ValueError("points and labels differ in length")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", lab)

    def __len__(self):
        return self.labels.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def class_labels(self):
        return sorted(set(self.labels.tolist()))

    def class_counts(self):
        return {int(k): int(np.sum(self.labels == k)) for k in self.class_labels}

    def of_class(self, label):
        return self.points[self.labels == label]

    def subset(self, idx, note=None):
        return Dataset(self.points[idx], self.labels[idx], self.note if note is None else note)

    @staticmethod
    def concat(parts, note=""):
        parts = [p for p in parts if len(p)]
        return Dataset(
            np.concatenate([p.points for p in parts]), np.concatenate([p.labels for p in parts]), note
        )


# -- operations ---------------------------------------------------------------


def sample(dist: LabeledDistribution, n_per_class: int, rng) -> Dataset:
    """Stratified sample: exactly ``n_per_class`` draws per class."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    rng = as_rng(rng)
    pts, labs = [], []
    for c in dist.classes:
        pts.append(c.conditional.sample(n_per_class, rng.child(c.label)))
        labs.append(np.full(n_per_class, c.label, dtype=np.int64))
    return Dataset(np.concatenate(pts), np.concatenate(labs), f"sample n={n_per_class} {rng!r}")


def gaussian_classes(means, cov_sqrt=1.0, weights=None, labels=None, metric="l2"):
    means = [np.asarray(m, dtype=np.float64) for m in means]
    k = len(means)
    labels = list(range(k)) if labels is None else labels
    weights = [1.0 / k] * k if weights is None else weights
    if not isinstance(cov_sqrt, (list, tuple)):
        cov_sqrt = [cov_sqrt] * k
    return LabeledDistribution(
        tuple(ClassSpec(l, w, Gaussian(m, s)) for l, w, m, s in zip(labels, weights, means, cov_sqrt)),
        metric,
    )


def sphere_classes(centers, radii, weights=None, labels=None):
    k = len(centers)
    labels = list(range(k)) if labels is None else labels
    weights = [1.0 / k] * k if weights is None else weights
    return LabeledDistribution(
        tuple(ClassSpec(l, w, UniformSphere(c, r)) for l, w, c, r in zip(labels, weights, centers, radii))
    )


def _spectral_norm_sym(a):
    w, _ = sym_eig(a)
    return float(np.max(np.abs(w)))


def perturb_gaussians(dist, mean_shift_scale: float, cov_shift_scale: float, rng) -> LabeledDistribution:
    """Proxy built by jittering every Gaussian class mean and covariance root.

    Means get N(0, mean_shift_scale^2) per coordinate. Each ``cov_sqrt`` gets a
    random symmetric perturbation of spectral norm ``cov_shift_scale``, then is
    re-projected onto symmetric PSD matrices by clamping eigenvalues at 0.
    """
    if mean_shift_scale < 0 or cov_shift_scale < 0:
        raise ValueError("scales must be non-negative")
    rng = as_rng(rng)
    out = []
    for c in dist.classes:
        g = c.conditional
        if not isinstance(g, Gaussian):
            raise UnsupportedFamilyError(f"class {c.label} is {type(g).__name__}, not Gaussian")
        r = rng.child(c.label)
        mean = g.mean + mean_shift_scale * r.normal(g.dim)
        s = g.cov_sqrt
        if cov_shift_scale > 0:
            e = r.normal((g.dim, g.dim))
            e = 0.5 * (e + e.T)
            e *= cov_shift_scale / _spectral_norm_sym(e)
            s = 0.5 * ((s + e) + (s + e).T)
            w, v = sym_eig(s)
            s = (v * np.clip(w, 0.0, None)) @ v.T
            s = 0.5 * (s + s.T)
        out.append(ClassSpec(c.label, c.weight, Gaussian(mean, s.copy())))
    return LabeledDistribution(tuple(out), dist.metric)


def shift_means(dist, offset) -> LabeledDistribution:
    """Translate every Gaussian class by the same ``offset``."""
    offset = np.asarray(offset, dtype=np.float64)
    out = []
    for c in dist.classes:
        if not isinstance(c.conditional, Gaussian):
            raise UnsupportedFamilyError("shift_means needs Gaussian classes")
        out.append(ClassSpec(c.label, c.weight, Gaussian(c.conditional.mean + offset, c.conditional.cov_sqrt)))
    return LabeledDistribution(tuple(out), dist.metric)


def _check_compatible(a, b):
    if a.labels != b.labels:
        raise IncompatibleDistributionsError(f"labels differ: {a.labels} vs {b.labels}")
    if any(abs(x - y) > 1e-12 for x, y in zip(a.weights, b.weights)):
        raise IncompatibleDistributionsError("class weights differ")
    if a.dim != b.dim:
        raise IncompatibleDistributionsError("dimensions differ")


def mixture(D, Dt, p: float) -> LabeledDistribution:
    """``p * D + (1 - p) * Dt`` class by class."""
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    _check_compatible(D, Dt)
    return LabeledDistribution(
        tuple(ClassSpec(c.label, c.weight, Mixture(c.conditional, Dt.conditional(c.label), p)) for c in D.classes),
        D.metric,
    )


def adversarial_shift(D, h, alpha: float) -> LabeledDistribution:
    """Move every draw a fraction ``alpha`` of the way to its nearest adversarial point."""
    if not isinstance(h, LinearClassifier):
        raise UnsupportedFamilyError("adversarial_shift requires a LinearClassifier")
    if D.metric != "l2":
        raise UnsupportedFamilyError("adversarial_shift supports the L2 metric only")
    return LabeledDistribution(
        tuple(ClassSpec(c.label, c.weight, AdversarialShift(c.conditional, h, c.label, alpha)) for c in D.classes),
        D.metric,
    )
