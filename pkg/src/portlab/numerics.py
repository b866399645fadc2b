"""Dense float64 numerics: eigendecomposition, PSD square root, quadrature,
finite differences and seeded sampling."""
from __future__ import annotations

import numpy as np

from . import _kernels


class DimensionError(ValueError):
    pass


class SymmetryError(ValueError):
    pass


class NotPSDError(ValueError):
    pass


PSD_CLAMP = 1e-10
SYM_RTOL = 1e-10


class Rng:
    """Seeded generator with keyed child derivation.

    ``Rng(seed).child(k1, k2, ...)`` is a fresh, independent stream whose
    identity depends only on ``(seed, k1, k2, ...)`` -- never on how much of
    the parent stream has been consumed. Keys are non-negative integers and
    are appended to the numpy ``SeedSequence`` spawn key.
    """

    def __init__(self, seed: int, key: tuple = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        self._gen = None

    def child(self, *keys: int) -> "Rng":
        return Rng(self.seed, self.key + tuple(keys))

    @property
    def gen(self) -> np.random.Generator:
        if self._gen is None:
            ss = np.random.SeedSequence(self.seed, spawn_key=self.key)
            self._gen = np.random.Generator(np.random.PCG64(ss))
        return self._gen

    def normal(self, size=None) -> np.ndarray:
        return self.gen.standard_normal(size)

    def uniform(self, size=None) -> np.ndarray:
        return self.gen.random(size)

    def permutation(self, n: int) -> np.ndarray:
        return self.gen.permutation(n)

    def __repr__(self):
        return f"Rng(seed={self.seed}, key={self.key})"


def as_rng(rng) -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(int(rng))


def _check_square(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def sym_eig(a):
    """Eigenvalues (descending) and orthonormal eigenvectors (columns) of a
    symmetric matrix, by cyclic Jacobi rotations."""
    a = _check_square(a)
    scale = np.linalg.norm(a)
    if a.size and np.max(np.abs(a - a.T)) > SYM_RTOL * max(np.max(np.abs(a)), 1e-300):
        raise SymmetryError("matrix is not symmetric")
    n = a.shape[0]
    if n == 0 or scale == 0.0:
        return np.zeros(n), np.eye(n)
    a = 0.5 * (a + a.T)
    w, v, _ = _kernels.jacobi_eig(a, 1e-12 * scale)
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def psd_sqrt(a):
    """Symmetric PSD square root. Eigenvalues in [-1e-10, 0) are clamped to 0."""
    w, v = sym_eig(a)
    if w.size and w.min() < -PSD_CLAMP:
        raise NotPSDError(f"matrix has eigenvalue {w.min():.3e} < -{PSD_CLAMP}")
    root = np.sqrt(np.clip(w, 0.0, None))
    s = (v * root) @ v.T
    return 0.5 * (s + s.T)


def trapezoid(xs, ys) -> float:
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ValueError("xs and ys must be 1-D with equal length")
    if xs.size < 2:
        raise ValueError("need at least two points")
    if np.any(np.diff(xs) <= 0):
        raise ValueError("xs must be strictly ascending")
    return float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))


def finite_diff_grad(f, x, h: float = 1e-5):
    """Central-difference gradient of scalar ``f`` at ``x`` (any shape)."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.array(x, dtype=np.float64, copy=True)
    g = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def sample_gaussian(rng, mean, cov_sqrt, n: int | None = None):
    """``mean + cov_sqrt @ z`` with z standard normal; ``n`` draws stack as rows."""
    mean = np.asarray(mean, dtype=np.float64)
    cov_sqrt = np.asarray(cov_sqrt, dtype=np.float64)
    d = mean.shape[0]
    if cov_sqrt.shape != (d, d):
        raise DimensionError(f"cov_sqrt shape {cov_sqrt.shape} does not match mean dim {d}")
    rng = as_rng(rng)
    if n is None:
        return mean + cov_sqrt @ rng.normal(d)
    z = rng.normal((n, d))
    return mean + z @ cov_sqrt.T


def sample_sphere(rng, center, radius: float, n: int):
    """Uniform points on the L2 sphere, as normalized Gaussian draws."""
    center = np.asarray(center, dtype=np.float64)
    rng = as_rng(rng)
    z = rng.normal((n, center.shape[0]))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    return center + radius * z
