import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from portlab.numerics import (
    DimensionError, NotPSDError, Rng, SymmetryError, as_rng, finite_diff_grad, psd_sqrt,
    sample_gaussian, sample_sphere, sym_eig, trapezoid,
)


def test_rng_children_are_reproducible_and_independent_of_parent_use():
    a = Rng(7)
    a.normal(100)  # consuming the parent must not move the child
    assert np.array_equal(a.child(3).normal(5), Rng(7).child(3).normal(5))
    assert not np.array_equal(Rng(7).child(3).normal(5), Rng(7).child(4).normal(5))
    assert np.array_equal(Rng(7).child(1, 2).uniform(3), Rng(7).child(1).child(2).uniform(3))


def test_as_rng_accepts_int_and_rng():
    r = Rng(3)
    assert as_rng(r) is r
    assert np.array_equal(as_rng(3).normal(4), Rng(3).normal(4))


def test_sym_eig_matches_lapack(rng):
    a = rng.normal(size=(9, 9))
    a = a + a.T
    w, v = sym_eig(a)
    ref = np.linalg.eigvalsh(a)[::-1]
    assert np.allclose(w, ref, atol=1e-10)
    assert np.allclose(v.T @ v, np.eye(9), atol=1e-10)
    assert np.allclose(a @ v, v * w, atol=1e-9)
    assert np.all(np.diff(w) <= 0)


def test_sym_eig_errors():
    with pytest.raises(DimensionError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(SymmetryError):
        sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_sym_eig_zero_and_empty():
    w, v = sym_eig(np.zeros((3, 3)))
    assert np.all(w == 0) and np.array_equal(v, np.eye(3))
    w, v = sym_eig(np.zeros((0, 0)))
    assert w.shape == (0,)


def test_psd_sqrt_known_values():
    assert np.allclose(psd_sqrt(np.diag([4.0, 9.0, 0.0])), np.diag([2.0, 3.0, 0.0]))
    with pytest.raises(NotPSDError):
        psd_sqrt(np.diag([1.0, -1e-3]))
    # tiny negative eigenvalues from round-off are clamped
    assert np.allclose(psd_sqrt(np.diag([1.0, -1e-12])), np.diag([1.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_psd_sqrt_squares_back(n, seed):
    b = np.random.default_rng(seed).normal(size=(n, n))
    a = b @ b.T
    s = psd_sqrt(a)
    assert np.allclose(s, s.T, atol=1e-12)
    assert np.allclose(s @ s, a, atol=1e-8 * max(1.0, np.abs(a).max()))
    assert np.linalg.eigvalsh(s).min() > -1e-8


def test_trapezoid():
    xs = np.linspace(0, 1, 101)
    assert trapezoid(xs, xs) == pytest.approx(0.5)
    assert trapezoid([0, 1, 3], [1, 1, 1]) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        trapezoid([0, 0], [1, 1])
    with pytest.raises(ValueError):
        trapezoid([0], [1])


def test_finite_diff_grad_on_quadratic(rng):
    A = rng.normal(size=(4, 4))
    x = rng.normal(size=4)
    g = finite_diff_grad(lambda z: float(z @ A @ z), x)
    assert np.allclose(g, (A + A.T) @ x, atol=1e-8)
    M = rng.normal(size=(2, 3))
    assert np.allclose(finite_diff_grad(lambda z: float(np.sum(z ** 2)), M), 2 * M, atol=1e-8)


def test_sample_gaussian_moments():
    mean = np.array([1.0, -2.0])
    root = np.array([[2.0, 0.0], [1.0, 0.5]])
    x = sample_gaussian(Rng(0), mean, root, 200_000)
    assert np.allclose(x.mean(0), mean, atol=0.02)
    assert np.allclose(np.cov(x.T), root @ root.T, atol=0.03)
    assert sample_gaussian(Rng(0), mean, root).shape == (2,)
    with pytest.raises(DimensionError):
        sample_gaussian(Rng(0), mean, np.eye(3), 5)


def test_sample_sphere_on_sphere():
    x = sample_sphere(Rng(1), np.array([1.0, 0.0, 0.0]), 2.5, 1000)
    assert np.allclose(np.linalg.norm(x - [1, 0, 0], axis=1), 2.5)
    assert np.allclose(x.mean(0), [1, 0, 0], atol=0.15)
