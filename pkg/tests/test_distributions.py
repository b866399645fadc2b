import numpy as np
import pytest

from portlab.classifiers import LinearClassifier, Mlp
from portlab.distributions import (
    AdversarialShift, ClassSpec, Dataset, Empirical, Gaussian, IncompatibleDistributionsError, LabeledDistribution,
    UniformSphere, UnsupportedFamilyError, adversarial_shift, gaussian_classes, mixture, perturb_gaussians, sample,
    shift_means, sphere_classes,
)
from portlab.numerics import Rng


def test_labeled_distribution_validation():
    g = Gaussian(np.zeros(2), 1.0)
    with pytest.raises(ValueError):
        LabeledDistribution((ClassSpec(0, 0.5, g), ClassSpec(1, 0.4, g)))
    with pytest.raises(ValueError):
        LabeledDistribution((ClassSpec(0, 0.5, g), ClassSpec(0, 0.5, g)))
    with pytest.raises(ValueError):
        LabeledDistribution((ClassSpec(0, 0.5, g), ClassSpec(1, 0.5, Gaussian(np.zeros(3), 1.0))))
    with pytest.raises(ValueError):
        LabeledDistribution((ClassSpec(0, 1.0, g),), metric="l1")
    with pytest.raises(ValueError):
        Gaussian(np.zeros(2), np.eye(3))
    with pytest.raises(ValueError):
        UniformSphere(np.zeros(2), 0.0)


def test_sample_is_stratified_and_seeded():
    D = gaussian_classes([[0, 0], [5, 5], [-5, 5]])
    S = sample(D, 30, Rng(4))
    assert S.class_counts() == {0: 30, 1: 30, 2: 30}
    assert np.allclose(S.of_class(1).mean(0), [5, 5], atol=0.6)
    assert np.array_equal(S.points, sample(D, 30, Rng(4)).points)
    assert not np.array_equal(S.points, sample(D, 30, Rng(5)).points)
    with pytest.raises(ValueError):
        sample(D, 0, Rng(0))


def test_matched_sampling_under_shift():
    D = gaussian_classes([[0, 0], [4, 0]])
    off = np.array([0.3, -1.0])
    A, B = sample(D, 50, Rng(2)), sample(shift_means(D, off), 50, Rng(2))
    assert np.allclose(B.points - A.points, off)


def test_spheres_and_empirical():
    D = sphere_classes([np.zeros(3)], [2.0])
    S = sample(D, 100, Rng(0))
    assert np.allclose(np.linalg.norm(S.points, axis=1), 2.0)
    E = Empirical(np.arange(6.0).reshape(3, 2))
    draws = E.sample(50, Rng(1))
    assert all(any(np.array_equal(d, p) for p in E.points) for d in draws)
    with pytest.raises(ValueError):
        Empirical(np.empty((0, 2)))


def test_mixture_draws_match_components():
    D = gaussian_classes([[0, 0], [4, 0]])
    Dt = shift_means(D, [0, 10.0])
    M = mixture(D, Dt, 0.3)
    S, St, Sm = (sample(x, 400, Rng(9)) for x in (D, Dt, M))
    from_first = np.concatenate([c.conditional.draw_sources(400, Rng(9).child(c.label)) for c in M.classes])
    assert np.array_equal(Sm.points[from_first], S.points[from_first])
    assert np.array_equal(Sm.points[~from_first], St.points[~from_first])
    assert from_first.mean() == pytest.approx(0.3, abs=0.04)
    assert np.array_equal(sample(mixture(D, Dt, 1.0), 20, Rng(1)).points, sample(D, 20, Rng(1)).points)
    with pytest.raises(ValueError):
        mixture(D, Dt, 1.5)


def test_mixture_rejects_incompatible():
    D = gaussian_classes([[0, 0], [4, 0]])
    with pytest.raises(IncompatibleDistributionsError):
        mixture(D, gaussian_classes([[0, 0], [4, 0]], labels=[0, 2]), 0.5)
    with pytest.raises(IncompatibleDistributionsError):
        mixture(D, gaussian_classes([[0, 0], [4, 0]], weights=[0.3, 0.7]), 0.5)


def test_adversarial_shift_moves_toward_boundary():
    D = gaussian_classes([[-2, 0], [2, 0]])
    h = LinearClassifier.binary([1.0, 0.0], 0.0)
    S = sample(D, 200, Rng(0))
    for a in (0.0, 0.5, 1.0):
        St = sample(adversarial_shift(D, h, a), 200, Rng(0))
        m, mt = h.margin(S.points, S.labels), h.margin(St.points, St.labels)
        assert np.allclose(mt, (1 - a) * m, atol=1e-12)
        assert np.allclose(np.linalg.norm(St.points - S.points, axis=1), a * m, atol=1e-12)
    with pytest.raises(UnsupportedFamilyError):
        adversarial_shift(D, Mlp.init([2, 2], seed=0), 0.5)
    with pytest.raises(UnsupportedFamilyError):
        adversarial_shift(gaussian_classes([[-2, 0], [2, 0]], metric="linf"), h, 0.5)
    with pytest.raises(ValueError):
        AdversarialShift(D.classes[0].conditional, h, 0, 1.5)


def test_perturb_gaussians():
    D = gaussian_classes([np.zeros(4), np.ones(4)])
    same = perturb_gaussians(D, 0.0, 0.0, Rng(0))
    for a, b in zip(D.classes, same.classes):
        assert np.array_equal(a.conditional.mean, b.conditional.mean)
        assert np.array_equal(a.conditional.cov_sqrt, b.conditional.cov_sqrt)
    P = perturb_gaussians(D, 0.5, 2.0, Rng(1))
    for c in P.classes:
        s = c.conditional.cov_sqrt
        assert np.allclose(s, s.T)
        assert np.linalg.eigvalsh(s).min() >= -1e-12
    with pytest.raises(UnsupportedFamilyError):
        perturb_gaussians(sphere_classes([np.zeros(2)], [1.0]), 0.1, 0.1, Rng(0))
    with pytest.raises(ValueError):
        perturb_gaussians(D, -1.0, 0.0, Rng(0))


def test_dataset_helpers():
    d = Dataset(np.arange(8.0).reshape(4, 2), [0, 1, 1, 0])
    assert len(d) == 4 and d.dim == 2 and d.class_labels == [0, 1]
    assert d.subset([1, 2]).class_counts() == {1: 2}
    both = Dataset.concat([d, d.subset([0])])
    assert len(both) == 5
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), [0, 1])
