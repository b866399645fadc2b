"""Robust discrimination between real and proxy samples: Racc curves, ARC,
synthetic scores, and baseline proximity metrics."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.spatial.distance import cdist
from scipy.stats import rankdata

from .classifiers import Mlp, TrainConfig, softmax
from .distributions import Dataset
from .numerics import Rng, as_rng, trapezoid
from .robustness import AttackConfig, adv_train, logit_margin_objective, pgd_attack
from .transport import gaussian_w2

REAL, PROXY = 1, 0
CHANCE_PLATEAU = 0.52
HOLDOUT_KEY = 0x686F6C64  # "hold"


@dataclass(frozen=True)
class DiscriminatorConfig:
    hidden: tuple = (64, 64)
    train: TrainConfig = TrainConfig(lr=0.05, epochs=60, batch=64, weight_decay=0.0)
    attack: AttackConfig = AttackConfig(norm="l2", steps=10, restarts=1)
    eval_attack: AttackConfig = AttackConfig(norm="l2", steps=20, restarts=2)
    holdout: float = 0.25
    seed: int = 0


@dataclass
class Discriminator:
    model: Mlp
    epsilon: float
    heldout_real: np.ndarray = field(repr=False)
    heldout_proxy: np.ndarray = field(repr=False)

    def prob_real(self, X):
        return softmax(self.model.forward(np.atleast_2d(X)))[:, REAL]


@dataclass
class RaccCurve:
    epsilons: list
    racc: list
    n_train: int = 0
    n_eval: int = 0

    def __post_init__(self):
        e = np.asarray(self.epsilons, dtype=float)
        if e.size and (e[0] != 0 or np.any(np.diff(e) <= 0)):
            raise ValueError("epsilons must start at 0 and ascend strictly")
        if any(not 0.0 <= r <= 1.0 for r in self.racc):
            raise ValueError("racc values must lie in [0, 1]")


@dataclass
class ProximityReport:
    arc: float
    curve: RaccCurve
    baselines: dict
    config: dict
    arc_se: float = 0.0

    def to_dict(self):
        return {
            "version": 1,
            "epsilons": list(self.curve.epsilons),
            "racc": list(self.curve.racc),
            "arc": self.arc,
            "arc_se": self.arc_se,
            "baselines": dict(self.baselines),
            "config": self.config,
        }

    def curve_csv(self):
        lines = ["epsilon,racc"]
        lines += [f"{e!r},{r!r}" for e, r in zip(self.curve.epsilons, self.curve.racc)]
        return "\n".join(lines) + "\n"


@dataclass
class ScoredSamples:
    points: np.ndarray
    labels: np.ndarray
    scores: np.ndarray
    epsilon: float

    def __post_init__(self):
        if self.scores.shape[0] != self.points.shape[0]:
            raise ValueError("one score per point")
        if np.any((self.scores < 0) | (self.scores > 1)):
            raise ValueError("scores must lie in [0, 1]")

    def __len__(self):
        return self.scores.shape[0]


def _pts(data):
    return np.asarray(data.points if hasattr(data, "points") else data, dtype=np.float64)


# -- discriminators -----------------------------------------------------------


def train_robust_discriminator(real, proxy, epsilon: float, cfg: DiscriminatorConfig = DiscriminatorConfig()):
    """Adversarially train real (label 1) vs proxy (label 0) at budget ``epsilon``.

    Each side keeps a random held-out subset (``cfg.holdout`` of the smaller
    side, same count on both) that is never trained on. Training batches draw
    equally from both sides and weight the two losses equally, so unequal
    sample sizes do not bias the discriminator.
    """
    R, P = _pts(real), _pts(proxy)
    n_hold = int(round(cfg.holdout * min(R.shape[0], P.shape[0])))
    if min(R.shape[0], P.shape[0]) - n_hold < 1:
        raise ValueError("too few samples to train a discriminator")
    root = Rng(cfg.seed).child(HOLDOUT_KEY)
    R = R[root.child(REAL).permutation(R.shape[0])]
    P = P[root.child(PROXY).permutation(P.shape[0])]
    real_train = Dataset(R[n_hold:], np.full(R.shape[0] - n_hold, REAL))
    proxy_train = Dataset(P[n_hold:], np.full(P.shape[0] - n_hold, PROXY))
    model = Mlp.init([R.shape[1], *cfg.hidden, 2], seed=cfg.seed)
    attack = cfg.attack.with_epsilon(epsilon)
    res = adv_train(model, real_train, proxy_train, 0.5, attack, cfg.train)
    return Discriminator(res.model, float(epsilon), R[:n_hold], P[:n_hold])


def _side_accuracies(model, real_eval, proxy_eval, epsilon, attack, rng):
    cfg = attack.with_epsilon(epsilon)
    accs = []
    for X, lab in ((_pts(real_eval), REAL), (_pts(proxy_eval), PROXY)):
        y = np.full(X.shape[0], lab)
        if epsilon > 0:
            X = pgd_attack(model, X, y, cfg, rng=rng)
        accs.append(float(np.mean(model.predict(X) == lab)))
    return accs[0], accs[1]


def racc(disc, real_eval, proxy_eval, epsilon: float, attack: AttackConfig = AttackConfig(), rng=None):
    """Balanced robust accuracy: each side must stay correctly labelled under a
    PGD attack of budget ``epsilon`` (so an upper bound on true robust accuracy)."""
    model = disc.model if isinstance(disc, Discriminator) else disc
    rng = Rng(attack.seed) if rng is None else as_rng(rng)
    a_real, a_proxy = _side_accuracies(model, real_eval, proxy_eval, epsilon, attack, rng)
    return 0.5 * a_real + 0.5 * a_proxy


def racc_se(value_real, value_proxy, n_real, n_proxy):
    return 0.5 * math.sqrt(value_real * (1 - value_real) / n_real + value_proxy * (1 - value_proxy) / n_proxy)


def default_grid(real, proxy, n_points: int = 12):
    """0 followed by geometric budgets up to half the largest per-class diameter
    of the pooled samples."""
    R, P = _pts(real), _pts(proxy)
    lr = np.asarray(getattr(real, "labels", np.zeros(R.shape[0])))
    lp = np.asarray(getattr(proxy, "labels", np.zeros(P.shape[0])))
    diam = 0.0
    for lab in np.union1d(lr, lp):
        pts = np.concatenate([R[lr == lab], P[lp == lab]])
        if pts.shape[0] > 1500:
            pts = pts[np.linspace(0, pts.shape[0] - 1, 1500).astype(int)]
        diam = max(diam, float(cdist(pts, pts).max()))
    eps_max = diam / 2.0
    return [0.0] + [float(e) for e in eps_max * np.geomspace(1.0 / 64.0, 1.0, n_points - 1)]


def arc(real, proxy, epsilon_grid=None, cfg: DiscriminatorConfig = DiscriminatorConfig(), baselines=True,
        truncate=True) -> ProximityReport:
    """Area under max(Racc - 1/2, 0) over the budget grid.

    One discriminator is trained per budget and evaluated at that budget on
    held-out data. The sweep stops after two consecutive values at or below
    the chance plateau.
    """
    grid = default_grid(real, proxy) if epsilon_grid is None else [float(e) for e in epsilon_grid]
    if grid[0] != 0.0 or np.any(np.diff(grid) <= 0):
        raise ValueError("epsilon grid must start at 0 and ascend")
    eps_done, vals, ses = [], [], []
    n_eval = 0
    for i, e in enumerate(grid):
        disc = train_robust_discriminator(real, proxy, e, cfg)
        a_real, a_proxy = _side_accuracies(disc.model, disc.heldout_real, disc.heldout_proxy, e,
                                           cfg.eval_attack, Rng(cfg.seed).child(1000 + i))
        n_eval = disc.heldout_real.shape[0]
        eps_done.append(e)
        vals.append(0.5 * a_real + 0.5 * a_proxy)
        ses.append(racc_se(a_real, a_proxy, n_eval, disc.heldout_proxy.shape[0]))
        if truncate and len(vals) >= 2 and vals[-1] <= CHANCE_PLATEAU and vals[-2] <= CHANCE_PLATEAU:
            break
    excess = np.maximum(np.asarray(vals) - 0.5, 0.0)
    area = trapezoid(eps_done, excess) if len(eps_done) > 1 else 0.0
    # conservative (fully correlated) propagation of per-budget standard errors
    weights = np.zeros(len(eps_done))
    if len(eps_done) > 1:
        dx = np.diff(eps_done)
        weights[:-1] += dx / 2
        weights[1:] += dx / 2
    area_se = float(np.sum(weights * np.asarray(ses)))
    n_train = len(_pts(real)) - n_eval  # real-side training count
    base = {}
    if baselines:
        base["one_nn"] = one_nn_distance(proxy, real)
        try:
            base["gaussian_frechet"] = gaussian_frechet(real, proxy)
        except ValueError:
            base["gaussian_frechet"] = None
    conf = {"grid": grid, "holdout": cfg.holdout, "hidden": list(cfg.hidden), "seed": cfg.seed,
            "train": asdict(cfg.train), "attack": asdict(cfg.attack), "eval_attack": asdict(cfg.eval_attack)}
    return ProximityReport(float(area), RaccCurve(eps_done, vals, n_train, n_eval), base, conf, area_se)


# -- synthetic score ----------------------------------------------------------


def synthetic_score(disc, x, epsilon: float, attack: AttackConfig = AttackConfig(), rng=None, x_init=None,
                    return_points=False):
    """Lowest proxy-class probability reachable inside the ``epsilon`` ball.

    Low scores mark samples an adversary can make look real, i.e. samples
    close to the real distribution; they are prioritized for selection.
    """
    model = disc.model if isinstance(disc, Discriminator) else disc
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rng = Rng(attack.seed) if rng is None else as_rng(rng)
    if epsilon == 0 and x_init is None:
        best = X
    else:
        obj = logit_margin_objective(model, REAL, PROXY)
        best = pgd_attack(model, X, None, attack.with_epsilon(epsilon), obj, rng, x_init=x_init)
    scores = softmax(model.forward(best))[:, PROXY]
    if np.ndim(x) == 1:
        scores, best = scores[0], best[0]
    return (scores, best) if return_points else scores


def synthetic_score_sweep(disc, x, epsilons, attack: AttackConfig = AttackConfig(), rng=None):
    """Scores over ascending budgets with warm starts (non-increasing in epsilon)."""
    rng = Rng(attack.seed) if rng is None else as_rng(rng)
    prev = None
    out = []
    for e in epsilons:
        s, prev = synthetic_score(disc, x, e, attack, rng, x_init=prev, return_points=True)
        out.append(s)
    return np.asarray(out)


def score_samples(disc, samples, epsilon: float, attack: AttackConfig = AttackConfig(), rng=None) -> ScoredSamples:
    s = synthetic_score(disc, samples.points, epsilon, attack, rng)
    return ScoredSamples(samples.points, samples.labels, np.clip(s, 0.0, 1.0), float(epsilon))


def _order(scored):
    return np.argsort(scored.scores, kind="stable")


def select_by_score(scored: ScoredSamples, k: int) -> Dataset:
    """The ``k`` lowest-score samples (ties by original index), in index order."""
    if not 0 <= k <= len(scored):
        raise ValueError(f"k={k} outside [0, {len(scored)}]")
    idx = np.sort(_order(scored)[:k])
    return Dataset(scored.points[idx], scored.labels[idx], f"lowest {k} scores")


def score_groups(scored: ScoredSamples, n_groups: int) -> list:
    """Equal-size contiguous blocks of the score ordering, lowest scores first.
    A remainder (< n_groups samples, all highest-score) is dropped."""
    if n_groups < 1 or n_groups > len(scored):
        raise ValueError(f"cannot form {n_groups} groups from {len(scored)} samples")
    size = len(scored) // n_groups
    order = _order(scored)
    return [
        Dataset(scored.points[order[g * size:(g + 1) * size]], scored.labels[order[g * size:(g + 1) * size]],
                f"score group {g}")
        for g in range(n_groups)
    ]


# -- baselines ----------------------------------------------------------------


def one_nn_distance(proxy, real, chunk: int = 2048) -> float:
    """Mean L2 distance from each proxy point to its nearest real point."""
    P, R = _pts(proxy), _pts(real)
    if P.shape[0] == 0 or R.shape[0] == 0:
        raise ValueError("empty point set")
    mins = [cdist(P[i:i + chunk], R).min(axis=1) for i in range(0, P.shape[0], chunk)]
    return float(np.mean(np.concatenate(mins)))


RIDGE = 1e-8


def fit_gaussian(X):
    X = _pts(X)
    n, d = X.shape
    if n <= d + 1:
        raise ValueError(f"need more than dim + 1 = {d + 1} samples, got {n}")
    cov = np.cov(X, rowvar=False).reshape(d, d) + RIDGE * np.eye(d)
    if np.linalg.eigvalsh(cov).min() <= 0:
        raise ValueError("degenerate covariance")
    return X.mean(axis=0), cov


def gaussian_frechet(A, B) -> float:
    """Frechet (W2) distance between Gaussians fitted to the pooled samples."""
    ma, ca = fit_gaussian(A)
    mb, cb = fit_gaussian(B)
    return gaussian_w2(ma, ca, mb, cb)


def ranking_difference(metric_values, truth_values, metric_direction: str = "lower") -> float:
    """Mean |rank under metric - rank under truth|, competition ranking.

    Truth is ranked descending (higher transferred accuracy is better);
    ``metric_direction`` says whether lower or higher metric values are better.
    """
    m = np.asarray(metric_values, dtype=float)
    t = np.asarray(truth_values, dtype=float)
    if m.shape != t.shape or m.ndim != 1 or m.size < 2:
        raise ValueError("need two equal-length sequences of length >= 2")
    if metric_direction not in ("lower", "higher"):
        raise ValueError("metric_direction must be 'lower' or 'higher'")
    rm = rankdata(m if metric_direction == "lower" else -m, method="min")
    rt = rankdata(-t, method="min")
    return float(np.mean(np.abs(rm - rt)))
