"""Attacks, average-robustness estimation, robust training and certification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri
from scipy.stats import beta as beta_dist

from .classifiers import (
    LinearClassifier,
    TrainConfig,
    TrainResult,
    BatchStream,
    ce_logit_grad,
    kl_logit_grads,
    loss_ce,
    loss_kl,
    run_sgd,
    _points_labels,
)
from .numerics import Rng, as_rng

# Rng child keys used by the trainers. Natural training (classifiers.sgd_train)
# uses REAL_STREAM too, so degenerate settings reproduce it exactly.
REAL_STREAM, PROXY_STREAM, REAL_ATTACK, PROXY_ATTACK, REAL_NOISE, PROXY_NOISE = range(6)
BISECTION_STEPS = 12
ABSTAIN = -1


@dataclass(frozen=True)
class AttackConfig:
    norm: str = "l2"
    epsilon: float = 0.5
    steps: int = 10
    step_size: float | None = None  # absolute; default 2.5 * epsilon / steps
    restarts: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.norm not in ("l2", "linf"):
            raise ValueError(f"norm must be 'l2' or 'linf', got {self.norm!r}")
        if self.epsilon < 0 or self.steps < 1 or self.restarts < 1:
            raise ValueError(f"invalid attack config {self}")

    def with_epsilon(self, eps):
        return AttackConfig(self.norm, float(eps), self.steps, self.step_size, self.restarts, self.seed)


@dataclass(frozen=True)
class SmoothingConfig:
    sigma: float = 0.25
    n_selection: int = 100
    n_estimation: int = 10_000
    alpha: float = 0.001
    beta: float = 6.0

    def __post_init__(self):
        if not self.sigma > 0 or not 0 < self.alpha < 1 or self.n_estimation < self.n_selection:
            raise ValueError(f"invalid smoothing config {self}")
        if self.n_selection < 1 or self.beta < 0:
            raise ValueError(f"invalid smoothing config {self}")


@dataclass
class RobustnessEstimate:
    mean_distance: float
    censored_fraction: float
    eps_max: float
    distances: np.ndarray = field(repr=False)

    @property
    def se(self) -> float:
        n = self.distances.shape[0]
        return float(np.std(self.distances, ddof=1) / math.sqrt(n)) if n > 1 else 0.0

    def to_dict(self):
        return {
            "mean_distance": self.mean_distance,
            "se": self.se,
            "censored_fraction": self.censored_fraction,
            "eps_max": self.eps_max,
            "n": int(self.distances.shape[0]),
        }


# -- objectives ---------------------------------------------------------------
# An objective maps a batch X (n, d) to (values (n,), gradients (n, d)).


def ce_objective(model, y):
    y = np.asarray(y, dtype=np.int64)

    def f(X):
        cache = model.forward_cache(X)
        logits = cache[0][-1]
        yy = np.broadcast_to(y, (X.shape[0],))
        _, _, dX = model.backward(cache, ce_logit_grad(logits, yy), need_params=False)
        return loss_ce(logits, yy), dX

    return f


def logit_margin_objective(model, target: int, other: int):
    """``z_target - z_other``; for two classes a monotone transform of P(target)."""

    def f(X):
        cache = model.forward_cache(X)
        logits = cache[0][-1]
        d = np.zeros_like(logits)
        d[:, target] = 1.0
        d[:, other] = -1.0
        _, _, dX = model.backward(cache, d, need_params=False)
        return logits[:, target] - logits[:, other], dX

    return f


def kl_objective(model, reference_logits):
    ref = np.atleast_2d(reference_logits)

    def f(X):
        cache = model.forward_cache(X)
        logits = cache[0][-1]
        _, dq = kl_logit_grads(ref, logits)
        _, _, dX = model.backward(cache, dq, need_params=False)
        return loss_kl(ref, logits), dX

    return f


def linear_objective(w):
    w = np.asarray(w, dtype=np.float64)

    def f(X):
        return X @ w, np.broadcast_to(w, X.shape).copy()

    return f


# -- PGD ----------------------------------------------------------------------


def _norms(v):
    return np.sqrt(np.sum(v * v, axis=1))


def _project(delta, eps, norm):
    if norm == "linf":
        return np.clip(delta, -eps[:, None], eps[:, None])
    n = _norms(delta)
    scale = np.where(n > eps, eps / np.where(n > 0, n, 1.0), 1.0)
    return delta * scale[:, None]


def _random_in_ball(rng, n, d, eps, norm):
    if norm == "linf":
        return (2.0 * rng.uniform((n, d)) - 1.0) * eps[:, None]
    z = rng.normal((n, d))
    z /= np.maximum(_norms(z), 1e-300)[:, None]
    r = rng.uniform(n) ** (1.0 / d)
    return z * (eps * r)[:, None]


def pgd_attack(model, x, y, cfg: AttackConfig, objective=None, rng=None, x_init=None, epsilon=None,
               return_value=False):
    """Projected gradient ascent on ``objective`` inside the ``cfg.norm`` ball.

    ``objective`` defaults to cross-entropy of ``model`` at labels ``y``.
    ``epsilon`` overrides ``cfg.epsilon`` and may be per-point. Restart 0 starts
    from ``x_init`` (projected) or ``x``; later restarts start uniformly in the
    ball. The best iterate seen (the start included) is returned per point.
    """
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    n, d = X.shape
    if objective is None:
        objective = ce_objective(model, y)
    eps = np.broadcast_to(np.asarray(cfg.epsilon if epsilon is None else epsilon, dtype=np.float64), (n,)).copy()
    if np.any(eps < 0):
        raise ValueError("epsilon must be non-negative")
    if cfg.step_size is None:
        alpha = 2.5 * eps / cfg.steps
    else:
        alpha = np.full(n, float(cfg.step_size))
    rng = Rng(cfg.seed) if rng is None else as_rng(rng)

    best_x = X.copy()
    best_v = np.full(n, -np.inf)
    for r in range(cfg.restarts):
        if r == 0:
            delta = np.zeros_like(X) if x_init is None else np.asarray(x_init, float).reshape(n, d) - X
        else:
            delta = _random_in_ball(rng, n, d, eps, cfg.norm)
        delta = _project(delta, eps, cfg.norm)
        for step in range(cfg.steps + 1):
            cur = X + delta
            v, g = objective(cur)
            better = v > best_v
            best_v[better] = v[better]
            best_x[better] = cur[better]
            if step == cfg.steps:
                break
            if cfg.norm == "linf":
                direction = np.sign(g)
            else:
                gn = _norms(g)
                direction = g / np.where(gn > 0, gn, 1.0)[:, None]
            delta = _project(delta + alpha[:, None] * direction, eps, cfg.norm)
    out = best_x[0] if single else best_x
    if return_value:
        return out, (best_v[0] if single else best_v)
    return out


def pgd_sweep(model, x, y, epsilons, cfg: AttackConfig, objective=None, rng=None):
    """Warm-started attacks over ascending budgets.

    Budget k starts from budget k-1's answer (feasible since balls are
    nested), so the best objective is non-decreasing in epsilon.
    Returns (points per budget, objective values per budget).
    """
    rng = Rng(cfg.seed) if rng is None else as_rng(rng)
    prev = None
    points, values = [], []
    for e in epsilons:
        xa, v = pgd_attack(model, x, y, cfg, objective, rng, x_init=prev, epsilon=e, return_value=True)
        points.append(xa)
        values.append(v)
        prev = xa
    return points, values


# -- average robustness -------------------------------------------------------


def _flips(model, X, y, eps, cfg, rng):
    xa = pgd_attack(model, X, y, cfg, rng=rng, epsilon=eps)
    return model.predict(xa) != y


def boundary_distance(model, x, y, eps_max: float, cfg: AttackConfig = AttackConfig(), rng=None):
    """Distance to the nearest label flip, capped at ``eps_max``.

    Exact for an L2 :class:`LinearClassifier`; otherwise bisection over the
    PGD budget (12 halvings) returning the smallest budget known to flip.
    """
    if eps_max <= 0:
        raise ValueError("eps_max must be positive")
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    n = X.shape[0]
    y = np.broadcast_to(np.asarray(y, dtype=np.int64), (n,)).copy()
    if isinstance(model, LinearClassifier) and cfg.norm == "l2":
        out = np.minimum(model.margin(X, y), eps_max)
        return float(out[0]) if single else out
    rng = Rng(cfg.seed) if rng is None else as_rng(rng)
    out = np.zeros(n)
    correct = model.predict(X) == y
    idx = np.flatnonzero(correct)
    if idx.size:
        Xc, yc = X[idx], y[idx]
        top = _flips(model, Xc, yc, np.full(idx.size, eps_max), cfg, rng)
        lo = np.zeros(idx.size)
        hi = np.full(idx.size, eps_max)
        active = np.flatnonzero(top)
        for _ in range(BISECTION_STEPS):
            if not active.size:
                break
            mid = 0.5 * (lo[active] + hi[active])
            f = _flips(model, Xc[active], yc[active], mid, cfg, rng)
            hi[active[f]] = mid[f]
            lo[active[~f]] = mid[~f]
        out[idx] = hi
    return float(out[0]) if single else out


def avg_robustness(model, data, eps_max: float, cfg: AttackConfig = AttackConfig(), rng=None) -> RobustnessEstimate:
    X, y = _points_labels(data)
    if X.shape[0] == 0:
        raise ValueError("empty data")
    d = boundary_distance(model, X, y, eps_max, cfg, rng)
    censored = float(np.mean(d >= eps_max))
    return RobustnessEstimate(float(np.mean(d)), censored, float(eps_max), d)


def decomposition(model, train_set, Dt_eval, D_eval, eps_max: float, cfg: AttackConfig = AttackConfig(), rng=None):
    """(empirical robustness, generalization penalty, distribution-shift penalty).

    ``train_set`` is the training sample; ``Dt_eval``/``D_eval`` are fresh
    samples standing in for the proxy and real distributions.
    """
    rng = Rng(cfg.seed) if rng is None else as_rng(rng)
    r_s = avg_robustness(model, train_set, eps_max, cfg, rng.child(0)).mean_distance
    r_t = avg_robustness(model, Dt_eval, eps_max, cfg, rng.child(1)).mean_distance
    r_d = avg_robustness(model, D_eval, eps_max, cfg, rng.child(2)).mean_distance
    return r_s, abs(r_t - r_s), abs(r_d - r_t)


def robust_accuracy(model, data, cfg: AttackConfig, rng=None) -> float:
    """Fraction of points still correctly classified after a PGD attack."""
    X, y = _points_labels(data)
    if cfg.epsilon == 0:
        return float(np.mean(model.predict(X) == y))
    xa = pgd_attack(model, X, y, cfg, rng=rng)
    return float(np.mean((model.predict(xa) == y) & (model.predict(X) == y)))


# -- robust training ----------------------------------------------------------


def _mixed_trainer(model, real, proxy, gamma, cfg: TrainConfig, source_grad, hook=None, data_hook=None):
    """Shared PORT loop: per step a ``cfg.batch`` draw from each active source,
    loss = gamma * L(real) + (1 - gamma) * L(proxy)."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    use_real = real is not None and len(real) > 0 and gamma > 0
    use_proxy = proxy is not None and len(proxy) > 0 and gamma < 1
    if gamma > 0 and not use_real:
        raise ValueError("real data is required when gamma > 0")
    if gamma < 1 and not use_proxy:
        raise ValueError("proxy data is required when gamma < 1")
    root = Rng(cfg.seed)
    sources = []
    if use_real:
        Xr, yr = _points_labels(real)
        sources.append(("real", Xr, yr, gamma, BatchStream(len(yr), cfg.batch, root.child(REAL_STREAM)), 0))
    if use_proxy:
        Xp, yp = _points_labels(proxy)
        sources.append(("proxy", Xp, yp, 1.0 - gamma, BatchStream(len(yp), cfg.batch, root.child(PROXY_STREAM)), 1))
    lead = sources[0]
    steps = math.ceil(lead[1].shape[0] / lead[4].batch)
    aux = {name: (root.child(REAL_ATTACK + k), root.child(REAL_NOISE + k)) for name, *_, k in sources}

    def step_fn(m, step):
        total_loss = 0.0
        dWs = dbs = None
        for name, X, y, weight, stream, k in sources:
            idx = stream.next()
            if data_hook is not None:
                data_hook(name, idx)
            loss, gw, gb = source_grad(m, X[idx], y[idx], *aux[name])
            if len(sources) == 1:
                return loss, gw, gb
            total_loss += weight * loss
            if dWs is None:
                dWs = [weight * g for g in gw]
                dbs = [weight * g for g in gb]
            else:
                dWs = [a + weight * g for a, g in zip(dWs, gw)]
                dbs = [a + weight * g for a, g in zip(dbs, gb)]
        return total_loss, dWs, dbs

    return run_sgd(model, step_fn, steps, cfg, hook)


def adv_train(model, real, proxy, gamma: float, attack: AttackConfig, cfg: TrainConfig = TrainConfig(),
              hook=None, data_hook=None) -> TrainResult:
    """Mixed adversarial training: PGD (CE objective) on both half-batches,
    then descend gamma * CE(real adv) + (1 - gamma) * CE(proxy adv).

    ``gamma=1`` ignores ``proxy`` entirely (plain adversarial training);
    ``gamma=0`` never touches ``real``.
    """

    def source_grad(m, X, y, attack_rng, _noise_rng):
        if attack.epsilon > 0:
            X = pgd_attack(m, X, y, attack, rng=attack_rng)
        cache = m.forward_cache(X)
        logits = cache[0][-1]
        dW, db, _ = m.backward(cache, ce_logit_grad(logits, y) / X.shape[0])
        return float(np.mean(loss_ce(logits, y))), dW, db

    return _mixed_trainer(model, real, proxy, gamma, cfg, source_grad, hook, data_hook)


def smooth_train(model, real, proxy, gamma: float, scfg: SmoothingConfig = SmoothingConfig(),
                 cfg: TrainConfig = TrainConfig(), hook=None) -> TrainResult:
    """Stability training: CE(clean) + beta * KL(f(x) || f(x + delta)),
    delta ~ N(0, sigma^2 I) drawn fresh per sample per step; gradients flow
    through both the clean and the noisy branch."""

    def source_grad(m, X, y, _attack_rng, noise_rng):
        n = X.shape[0]
        cache = m.forward_cache(X)
        logits = cache[0][-1]
        d_clean = ce_logit_grad(logits, y)
        loss = float(np.mean(loss_ce(logits, y)))
        if scfg.beta == 0:
            dW, db, _ = m.backward(cache, d_clean / n)
            return loss, dW, db
        Xn = X + scfg.sigma * noise_rng.normal(X.shape)
        cache_n = m.forward_cache(Xn)
        logits_n = cache_n[0][-1]
        dp, dq = kl_logit_grads(logits, logits_n)
        loss += scfg.beta * float(np.mean(loss_kl(logits, logits_n)))
        dW, db, _ = m.backward(cache, (d_clean + scfg.beta * dp) / n)
        dWn, dbn, _ = m.backward(cache_n, scfg.beta * dq / n)
        return loss, [a + b for a, b in zip(dW, dWn)], [a + b for a, b in zip(db, dbn)]

    return _mixed_trainer(model, real, proxy, gamma, cfg, source_grad, hook)


# -- randomized smoothing -----------------------------------------------------


def _vote_counts(model, x, n, sigma, rng, chunk=20_000):
    k = model.n_classes
    counts = np.zeros(k, dtype=np.int64)
    left = n
    while left > 0:
        m = min(chunk, left)
        noisy = x[None, :] + sigma * rng.normal((m, x.shape[0]))
        counts += np.bincount(model.predict(noisy), minlength=k)
        left -= m
    return counts


def clopper_pearson_lower(k: int, n: int, alpha: float) -> float:
    """One-sided (1 - alpha) lower confidence bound on a binomial proportion."""
    if k <= 0:
        return 0.0
    return float(beta_dist.ppf(alpha, k, n - k + 1))


def certify(model, x, scfg: SmoothingConfig = SmoothingConfig(), rng=None):
    """Monte Carlo certification of the Gaussian-smoothed classifier.

    Selection votes pick the candidate class; independent estimation votes
    give a Clopper-Pearson lower bound ``p`` on its probability. Returns
    ``(class, sigma * Phi^-1(p))`` or ``(ABSTAIN, 0.0)`` when ``p <= 1/2``.
    """
    rng = Rng(0) if rng is None else as_rng(rng)
    x = np.asarray(x, dtype=np.float64)
    sel = _vote_counts(model, x, scfg.n_selection, scfg.sigma, rng.child(0))
    c = int(np.argmax(sel))
    est = _vote_counts(model, x, scfg.n_estimation, scfg.sigma, rng.child(1))
    p_lower = clopper_pearson_lower(int(est[c]), scfg.n_estimation, scfg.alpha)
    if p_lower <= 0.5:
        return ABSTAIN, 0.0
    return c, float(scfg.sigma * ndtri(p_lower))
