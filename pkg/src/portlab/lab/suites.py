"""One runner per suite.

A suite runs one independent trial per seed. ``trial(cfg, seed)`` returns the
seed's records and any curve files; suites whose verdicts are medians over
seeds also define ``summarize(cfg, trials)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..classifiers import LinearClassifier, Mlp, grad, input_grad, loss_ce, loss_kl
from ..distributions import adversarial_shift, mixture, perturb_gaussians, sample, shift_means, sphere_classes
from ..numerics import Rng, finite_diff_grad
from ..proximity import (
    arc, racc, ranking_difference, score_groups, score_samples, select_by_score, train_robust_discriminator,
)
from ..robustness import (
    ABSTAIN, AttackConfig, adv_train, avg_robustness, certify, robust_accuracy, smooth_train,
)
from ..transport import cwd_empirical, cwd_gaussian, cwd_sphere
from .records import csv_text, record, verdict

SE_MULT = 3.0


@dataclass
class Trial:
    records: list
    files: dict = field(default_factory=dict)


def _model(spec, dim, n_classes, seed):
    return Mlp.init([dim, *spec.hidden, n_classes], seed=seed, activation=spec.activation)


def _unit(rng, d):
    u = rng.normal(d)
    return u / np.linalg.norm(u)


# -- theorem 1: shift penalty bounded by cwd ----------------------------------


def theorem1(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    k = len(D.classes)
    h = adv_train(_model(cfg.model, D.dim, k, seed), sample(D, p.n_train_per_class, root.child(1)), None, 1.0,
                  cfg.attack.build(seed), cfg.train.build(seed)).model
    ev = AttackConfig(cfg.attack.norm, 0.0, p.eval_steps, None, p.eval_restarts, seed)
    rob_d = avg_robustness(h, sample(D, p.n_eval_per_class, root.child(2)), p.eps_max, ev, root.child(3))
    recs, rows = [], []
    for i in range(p.n_proxies):
        frac = (i + 1) / p.n_proxies
        ms, cs = p.mean_shift_max * frac, p.cov_shift_max * frac
        Dt = perturb_gaussians(D, ms, cs, root.child(100 + i))
        rob_t = avg_robustness(h, sample(Dt, p.n_eval_per_class, root.child(2)), p.eps_max, ev, root.child(3))
        cwd = cwd_gaussian(D, Dt).total
        delta = abs(rob_d.mean_distance - rob_t.mean_distance)
        slack = SE_MULT * float(np.hypot(rob_d.se, rob_t.se))
        recs.append(record("theorem1", seed, f"proxy-{i:02d}", {
            "mean_shift_scale": ms, "cov_shift_scale": cs,
            "rob_real": rob_d.mean_distance, "rob_proxy": rob_t.mean_distance,
            "se_real": rob_d.se, "se_proxy": rob_t.se,
            "censored_real": rob_d.censored_fraction, "censored_proxy": rob_t.censored_fraction,
            "delta_rob": delta, "cwd": cwd, "slack": slack, "bound": cwd + slack,
        }, [verdict("delta_rob <= cwd + slack", delta, "<=", cwd + slack)]))
        rows.append((cwd, delta, cwd + slack))
    return Trial(recs, {"theorem1_curve.csv": csv_text(("cwd", "delta_rob", "bound"), rows)})


# -- theorem 2: cwd >= 4 arc, equality for spheres ----------------------------


def theorem2(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    dcfg = cfg.proximity.build(seed)
    recs, files = [], {}
    for j, (r, rt) in enumerate(p.sphere_pairs):
        center = [np.zeros(p.sphere_dimension)]
        D, Dt = sphere_classes(center, [r]), sphere_classes(center, [rt])
        real = sample(D, p.n_per_side, root.child(10 + j, 1)).points
        proxy = sample(Dt, p.n_per_side, root.child(10 + j, 2)).points
        cwd = cwd_sphere(D, Dt).total
        rep = arc(real, proxy, cfg.proximity.epsilons, dcfg)
        scal = {"r": r, "r_proxy": rt, "cwd": cwd, "arc": rep.arc, "arc_se": rep.arc_se,
                "four_arc": 4 * rep.arc, "slack": SE_MULT * 4 * rep.arc_se}
        vs = [
            verdict("4 arc <= cwd + slack", 4 * rep.arc, "<=", cwd + scal["slack"]),
            verdict("|4 arc - cwd| <= tol * cwd", abs(4 * rep.arc - cwd), "<=", p.equality_tolerance * cwd),
        ]
        for frac, bound, op in zip(p.check_fractions, p.check_bounds, (">=", "<=")):
            e = frac * cwd
            disc = train_robust_discriminator(real, proxy, e, dcfg)
            val = racc(disc, disc.heldout_real, disc.heldout_proxy, e, dcfg.eval_attack, Rng(seed).child(2000 + j))
            scal[f"racc_at_{frac:g}_gap"] = val
            scal[f"epsilon_at_{frac:g}_gap"] = e
            vs.append(verdict(f"racc at {frac:g} gap {op} {bound:g}", val, op, bound))
        recs.append(record("theorem2", seed, f"spheres-{j}", scal, vs))
        files[f"spheres_{j}_racc.csv"] = csv_text(("epsilon", "racc"), zip(rep.curve.epsilons, rep.curve.racc))
    if p.gaussian_pairs:
        D = cfg.distribution.build()
        lo, hi = p.gaussian_shift_range
        for j in range(p.gaussian_pairs):
            s = lo + (hi - lo) * float(root.child(300 + j).uniform())
            Dt = perturb_gaussians(D, s, s, root.child(200 + j))
            real = sample(D, p.n_per_class, root.child(400 + j, 1)).points
            proxy = sample(Dt, p.n_per_class, root.child(400 + j, 2)).points
            cwd = cwd_gaussian(D, Dt).total
            rep = arc(real, proxy, cfg.proximity.epsilons, dcfg)
            slack = SE_MULT * 4 * rep.arc_se
            recs.append(record("theorem2", seed, f"gaussian-{j}", {
                "shift_scale": s, "cwd": cwd, "arc": rep.arc, "arc_se": rep.arc_se,
                "four_arc": 4 * rep.arc, "slack": slack,
            }, [verdict("4 arc <= cwd + slack", 4 * rep.arc, "<=", cwd + slack)]))
            files[f"gaussian_{j}_racc.csv"] = csv_text(("epsilon", "racc"), zip(rep.curve.epsilons, rep.curve.racc))
    return Trial(recs, files)


# -- theorem 6: mixtures are closer -------------------------------------------


def theorem6(cfg, seed):
    """Empirical W1 between a D sample and a matched mixture sample.

    The mixture shares its base noise with the D sample, so the identity
    coupling moves only the draws taken from the shifted component; its cost
    is (1 - p_hat) * shift, and the exact assignment can only do better.
    The slack covers the binomial spread of p_hat.
    """
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    Dt = shift_means(D, p.shift * _unit(root.child(5), D.dim))
    cwd = cwd_gaussian(D, Dt).total
    S = sample(D, p.n_per_class, root.child(1))
    n = len(S)
    recs, rows = [], []
    for mix_p in p.ps:
        M = sample(mixture(D, Dt, mix_p), p.n_per_class, root.child(1))
        emp = cwd_empirical(S, M, D.metric).total
        moved = float(np.mean(np.any(S.points != M.points, axis=1)))
        se = cwd * float(np.sqrt(mix_p * (1 - mix_p) / n))
        rhs = (1 - mix_p) * cwd + SE_MULT * se
        recs.append(record("theorem6", seed, f"p={mix_p:g}", {
            "p": mix_p, "cwd_proxy": cwd, "cwd_mixture": emp, "moved_fraction": moved,
            "se": se, "slack": SE_MULT * se, "bound": rhs,
        }, [verdict("cwd_mixture <= (1-p) cwd + slack", emp, "<=", rhs)]))
        rows.append((mix_p, emp, rhs))
    return Trial(recs, {"theorem6_curve.csv": csv_text(("p", "cwd_mixture", "bound"), rows)})


# -- theorem 7: the bound is tight --------------------------------------------


def theorem7(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    if len(D.classes) != 2:
        raise ValueError("theorem7 uses a binary linear classifier")
    h = LinearClassifier.binary(np.asarray(p.w, dtype=np.float64), p.b)
    S = sample(D, p.n_per_class, root.child(1))
    rob = avg_robustness(h, S, np.inf).mean_distance
    recs, rows = [], []
    for a in p.alphas:
        St = sample(adversarial_shift(D, h, a), p.n_per_class, root.child(1))
        rob_t = avg_robustness(h, St, np.inf).mean_distance
        cwd = cwd_empirical(S, St, D.metric).total
        e_rob = abs(rob_t - (1 - a) * rob)
        e_cwd = abs(cwd - a * rob)
        recs.append(record("theorem7", seed, f"alpha={a:g}", {
            "alpha": a, "rob_real": rob, "rob_shifted": rob_t, "cwd": cwd,
            "rob_error": e_rob, "cwd_error": e_cwd, "tolerance": p.tolerance,
        }, [
            verdict("|rob_shifted - (1-alpha) rob| <= tol", e_rob, "<=", p.tolerance),
            verdict("|cwd - alpha rob| <= tol", e_cwd, "<=", p.tolerance),
        ]))
        rows.append((a, rob_t, cwd))
    return Trial(recs, {"theorem7_curve.csv": csv_text(("alpha", "rob_shifted", "cwd"), rows)})


# -- proxy ranking --------------------------------------------------------------


def arc_rank(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    k = len(D.classes)
    u = _unit(root.child(5), D.dim)
    dcfg = cfg.proximity.build(seed)
    attack = cfg.attack.build(seed)
    real = sample(D, p.n_real_per_class, root.child(1))
    real_eval = sample(D, p.n_eval_per_class, root.child(2))
    recs, files = [], {}
    cols = {"arc": [], "accuracy_eps0": [], "one_nn": [], "gaussian_frechet": [], "truth": []}
    for j, s in enumerate(p.shifts):
        Dt = shift_means(D, s * u)
        train = sample(Dt, p.n_proxy_per_class, root.child(10 + j))
        h = adv_train(_model(cfg.model, D.dim, k, seed), None, train, 0.0, attack, cfg.train.build(seed)).model
        truth = robust_accuracy(h, real_eval, attack, root.child(3))
        pool = sample(Dt, p.n_proxy_per_class, root.child(20 + j))
        rep = arc(real.points, pool.points, cfg.proximity.epsilons, dcfg)
        row = {"arc": rep.arc, "accuracy_eps0": rep.curve.racc[0], "one_nn": rep.baselines["one_nn"],
               "gaussian_frechet": rep.baselines["gaussian_frechet"], "truth": truth}
        for key, v in row.items():
            cols[key].append(v)
        recs.append(record("arc-rank", seed, f"proxy-{j}", {
            "shift": s, "cwd": cwd_gaussian(D, Dt).total, "arc_se": rep.arc_se, **row,
        }))
        files[f"proxy_{j}_racc.csv"] = csv_text(("epsilon", "racc"), zip(rep.curve.epsilons, rep.curve.racc))
    ranks = {m: ranking_difference(cols[m], cols["truth"], "lower")
             for m in ("arc", "accuracy_eps0", "one_nn", "gaussian_frechet")}
    recs.append(record("arc-rank", seed, "ranking", {f"ranking_difference_{m}": v for m, v in ranks.items()},
                       [verdict("ranking_difference(arc) == 0", ranks["arc"], "<=", 0.0)]))
    return Trial(recs, files)


# -- adaptive selection -------------------------------------------------------


def _adaptive_offsets(cfg):
    d, k = cfg.distribution.dimension, cfg.distribution.classes
    off = np.zeros(d)
    off[k:] = 1.0
    off /= np.linalg.norm(off)
    cls = np.zeros(d)
    cls[:k] = [(1 if i % 2 == 0 else -1) * (2.0 if i < 2 else 1.0) for i in range(k)]
    cls /= np.linalg.norm(cls)
    p = cfg.params
    return p.near_shift * off, p.far_shift * off + p.far_class_shift * cls


def adaptive(cfg, seed):
    """Score a planted near/far pool, then train on score groups and halves.

    The far component moves off the class span (so a discriminator can spot
    it) and partly along a class-difference direction (so it hurts).
    """
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    k = len(D.classes)
    near, far = _adaptive_offsets(cfg)
    pool_dist = mixture(shift_means(D, near), shift_means(D, far), p.near_fraction)
    real = sample(D, p.n_real_per_class, root.child(1))
    pool = sample(pool_dist, p.n_pool_per_class, root.child(2))
    is_near = np.concatenate([c.conditional.draw_sources(p.n_pool_per_class, root.child(2, c.label))
                              for c in pool_dist.classes])
    real_eval = sample(D, p.n_eval_per_class, root.child(4))
    attack = cfg.attack.build(seed)
    tcfg = cfg.train.build(seed)
    disc = train_robust_discriminator(real, pool, p.score_epsilon, cfg.proximity.build(seed))
    scored = score_samples(disc, pool, p.score_epsilon, AttackConfig(
        "l2", p.score_epsilon, cfg.proximity.attack_steps, None, 1, seed), root.child(3))

    def transferred(proxy):
        h = adv_train(_model(cfg.model, D.dim, k, seed), real if p.gamma > 0 else None, proxy, p.gamma,
                      attack, tcfg).model
        return robust_accuracy(h, real_eval, attack, root.child(5))

    groups = score_groups(scored, p.n_groups)
    order = np.argsort(scored.scores, kind="stable")
    size = len(pool) // p.n_groups
    group_acc = [transferred(g) for g in groups]
    group_far = [float(1 - np.mean(is_near[order[i * size:(i + 1) * size]])) for i in range(p.n_groups)]
    half = len(pool) // 2
    adaptive_acc = transferred(select_by_score(scored, half))
    random_acc = transferred(pool.subset(np.sort(root.child(6).permutation(len(pool))[:half])))
    scal = {"group_accuracy": group_acc, "group_far_fraction": group_far, "group_size": size,
            "lowest_group": group_acc[0], "highest_group": group_acc[-1],
            "adaptive_half": adaptive_acc, "random_half": random_acc,
            "pool_far_fraction": float(1 - np.mean(is_near))}
    rows = [(i, a, f) for i, (a, f) in enumerate(zip(group_acc, group_far))]
    return Trial([record("adaptive", seed, "trial", scal)],
                 {"groups.csv": csv_text(("group", "transferred_robust_accuracy", "far_fraction"), rows)})


def _median_of(trials, key):
    return float(np.median([t.records[0]["scalars"][key] for t in trials]))


def adaptive_summary(cfg, trials):
    lo, hi = _median_of(trials, "lowest_group"), _median_of(trials, "highest_group")
    ad, rn = _median_of(trials, "adaptive_half"), _median_of(trials, "random_half")
    return [record("adaptive", "median", "summary", {
        "median_lowest_group": lo, "median_highest_group": hi, "median_adaptive_half": ad,
        "median_random_half": rn, "n_seeds": len(trials),
    }, [
        verdict("lowest-score group >= highest-score group", lo, ">=", hi),
        verdict("adaptive half >= random half", ad, ">=", rn),
    ])]


# -- proxy benefit --------------------------------------------------------------


def port_benefit(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    k = len(D.classes)
    Dt = shift_means(D, p.proxy_shift * _unit(Rng(0).child(5), D.dim))
    cwd = cwd_gaussian(D, Dt).total
    real = sample(D, p.n_real_per_class, root.child(1))
    proxy = sample(Dt, p.n_proxy_per_class, root.child(2))
    real_eval = sample(D, p.n_eval_per_class, root.child(3))
    attack = cfg.attack.build(seed)
    out = {}
    for name, gamma, src in (("real_only", 1.0, None), ("mixed", p.gamma, proxy)):
        h = adv_train(_model(cfg.model, D.dim, k, seed), real, src, gamma, attack, cfg.train.build(seed)).model
        out[name] = robust_accuracy(h, real_eval, attack, root.child(4))
    return Trial([record("port-benefit", seed, "trial", {"cwd": cwd, "gamma": p.gamma, **out})])


def port_benefit_summary(cfg, trials):
    mixed, real = _median_of(trials, "mixed"), _median_of(trials, "real_only")
    cwd = trials[0].records[0]["scalars"]["cwd"]
    return [record("port-benefit", "median", "summary", {
        "median_mixed": mixed, "median_real_only": real, "cwd": cwd, "n_seeds": len(trials),
    }, [
        verdict("proxy is near: cwd <= max_cwd", cwd, "<=", cfg.params.max_cwd),
        verdict("mixed >= real-only", mixed, ">=", real),
    ])]


# -- certification ------------------------------------------------------------


def _oracle_points(p, rng):
    d = p.oracle_dimension
    w = _unit(rng.child(0), d)
    h = LinearClassifier.binary(w, 0.0)
    n = p.n_points
    n_at = int(round(p.fraction_at_margin * n))
    margins = np.concatenate([np.full(n_at, p.margin), p.max_margin * rng.child(1).uniform(n - n_at)])
    signs = np.where(rng.child(2).uniform(n) < 0.5, -1.0, 1.0)
    Z = rng.child(3).normal((n, d))
    Z -= np.outer(Z @ w, w)
    X = Z + (signs * margins)[:, None] * w[None, :]
    return h, X


def certify_suite(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    scfg = cfg.smoothing.build()
    h, X = _oracle_points(p, root.child(1))
    y = h.predict(X)
    margins = h.margin(X, y)
    preds, radii = np.empty(len(X), dtype=np.int64), np.empty(len(X))
    for i, x in enumerate(X):
        preds[i], radii[i] = certify(h, x, scfg, root.child(100, i))
    abstain = preds == ABSTAIN
    violations = int(np.sum(~abstain & ((preds != y) | (radii > margins))))
    at = np.isclose(margins, p.margin, rtol=0, atol=1e-9)
    mean_at = float(np.mean(radii[at])) if at.any() else float("nan")
    scal = {"n_points": len(X), "n_abstain": int(abstain.sum()), "n_certified_correct": int(np.sum(preds == y)),
            "violations": violations, "n_at_margin": int(at.sum()), "margin": p.margin,
            "mean_radius_at_margin": mean_at, "radius_floor": p.radius_ratio * p.margin,
            "sigma": scfg.sigma, "n_estimation": scfg.n_estimation, "alpha": scfg.alpha}
    vs = [verdict("soundness violations == 0", violations, "<=", 0)]
    if at.any():
        vs.append(verdict("mean radius at margin >= ratio * margin", mean_at, ">=", p.radius_ratio * p.margin))
    recs = [record("certify", seed, "linear-oracle", scal, vs)]
    files = {
        "points.csv": csv_text(("margin", "prediction", "radius"), zip(margins, preds, radii)),
        "certified_accuracy.csv": csv_text(("radius", "certified_accuracy"), _cert_curve(preds, radii, y)),
    }
    if p.compare_training:
        recs.append(_compare_smoothing(cfg, seed, scfg))
    return Trial(recs, files)


def _cert_curve(preds, radii, y, n_steps=41):
    top = float(np.max(radii)) if radii.size else 0.0
    grid = np.linspace(0.0, max(top, 1e-12), n_steps)
    ok = preds == y
    return [(r, float(np.mean(ok & (radii >= r)))) for r in grid]


def _compare_smoothing(cfg, seed, scfg):
    """gamma-mixed smooth_train against gamma=1 on a near proxy; no verdict."""
    p = cfg.params
    root = Rng(seed)
    D = cfg.distribution.build()
    k = len(D.classes)
    Dt = shift_means(D, p.proxy_shift * _unit(root.child(5), D.dim))
    real = sample(D, p.n_real_per_class, root.child(6))
    proxy = sample(Dt, p.n_proxy_per_class, root.child(7))
    ev = sample(D, max(1, p.n_eval // k), root.child(8))
    out = {}
    for name, gamma, src in (("baseline", 1.0, None), ("mixed", p.gamma, proxy)):
        h = smooth_train(_model(cfg.model, D.dim, k, seed), real, src, gamma, scfg, cfg.train.build(seed)).model
        hits = [certify(h, x, scfg, root.child(9, i))[0] == yy for i, (x, yy) in enumerate(zip(ev.points, ev.labels))]
        out[f"{name}_certified_accuracy_r0"] = float(np.mean(hits))
    return record("certify", seed, "smoothing-comparison", {"gamma": p.gamma, "cwd": cwd_gaussian(D, Dt).total, **out})


# -- gradient check -----------------------------------------------------------


def _rel_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-8))


def gradcheck(cfg, seed):
    p = cfg.params
    root = Rng(seed)
    errors, paths = [], []
    for i in range(p.n_checks):
        r = root.child(i)
        g = r.gen
        depth = int(g.integers(1, 4))
        dims = [int(v) for v in g.integers(2, 7, size=depth + 1)]
        dims[-1] = int(g.integers(2, 5))
        act = ("tanh", "relu")[i % 2]
        model = Mlp.init(dims, seed=int(g.integers(0, 2**31)), activation=act)
        X = r.normal((4, dims[0]))
        y = g.integers(0, dims[-1], size=4)
        kind = ("ce", "kl")[(i // 2) % 2]
        ref = r.normal((4, dims[-1])) if kind == "kl" else None
        params = model.parameters()
        target = int(g.integers(0, len(params) + 1))

        def batch_loss(m, Xb):
            logits = m.forward(Xb)
            return float(np.mean(loss_ce(logits, y) if kind == "ce" else loss_kl(ref, logits)))

        if target == len(params):
            path = "input"
            analytic = input_grad(model, X, y, kind, ref) / X.shape[0]
            numeric = finite_diff_grad(lambda Z: batch_loss(model, Z), X, p.step)
        else:
            path, arr = params[target]
            analytic = dict(grad(model, (X, y), kind, ref).parameters())[path]

            def f(v, arr=arr):
                saved = arr.copy()
                arr[...] = v
                try:
                    return batch_loss(model, X)
                finally:
                    arr[...] = saved

            numeric = finite_diff_grad(f, arr.copy(), p.step)
        if p.corrupt_path is not None and path == p.corrupt_path:
            analytic = analytic * 1.01 + 1e-3
        errors.append(_rel_error(analytic, numeric))
        paths.append(f"check[{i}] {act}/{kind} {path}")
    worst = int(np.argmax(errors))
    scal = {"n_checks": p.n_checks, "errors": errors, "paths": paths, "max_relative_error": errors[worst],
            "worst_path": paths[worst], "threshold": p.threshold}
    return Trial([record("gradcheck", seed, "finite-difference",
                         scal, [verdict("max relative error < threshold", errors[worst], "<", p.threshold)])])


RUNNERS = {
    "theorem1": (theorem1, None),
    "theorem2": (theorem2, None),
    "theorem6": (theorem6, None),
    "theorem7": (theorem7, None),
    "arc-rank": (arc_rank, None),
    "adaptive": (adaptive, adaptive_summary),
    "certify": (certify_suite, None),
    "gradcheck": (gradcheck, None),
    "port-benefit": (port_benefit, port_benefit_summary),
}
