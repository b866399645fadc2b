"""Acceptance criteria at their stated scales and tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run directly (``python tests/test_acceptance.py``) to get
just the lines.
"""
import itertools
import time

import numpy as np
import pytest

from portlab.classifiers import Mlp
from portlab.lab import resolve, run_suite
from portlab.lab.records import all_pass, dumps
from portlab.transport import cost_matrix, empirical_w1, gaussian_w2

LINES = []


def report(n, ok, detail, seconds=None, budget=None):
    if budget is not None:
        ok = ok and seconds <= budget
        detail += f"; {seconds:.0f}s of {budget:.0f}s budget"
    line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    return ok


def run(suite, overrides=None):
    t0 = time.perf_counter()
    records, _ = run_suite(resolve(suite, overrides or {}), None, threads=1)
    return records, time.perf_counter() - t0


def _verdicts(records):
    return [v for r in records for v in r["verdicts"]]


def test_criterion_01_shift_penalty_bound():
    recs, sec = run("theorem1")
    vs = _verdicts(recs)
    worst = min(v["rhs"] - v["lhs"] for v in vs)
    assert report(1, len(vs) == 20 and all_pass(recs),
                  f"{sum(v['pass'] for v in vs)}/20 proxies within cwd + 3 SE (min headroom {worst:.3f})", sec, 600)


def test_criterion_02_sphere_equality():
    recs, sec = run("theorem2", {"params": {"gaussian_pairs": 0}})
    s = recs[0]["scalars"]
    ok = 0.20 <= s["arc"] <= 0.30 and s["racc_at_0.25_gap"] >= 0.95 and s["racc_at_0.75_gap"] <= 0.60
    assert report(2, ok and all_pass(recs),
                  f"arc {s['arc']:.4f} in [0.20, 0.30], Racc(0.25) {s['racc_at_0.25_gap']:.3f} >= 0.95, "
                  f"Racc(0.75) {s['racc_at_0.75_gap']:.3f} <= 0.60", sec, 600)


def test_criterion_03_arc_bound_on_gaussians():
    recs, sec = run("theorem2", {"params": {"sphere_pairs": [], "gaussian_pairs": 5}})
    vs = _verdicts(recs)
    assert report(3, len(vs) == 5 and all_pass(recs),
                  f"{sum(v['pass'] for v in vs)}/5 pairs with 4 arc <= cwd + 3 SE "
                  f"(4 arc / cwd max {max(r['scalars']['four_arc'] / r['scalars']['cwd'] for r in recs):.3f})", sec)


def test_criterion_04_mixture_bound():
    recs, sec = run("theorem6")
    ok = abs(recs[0]["scalars"]["cwd_proxy"] - 2.0) < 1e-9 and all_pass(recs)
    ps = ", ".join(f"p={r['scalars']['p']:g}: {r['scalars']['cwd_mixture']:.3f} <= {r['scalars']['bound']:.3f}"
                   for r in recs)
    assert report(4, ok, f"cwd_gaussian 2.0; {ps}", sec, 60)


def test_criterion_05_tightness():
    recs, sec = run("theorem7")
    worst = max(v["lhs"] for v in _verdicts(recs))
    assert report(5, all_pass(recs) and len(recs) == 4, f"4 alphas, max error {worst:.2e} <= 1e-6", sec, 60)


def test_criterion_06_transport_oracle():
    g = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(200):
        n, d = int(g.integers(1, 8)), int(g.integers(1, 5))
        A, B = g.normal(size=(n, d)), g.normal(size=(n, d))
        C = cost_matrix(A, B)
        brute = min(sum(C[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n))) / n
        worst = max(worst, abs(empirical_w1(A, B) - brute))
    cov = np.array([[1.5, 0.4], [0.4, 0.8]])
    w2 = gaussian_w2([0.0, 0.0], cov, [3.0, 4.0], cov)
    ok = worst <= 1e-12 and abs(w2 - 5.0) <= 1e-9
    assert report(6, ok, f"200 brute-force instances, max gap {worst:.1e}; equal-cov W2 {w2:.12f} vs 5")


def test_criterion_07_gradient_hygiene():
    recs, sec = run("gradcheck")
    s = recs[0]["scalars"]
    assert report(7, all_pass(recs) and s["n_checks"] == 50,
                  f"50 checks, max relative error {s['max_relative_error']:.2e} < 1e-5", sec)


def test_criterion_08_smoothing_soundness():
    recs, sec = run("certify")
    s = recs[0]["scalars"]
    ok = all_pass(recs) and s["n_points"] == 500 and s["n_estimation"] == 100_000 and s["sigma"] == 0.25
    assert report(8, ok, f"500 points, {s['violations']} violations, mean radius at margin 0.5: "
                         f"{s['mean_radius_at_margin']:.4f} >= 0.4 ({s['n_abstain']} abstain)", sec, 300)


def test_criterion_09_arc_ranking():
    recs, sec = run("arc-rank")
    cwds = [r["scalars"]["cwd"] for r in recs[:3]]
    rank = recs[-1]["scalars"]
    ok = all_pass(recs) and np.allclose(cwds, [0.5, 1.5, 3.0], atol=1e-9)
    assert report(9, ok, f"ranking difference arc {rank['ranking_difference_arc']:.2f} "
                         f"(one_nn {rank['ranking_difference_one_nn']:.2f}, "
                         f"frechet {rank['ranking_difference_gaussian_frechet']:.2f}, "
                         f"eps0 {rank['ranking_difference_accuracy_eps0']:.2f}; no verdict)", sec, 1200)


def test_criterion_10_adaptive_selection():
    recs, sec = run("adaptive")
    s = recs[-1]["scalars"]
    assert report(10, all_pass(recs),
                  f"median lowest group {s['median_lowest_group']:.4f} >= highest {s['median_highest_group']:.4f}; "
                  f"adaptive half {s['median_adaptive_half']:.4f} >= random {s['median_random_half']:.4f}", sec, 1200)


def test_criterion_11_port_benefit():
    recs, sec = run("port-benefit")
    s = recs[-1]["scalars"]
    cfg = resolve("port-benefit")
    ok = all_pass(recs) and cfg.params.n_real_per_class == 100 and cfg.params.gamma == 0.4
    assert report(11, ok, f"cwd {s['cwd']:.2f} <= 0.5; median mixed {s['median_mixed']:.4f} >= "
                          f"real-only {s['median_real_only']:.4f}", sec)


def test_criterion_12_determinism(tmp_path):
    same = []
    for suite in ("theorem1", "theorem6", "theorem7"):
        blobs = []
        for run_dir in ("a", "b"):
            run_suite(resolve(suite), tmp_path / run_dir, threads=1)
            blobs.append((tmp_path / run_dir / suite / "0" / "records.json").read_bytes())
        same.append(blobs[0] == blobs[1])
    assert report(12, all(same), "suites theorem1, theorem6, theorem7 reran byte-identical: "
                                 + ", ".join(str(s) for s in same))


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
