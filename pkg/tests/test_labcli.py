import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from portlab.lab import audit, resolve, run_suite
from portlab.lab.cli import EXIT_CONFIG, EXIT_OK, EXIT_VERDICT, main
from portlab.lab.config import SUITES, ConfigError, dump_resolved
from portlab.lab.records import all_pass, csv_text, dumps, verdict

TINY_DISC = {"hidden": [8], "epochs": 5, "attack_steps": 3, "eval_steps": 3, "eval_restarts": 1, "grid_points": 4}


def _write(tmp_path, doc, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc), encoding="utf-8")
    return p


def test_every_suite_resolves_with_defaults():
    for s in SUITES:
        cfg = resolve(s)
        assert dump_resolved(cfg)["suite"] == s


@pytest.mark.parametrize("doc", [
    {"params": {"unknown": 1}},
    {"distribution": {"family": "cauchy"}},
    {"suite": "theorem1"},
    {"seeds": []},
    {"seeds": [1, 1]},
    {"params": {"alphas": "many"}},
])
def test_bad_configs_exit_2(tmp_path, doc, capsys):
    assert main(["theorem7", "--config", str(_write(tmp_path, doc)), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unreadable_or_non_mapping_config(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n", encoding="utf-8")
    assert main(["theorem7", "--config", str(bad)]) == EXIT_CONFIG
    bad.write_text("- 1\n- 2\n", encoding="utf-8")
    assert main(["theorem7", "--config", str(bad)]) == EXIT_CONFIG
    assert main(["theorem7", "--config", str(tmp_path / "missing.yaml")]) == EXIT_CONFIG
    with pytest.raises(ConfigError):
        resolve("theorem99")


def test_threads_env_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("PORTLAB_THREADS", "zero")
    assert main(["theorem7", "--out", str(tmp_path)]) == EXIT_CONFIG
    monkeypatch.setenv("PORTLAB_THREADS", "0")
    assert main(["theorem7", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_theorem7_passes_and_lays_out_outputs(tmp_path, capsys):
    assert main(["theorem7", "--out", str(tmp_path), "--seed", "4"]) == EXIT_OK
    base = tmp_path / "theorem7"
    assert sorted(p.name for p in base.iterdir()) == ["4", "manifest.json", "timing.json"]
    manifest = json.loads((base / "manifest.json").read_text())
    assert manifest["config"]["seeds"] == [4]
    assert manifest["config"]["params"]["alphas"] == [0.0, 0.25, 0.5, 1.0]
    recs = json.loads((base / "4" / "records.json").read_text())
    assert all(audit(r) for r in recs)
    first = recs[0]
    assert first["scalars"]["alpha"] == 0.0
    assert first["scalars"]["rob_error"] == 0.0 and first["scalars"]["cwd"] == 0.0
    csv = (base / "4" / "theorem7_curve.csv").read_text()
    assert csv.startswith("alpha,rob_shifted,cwd\n") and csv.endswith("\n") and "\r" not in csv
    assert "8/8 verdicts pass" in capsys.readouterr().out


def test_corrupted_gradient_fails_and_names_path(tmp_path, capsys):
    cfg = _write(tmp_path, {"params": {"corrupt_path": "layers[0].weight"}})
    assert main(["gradcheck", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_VERDICT
    out = capsys.readouterr().out
    assert "FAIL" in out and "layers[0].weight" in out
    rec = json.loads((tmp_path / "gradcheck" / "0" / "records.json").read_text())[0]
    assert "layers[0].weight" in rec["scalars"]["worst_path"]
    assert len(rec["scalars"]["errors"]) == 50


def test_gradcheck_default_passes(tmp_path):
    assert main(["gradcheck", "--out", str(tmp_path), "--quiet"]) == EXIT_OK


def test_reruns_are_byte_identical(tmp_path):
    for run in ("a", "b"):
        assert main(["theorem6", "--out", str(tmp_path / run), "--quiet"]) == EXIT_OK
    a = (tmp_path / "a" / "theorem6" / "0" / "records.json").read_bytes()
    b = (tmp_path / "b" / "theorem6" / "0" / "records.json").read_bytes()
    assert a == b


def test_parallel_seeds_keep_seed_order():
    cfg = resolve("theorem6", {"seeds": [2, 0, 1]})
    serial, _ = run_suite(cfg, None, threads=1)
    parallel, _ = run_suite(cfg, None, threads=3)
    assert dumps(serial) == dumps(parallel)
    assert [r["seed"] for r in serial[::3]] == [2, 0, 1]


def test_theorem1_zero_perturbation_gives_zero_shift():
    cfg = resolve("theorem1", {
        "distribution": {"dimension": 4, "classes": 2}, "train": {"epochs": 3},
        "params": {"n_proxies": 2, "mean_shift_max": 0.0, "cov_shift_max": 0.0, "n_train_per_class": 50,
                   "n_eval_per_class": 40, "eval_steps": 3},
    })
    recs, _ = run_suite(cfg)
    for r in recs:
        assert r["scalars"]["cwd"] == pytest.approx(0.0, abs=1e-6)
        assert r["scalars"]["delta_rob"] == 0.0  # identical matched samples
    assert all_pass(recs)


def test_certify_counts_abstentions_separately():
    cfg = resolve("certify", {
        "smoothing": {"n_estimation": 2000, "alpha": 0.001},
        "params": {"n_points": 20, "max_margin": 0.05, "fraction_at_margin": 0.0},
    })
    (rec,), _ = run_suite(cfg)
    s = rec["scalars"]
    assert s["n_abstain"] > 0
    assert s["n_abstain"] + s["n_certified_correct"] <= s["n_points"]
    assert s["violations"] == 0


def test_certify_smoothing_comparison_has_no_verdict():
    cfg = resolve("certify", {
        "smoothing": {"n_estimation": 500, "n_selection": 50},
        "train": {"epochs": 2},
        "params": {"n_points": 4, "compare_training": True, "n_real_per_class": 20, "n_proxy_per_class": 40,
                   "n_eval": 6},
    })
    recs, _ = run_suite(cfg)
    cmp = [r for r in recs if r["case"] == "smoothing-comparison"][0]
    assert cmp["verdicts"] == []
    assert 0 <= cmp["scalars"]["mixed_certified_accuracy_r0"] <= 1


def test_adaptive_groups_are_equal_size():
    cfg = resolve("adaptive", {
        "seeds": [0], "train": {"epochs": 2}, "proximity": TINY_DISC,
        "params": {"n_real_per_class": 20, "n_pool_per_class": 23, "n_eval_per_class": 10, "n_groups": 4},
    })
    recs, _ = run_suite(cfg)
    s = recs[0]["scalars"]
    assert s["group_size"] == (4 * 23) // 4 and len(s["group_accuracy"]) == 4
    assert recs[-1]["seed"] == "median" and len(recs[-1]["verdicts"]) == 2


def test_arc_rank_identical_proxy_ranks_first():
    cfg = resolve("arc-rank", {
        "distribution": {"dimension": 4, "classes": 2, "mean_scale": 2.5},
        "train": {"epochs": 5}, "proximity": TINY_DISC,
        "params": {"shifts": [3.0, 0.0], "n_real_per_class": 60, "n_proxy_per_class": 60, "n_eval_per_class": 40},
    })
    recs, _ = run_suite(cfg)
    far, same = recs[0]["scalars"], recs[1]["scalars"]
    assert same["cwd"] == 0.0
    assert same["truth"] >= far["truth"] and same["arc"] <= far["arc"]
    assert "ranking_difference_accuracy_eps0" in recs[-1]["scalars"]


def test_port_benefit_summary_is_median():
    cfg = resolve("port-benefit", {
        "distribution": {"dimension": 4, "classes": 2}, "train": {"epochs": 2}, "model": {"hidden": [8]},
        "params": {"n_real_per_class": 10, "n_proxy_per_class": 20, "n_eval_per_class": 10},
    })
    recs, _ = run_suite(cfg, threads=1)
    med = np.median([r["scalars"]["mixed"] for r in recs[:3]])
    assert recs[-1]["scalars"]["median_mixed"] == med


def test_records_helpers():
    v = verdict("x", 1.0, "<=", 2.0)
    assert v["pass"] is True
    rec = {"verdicts": [dict(v, **{"pass": False})]}
    assert not audit(rec)
    assert csv_text(("a", "b"), [(0.1, 2)]) == "a,b\n0.1,2\n"
    assert dumps({"b": np.float64(1.5), "a": [np.int64(2)], "c": float("inf")}) == \
        '{\n  "a": [\n    2\n  ],\n  "b": 1.5,\n  "c": "inf"\n}\n'


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "portlab.lab", "theorem7", "--out", str(tmp_path), "--quiet"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    assert out.stdout.count("\n") == 1
