"""Both kernel paths (numba and numpy) against independent references."""
import itertools

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from portlab import _kernels
from portlab._accel import HAS_NUMBA

PATHS = [False] + ([True] if HAS_NUMBA else [])


@pytest.mark.parametrize("use_numba", PATHS)
def test_jacobi_against_eigvalsh(use_numba, rng):
    for n in (1, 2, 5, 12):
        a = rng.normal(size=(n, n))
        a = a + a.T
        w, v, sweeps = _kernels.jacobi_eig(a, 1e-12 * np.linalg.norm(a), use_numba=use_numba)
        assert np.allclose(np.sort(w), np.linalg.eigvalsh(a), atol=1e-9)
        assert np.allclose(v @ np.diag(w) @ v.T, a, atol=1e-9)
        assert sweeps <= _kernels.MAX_SWEEPS


@pytest.mark.parametrize("use_numba", PATHS)
def test_assignment_brute_force(use_numba, rng):
    for _ in range(50):
        n = int(rng.integers(1, 7))
        c = rng.uniform(size=(n, n))
        cols = _kernels.assignment(c, use_numba=use_numba)
        assert sorted(cols.tolist()) == list(range(n))
        best = min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))
        assert c[np.arange(n), cols].sum() == pytest.approx(best, abs=1e-12)


@pytest.mark.parametrize("use_numba", PATHS)
def test_assignment_matches_scipy(use_numba, rng):
    c = rng.uniform(size=(60, 60))
    r, s = linear_sum_assignment(c)
    cols = _kernels.assignment(c, use_numba=use_numba)
    assert c[np.arange(60), cols].sum() == pytest.approx(c[r, s].sum(), abs=1e-10)


@pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")
def test_paths_agree_bitwise(rng):
    a = rng.normal(size=(10, 10))
    a = a + a.T
    w1, v1, s1 = _kernels.jacobi_eig(a, 1e-12, use_numba=True)
    w2, v2, s2 = _kernels.jacobi_eig(a, 1e-12, use_numba=False)
    assert s1 == s2
    assert np.allclose(w1, w2, atol=1e-12) and np.allclose(v1, v2, atol=1e-12)
    c = rng.uniform(size=(40, 40))
    assert np.array_equal(_kernels.assignment(c, use_numba=True), _kernels.assignment(c, use_numba=False))


def test_env_flag_selects_numpy_path():
    import subprocess
    import sys

    code = "from portlab import _accel; print(_accel.USE_NUMBA)"
    out = subprocess.run([sys.executable, "-c", code], env={"PORTLAB_NUMBA": "0", "PATH": ""},
                         capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
