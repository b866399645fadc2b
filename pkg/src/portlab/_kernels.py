"""Hot inner loops: cyclic Jacobi eigensolver and dense min-cost assignment.

Each kernel has a numba-compiled body and a numpy body with identical
arithmetic order; ``jacobi_eig`` and ``assignment`` dispatch on
``portlab._accel.USE_NUMBA``.
"""
import numpy as np

from ._accel import njit, pick

MAX_SWEEPS = 100


# -- symmetric eigendecomposition ---------------------------------------------


def _rotation(app, aqq, apq):
    theta = (aqq - app) / (2.0 * apq)
    t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
    if theta < 0.0:
        t = -t
    c = 1.0 / np.sqrt(t * t + 1.0)
    return c, t * c


_rotation_nb = njit(_rotation)


@njit
def _max_offdiag_nb(a):
    n = a.shape[0]
    m = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            v = abs(a[i, j])
            if v > m:
                m = v
    return m


@njit
def _jacobi_nb(a, tol):
    n = a.shape[0]
    v = np.eye(n)
    sweeps = 0
    while _max_offdiag_nb(a) >= tol and sweeps < MAX_SWEEPS:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                c, s = _rotation_nb(a[p, p], a[q, q], apq)
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - s * akq
                    a[k, q] = s * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - s * aqk
                    a[q, k] = s * apk + c * aqk
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - s * vkq
                    v[k, q] = s * vkp + c * vkq
        sweeps += 1
    return np.diag(a).copy(), v, sweeps


def _max_offdiag_np(a):
    if a.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(a[np.triu_indices(a.shape[0], 1)])))


def _jacobi_np(a, tol):
    n = a.shape[0]
    v = np.eye(n)
    sweeps = 0
    while _max_offdiag_np(a) >= tol and sweeps < MAX_SWEEPS:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                c, s = _rotation(a[p, p], a[q, q], apq)
                ap = a[:, p].copy()
                aq = a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap = a[p, :].copy()
                aq = a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweeps += 1
    return np.diag(a).copy(), v, sweeps


def jacobi_eig(a, tol, use_numba=None):
    """Diagonalize symmetric ``a`` (copied) until max off-diagonal < ``tol``.

    Returns ``(eigenvalues, eigenvectors, sweeps)`` unsorted.
    """
    a = np.array(a, dtype=np.float64, order="C", copy=True)
    if use_numba is None:
        fn = pick(_jacobi_nb, _jacobi_np)
    else:
        fn = _jacobi_nb if use_numba else _jacobi_np
    return fn(a, float(tol))


# -- linear sum assignment ----------------------------------------------------
# Shortest augmenting path with row/column potentials (Jonker-Volgenant
# family), 1-indexed with a sentinel column 0.


@njit
def _lsa_nb(cost):
    n = cost.shape[0]
    inf = np.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    minv = np.empty(n + 1)
    used = np.zeros(n + 1, dtype=np.bool_)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv[:] = inf
        used[:] = False
        while True:
            used[j0] = True
            i0 = p[j0]
            delta = inf
            j1 = 0
            for j in range(1, n + 1):
                if not used[j]:
                    cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                    if cur < minv[j]:
                        minv[j] = cur
                        way[j] = j0
                    if minv[j] < delta:
                        delta = minv[j]
                        j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[p[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    for j in range(1, n + 1):
        col_of_row[p[j] - 1] = j - 1
    return col_of_row


def _lsa_np(cost):
    n = cost.shape[0]
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    p = np.zeros(n + 1, dtype=np.int64)
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        p[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = p[j0]
            free = ~used
            free[0] = False
            cur = cost[i0 - 1, :] - u[i0] - v[1:]
            better = free[1:] & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv, np.inf)
            j1 = int(np.argmin(masked))
            delta = masked[j1]
            u[p[used]] += delta
            v[used] -= delta
            minv[~used] -= delta
            j0 = j1
            if p[j0] == 0:
                break
        while j0 != 0:
            j1 = way[j0]
            p[j0] = p[j1]
            j0 = j1
    col_of_row = np.empty(n, dtype=np.int64)
    col_of_row[p[1:] - 1] = np.arange(n)
    return col_of_row


def assignment(cost, use_numba=None):
    """Column index assigned to each row by a minimum-cost perfect matching."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise ValueError(f"cost matrix must be square, got {cost.shape}")
    if cost.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    if use_numba is None:
        fn = pick(_lsa_nb, _lsa_np)
    else:
        fn = _lsa_nb if use_numba else _lsa_np
    return fn(cost)
