"""Pure-numpy implementations of the discrepancy kernels.

These are the fallback twins of the compiled routines in
``_discrepancy_cy``; both back ends implement the same contracts and are
selected in :mod:`mlcv.kernels`. Designs are expected in the unit cube,
one row per point.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def _f1(u):
    a = np.abs(u - 0.5)
    return 1.0 + 0.5 * a - 0.5 * a * a


def _f2_col(x, y):
    # x: scalar or (n,), y: (n,) values from one coordinate
    ax = np.abs(x - 0.5)
    ay = np.abs(y - 0.5)
    return 1.0 + 0.5 * ax + 0.5 * ay - 0.5 * np.abs(x - y)


def cd2_sq(u):
    """Squared centered-L2 discrepancy of a unit-cube design ``u`` (n, d)."""
    u = np.asarray(u, dtype=np.float64)
    n, d = u.shape
    v, pair = pair_tables(u)
    return (13.0 / 12.0) ** d - 2.0 / n * v.sum() + pair.sum() / (n * n)


def pair_tables(u):
    """Row products ``v`` and pair-product matrix ``pair`` for a unit-cube design.

    ``cd2_sq`` of any row subset S of size m is
    ``(13/12)**d - (2/m) * v[S].sum() + pair[S][:, S].sum() / m**2``.
    """
    u = np.asarray(u, dtype=np.float64)
    n, d = u.shape
    v = np.prod(_f1(u), axis=1)
    pair = np.ones((n, n))
    for j in range(d):
        col = u[:, j]
        pair *= _f2_col(col[:, None], col[None, :])
    return v, pair


def subset_scores(v, pair, idx, d):
    """Squared discrepancies of candidate row subsets.

    Parameters
    ----------
    v, pair:
        Tables from :func:`pair_tables` of the parent design.
    idx:
        Integer array (batch, m) of row subsets.
    d:
        Dimension of the parent design.
    """
    idx = np.asarray(idx)
    m = idx.shape[1]
    const = (13.0 / 12.0) ** d
    lin = v[idx].sum(axis=1)
    quad = pair[idx[:, :, None], idx[:, None, :]].sum(axis=(1, 2))
    return const - 2.0 / m * lin + quad / (m * m)


def anneal(u, cols, rows_a, rows_b, thresholds, temperatures):
    """Column-swap annealing of a unit-cube LHS, driven by pre-drawn moves.

    Each step proposes swapping rows ``rows_a[t]`` and ``rows_b[t]`` within
    column ``cols[t]`` (an LHS-preserving move), accepts improving swaps and
    accepts worsening swaps when ``thresholds[t] < exp(-delta / T_t)``. The
    best design seen along the trajectory is returned, so the result is
    never worse than the input.

    Returns
    -------
    (best_u, best_value, initial_value)
    """
    u = np.array(u, dtype=np.float64)
    n, d = u.shape
    p1 = _f1(u)  # (n, d) per-coordinate factors
    v = p1.prod(axis=1)
    F = np.empty((n, n, d))
    for j in range(d):
        col = u[:, j]
        F[:, :, j] = _f2_col(col[:, None], col[None, :])
    M = F.prod(axis=2)
    const = (13.0 / 12.0) ** d
    val = const - 2.0 / n * v.sum() + M.sum() / (n * n)
    init_val = val
    best_val = val
    best_u = u.copy()

    n_steps = len(cols)
    for t in range(n_steps):
        c = cols[t]
        i = rows_a[t]
        k = rows_b[t]
        if i == k:
            continue
        xi, xk = u[i, c], u[k, c]
        col_new = u[:, c].copy()
        col_new[i] = xk
        col_new[k] = xi

        fi_new = _f2_col(xk, col_new)
        fk_new = _f2_col(xi, col_new)
        tmp = F[i].copy()
        tmp[:, c] = fi_new
        mrow_i = tmp.prod(axis=1)
        tmp = F[k].copy()
        tmp[:, c] = fk_new
        mrow_k = tmp.prod(axis=1)

        rowp = p1[i].copy()
        rowp[c] = _f1(xk)
        vi_new = rowp.prod()
        rowp = p1[k].copy()
        rowp[c] = _f1(xi)
        vk_new = rowp.prod()

        # changed entries of M: rows {i,k} and columns {i,k} (symmetric)
        d_rows = (mrow_i - M[i]).sum() + (mrow_k - M[k]).sum()
        d_block = (mrow_i[i] - M[i, i]) + (mrow_k[k] - M[k, k]) + 2.0 * (mrow_i[k] - M[i, k])
        d_pair = 2.0 * d_rows - d_block
        delta = -2.0 / n * (vi_new - v[i] + vk_new - v[k]) + d_pair / (n * n)

        temp = temperatures[t]
        if delta < 0.0 or (temp > 0.0 and thresholds[t] < np.exp(-delta / temp)):
            u[i, c], u[k, c] = xk, xi
            p1[i, c], p1[k, c] = p1[k, c], p1[i, c]
            v[i], v[k] = vi_new, vk_new
            F[i, :, c] = fi_new
            F[:, i, c] = fi_new
            F[k, :, c] = fk_new
            F[:, k, c] = fk_new
            M[i, :] = mrow_i
            M[:, i] = mrow_i
            M[k, :] = mrow_k
            M[:, k] = mrow_k
            val += delta
            if val < best_val:
                best_val = val
                best_u = u.copy()
    return best_u, best_val, init_val
