# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled discrepancy kernels (hot inner loops of LHS annealing and
nested-subset search). Mirrors the contracts of ``_discrepancy_py``."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()

BACKEND = "compiled"


cdef inline double _f1(double x) nogil:
    cdef double a = fabs(x - 0.5)
    return 1.0 + 0.5 * a - 0.5 * a * a


cdef inline double _f2(double x, double y) nogil:
    return 1.0 + 0.5 * fabs(x - 0.5) + 0.5 * fabs(y - 0.5) - 0.5 * fabs(x - y)


def cd2_sq(u):
    """Squared centered-L2 discrepancy of a unit-cube design ``u`` (n, d)."""
    cdef double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0], d = uu.shape[1]
    cdef Py_ssize_t i, k, j
    cdef double lin = 0.0, quad = 0.0, p, q
    with nogil:
        for i in range(n):
            p = 1.0
            for j in range(d):
                p *= _f1(uu[i, j])
            lin += p
            for k in range(n):
                q = 1.0
                for j in range(d):
                    q *= _f2(uu[i, j], uu[k, j])
                quad += q
    return (13.0 / 12.0) ** d - 2.0 / n * lin + quad / (<double> n * n)


def pair_tables(u):
    """Row products ``v`` and pair-product matrix ``pair`` for a unit-cube design."""
    cdef double[:, ::1] uu = np.ascontiguousarray(u, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0], d = uu.shape[1]
    v_arr = np.empty(n)
    pair_arr = np.empty((n, n))
    cdef double[::1] v = v_arr
    cdef double[:, ::1] pair = pair_arr
    cdef Py_ssize_t i, k, j
    cdef double p
    with nogil:
        for i in range(n):
            p = 1.0
            for j in range(d):
                p *= _f1(uu[i, j])
            v[i] = p
            for k in range(n):
                p = 1.0
                for j in range(d):
                    p *= _f2(uu[i, j], uu[k, j])
                pair[i, k] = p
    return v_arr, pair_arr


def subset_scores(v, pair, idx, d):
    """Squared discrepancies of candidate row subsets (batch, m)."""
    cdef double[::1] vv = np.ascontiguousarray(v, dtype=np.float64)
    cdef double[:, ::1] pp = np.ascontiguousarray(pair, dtype=np.float64)
    cdef long long[:, ::1] ii = np.ascontiguousarray(idx, dtype=np.int64)
    cdef Py_ssize_t nb = ii.shape[0], m = ii.shape[1]
    cdef double const = (13.0 / 12.0) ** (<int> d)
    out_arr = np.empty(nb)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t b, r, s
    cdef long long a, c
    cdef double lin, quad
    with nogil:
        for b in range(nb):
            lin = 0.0
            quad = 0.0
            for r in range(m):
                a = ii[b, r]
                lin += vv[a]
                for s in range(m):
                    c = ii[b, s]
                    quad += pp[a, c]
            out[b] = const - 2.0 / m * lin + quad / (<double> m * m)
    return out_arr


def anneal(u, cols, rows_a, rows_b, thresholds, temperatures):
    """Column-swap annealing of a unit-cube LHS, driven by pre-drawn moves.

    Same contract as the numpy twin: accepts improving swaps, Metropolis
    rule for worsening swaps, returns (best_u, best_value, initial_value).
    """
    u_arr = np.array(u, dtype=np.float64, order="C")
    cdef double[:, ::1] uu = u_arr
    cdef long long[::1] cc = np.ascontiguousarray(cols, dtype=np.int64)
    cdef long long[::1] ra = np.ascontiguousarray(rows_a, dtype=np.int64)
    cdef long long[::1] rb = np.ascontiguousarray(rows_b, dtype=np.int64)
    cdef double[::1] th = np.ascontiguousarray(thresholds, dtype=np.float64)
    cdef double[::1] tp = np.ascontiguousarray(temperatures, dtype=np.float64)
    cdef Py_ssize_t n = uu.shape[0], d = uu.shape[1], n_steps = cc.shape[0]

    p1_arr = np.empty((n, d))
    v_arr = np.empty(n)
    F_arr = np.empty((n, n, d))
    M_arr = np.empty((n, n))
    best_arr = u_arr.copy()
    mrow_i_arr = np.empty(n)
    mrow_k_arr = np.empty(n)
    fi_new_arr = np.empty(n)
    fk_new_arr = np.empty(n)
    cdef double[:, ::1] p1 = p1_arr
    cdef double[::1] v = v_arr
    cdef double[:, :, ::1] F = F_arr
    cdef double[:, ::1] M = M_arr
    cdef double[:, ::1] best = best_arr
    cdef double[::1] mrow_i = mrow_i_arr
    cdef double[::1] mrow_k = mrow_k_arr
    cdef double[::1] fi_new = fi_new_arr
    cdef double[::1] fk_new = fk_new_arr

    cdef Py_ssize_t i, k, j, t, m, c
    cdef double p, val, init_val, best_val
    cdef double xi, xk, vi_new, vk_new, d_rows, d_block, delta, temp
    with nogil:
        for i in range(n):
            p = 1.0
            for j in range(d):
                p1[i, j] = _f1(uu[i, j])
                p *= p1[i, j]
            v[i] = p
        for i in range(n):
            for k in range(n):
                p = 1.0
                for j in range(d):
                    F[i, k, j] = _f2(uu[i, j], uu[k, j])
                    p *= F[i, k, j]
                M[i, k] = p
        val = 0.0
        for i in range(n):
            val -= 2.0 / n * v[i]
            for k in range(n):
                val += M[i, k] / (<double> n * n)
        val += (13.0 / 12.0) ** d
        init_val = val
        best_val = val

        for t in range(n_steps):
            c = <Py_ssize_t> cc[t]
            i = <Py_ssize_t> ra[t]
            k = <Py_ssize_t> rb[t]
            if i == k:
                continue
            xi = uu[i, c]
            xk = uu[k, c]
            # column values after the tentative swap: entry i holds xk, entry k holds xi
            for m in range(n):
                if m == i:
                    fi_new[m] = _f2(xk, xk)
                    fk_new[m] = _f2(xi, xk)
                elif m == k:
                    fi_new[m] = _f2(xk, xi)
                    fk_new[m] = _f2(xi, xi)
                else:
                    fi_new[m] = _f2(xk, uu[m, c])
                    fk_new[m] = _f2(xi, uu[m, c])
            for m in range(n):
                p = fi_new[m]
                for j in range(d):
                    if j != c:
                        p *= F[i, m, j]
                mrow_i[m] = p
                p = fk_new[m]
                for j in range(d):
                    if j != c:
                        p *= F[k, m, j]
                mrow_k[m] = p
            vi_new = _f1(xk)
            vk_new = _f1(xi)
            for j in range(d):
                if j != c:
                    vi_new *= p1[i, j]
                    vk_new *= p1[k, j]
            d_rows = 0.0
            for m in range(n):
                d_rows += mrow_i[m] - M[i, m]
                d_rows += mrow_k[m] - M[k, m]
            d_block = (mrow_i[i] - M[i, i]) + (mrow_k[k] - M[k, k]) + 2.0 * (mrow_i[k] - M[i, k])
            delta = -2.0 / n * (vi_new - v[i] + vk_new - v[k]) + (2.0 * d_rows - d_block) / (
                <double> n * n
            )
            temp = tp[t]
            if delta < 0.0 or (temp > 0.0 and th[t] < exp(-delta / temp)):
                uu[i, c] = xk
                uu[k, c] = xi
                p = p1[i, c]
                p1[i, c] = p1[k, c]
                p1[k, c] = p
                v[i] = vi_new
                v[k] = vk_new
                for m in range(n):
                    F[i, m, c] = fi_new[m]
                    F[m, i, c] = fi_new[m]
                    F[k, m, c] = fk_new[m]
                    F[m, k, c] = fk_new[m]
                for m in range(n):
                    M[i, m] = mrow_i[m]
                    M[m, i] = mrow_i[m]
                    M[k, m] = mrow_k[m]
                    M[m, k] = mrow_k[m]
                val += delta
                if val < best_val:
                    best_val = val
                    for m in range(n):
                        for j in range(d):
                            best[m, j] = uu[m, j]
    return best_arr, best_val, init_val
