"""Orthonormal polynomial-chaos surrogates on hyper-rectangles.

Multivariate bases are tensor products of univariate Legendre polynomials,
rescaled to each coordinate interval and normalized against the uniform
measure, so surrogate moments are read directly off the coefficients.
Sparse fitting uses least-angle regression for model selection with
ordinary least-squares refits, scored by a corrected leave-one-out error.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import (
    InsufficientQuadratureError,
    MissingTensorEntryError,
    SingularDesignError,
    ZeroVarianceError,
)
from .sampling import Doe, InputSpace

__all__ = [
    "total_degree_set",
    "basis_eval",
    "basis_matrix",
    "PcSurrogate",
    "ols_fit",
    "lars_select",
    "adaptive_fit",
    "q2",
    "pc_moments",
    "pc_covariance",
    "combine_pc",
    "GalerkinTensor",
    "galerkin_tensor",
    "centered_square_covariance",
    "quartic_covariance",
]


def total_degree_set(d: int, p: int) -> np.ndarray:
    """All exponent vectors of total degree at most ``p``, graded-lexicographic.

    The result has ``C(d + p, p)`` rows; the constant exponent comes first
    and, within each total degree, earlier coordinates carry the higher
    exponents first.
    """
    if p < 0:
        raise ValueError("total degree must be nonnegative")

    def compositions(total, slots):
        if slots == 1:
            yield (total,)
            return
        for head in range(total, -1, -1):
            for tail in compositions(total - head, slots - 1):
                yield (head,) + tail

    rows = []
    for grade in range(p + 1):
        rows.extend(compositions(grade, d))
    return np.array(rows, dtype=np.int64)


def _sorted_graded(indices: np.ndarray) -> np.ndarray:
    """Row order sorting an index set graded-lexicographically."""
    idx = np.atleast_2d(indices)
    order = sorted(
        range(idx.shape[0]),
        key=lambda i: (int(idx[i].sum()), tuple(-int(e) for e in idx[i])),
    )
    return np.array(order, dtype=np.int64)


def _sym_unit(space: InputSpace, points: np.ndarray) -> np.ndarray:
    return 2.0 * space.to_unit(points) - 1.0


def _vander1d(t: np.ndarray, max_degree: int) -> np.ndarray:
    """Orthonormal Legendre Vandermonde on [-1, 1] w.r.t. the uniform measure."""
    v = np.polynomial.legendre.legvander(t, max_degree)
    return v * np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)


def basis_matrix(space: InputSpace, indices: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate the basis functions of ``indices`` at ``points``: (n, P)."""
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    t = _sym_unit(space, pts)
    out = np.ones((pts.shape[0], idx.shape[0]))
    for j in range(space.dims):
        degs = idx[:, j]
        if degs.max(initial=0) == 0:
            continue
        v = _vander1d(t[:, j], int(degs.max()))
        out *= v[:, degs]
    return out


def basis_eval(space: InputSpace, index: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Evaluate one multivariate basis polynomial; scalar in, scalar out."""
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    vals = basis_matrix(space, np.atleast_2d(index), np.atleast_2d(pts))[:, 0]
    return float(vals[0]) if scalar else vals


@dataclass(frozen=True)
class PcSurrogate:
    """Polynomial-chaos surrogate with exact first two moments.

    ``indices`` holds one exponent row per basis term with the constant
    term first; ``coeffs`` is aligned with it.
    """

    space: InputSpace
    indices: np.ndarray
    coeffs: np.ndarray
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        idx = np.atleast_2d(np.asarray(self.indices, dtype=np.int64)).copy()
        coef = np.asarray(self.coeffs, dtype=float).copy()
        if idx.shape[0] != coef.shape[0]:
            raise ValueError("indices and coefficients misaligned")
        if idx.shape[1] != self.space.dims:
            raise ValueError("index dimension does not match input space")
        if len({tuple(r) for r in idx}) != idx.shape[0]:
            raise ValueError("duplicate multi-indices")
        if np.any(idx[0] != 0):
            raise ValueError("constant term must be present first")
        idx.flags.writeable = False
        coef.flags.writeable = False
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "coeffs", coef)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        vals = basis_matrix(self.space, self.indices, np.atleast_2d(pts)) @ self.coeffs
        return float(vals[0]) if scalar else vals

    @property
    def n_terms(self) -> int:
        return self.indices.shape[0]

    @property
    def mean(self) -> float:
        return float(self.coeffs[0])

    @property
    def variance(self) -> float:
        return float(np.sum(self.coeffs[1:] ** 2))

    def as_dict(self) -> dict:
        return {
            "space": self.space.as_dict(),
            "indices": self.indices.tolist(),
            "coeffs": [float(c) for c in self.coeffs],
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PcSurrogate":
        return cls(
            space=InputSpace.from_dict(data["space"]),
            indices=np.array(data["indices"], dtype=np.int64),
            coeffs=np.array(data["coeffs"], dtype=float),
            provenance=data.get("provenance", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict()) + "\n")

    @classmethod
    def load(cls, path) -> "PcSurrogate":
        return cls.from_dict(json.loads(Path(path).read_text()))


def pc_moments(surrogate: PcSurrogate) -> tuple[float, float]:
    """Exact (mean, variance): constant coefficient and sum of squared rest."""
    return surrogate.mean, surrogate.variance


def pc_covariance(s1: PcSurrogate, s2: PcSurrogate) -> float:
    """Exact covariance of two surrogate outputs over the same input space.

    Matching non-constant basis terms contribute the product of their
    coefficients; everything else is orthogonal.
    """
    if s1.space != s2.space:
        raise ValueError("surrogates live on different input spaces")
    lookup = {tuple(r): c for r, c in zip(s1.indices[1:], s1.coeffs[1:])}
    total = 0.0
    for r, c in zip(s2.indices[1:], s2.coeffs[1:]):
        match = lookup.get(tuple(r))
        if match is not None:
            total += match * c
    return float(total)


def combine_pc(s1: PcSurrogate, s2: PcSurrogate, w1: float = 1.0, w2: float = 1.0) -> PcSurrogate:
    """Linear combination ``w1*s1 + w2*s2`` on the union of the two bases."""
    if s1.space != s2.space:
        raise ValueError("surrogates live on different input spaces")
    acc: dict[tuple, float] = {}
    for r, c in zip(s1.indices, s1.coeffs):
        acc[tuple(r)] = acc.get(tuple(r), 0.0) + w1 * c
    for r, c in zip(s2.indices, s2.coeffs):
        acc[tuple(r)] = acc.get(tuple(r), 0.0) + w2 * c
    const = tuple([0] * s1.space.dims)
    acc.setdefault(const, 0.0)
    rows = np.array(sorted(acc, key=lambda r: (sum(r), tuple(-e for e in r))), dtype=np.int64)
    coeffs = np.array([acc[tuple(r)] for r in rows])
    return PcSurrogate(space=s1.space, indices=rows, coeffs=coeffs,
                       provenance={"combined": [s1.provenance, s2.provenance], "weights": [w1, w2]})


def ols_fit(doe: Doe, responses: np.ndarray, indices: np.ndarray) -> PcSurrogate:
    """Least-squares fit of the given basis terms.

    Requires more points than terms and a full-rank design; a rank-deficient
    design raises :class:`SingularDesignError` with the condition number.
    """
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    order = _sorted_graded(idx)
    idx = idx[order]
    if np.any(idx[0] != 0):
        raise ValueError("the basis must contain the constant term")
    y = np.asarray(responses, dtype=float)
    n, p = doe.n, idx.shape[0]
    if y.shape != (n,):
        raise ValueError("responses misaligned with design")
    if n <= p:
        raise SingularDesignError(f"need more than {p} points, got {n}")
    a = basis_matrix(doe.space, idx, doe.points)
    cond = float(np.linalg.cond(a))
    if np.linalg.matrix_rank(a) < p:
        raise SingularDesignError(f"rank-deficient design (condition {cond:.3e})", condition=cond)
    coeffs, *_ = np.linalg.lstsq(a, y, rcond=None)
    prov = {"n": n, "doe_kind": doe.kind, "doe_seed": doe.seed, "condition": cond}
    return PcSurrogate(space=doe.space, indices=idx, coeffs=coeffs, provenance=prov)


def _qr_append(q, r, k, col, reorth=True):
    """Append ``col`` to the thin QR held in q[:, :k], r[:k, :k].

    Returns the new diagonal entry, or None if ``col`` is numerically
    dependent on the current columns.
    """
    proj = q[:, :k].T @ col if k else np.zeros(0)
    w = col - (q[:, :k] @ proj if k else 0.0)
    if reorth and k:
        corr = q[:, :k].T @ w
        w -= q[:, :k] @ corr
        proj = proj + corr
    nrm = float(np.linalg.norm(w))
    if nrm <= 1e-10 * max(float(np.linalg.norm(col)), 1e-300):
        return None
    q[:, k] = w / nrm
    r[:k, k] = proj
    r[k, k] = nrm
    return nrm


def lars_select(doe: Doe, responses: np.ndarray, candidates: np.ndarray,
                max_steps: int | None = None) -> np.ndarray:
    """Least-angle regression entry order over candidate basis terms.

    Candidates are standardized to zero mean and unit standard deviation
    over the design before the path is traced; the response is centered.
    Returns positions into ``candidates`` in entry order, truncated at
    ``min(n - 1, len(candidates))`` steps.
    """
    cand = np.atleast_2d(np.asarray(candidates, dtype=np.int64))
    x = basis_matrix(doe.space, cand, doe.points)
    y = np.asarray(responses, dtype=float)
    return _lars_order(x, y, max_steps=max_steps)


def _lars_order(x: np.ndarray, y: np.ndarray, max_steps: int | None = None) -> np.ndarray:
    n, p = x.shape
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    usable = np.flatnonzero(sd > 1e-13 * (np.abs(mu) + 1.0))
    if usable.size == 0:
        return np.zeros(0, dtype=np.int64)
    xs = (x[:, usable] - mu[usable]) / sd[usable]
    r = y - y.mean()
    y_scale = float(np.linalg.norm(r))
    if y_scale == 0.0:
        return np.zeros(0, dtype=np.int64)

    cap = min(n - 1, usable.size)
    if max_steps is not None:
        cap = min(cap, max_steps)
    q = np.empty((n, cap))
    rmat = np.zeros((cap, cap))
    active: list[int] = []
    in_active = np.zeros(usable.size, dtype=bool)

    for _ in range(cap):
        c = xs.T @ r
        c[in_active] = 0.0
        j = int(np.argmax(np.abs(c)))
        c_max = abs(c[j])
        if c_max <= 1e-12 * y_scale:
            break
        if _qr_append(q, rmat, len(active), xs[:, j].copy()) is None:
            in_active[j] = True  # dependent column, cannot enter
            continue
        active.append(j)
        in_active[j] = True
        k = len(active)
        corr_active = xs[:, active].T @ r
        signs = np.sign(corr_active)
        signs[signs == 0] = 1.0
        # equiangular direction: solve (Xa' Xa) w = signs via the QR factor
        tmp = np.linalg.solve(rmat[:k, :k].T, signs)
        w = np.linalg.solve(rmat[:k, :k], tmp)
        denom = float(signs @ w)
        if denom <= 0:
            break
        a_norm = 1.0 / math.sqrt(denom)
        u = xs[:, active] @ (a_norm * w)
        c_cur = float(np.abs(corr_active).max())
        gamma_full = c_cur / a_norm
        if k < usable.size:
            a = xs.T @ u
            inactive = ~in_active
            cands = []
            with np.errstate(divide="ignore", invalid="ignore"):
                for num, den in ((c_cur - c[inactive], a_norm - a[inactive]),
                                 (c_cur + c[inactive], a_norm + a[inactive])):
                    g = num / den
                    g = g[(g > 1e-14) & np.isfinite(g)]
                    if g.size:
                        cands.append(g.min())
            gamma = min(cands) if cands else gamma_full
            gamma = min(gamma, gamma_full)
        else:
            gamma = gamma_full
        r = r - gamma * u
    return usable[np.array(active, dtype=np.int64)] if active else np.zeros(0, dtype=np.int64)


def _corrected_loo(resid, hat, n, p_active, rinv_fro_sq, y_var):
    """Leave-one-out error with the finite-sample correction factor.

    The factor grows with the trace of the inverse Gram matrix of the
    active design (about p/n for near-orthonormal regressors), penalizing
    term counts that approach the sample size.
    """
    denom = 1.0 - hat
    if np.any(denom < 1e-8) or n <= p_active:
        return np.inf
    loo = float(np.mean((resid / denom) ** 2))
    factor = (n / (n - p_active)) * (1.0 + rinv_fro_sq)
    return loo * factor / y_var


def _score_prefixes(x_all, rows_in_order, y, y_var, n):
    """Corrected-LOO scores of nested least-squares prefixes.

    ``rows_in_order`` are column positions of ``x_all`` (without the
    constant); the constant is always the first regressor. Returns the
    best (score, prefix length).
    """
    cap = min(len(rows_in_order) + 1, n)
    q = np.empty((n, cap))
    rmat = np.zeros((cap, cap))
    rinv = np.zeros_like(rmat)
    _qr_append(q, rmat, 0, np.ones(n))
    rinv[0, 0] = 1.0 / rmat[0, 0]
    rinv_fro_sq = rinv[0, 0] ** 2
    hat = q[:, 0] ** 2
    resid = y - q[:, 0] * (q[:, 0] @ y)
    best_score = _corrected_loo(resid, hat, n, 1, rinv_fro_sq, y_var)
    best_k = 0
    k = 0
    taken = []
    for pos in rows_in_order:
        if k + 1 >= min(cap, n - 1):
            break
        if _qr_append(q, rmat, k + 1, x_all[:, pos].copy()) is None:
            continue
        k += 1
        # grow the inverse triangular factor and its Frobenius norm
        rho = rinv[:k, :k] @ rmat[:k, k]
        rinv[:k, k] = -rho / rmat[k, k]
        rinv[k, k] = 1.0 / rmat[k, k]
        rinv_fro_sq += float(rho @ rho + 1.0) / rmat[k, k] ** 2
        hat = hat + q[:, k] ** 2
        resid = resid - q[:, k] * (q[:, k] @ y)
        taken.append(pos)
        score = _corrected_loo(resid, hat, n, k + 1, rinv_fro_sq, y_var)
        if score < best_score:
            best_score = score
            best_k = k
    return best_score, taken[:best_k]


def adaptive_fit(doe: Doe, responses: np.ndarray, p_max: int,
                 max_steps: int | None = None,
                 stability_rounds: int = 0,
                 stability_fraction: float = 0.75,
                 stability_path: int = 20,
                 stability_seed: int = 0) -> PcSurrogate:
    """Basis-adaptive sparse fit.

    For each total degree up to ``p_max``, traces the LARS entry order over
    the candidate basis, refits every path prefix by least squares and
    scores it with the corrected leave-one-out error; the best prefix over
    all degrees is refit and returned. Deterministic given its inputs.

    With ``stability_rounds > 0`` the per-degree candidate order is instead
    the entry frequency over that many subsampled LARS paths (fraction
    ``stability_fraction`` of the points, paths truncated at
    ``stability_path`` entries). Selection by entry frequency is far less
    sensitive to individual extreme responses, which matters for small
    designs of heavy-tailed outputs; the prefix scoring and final
    least-squares refit are unchanged.
    """
    y = np.asarray(responses, dtype=float)
    n, d = doe.n, doe.d
    if n < d + 2:
        raise SingularDesignError(f"need at least {d + 2} points, got {n}")
    if p_max < 1:
        raise ValueError("p_max must be at least 1")
    if y.shape != (n,):
        raise ValueError("responses misaligned with design")
    y_var = float(np.var(y))
    if y_var == 0.0:
        y_var = 1.0

    all_indices = total_degree_set(d, p_max)
    x_all = basis_matrix(doe.space, all_indices, doe.points)
    grades = all_indices.sum(axis=1)

    best = None  # (score, p, selected x_all rows)
    for p in range(1, p_max + 1):
        n_terms = int(np.searchsorted(grades, p + 1))
        if stability_rounds > 0:
            rng = np.random.default_rng(stability_seed)
            counts = np.zeros(n_terms - 1)
            m = max(d + 2, int(stability_fraction * n))
            for _ in range(stability_rounds):
                sub = rng.choice(n, m, replace=False)
                path = _lars_order(x_all[np.ix_(sub, np.arange(1, n_terms))], y[sub],
                                   max_steps=stability_path)
                counts[path] += 1
            ordered = [int(i) + 1 for i in np.argsort(-counts, kind="stable") if counts[i] > 0]
        else:
            order = _lars_order(x_all[:, 1:n_terms], y, max_steps=max_steps)
            ordered = [int(i) + 1 for i in order]
        score, taken = _score_prefixes(x_all, ordered, y, y_var, n)
        if best is None or score < best[0]:
            best = (score, p, taken)

    score, p_star, selected = best
    rows = np.concatenate([[0], np.sort(np.array(selected, dtype=np.int64))]) if selected else np.array([0])
    design = x_all[:, rows]
    coeffs, *_ = np.linalg.lstsq(design, y, rcond=None)
    prov = {
        "n": n,
        "doe_kind": doe.kind,
        "doe_seed": doe.seed,
        "degree": int(p_star),
        "terms": int(rows.size),
        "loo": float(score),
    }
    return PcSurrogate(space=doe.space, indices=all_indices[rows], coeffs=coeffs, provenance=prov)


def q2(model: Callable, truth: Callable, test_doe: Doe) -> float:
    """Predictive quality on a test design: one minus MSE over truth variance."""
    if test_doe.n < 2:
        raise ValueError("test design needs at least 2 points")
    f = np.asarray(truth(test_doe.points), dtype=float)
    g = np.asarray(model(test_doe.points), dtype=float)
    var = float(np.var(f, ddof=1))
    if var == 0.0:
        raise ZeroVarianceError("truth has zero variance on the test design")
    return 1.0 - float(np.mean((g - f) ** 2)) / var


@dataclass(frozen=True)
class GalerkinTensor:
    """Expectations of products of four basis polynomials.

    Entries are stored per sorted degree tuple and dimension-factored, so
    the tensor is symmetric under index permutations by construction.
    """

    indices: np.ndarray
    quad_order: int
    _factors: dict
    _positions: dict

    def position(self, beta) -> int:
        key = tuple(int(b) for b in np.asarray(beta).ravel())
        if key not in self._positions:
            raise MissingTensorEntryError(f"index {key} not covered by the tensor")
        return self._positions[key]

    def covers(self, indices) -> bool:
        rows = np.atleast_2d(np.asarray(indices, dtype=np.int64))
        return all(tuple(r) in self._positions for r in rows)

    def value(self, b1, b2, b3, b4) -> float:
        """Entry for four exponent rows (each of length d)."""
        rows = [np.asarray(b, dtype=np.int64).ravel() for b in (b1, b2, b3, b4)]
        for r in rows:
            self.position(r)  # coverage check
        out = 1.0
        for j in range(rows[0].size):
            key = tuple(sorted((int(rows[0][j]), int(rows[1][j]), int(rows[2][j]), int(rows[3][j]))))
            out *= self._factors[key]
        return out

    def entry(self, i: int, j: int, q: int, r: int) -> float:
        """Entry by positions into the covered index set."""
        rows = self.indices
        return self.value(rows[i], rows[j], rows[q], rows[r])

    def dense(self) -> np.ndarray:
        """Full (P, P, P, P) array of entries (cached)."""
        cached = getattr(self, "_dense_cache", None)
        if cached is not None:
            return cached
        p = self.indices.shape[0]
        out = np.empty((p, p, p, p))
        for i in range(p):
            for j in range(i, p):
                for q in range(j, p):
                    for r in range(q, p):
                        val = self.entry(i, j, q, r)
                        for perm in _PERMS4:
                            t = (i, j, q, r)
                            out[t[perm[0]], t[perm[1]], t[perm[2]], t[perm[3]]] = val
        object.__setattr__(self, "_dense_cache", out)
        return out

    def align(self, surrogate: PcSurrogate) -> np.ndarray:
        """Surrogate coefficients as a vector over the covered set, constant zeroed."""
        vec = np.zeros(self.indices.shape[0])
        for row, coef in zip(surrogate.indices, surrogate.coeffs):
            pos = self.position(row)
            vec[pos] = coef
        vec[self.position(np.zeros(self.indices.shape[1], dtype=np.int64))] = 0.0
        return vec


_PERMS4 = [
    (0, 1, 2, 3), (0, 1, 3, 2), (0, 2, 1, 3), (0, 2, 3, 1), (0, 3, 1, 2), (0, 3, 2, 1),
    (1, 0, 2, 3), (1, 0, 3, 2), (1, 2, 0, 3), (1, 2, 3, 0), (1, 3, 0, 2), (1, 3, 2, 0),
    (2, 0, 1, 3), (2, 0, 3, 1), (2, 1, 0, 3), (2, 1, 3, 0), (2, 3, 0, 1), (2, 3, 1, 0),
    (3, 0, 1, 2), (3, 0, 2, 1), (3, 1, 0, 2), (3, 1, 2, 0), (3, 2, 0, 1), (3, 2, 1, 0),
]


def galerkin_tensor(indices: np.ndarray, quad_order: int) -> GalerkinTensor:
    """Product tensor of four orthonormal basis polynomials over an index set.

    ``quad_order`` Gauss-Legendre nodes per dimension must satisfy
    ``quad_order >= 2 * max_total_degree + 1`` so quadruple products are
    integrated exactly.
    """
    idx = np.atleast_2d(np.asarray(indices, dtype=np.int64))
    max_total = int(idx.sum(axis=1).max())
    if quad_order < 2 * max_total + 1:
        raise InsufficientQuadratureError(
            f"need at least {2 * max_total + 1} nodes per dimension, got {quad_order}"
        )
    if not np.any(np.all(idx == 0, axis=1)):
        idx = np.vstack([np.zeros((1, idx.shape[1]), dtype=np.int64), idx])
    nodes, weights = np.polynomial.legendre.leggauss(quad_order)
    weights = weights / 2.0  # uniform density on [-1, 1]
    max_deg = int(idx.max())
    v = _vander1d(nodes, max_deg)
    factors = {}
    for a in range(max_deg + 1):
        for b in range(a, max_deg + 1):
            for c in range(b, max_deg + 1):
                for e in range(c, max_deg + 1):
                    prod = (v[:, a] * v[:, b]) * (v[:, c] * v[:, e])
                    factors[(a, b, c, e)] = float(prod @ weights)
    positions = {tuple(r): i for i, r in enumerate(idx)}
    return GalerkinTensor(indices=idx, quad_order=quad_order, _factors=factors, _positions=positions)


def quartic_covariance(c1, c2, c3, c4, tensor: GalerkinTensor) -> float:
    """Covariance of two products of centered surrogate outputs.

    Arguments are coefficient vectors aligned to the tensor's index set
    (see :meth:`GalerkinTensor.align`); computes the covariance between
    the product of the first pair and the product of the second.
    """
    phi = tensor.dense()
    t1 = np.einsum("i,j,ijqr->qr", c1, c2, phi)
    main = float(np.einsum("qr,q,r->", t1, c3, c4))
    return main - float(c1 @ c2) * float(c3 @ c4)


def centered_square_covariance(s1: PcSurrogate, s2: PcSurrogate, tensor: GalerkinTensor) -> float:
    """Exact covariance of the squared centered outputs of two surrogates."""
    if s1.space != s2.space:
        raise ValueError("surrogates live on different input spaces")
    a = tensor.align(s1)
    b = tensor.align(s2)
    return quartic_covariance(a, a, b, b, tensor)
