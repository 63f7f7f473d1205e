"""Control-variate corrections with exactly optimal parameters.

For the expectation statistic the optimal coefficient vector solves the
control covariance system against the target/control covariances. For the
variance statistic the estimator covariances carry additional
finite-sample terms; with controls whose means are known exactly (the
surrogate case) the centered-square form applies. Singular control
covariances are handled by a pivoted Cholesky factorization that drops
redundant controls.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import lapack

from .errors import InsufficientSamplesError, SingularCovarianceError

__all__ = [
    "CvProblem",
    "CvSolution",
    "cv_solve",
    "cv_estimate",
    "solve_alpha",
    "mc_mean",
    "mc_var",
    "centered_moment_products",
]


def mc_mean(samples: np.ndarray) -> float:
    """Plain sample mean."""
    y = np.asarray(samples, dtype=float)
    if y.size < 1:
        raise InsufficientSamplesError("mean needs at least one sample")
    return float(y.mean())


def mc_var(samples: np.ndarray) -> float:
    """Unbiased sample variance."""
    y = np.asarray(samples, dtype=float)
    if y.size < 2:
        raise InsufficientSamplesError("variance needs at least two samples")
    return float(y.var(ddof=1))


def solve_alpha(
    sigma: np.ndarray,
    c: np.ndarray,
    *,
    drop_tol: float = 1e-10,
    on_singular: str = "drop",
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Solve ``sigma @ alpha = c`` for a PSD control covariance.

    Uses a pivoted Cholesky factorization; controls whose pivot falls below
    ``drop_tol`` times the largest diagonal are redundant (affine
    combinations of the others) and get a zero coefficient. With
    ``on_singular="raise"`` a singular system raises
    :class:`SingularCovarianceError` naming the dropped controls.

    Returns ``(alpha, kept, dropped)``.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    c = np.asarray(c, dtype=float).ravel()
    m = sigma.shape[0]
    if sigma.shape != (m, m) or c.shape != (m,):
        raise ValueError("covariance system shapes mismatch")
    tol = drop_tol * max(float(sigma.diagonal().max()), 0.0)
    factor, piv, rank, info = lapack.dpstrf(sigma, tol=tol, lower=1)
    if info < 0:
        raise ValueError(f"pivoted Cholesky failed (info={info})")
    piv = piv - 1  # LAPACK pivots are one-based
    kept = np.sort(piv[:rank])
    dropped = np.sort(piv[rank:])
    if dropped.size and on_singular == "raise":
        raise SingularCovarianceError(
            f"singular control covariance; redundant controls {dropped.tolist()}",
            dropped=dropped.tolist(),
        )
    alpha = np.zeros(m)
    if kept.size:
        alpha[kept] = np.linalg.solve(sigma[np.ix_(kept, kept)], c[kept])
    return alpha, kept, dropped


@dataclass(frozen=True)
class CvSolution:
    """Optimal control-variate parameters and diagnostics.

    ``base_variance`` is the per-sample variance of the uncorrected
    estimator target (so the uncorrected estimator variance is
    ``base_variance / n``); ``reduced_variance`` is its control-variate
    counterpart ``(1 - r2) * base_variance``.
    """

    sigma: np.ndarray
    c: np.ndarray
    alpha: np.ndarray
    r2: float
    base_variance: float
    reduced_variance: float
    kept: np.ndarray
    dropped: np.ndarray


def _solution_from_parts(sigma, c, base_variance, drop_tol, on_singular) -> CvSolution:
    alpha, kept, dropped = solve_alpha(sigma, c, drop_tol=drop_tol, on_singular=on_singular)
    gain = float(c @ alpha)
    r2 = 0.0 if base_variance <= 0 else min(max(gain / base_variance, 0.0), 1.0)
    return CvSolution(
        sigma=sigma,
        c=c,
        alpha=alpha,
        r2=r2,
        base_variance=float(base_variance),
        reduced_variance=float((1.0 - r2) * base_variance),
        kept=kept,
        dropped=dropped,
    )


@dataclass
class CvProblem:
    """Single-sample control-variate problem.

    All columns are evaluated on one common input sample. Exact control
    statistics come from the surrogates: means always, and variances when
    the statistic of interest is the variance. ``exact_sigma`` optionally
    supplies the exact control covariance (of the controls themselves for
    the expectation, of their centered squares for the variance with
    known means); otherwise it is estimated from the same sample.
    """

    statistic: str
    y: np.ndarray
    controls: np.ndarray
    control_means: np.ndarray
    control_variances: np.ndarray | None = None
    exact_sigma: np.ndarray | None = None
    known_mean: bool = True

    def __post_init__(self):
        if self.statistic not in ("expectation", "variance"):
            raise ValueError(f"unknown statistic {self.statistic!r}")
        self.y = np.asarray(self.y, dtype=float)
        self.controls = np.atleast_2d(np.asarray(self.controls, dtype=float))
        if self.controls.shape[0] != self.y.shape[0]:
            raise ValueError("controls misaligned with target samples")
        self.control_means = np.asarray(self.control_means, dtype=float).ravel()
        if self.control_means.shape[0] != self.controls.shape[1]:
            raise ValueError("one exact mean per control required")
        if self.statistic == "variance":
            if self.control_variances is None:
                raise ValueError("variance statistic requires exact control variances")
            self.control_variances = np.asarray(self.control_variances, dtype=float).ravel()
        min_n = 2 if self.statistic == "expectation" else 3
        if self.y.shape[0] < min_n:
            raise InsufficientSamplesError(f"need at least {min_n} samples")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def n_controls(self) -> int:
        return self.controls.shape[1]


def _expectation_parts(problem: CvProblem):
    z = problem.controls
    y = problem.y
    c = _cross_cov(y, z)
    sigma = problem.exact_sigma if problem.exact_sigma is not None else _cov(z)
    base = float(y.var(ddof=1))
    return sigma, c, base


def _variance_parts(problem: CvProblem):
    n = problem.n
    y = problem.y
    ybar2 = (y - y.mean()) ** 2
    base = float(ybar2.var(ddof=1) + 2.0 / (n - 1) * y.var(ddof=1) ** 2)
    if problem.known_mean:
        d = (problem.controls - problem.control_means) ** 2
        sigma = problem.exact_sigma if problem.exact_sigma is not None else _cov(d)
        c = _cross_cov(ybar2, d)
    else:
        zbar2 = (problem.controls - problem.controls.mean(axis=0)) ** 2
        extra = 2.0 / (n - 1)
        sigma_core = problem.exact_sigma if problem.exact_sigma is not None else _cov(zbar2)
        sigma = sigma_core + extra * _cov(problem.controls) ** 2
        c = _cross_cov(ybar2, zbar2) + extra * _cross_cov(y, problem.controls) ** 2
    return sigma, c, base


def _cov(columns: np.ndarray) -> np.ndarray:
    return np.atleast_2d(np.cov(columns, rowvar=False, ddof=1))


def _cross_cov(target: np.ndarray, columns: np.ndarray) -> np.ndarray:
    t = target - target.mean()
    z = columns - columns.mean(axis=0)
    return t @ z / (t.shape[0] - 1)


def cv_solve(problem: CvProblem, *, drop_tol: float = 1e-10, on_singular: str = "drop") -> CvSolution:
    """Optimal coefficients and variance-reduction factor for a CV problem."""
    if problem.statistic == "expectation":
        sigma, c, base = _expectation_parts(problem)
    else:
        sigma, c, base = _variance_parts(problem)
    return _solution_from_parts(sigma, c, base, drop_tol, on_singular)


def cv_estimate(problem: CvProblem, solution: CvSolution | np.ndarray) -> float:
    """Control-variate estimate of the problem's statistic.

    Accepts a solved :class:`CvSolution` or a raw coefficient vector (zero
    coefficients reproduce the plain Monte Carlo estimate).
    """
    alpha = solution.alpha if isinstance(solution, CvSolution) else np.asarray(solution, dtype=float)
    if problem.statistic == "expectation":
        u_hat = problem.controls.mean(axis=0)
        return float(problem.y.mean() - alpha @ (u_hat - problem.control_means))
    t_hat = problem.y.var(ddof=1)
    if problem.known_mean:
        u_hat = ((problem.controls - problem.control_means) ** 2).mean(axis=0)
    else:
        u_hat = problem.controls.var(axis=0, ddof=1)
    return float(t_hat - alpha @ (u_hat - problem.control_variances))


def centered_moment_products(
    y_values: np.ndarray,
    z_values: np.ndarray,
    probabilities: np.ndarray,
    n: int,
) -> tuple[float, float, float]:
    """Moment products of sample averages for a joint discrete distribution.

    Given atoms ``(y_values[i], z_values[i])`` with the given
    probabilities and a sample size ``n``, returns the expectations of the
    products of empirical second moments and squared empirical means of
    the centered variables:

    * first: mean of centered squares of y times that of z,
    * second: squared empirical mean of y times that of z,
    * third: mean of centered squares of y times squared empirical mean of z.
    """
    y = np.asarray(y_values, dtype=float)
    z = np.asarray(z_values, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if not (y.shape == z.shape == p.shape):
        raise ValueError("atoms misaligned")
    if abs(p.sum() - 1.0) > 1e-12 or np.any(p < 0):
        raise ValueError("probabilities must be nonnegative and sum to one")
    if n < 2:
        raise ValueError("sample size must be at least 2")
    yc = y - p @ y
    zc = z - p @ z
    var_y = p @ yc**2
    var_z = p @ zc**2
    cov_sq = p @ (yc**2 * zc**2) - var_y * var_z
    cov_yz = p @ (yc * zc)
    a_n = cov_sq / n + var_y * var_z
    b_n = a_n / n**2 + 2.0 * (n - 1) / n**3 * cov_yz**2
    c_n = a_n / n
    return float(a_n), float(b_n), float(c_n)
