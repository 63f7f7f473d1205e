"""Monte Carlo and multilevel estimator families with surrogate controls.

Per-level correction terms are estimated on mutually independent input
samples (one stream per level) and may each be corrected by control
variates built from surrogate outputs, whose means (and variances, for the
variance statistic) are known exactly. Sample-size allocation across
levels follows the cost-weighted square-root rule, either in closed form
from known variance proxies or adaptively by the sequential driver.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cv import solve_alpha
from .errors import BudgetError, InsufficientSamplesError
from .heatbench import LevelHierarchy
from .pce import PcSurrogate, combine_pc, pc_covariance
from .sampling import RngStream

__all__ = [
    "METHODS",
    "SurrogateSuite",
    "LevelReport",
    "TraceRow",
    "RunResult",
    "AllocationResult",
    "optimal_allocation",
    "mc_estimate",
    "single_level_cv_estimate",
    "mlcv_estimate",
    "mlmc_estimate",
    "mlmc_cv_estimate",
    "mlmc_mlcv_estimate",
    "mlmc_family_estimate",
    "adaptive_run",
    "run_method",
    "replicate_rmse",
    "method_controls",
]

METHODS = (
    "MC",
    "CV",
    "MLMC",
    "MLCV",
    "MLMC-CV",
    "MLMC-MLCV",
    "MLMC-CV[0]",
    "MLMC-MLCV[0]",
)

SINGLE_LEVEL_METHODS = ("MC", "CV", "MLCV")


@dataclass(frozen=True)
class SurrogateSuite:
    """Surrogates of the level simulators and of their successive differences.

    ``aux_models[l]`` approximates level ``l`` as the level ``l+1`` model
    minus the difference model, which keeps control corrections aligned
    with the multilevel corrections.
    """

    level_models: tuple
    diff_models: tuple = ()
    aux_models: tuple = ()
    taylor_models: tuple = ()

    @classmethod
    def from_pc(cls, level_models: Sequence[PcSurrogate], diff_models: Sequence[PcSurrogate] = (),
                taylor_models: Sequence = ()) -> "SurrogateSuite":
        aux = tuple(
            combine_pc(g, h, 1.0, -1.0) for g, h in zip(level_models[1:], diff_models)
        )
        return cls(
            level_models=tuple(level_models),
            diff_models=tuple(diff_models),
            aux_models=aux,
            taylor_models=tuple(taylor_models),
        )

    @property
    def n_levels(self) -> int:
        return len(self.level_models)


@dataclass(frozen=True)
class LevelReport:
    level: int
    n: int
    t_hat: float
    correction: float
    v_cv: float
    r2: float
    alpha: tuple
    dropped: tuple = ()


@dataclass(frozen=True)
class TraceRow:
    iteration: int
    n_per_level: tuple
    consumed: float
    v_cv: tuple
    chosen_level: int
    delta_next: int


@dataclass(frozen=True)
class RunResult:
    method: str
    statistic: str
    estimate: float
    budget: float | None
    consumed: float
    levels: tuple[LevelReport, ...]
    trace: tuple[TraceRow, ...] = ()

    @property
    def n_per_level(self) -> tuple:
        return tuple(rep.n for rep in self.levels)


@dataclass(frozen=True)
class AllocationResult:
    """Closed-form optimal sample sizes under a cost constraint."""

    n_star: np.ndarray
    shares: np.ndarray
    s_partial_sq: np.ndarray
    s_total_sq: float


def optimal_allocation(
    v_cv: np.ndarray,
    correction_costs: np.ndarray,
    budget: float,
    n_init: int = 2,
) -> AllocationResult:
    """Cost-optimal (continuous) sample sizes for given variance proxies.

    Sizes scale with the square root of variance over cost; the squared
    cost-weighted sum ``s_total_sq`` divided by the budget bounds the
    optimally allocated estimator variance. Levels with zero variance
    proxy receive ``n_init`` samples (the rule degenerates there).
    """
    v = np.asarray(v_cv, dtype=float)
    costs = np.asarray(correction_costs, dtype=float)
    if v.shape != costs.shape:
        raise ValueError("variance proxies and costs misaligned")
    if np.any(v < 0) or np.any(costs <= 0):
        raise ValueError("variances must be nonnegative and costs positive")
    if budget <= 0:
        raise BudgetError("budget must be positive")
    zero = v == 0.0
    n_star = np.empty_like(v)
    n_star[zero] = n_init
    remaining = budget - float(costs[zero] @ n_star[zero]) if zero.any() else budget
    if remaining <= 0:
        raise BudgetError("budget consumed by zero-variance levels alone")
    terms = np.sqrt(costs * v)
    s_total = float(terms.sum())
    if s_total > 0:
        n_star[~zero] = remaining / s_total * np.sqrt(v[~zero] / costs[~zero])
    shares = n_star * costs / budget
    s_partial = np.cumsum(terms) ** 2
    return AllocationResult(
        n_star=n_star, shares=shares, s_partial_sq=s_partial, s_total_sq=s_total**2
    )


@dataclass(frozen=True)
class LevelControls:
    """Controls attached to one correction level.

    For the expectation statistic each model's output is a control with
    its exact mean. For the variance statistic the control is the centered
    square of each model's output, minus the centered square of its paired
    auxiliary when present, with the exact variance (difference) as the
    known statistic.
    """

    models: tuple = ()
    aux: tuple = ()

    def __post_init__(self):
        if not self.aux:
            object.__setattr__(self, "aux", (None,) * len(self.models))
        if len(self.aux) != len(self.models):
            raise ValueError("one auxiliary slot per control model required")

    def __len__(self):
        return len(self.models)

    def columns(self, points: np.ndarray, statistic: str) -> np.ndarray | None:
        if not self.models:
            return None
        if statistic == "expectation":
            return np.column_stack([np.asarray(m(points), dtype=float) for m in self.models])
        cols = []
        for m, a in zip(self.models, self.aux):
            v = (np.asarray(m(points), dtype=float) - m.mean) ** 2
            if a is not None:
                v = v - (np.asarray(a(points), dtype=float) - a.mean) ** 2
            cols.append(v)
        return np.column_stack(cols)

    def tau(self, statistic: str) -> np.ndarray | None:
        if not self.models:
            return None
        if statistic == "expectation":
            return np.array([m.mean for m in self.models])
        return np.array(
            [m.variance - (a.variance if a is not None else 0.0) for m, a in zip(self.models, self.aux)]
        )

    def exact_sigma(self, statistic: str) -> np.ndarray | None:
        """Exact control covariance, available for expectation controls
        backed by polynomial-chaos surrogates."""
        if statistic != "expectation" or not self.models:
            return None
        if not all(isinstance(m, PcSurrogate) for m in self.models):
            return None
        m = len(self.models)
        sigma = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                sigma[i, j] = sigma[j, i] = pc_covariance(self.models[i], self.models[j])
        return sigma


def method_controls(method: str, suite: SurrogateSuite | None, n_levels: int,
                    statistic: str = "expectation") -> list[LevelControls]:
    """Per-level control sets for a multilevel method tag.

    Expectation corrections above the coarsest level are controlled by
    difference surrogates; variance corrections pair each level surrogate
    with its auxiliary so the control tracks the correction.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r} (expected one of {METHODS})")
    if method in SINGLE_LEVEL_METHODS:
        raise ValueError(f"{method} is a single-level method")
    if method == "MLMC":
        return [LevelControls() for _ in range(n_levels)]
    if suite is None or suite.n_levels < n_levels:
        raise ValueError(f"method {method} requires surrogates for all {n_levels} levels")
    g = suite.level_models
    h = suite.diff_models
    gt = suite.aux_models
    if method != "MLMC-CV[0]" and (len(h) < n_levels - 1 or len(gt) < n_levels - 1):
        raise ValueError(f"method {method} requires difference surrogates")

    def correction_controls(members: list[int]) -> LevelControls:
        """Controls for levels above the coarsest, one entry per member level."""
        if statistic == "expectation":
            return LevelControls(models=tuple(h[m - 1] for m in members))
        return LevelControls(
            models=tuple(g[m] for m in members),
            aux=tuple(gt[m - 1] for m in members),
        )

    out = []
    for level in range(n_levels):
        if method == "MLMC-CV":
            out.append(LevelControls(models=(g[0],)) if level == 0
                       else correction_controls([level]))
        elif method == "MLMC-CV[0]":
            out.append(LevelControls(models=(g[0],)) if level == 0 else LevelControls())
        elif method == "MLMC-MLCV":
            out.append(LevelControls(models=tuple(g[:n_levels])) if level == 0
                       else correction_controls(list(range(1, n_levels))))
        elif method == "MLMC-MLCV[0]":
            out.append(LevelControls(models=tuple(g[:2])) if level == 0
                       else correction_controls([1]))
    return out


@dataclass
class _TermStats:
    n: int
    t_hat: float
    u_hat: np.ndarray | None
    sigma: np.ndarray | None
    sigma_sample: np.ndarray | None
    c: np.ndarray | None
    base: float


def _expectation_term_stats(t_vals, cols, exact_sigma) -> _TermStats:
    n = t_vals.shape[0]
    t_hat = float(t_vals.mean())
    base = float(t_vals.var(ddof=1)) if n >= 2 else 0.0
    if cols is None or n < 2:
        return _TermStats(n, t_hat, None, None, None, None, base)
    u_hat = cols.mean(axis=0)
    sigma_sample = np.atleast_2d(np.cov(cols, rowvar=False, ddof=1))
    sigma = exact_sigma if exact_sigma is not None else sigma_sample
    tc = t_vals - t_hat
    c = tc @ (cols - u_hat) / (n - 1)
    return _TermStats(n, t_hat, u_hat, sigma, sigma_sample, c, base)


def _variance_term_stats(y_l, y_lm1, cols, exact_sigma) -> _TermStats:
    n = y_l.shape[0]
    if n < 3:
        raise InsufficientSamplesError("variance corrections need at least 3 samples per level")
    vy = float(np.var(y_l, ddof=1))
    yl_c2 = (y_l - y_l.mean()) ** 2
    if y_lm1 is None:
        t_hat = vy
        q = yl_c2
        extra = vy**2
    else:
        vy0 = float(np.var(y_lm1, ddof=1))
        t_hat = vy - vy0
        q = yl_c2 - (y_lm1 - y_lm1.mean()) ** 2
        cov01 = float(np.cov(y_l, y_lm1, ddof=1)[0, 1])
        extra = vy**2 + vy0**2 - 2.0 * cov01**2
    base = float(np.var(q, ddof=1) + 2.0 / (n - 1) * extra)
    if cols is None:
        return _TermStats(n, t_hat, None, None, None, None, base)
    u_hat = cols.mean(axis=0)
    sigma_sample = np.atleast_2d(np.cov(cols, rowvar=False, ddof=1))
    sigma = exact_sigma if exact_sigma is not None else sigma_sample
    qc = q - q.mean()
    c = qc @ (cols - u_hat) / (n - 1)
    return _TermStats(n, t_hat, u_hat, sigma, sigma_sample, c, base)


def _apply_alpha(stats: _TermStats, tau, alpha, dropped) -> tuple:
    """Correction value and the realized (in-sample) variance reduction.

    The reduction is measured against the sample control covariance even
    when the coefficients came from the exact one: the result is the
    nonnegative sample variance of the corrected values, which keeps the
    allocation proxy honest at small sample sizes.
    """
    if stats.u_hat is None or alpha is None:
        return stats.t_hat, 0.0, stats.base, 0.0, (), ()
    correction = float(alpha @ (stats.u_hat - tau))
    if stats.sigma_sample is not None and stats.c is not None and stats.base > 0:
        gain = float(2.0 * stats.c @ alpha - alpha @ stats.sigma_sample @ alpha)
        r2 = min(max(gain / stats.base, 0.0), 1.0)
    else:
        r2 = 0.0
    v_cv = (1.0 - r2) * stats.base
    return (
        stats.t_hat,
        correction,
        v_cv,
        r2,
        tuple(float(a) for a in alpha),
        tuple(int(i) for i in dropped),
    )


def _solve_term(stats: _TermStats, drop_tol=1e-10, on_singular="drop"):
    if stats.u_hat is None:
        return None, ()
    alpha, _, dropped = solve_alpha(stats.sigma, stats.c, drop_tol=drop_tol, on_singular=on_singular)
    return alpha, dropped


def _draw_points(hierarchy: LevelHierarchy, rng: np.random.Generator, n: int) -> np.ndarray:
    space = hierarchy.space
    return space.from_unit(rng.random((n, space.dims)))


def _term_stats_at(hierarchy, level, pts, controls: LevelControls, statistic, exact_sigma) -> _TermStats:
    y_l = np.asarray(hierarchy.evaluators[level](pts), dtype=float)
    y_lm1 = (
        np.asarray(hierarchy.evaluators[level - 1](pts), dtype=float) if level > 0 else None
    )
    cols = controls.columns(pts, statistic)
    if statistic == "expectation":
        t_vals = y_l if y_lm1 is None else y_l - y_lm1
        return _expectation_term_stats(t_vals, cols, exact_sigma)
    return _variance_term_stats(y_l, y_lm1, cols, exact_sigma)


def _level_term(
    hierarchy: LevelHierarchy,
    level: int,
    n: int,
    controls: LevelControls,
    statistic: str,
    stream: RngStream,
    alpha_mode: str,
    pilot_n: int | None,
    use_exact_sigma: bool,
) -> LevelReport:
    if n < 1:
        raise InsufficientSamplesError(f"level {level} received n={n}")
    rng = stream.child(level=level).generator()
    pts = _draw_points(hierarchy, rng, n)
    exact_sigma = controls.exact_sigma(statistic) if use_exact_sigma else None
    stats = _term_stats_at(hierarchy, level, pts, controls, statistic, exact_sigma)

    if stats.u_hat is None:
        alpha, dropped = None, ()
    elif alpha_mode == "same-sample":
        alpha, dropped = _solve_term(stats)
    elif alpha_mode == "pilot":
        m = pilot_n if pilot_n is not None else n
        prng = stream.child(level=level, purpose=stream.purpose + "#pilot").generator()
        ppts = _draw_points(hierarchy, prng, m)
        pstats = _term_stats_at(hierarchy, level, ppts, controls, statistic, exact_sigma)
        alpha, dropped = _solve_term(pstats)
    else:
        raise ValueError(f"unknown alpha mode {alpha_mode!r}")

    t_hat, correction, v_cv, r2, alpha_t, dropped_t = _apply_alpha(
        stats, controls.tau(statistic), alpha, dropped
    )
    return LevelReport(
        level=level,
        n=n,
        t_hat=t_hat,
        correction=correction,
        v_cv=v_cv,
        r2=r2,
        alpha=alpha_t,
        dropped=dropped_t,
    )


def mlmc_family_estimate(
    method: str,
    hierarchy: LevelHierarchy,
    suite: SurrogateSuite | None,
    n_per_level: Sequence[int],
    statistic: str,
    stream: RngStream,
    *,
    alpha_mode: str = "same-sample",
    pilot_n: int | None = None,
    use_exact_sigma: bool = False,
) -> RunResult:
    """Fixed-allocation telescoping estimate for any multilevel method tag.

    Every level draws its own independent input sample of the given size;
    the level correction uses both adjacent simulators on that same sample
    and is optionally corrected by the method's control variates.
    """
    n_levels = hierarchy.n_levels
    n_per_level = [int(v) for v in n_per_level]
    if len(n_per_level) != n_levels:
        raise ValueError("one sample size per level required")
    controls = method_controls(method, suite, n_levels, statistic)
    reports = []
    for level in range(n_levels):
        reports.append(
            _level_term(
                hierarchy,
                level,
                n_per_level[level],
                controls[level],
                statistic,
                stream,
                alpha_mode,
                pilot_n,
                use_exact_sigma,
            )
        )
    estimate = float(sum(r.t_hat - r.correction for r in reports))
    consumed = float(sum(n * hierarchy.correction_cost(l) for l, n in enumerate(n_per_level)))
    return RunResult(
        method=method,
        statistic=statistic,
        estimate=estimate,
        budget=None,
        consumed=consumed,
        levels=tuple(reports),
    )


def mlmc_estimate(hierarchy, n_per_level, statistic, stream) -> RunResult:
    """Plain multilevel Monte Carlo with a fixed allocation."""
    return mlmc_family_estimate("MLMC", hierarchy, None, n_per_level, statistic, stream)


def mlmc_cv_estimate(hierarchy, suite, n_per_level, statistic, stream,
                     coarse_only: bool = False, **kwargs) -> RunResult:
    """Multilevel Monte Carlo with one control variate per correction level.

    ``coarse_only`` restricts the controls to the coarsest-level surrogate.
    """
    tag = "MLMC-CV[0]" if coarse_only else "MLMC-CV"
    return mlmc_family_estimate(tag, hierarchy, suite, n_per_level, statistic, stream, **kwargs)


def mlmc_mlcv_estimate(hierarchy, suite, n_per_level, statistic, stream,
                       coarse_only: bool = False, **kwargs) -> RunResult:
    """Multilevel Monte Carlo with the full multi-control correction per level.

    ``coarse_only`` restricts the controls to the two coarsest surrogates
    and the first difference surrogate.
    """
    tag = "MLMC-MLCV[0]" if coarse_only else "MLMC-MLCV"
    return mlmc_family_estimate(tag, hierarchy, suite, n_per_level, statistic, stream, **kwargs)


def _single_level_run(
    method: str,
    hierarchy: LevelHierarchy,
    models: tuple,
    n: int,
    statistic: str,
    stream: RngStream,
    alpha_mode: str,
    pilot_n: int | None,
    use_exact_sigma: bool,
    budget: float | None,
) -> RunResult:
    finest = hierarchy.finest
    if n < (2 if statistic == "expectation" else 3):
        raise InsufficientSamplesError(f"single-level run needs more samples, got n={n}")
    controls = LevelControls(models=tuple(models))
    rng = stream.child(level=finest).generator()
    pts = _draw_points(hierarchy, rng, n)
    y = np.asarray(hierarchy.evaluators[finest](pts), dtype=float)
    cols = controls.columns(pts, statistic)
    exact_sigma = controls.exact_sigma(statistic) if use_exact_sigma else None
    if statistic == "expectation":
        stats = _expectation_term_stats(y, cols, exact_sigma)
    else:
        stats = _variance_term_stats(y, None, cols, exact_sigma)
    if stats.u_hat is None:
        alpha, dropped = None, ()
    elif alpha_mode == "same-sample":
        alpha, dropped = _solve_term(stats)
    elif alpha_mode == "pilot":
        m = pilot_n if pilot_n is not None else n
        prng = stream.child(level=finest, purpose=stream.purpose + "#pilot").generator()
        ppts = _draw_points(hierarchy, prng, m)
        py = np.asarray(hierarchy.evaluators[finest](ppts), dtype=float)
        pcols = controls.columns(ppts, statistic)
        if statistic == "expectation":
            pstats = _expectation_term_stats(py, pcols, exact_sigma)
        else:
            pstats = _variance_term_stats(py, None, pcols, exact_sigma)
        alpha, dropped = _solve_term(pstats)
    else:
        raise ValueError(f"unknown alpha mode {alpha_mode!r}")
    t_hat, correction, v_cv, r2, alpha_t, dropped_t = _apply_alpha(
        stats, controls.tau(statistic), alpha, dropped
    )
    report = LevelReport(
        level=finest, n=n, t_hat=t_hat, correction=correction,
        v_cv=v_cv, r2=r2, alpha=alpha_t, dropped=dropped_t,
    )
    return RunResult(
        method=method,
        statistic=statistic,
        estimate=float(t_hat - correction),
        budget=budget,
        consumed=float(n * hierarchy.costs[finest]),
        levels=(report,),
    )


def mc_estimate(hierarchy, n, statistic, stream) -> RunResult:
    """Plain Monte Carlo on the finest simulator."""
    return _single_level_run("MC", hierarchy, (), n, statistic, stream, "same-sample", None, False, None)


def single_level_cv_estimate(hierarchy, models, n, statistic, stream, *,
                             alpha_mode="same-sample", pilot_n=None,
                             use_exact_sigma=False, method_tag="CV") -> RunResult:
    """Control-variate estimate on the finest simulator with given controls."""
    return _single_level_run(
        method_tag, hierarchy, tuple(models), n, statistic, stream,
        alpha_mode, pilot_n, use_exact_sigma, None,
    )


def mlcv_estimate(hierarchy, suite, n, statistic, stream, **kwargs) -> RunResult:
    """Single-level estimate on the finest simulator with one control per level."""
    models = tuple(suite.level_models[: hierarchy.n_levels])
    return single_level_cv_estimate(hierarchy, models, n, statistic, stream,
                                    method_tag="MLCV", **kwargs)


class _ExpectationAccumulator:
    """Running sums for a level's correction values and control columns."""

    def __init__(self, n_controls: int):
        self.m = n_controls
        self.n = 0
        self.sum_t = 0.0
        self.sum_tt = 0.0
        self.sum_z = np.zeros(n_controls)
        self.sum_zz = np.zeros((n_controls, n_controls))
        self.sum_tz = np.zeros(n_controls)

    def add(self, t_vals: np.ndarray, cols: np.ndarray | None) -> None:
        self.n += t_vals.shape[0]
        self.sum_t += float(t_vals.sum())
        self.sum_tt += float(t_vals @ t_vals)
        if self.m:
            self.sum_z += cols.sum(axis=0)
            self.sum_zz += cols.T @ cols
            self.sum_tz += t_vals @ cols

    def stats(self, exact_sigma) -> _TermStats:
        n = self.n
        t_hat = self.sum_t / n
        base = max((self.sum_tt - n * t_hat**2) / (n - 1), 0.0) if n >= 2 else 0.0
        if not self.m or n < 2:
            return _TermStats(n, t_hat, None, None, None, None, base)
        u_hat = self.sum_z / n
        sigma_sample = (self.sum_zz - n * np.outer(u_hat, u_hat)) / (n - 1)
        sigma = exact_sigma if exact_sigma is not None else sigma_sample
        c = (self.sum_tz - n * t_hat * u_hat) / (n - 1)
        return _TermStats(n, t_hat, u_hat, sigma, sigma_sample, c, base)


class _VarianceBuffer:
    """Per-level growing sample storage for variance-statistic runs."""

    def __init__(self):
        self.y_l: list = []
        self.y_lm1: list = []
        self.cols: list = []

    def add(self, y_l, y_lm1, cols):
        self.y_l.append(y_l)
        if y_lm1 is not None:
            self.y_lm1.append(y_lm1)
        if cols is not None:
            self.cols.append(cols)

    def stats(self, exact_sigma) -> _TermStats:
        y_l = np.concatenate(self.y_l)
        y_lm1 = np.concatenate(self.y_lm1) if self.y_lm1 else None
        cols = np.concatenate(self.cols, axis=0) if self.cols else None
        return _variance_term_stats(y_l, y_lm1, cols, exact_sigma)


def adaptive_run(
    method: str,
    hierarchy: LevelHierarchy,
    suite: SurrogateSuite | None,
    budget: float,
    stream: RngStream,
    *,
    statistic: str = "expectation",
    n_init: int = 30,
    growth: float = 1.1,
    use_exact_sigma: bool = False,
) -> RunResult:
    """Sequential multilevel driver under a computational budget.

    Starts every level at ``n_init`` samples, then repeatedly inflates the
    sample size of the level with the largest variance reduction per unit
    cost (growth factor ``growth``, floor rounding with a minimum
    increment of one) until the consumed budget exceeds the target; the
    final overshoot is at most one increment. Control parameters are
    re-estimated from all samples gathered so far after every round.
    """
    if n_init < 2:
        raise ValueError("n_init must be at least 2")
    if growth <= 1.0:
        raise ValueError("growth factor must exceed 1")
    n_levels = hierarchy.n_levels
    costs = hierarchy.correction_costs()
    if budget < n_init * costs.sum():
        raise BudgetError(
            f"budget {budget} below the initial round cost {n_init * costs.sum():.3f}"
        )
    controls = method_controls(method, suite, n_levels, statistic)
    exact_sigmas = [
        ctl.exact_sigma(statistic) if use_exact_sigma else None for ctl in controls
    ]
    taus = [ctl.tau(statistic) for ctl in controls]
    if statistic == "expectation":
        states = [_ExpectationAccumulator(len(ctl)) for ctl in controls]
    else:
        states = [_VarianceBuffer() for _ in range(n_levels)]
    rngs = [stream.child(level=l).generator() for l in range(n_levels)]

    n = np.zeros(n_levels, dtype=np.int64)
    delta = np.full(n_levels, n_init, dtype=np.int64)
    consumed = 0.0
    trace: list[TraceRow] = []
    iteration = 0
    term_cache: list[tuple] = [None] * n_levels

    while consumed <= budget:
        for level in range(n_levels):
            if delta[level] == 0:
                continue
            pts = _draw_points(hierarchy, rngs[level], int(delta[level]))
            y_l = np.asarray(hierarchy.evaluators[level](pts), dtype=float)
            y_lm1 = (
                np.asarray(hierarchy.evaluators[level - 1](pts), dtype=float)
                if level > 0
                else None
            )
            cols = controls[level].columns(pts, statistic)
            if statistic == "expectation":
                t_vals = y_l if y_lm1 is None else y_l - y_lm1
                states[level].add(t_vals, cols)
            else:
                states[level].add(y_l, y_lm1, cols)
        n += delta
        consumed += float(delta @ costs)

        v_cv = np.empty(n_levels)
        for level in range(n_levels):
            stats = states[level].stats(exact_sigmas[level])
            alpha, dropped = _solve_term(stats) if stats.u_hat is not None else (None, ())
            t_hat, correction, vc, r2, alpha_t, dropped_t = _apply_alpha(
                stats, taus[level], alpha, dropped
            )
            v_cv[level] = vc
            term_cache[level] = (t_hat, correction, vc, r2, alpha_t, dropped_t)

        gains = v_cv / (growth * n.astype(float) ** 2 * costs)
        chosen = int(np.argmax(gains))  # argmax takes the lowest index on ties
        delta = np.zeros(n_levels, dtype=np.int64)
        delta[chosen] = max(1, int(np.floor((growth - 1.0) * n[chosen])))
        trace.append(
            TraceRow(
                iteration=iteration,
                n_per_level=tuple(int(x) for x in n),
                consumed=consumed,
                v_cv=tuple(float(x) for x in v_cv),
                chosen_level=chosen,
                delta_next=int(delta[chosen]),
            )
        )
        iteration += 1

    reports = []
    estimate = 0.0
    for level in range(n_levels):
        t_hat, correction, vc, r2, alpha_t, dropped_t = term_cache[level]
        estimate += t_hat - correction
        reports.append(
            LevelReport(
                level=level, n=int(n[level]), t_hat=t_hat, correction=correction,
                v_cv=vc, r2=r2, alpha=alpha_t, dropped=dropped_t,
            )
        )
    return RunResult(
        method=method,
        statistic=statistic,
        estimate=float(estimate),
        budget=float(budget),
        consumed=consumed,
        levels=tuple(reports),
        trace=tuple(trace),
    )


def run_method(
    method: str,
    hierarchy: LevelHierarchy,
    suite: SurrogateSuite | None,
    budget: float,
    stream: RngStream,
    *,
    statistic: str = "expectation",
    n_init: int = 30,
    growth: float = 1.1,
    alpha_mode: str = "same-sample",
    use_exact_sigma: bool = False,
) -> RunResult:
    """Run any method tag under a budget expressed in finest-evaluation cost.

    Single-level methods spend the whole budget on the finest simulator;
    multilevel methods run the sequential allocation driver.
    """
    if method in SINGLE_LEVEL_METHODS:
        n = int(np.floor(budget / hierarchy.costs[hierarchy.finest]))
        if method == "MC":
            result = mc_estimate(hierarchy, n, statistic, stream)
        elif method == "CV":
            models = (suite.level_models[hierarchy.finest],)
            result = single_level_cv_estimate(
                hierarchy, models, n, statistic, stream,
                alpha_mode=alpha_mode, use_exact_sigma=use_exact_sigma, method_tag="CV",
            )
        else:
            result = mlcv_estimate(
                hierarchy, suite, n, statistic, stream,
                alpha_mode=alpha_mode, use_exact_sigma=use_exact_sigma,
            )
        return RunResult(
            method=result.method, statistic=result.statistic, estimate=result.estimate,
            budget=float(budget), consumed=result.consumed, levels=result.levels,
        )
    return adaptive_run(
        method, hierarchy, suite, budget, stream,
        statistic=statistic, n_init=n_init, growth=growth, use_exact_sigma=use_exact_sigma,
    )


def replicate_rmse(
    method: str,
    hierarchy: LevelHierarchy,
    suite: SurrogateSuite | None,
    budget: float,
    replicates: int,
    reference: float,
    stream: RngStream,
    **run_kwargs,
) -> tuple[float, np.ndarray]:
    """Root mean square error over independent replicate runs."""
    if replicates < 2:
        raise ValueError("need at least 2 replicates")
    estimates = np.empty(replicates)
    for r in range(replicates):
        result = run_method(method, hierarchy, suite, budget, stream.child(replicate=r), **run_kwargs)
        estimates[r] = result.estimate
    rmse = float(np.sqrt(np.mean((estimates - reference) ** 2)))
    return rmse, estimates
