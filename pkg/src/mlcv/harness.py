"""Experiment harness: surrogate pipeline, campaigns and reports.

Builds the per-level surrogate set with nested designs, runs budget sweeps
of the estimator families over independent replicates, and emits CSV plus
plain-text reports. Campaigns are deterministic: every replicate's stream
is derived from the master seed, the method tag, the budget and the
replicate index, so any cell can be reproduced in isolation.
"""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ZeroVarianceError
from .estimators import (
    METHODS,
    RunResult,
    SurrogateSuite,
    run_method,
)
from .heatbench import HeatConfig, exact_expectation, hierarchy
from .pce import adaptive_fit, q2
from .sampling import AnnealSchedule, Doe, RngStream, iid_sample, lhs_sample, nested_subset_indices

__all__ = [
    "SurrogatePlan",
    "CampaignConfig",
    "SuiteBuildResult",
    "CampaignCell",
    "CampaignReport",
    "build_surrogate_suite",
    "construction_cost_for",
    "correlation_table",
    "benchmark_entities",
    "run_campaign",
    "run_records_csv",
    "run_result_to_dict",
    "allocation_report",
    "level_quantity_table",
    "thread_count",
]


def thread_count() -> int:
    """Worker count for replicate evaluation, overridable via MLCV_THREADS."""
    raw = os.environ.get("MLCV_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"MLCV_THREADS must be an integer, got {raw!r}")


@dataclass(frozen=True)
class SurrogatePlan:
    """Construction plan for the per-level surrogate set.

    ``doe_sizes`` are the per-level training sizes (coarse to fine);
    nested designs reuse the fine-level points inside the coarser designs
    so difference responses come for free. ``max_terms`` caps the selection
    path length per candidate degree.
    """

    doe_sizes: tuple[int, ...] = (800, 400, 200, 100)
    p_max: int = 10
    max_terms: int | None = 300
    nested: bool = True
    pool: int = 10_000
    test_size: int = 10_000
    anneal_iterations: int = 10_000

    def as_dict(self) -> dict:
        return {
            "doe_sizes": list(self.doe_sizes),
            "p_max": self.p_max,
            "max_terms": self.max_terms,
            "nested": self.nested,
            "pool": self.pool,
            "test_size": self.test_size,
            "anneal_iterations": self.anneal_iterations,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SurrogatePlan":
        kwargs = dict(data)
        if "doe_sizes" in kwargs:
            kwargs["doe_sizes"] = tuple(kwargs["doe_sizes"])
        return cls(**kwargs)


@dataclass(frozen=True)
class CampaignConfig:
    """A full experiment campaign: methods x budgets x replicates."""

    heat: HeatConfig = field(default_factory=HeatConfig)
    methods: tuple[str, ...] = ("MC", "MLMC", "MLCV", "MLMC-MLCV")
    budgets: tuple[float, ...] = (100.0, 300.0, 1000.0, 3000.0, 10000.0)
    replicates: int = 100
    include_construction_cost: bool = False
    plan: SurrogatePlan = field(default_factory=SurrogatePlan)
    master_seed: int = 20240
    statistic: str = "expectation"
    n_init: int = 30
    growth: float = 1.1

    def __post_init__(self):
        if self.replicates < 1:
            raise ConfigError("replicates must be at least 1")
        budgets = tuple(float(b) for b in self.budgets)
        if any(b <= 0 for b in budgets) or list(budgets) != sorted(budgets):
            raise ConfigError("budgets must be positive and ascending")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown methods {unknown}; valid tags: {METHODS}")
        object.__setattr__(self, "budgets", budgets)
        object.__setattr__(self, "methods", tuple(self.methods))

    def as_dict(self) -> dict:
        return {
            "benchmark": self.heat.as_dict(),
            "methods": list(self.methods),
            "budgets": list(self.budgets),
            "replicates": self.replicates,
            "include_construction_cost": self.include_construction_cost,
            "surrogates": self.plan.as_dict(),
            "master_seed": self.master_seed,
            "statistic": self.statistic,
            "n_init": self.n_init,
            "growth": self.growth,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        try:
            return cls(
                heat=HeatConfig.from_dict(data.get("benchmark", {})),
                methods=tuple(data.get("methods", ("MC", "MLMC", "MLCV", "MLMC-MLCV"))),
                budgets=tuple(data.get("budgets", (100, 300, 1000, 3000, 10000))),
                replicates=data.get("replicates", 100),
                include_construction_cost=data.get("include_construction_cost", False),
                plan=SurrogatePlan.from_dict(data.get("surrogates", {})),
                master_seed=data.get("master_seed", 20240),
                statistic=data.get("statistic", "expectation"),
                n_init=data.get("n_init", 30),
                growth=data.get("growth", 1.1),
            )
        except TypeError as exc:
            raise ConfigError(f"malformed campaign config: {exc}") from exc

    @classmethod
    def load(cls, path) -> "CampaignConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class SuiteBuildResult:
    suite: SurrogateSuite
    quality_rows: tuple[dict, ...]
    construction_cost: float
    does: tuple[Doe, ...]


def build_surrogate_suite(
    cfg: HeatConfig, plan: SurrogatePlan, stream: RngStream
) -> SuiteBuildResult:
    """Build level and difference surrogates with their quality report.

    With nested designs the level-``l`` training points are a subset of the
    level ``l-1`` design, so the coarse responses needed by the difference
    fits are reused rather than recomputed; the construction-cost ledger is
    then exactly the sum of training sizes times per-level costs.
    """
    h = hierarchy(cfg)
    space = h.space
    sizes = plan.doe_sizes
    if len(sizes) != cfg.n_levels:
        raise ConfigError("one training size per level required")
    anneal = AnnealSchedule(iterations=plan.anneal_iterations)

    does: list[Doe] = []
    responses: list[np.ndarray] = []
    index_in_parent: list[np.ndarray] = []
    if plan.nested:
        base = lhs_sample(space, sizes[0], stream.child(level=0, purpose="doe"), anneal=anneal)
        does.append(base)
        index_in_parent.append(np.arange(sizes[0]))
        for level in range(1, cfg.n_levels):
            idx = nested_subset_indices(
                does[-1], sizes[level], plan.pool, stream.child(level=level, purpose="doe")
            )
            index_in_parent.append(idx)
            does.append(
                Doe(points=does[-1].points[idx], space=space, seed=base.seed, kind="nested-subset")
            )
    else:
        for level in range(cfg.n_levels):
            does.append(
                lhs_sample(space, sizes[level], stream.child(level=level, purpose="doe"), anneal=anneal)
            )

    for level in range(cfg.n_levels):
        responses.append(np.asarray(h.evaluators[level](does[level].points), dtype=float))

    level_models = []
    quality_rows = []
    test = iid_sample(space, plan.test_size, stream.child(purpose="q2-test"))
    for level in range(cfg.n_levels):
        model = adaptive_fit(does[level], responses[level], plan.p_max, max_steps=plan.max_terms)
        level_models.append(model)
        quality_rows.append(
            {
                "model": f"level{level}",
                "n": does[level].n,
                "degree": model.provenance["degree"],
                "terms": model.provenance["terms"],
                "loo": model.provenance["loo"],
                "q2": q2(model, h.evaluators[level], test),
            }
        )

    diff_models = []
    for level in range(1, cfg.n_levels):
        if plan.nested:
            coarse = responses[level - 1][index_in_parent[level]]
        else:
            coarse = np.asarray(h.evaluators[level - 1](does[level].points), dtype=float)
        diff = responses[level] - coarse
        model = adaptive_fit(does[level], diff, plan.p_max, max_steps=plan.max_terms)
        diff_models.append(model)
        truth = lambda p, lv=level: np.asarray(h.evaluators[lv](p)) - np.asarray(
            h.evaluators[lv - 1](p)
        )
        quality_rows.append(
            {
                "model": f"diff{level}",
                "n": does[level].n,
                "degree": model.provenance["degree"],
                "terms": model.provenance["terms"],
                "loo": model.provenance["loo"],
                "q2": q2(model, truth, test),
            }
        )

    cost = float(sum(n * c for n, c in zip(sizes, cfg.level_costs)))
    if not plan.nested:
        # coarse responses for the difference fits required extra evaluations
        cost += float(sum(sizes[l] * cfg.level_costs[l - 1] for l in range(1, cfg.n_levels)))
    suite = SurrogateSuite.from_pc(level_models, diff_models)
    return SuiteBuildResult(
        suite=suite,
        quality_rows=tuple(quality_rows),
        construction_cost=cost,
        does=tuple(does),
    )


def construction_cost_for(method: str, plan: SurrogatePlan, cfg: HeatConfig) -> float:
    """Training cost attributable to the surrogates a method actually uses."""
    per_level = [n * c for n, c in zip(plan.doe_sizes, cfg.level_costs)]
    if method in ("MC", "MLMC"):
        return 0.0
    if method == "CV":
        return float(per_level[-1])
    if method == "MLMC-CV[0]":
        return float(per_level[0])
    if method == "MLMC-MLCV[0]":
        return float(sum(per_level[:2]))
    return float(sum(per_level))


def correlation_table(entities, space, n: int, stream: RngStream):
    """Pearson correlations of named evaluators on a common random sample.

    ``entities`` is a sequence of (name, evaluator) pairs. Returns
    ``(names, matrix)`` with a symmetric unit-diagonal matrix.
    """
    if n < 3:
        raise ValueError("correlation estimation needs at least 3 samples")
    names = [name for name, _ in entities]
    pts = iid_sample(space, n, stream).points
    cols = np.column_stack([np.asarray(f(pts), dtype=float) for _, f in entities])
    sd = cols.std(axis=0, ddof=1)
    flat = [names[i] for i in np.flatnonzero(sd == 0)]
    if flat:
        raise ZeroVarianceError(f"zero-variance entities: {flat}")
    return names, np.corrcoef(cols, rowvar=False)


def benchmark_entities(cfg: HeatConfig, suite: SurrogateSuite | None = None):
    """Standard entity list: level outputs, corrections, and surrogates."""
    h = hierarchy(cfg)
    ents = [(f"Y{l}", h.evaluators[l]) for l in range(cfg.n_levels)]
    for level in range(1, cfg.n_levels):
        ents.append(
            (
                f"Y{level}-Y{level - 1}",
                lambda p, lv=level: np.asarray(h.evaluators[lv](p)) - np.asarray(h.evaluators[lv - 1](p)),
            )
        )
    if suite is not None:
        for level, model in enumerate(suite.level_models):
            ents.append((f"g{level}", model))
        for level, model in enumerate(suite.diff_models, start=1):
            ents.append((f"h{level}", model))
    return ents


@dataclass(frozen=True)
class CampaignCell:
    method: str
    budget: float
    total_cost: float
    rmse: float | None
    mean: float | None
    sd: float | None
    replicates: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class CampaignReport:
    reference: float
    cells: tuple[CampaignCell, ...]
    quality_rows: tuple[dict, ...]
    construction_cost: float
    sample_runs: tuple[RunResult, ...]

    def csv_text(self) -> str:
        lines = ["method,budget,total_cost,rmse,mean,sd,replicates,status"]
        for cell in self.cells:
            status = "failed:" + cell.error if cell.failed else "ok"
            fields = [
                cell.method,
                repr(float(cell.budget)),
                repr(float(cell.total_cost)),
                "" if cell.rmse is None else repr(cell.rmse),
                "" if cell.mean is None else repr(cell.mean),
                "" if cell.sd is None else repr(cell.sd),
                str(cell.replicates),
                status,
            ]
            lines.append(",".join(fields))
        return "\n".join(lines) + "\n"

    def quality_csv_text(self) -> str:
        lines = ["model,n,degree,terms,loo,q2"]
        for row in self.quality_rows:
            lines.append(
                ",".join(
                    [row["model"], str(row["n"]), str(row["degree"]), str(row["terms"]),
                     repr(float(row["loo"])), repr(float(row["q2"]))]
                )
            )
        return "\n".join(lines) + "\n"

    def summary_text(self) -> str:
        out = [f"reference value: {self.reference!r}",
               f"surrogate construction cost: {self.construction_cost!r}"]
        for cell in self.cells:
            if cell.failed:
                out.append(f"{cell.method:14s} budget {cell.budget:>9.6g}  FAILED {cell.error}")
            else:
                out.append(
                    f"{cell.method:14s} budget {cell.budget:>9.6g}  total {cell.total_cost:>9.6g}"
                    f"  rmse {cell.rmse:.6g}  mean {cell.mean:.6g}"
                )
        return "\n".join(out) + "\n"

    def save(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "campaign.csv").write_text(self.csv_text())
        (out / "surrogate_quality.csv").write_text(self.quality_csv_text())
        (out / "summary.txt").write_text(self.summary_text())
        detail = [run_result_to_dict(r) for r in self.sample_runs]
        (out / "sample_runs.json").write_text(json.dumps(detail) + "\n")
        (out / "sample_runs.csv").write_text(run_records_csv(self.sample_runs))


def run_records_csv(results) -> str:
    """One CSV row per run: method, budgets, estimate and per-level columns.

    Per-level sample sizes, variance proxies and reduction factors are
    flattened into ``n_<l>``, ``vcv_<l>`` and ``r2_<l>`` columns.
    """
    rows = [run_result_to_dict(r) if isinstance(r, RunResult) else r for r in results]
    if not rows:
        return "method,statistic,budget,consumed,estimate\n"
    n_levels = max(len(r["levels"]) for r in rows)
    header = ["method", "statistic", "budget", "consumed", "estimate"]
    for lv in range(n_levels):
        header += [f"n_{lv}", f"vcv_{lv}", f"r2_{lv}"]
    lines = [",".join(header)]
    for r in rows:
        fields = [
            r["method"],
            r["statistic"],
            "" if r["budget"] is None else repr(float(r["budget"])),
            repr(float(r["consumed"])),
            repr(float(r["estimate"])),
        ]
        for lv in range(n_levels):
            if lv < len(r["levels"]):
                rep = r["levels"][lv]
                fields += [str(rep["n"]), repr(float(rep["v_cv"])), repr(float(rep["r2"]))]
            else:
                fields += ["", "", ""]
        lines.append(",".join(fields))
    return "\n".join(lines) + "\n"


def run_result_to_dict(result: RunResult) -> dict:
    return {
        "method": result.method,
        "statistic": result.statistic,
        "estimate": result.estimate,
        "budget": result.budget,
        "consumed": result.consumed,
        "levels": [
            {
                "level": rep.level,
                "n": rep.n,
                "t_hat": rep.t_hat,
                "correction": rep.correction,
                "v_cv": rep.v_cv,
                "r2": rep.r2,
                "alpha": list(rep.alpha),
                "dropped": list(rep.dropped),
            }
            for rep in result.levels
        ],
        "trace": [
            {
                "iteration": row.iteration,
                "n_per_level": list(row.n_per_level),
                "consumed": row.consumed,
                "v_cv": list(row.v_cv),
                "chosen_level": row.chosen_level,
                "delta_next": row.delta_next,
            }
            for row in result.trace
        ],
    }


def _campaign_cell(config, h, suite, method, budget, reference):
    offset = (
        construction_cost_for(method, config.plan, config.heat)
        if config.include_construction_cost
        else 0.0
    )

    def one(replicate: int) -> float:
        stream = RngStream(
            config.master_seed,
            replicate=replicate,
            purpose=f"campaign|{method}|{budget:g}",
        )
        result = run_method(
            method,
            h,
            suite,
            budget,
            stream,
            statistic=config.statistic,
            n_init=config.n_init,
            growth=config.growth,
        )
        return result.estimate

    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            estimates = np.array(list(pool.map(one, range(config.replicates))))
    else:
        estimates = np.array([one(r) for r in range(config.replicates)])
    rmse = float(np.sqrt(np.mean((estimates - reference) ** 2)))
    return CampaignCell(
        method=method,
        budget=budget,
        total_cost=budget + offset,
        rmse=rmse,
        mean=float(estimates.mean()),
        sd=float(estimates.std(ddof=1)) if config.replicates > 1 else 0.0,
        replicates=config.replicates,
    )


def run_campaign(config: CampaignConfig, suite: SurrogateSuite | None = None,
                 construction_cost: float | None = None,
                 quality_rows: tuple = ()) -> CampaignReport:
    """Execute the full campaign grid; failures are recorded per cell.

    The surrogate suite is built from the config's plan when not supplied.
    The report also carries one full adaptive run per multilevel method at
    the largest budget for allocation inspection.
    """
    h = hierarchy(config.heat)
    needs_surrogates = any(m not in ("MC", "MLMC") for m in config.methods)
    if suite is None and needs_surrogates:
        built = build_surrogate_suite(
            config.heat, config.plan, RngStream(config.master_seed, purpose="suite")
        )
        suite = built.suite
        construction_cost = built.construction_cost
        quality_rows = built.quality_rows
    reference = exact_expectation(config.heat)
    cells = []
    for method in config.methods:
        for budget in config.budgets:
            try:
                cells.append(_campaign_cell(config, h, suite, method, budget, reference))
            except Exception as exc:  # cell failure must not sink the campaign
                offset = (
                    construction_cost_for(method, config.plan, config.heat)
                    if config.include_construction_cost
                    else 0.0
                )
                cells.append(
                    CampaignCell(
                        method=method,
                        budget=budget,
                        total_cost=budget + offset,
                        rmse=None,
                        mean=None,
                        sd=None,
                        replicates=config.replicates,
                        error=f"{type(exc).__name__}: {exc}",
                    )
                )
    sample_runs = []
    top = max(config.budgets)
    for method in config.methods:
        if method in ("MC", "CV", "MLCV"):
            continue
        try:
            sample_runs.append(
                run_method(
                    method, h, suite, top,
                    RngStream(config.master_seed, purpose=f"allocation|{method}|{top:g}"),
                    statistic=config.statistic, n_init=config.n_init, growth=config.growth,
                )
            )
        except Exception:
            pass
    return CampaignReport(
        reference=reference,
        cells=tuple(cells),
        quality_rows=tuple(quality_rows),
        construction_cost=float(construction_cost or 0.0),
        sample_runs=tuple(sample_runs),
    )


def allocation_report(results, correction_costs) -> str:
    """CSV of per-level sample sizes and cost shares for completed runs.

    Rows are grouped by method; sample-size medians and quartiles are
    taken over the runs supplied for each method, cost shares over the
    consumed budgets. Accepts RunResult objects or their dict form.
    """
    costs = np.asarray(correction_costs, dtype=float)
    by_method: dict[str, list] = {}
    for item in results:
        data = run_result_to_dict(item) if isinstance(item, RunResult) else item
        by_method.setdefault(data["method"], []).append(data)
    lines = ["method,level,n_median,n_q25,n_q75,cost_share"]
    for method in sorted(by_method):
        runs = by_method[method]
        counts = np.array([[lv["n"] for lv in run["levels"]] for run in runs], dtype=float)
        if counts.shape[1] != costs.size:
            raise ValueError("correction costs misaligned with run levels")
        consumed = np.array([run["consumed"] for run in runs])
        shares = counts * costs / consumed[:, None]
        for lv in range(costs.size):
            n_med = float(np.median(counts[:, lv]))
            q25, q75 = (float(q) for q in np.percentile(counts[:, lv], [25, 75]))
            lines.append(
                f"{method},{lv},{n_med!r},{q25!r},{q75!r},{float(shares[:, lv].mean())!r}"
            )
    return "\n".join(lines) + "\n"


def level_quantity_table(cfg: HeatConfig, suite: SurrogateSuite, n: int, stream: RngStream,
                         methods=("MLMC", "MLMC-CV", "MLMC-MLCV", "MLMC-CV[0]", "MLMC-MLCV[0]")) -> dict:
    """Measured per-level variances, reduction factors, shares and cost sums.

    Mirrors the standard diagnostics: correction variances from a fresh
    sample of size ``n``, per-method squared multiple correlations from the
    exact control covariances with sampled cross-covariances, the optimal
    cost shares and the cumulative cost-weighted sums.
    """
    from .cv import solve_alpha
    from .estimators import method_controls, optimal_allocation

    h = hierarchy(cfg)
    rng = stream.generator()
    pts = h.space.from_unit(rng.random((n, h.space.dims)))
    ys = [np.asarray(h.evaluators[l](pts), dtype=float) for l in range(cfg.n_levels)]
    v = np.empty(cfg.n_levels)
    targets = []
    for level in range(cfg.n_levels):
        t = ys[level] if level == 0 else ys[level] - ys[level - 1]
        targets.append(t)
        v[level] = t.var(ddof=1)
    out = {"v": v, "methods": {}}
    costs = h.correction_costs()
    for method in methods:
        controls = method_controls(method, suite if method != "MLMC" else None, cfg.n_levels)
        r2 = np.zeros(cfg.n_levels)
        for level, ctl in enumerate(controls):
            if len(ctl) == 0:
                continue
            cols = ctl.columns(pts, "expectation")
            sigma = ctl.exact_sigma("expectation")
            if sigma is None:
                sigma = np.atleast_2d(np.cov(cols, rowvar=False, ddof=1))
            t = targets[level]
            c = (t - t.mean()) @ (cols - cols.mean(axis=0)) / (n - 1)
            alpha, _, _ = solve_alpha(sigma, c)
            r2[level] = min(max(float(c @ alpha) / v[level], 0.0), 1.0)
        alloc = optimal_allocation((1.0 - r2) * v, costs, budget=1.0)
        out["methods"][method] = {
            "r2": r2,
            "shares": alloc.shares,
            "s_partial_sq": alloc.s_partial_sq,
            "s_total_sq": alloc.s_total_sq,
        }
    return out
