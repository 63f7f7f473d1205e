"""Reference per-level quantities reproduced with the production suite.

Small-sample surrogates (100-200 training points) have strongly
draw-dependent quality; the reference results themselves report two fits of
the same size whose scores differ by a factor of almost three. Tests on
quantities driven by those fits use the union of the reference levels,
while the large-sample fits are held to tight bands.
"""
import numpy as np
import pytest

from mlcv.cv import solve_alpha
from mlcv.estimators import method_controls, optimal_allocation
from mlcv.harness import level_quantity_table
from mlcv.pce import pc_covariance, pc_moments
from mlcv.sampling import RngStream, iid_sample

from conftest import synthetic_pc_hierarchy


@pytest.fixture(scope="module")
def quantities(cfg, full_suite):
    return level_quantity_table(cfg, full_suite, 200_000, RngStream(90, purpose="levels"))


class TestSurrogateQuality:
    def test_large_sample_fits_reach_reference_levels(self, full_build):
        rows = {row["model"]: row for row in full_build[0].quality_rows}
        assert rows["level0"]["q2"] >= 0.90  # reference 0.98
        assert rows["diff1"]["q2"] >= 0.90  # reference 0.99
        assert rows["level1"]["q2"] >= 0.85  # reference 0.95

    def test_small_sample_fit_within_reference_range(self, full_build):
        # the two reference 100-point fits score 0.21 and 0.59; accept the
        # bracket spanned by both draws (each +/- 0.15)
        rows = {row["model"]: row for row in full_build[0].quality_rows}
        assert 0.06 <= rows["level3"]["q2"] <= 0.74

    def test_construction_ledger(self, full_build):
        assert full_build[0].construction_cost == pytest.approx(400.0)


class TestCorrelations:
    def test_difference_surrogate_tracks_first_correction(self, cfg, bench, full_suite, bench_space):
        pts = iid_sample(bench_space, 1000, RngStream(91, purpose="corr")).points
        d1 = bench.evaluators[1](pts) - bench.evaluators[0](pts)
        rho = np.corrcoef(full_suite.diff_models[0](pts), d1)[0, 1]
        assert rho == pytest.approx(0.99, abs=0.05)

    def test_coarse_surrogate_tracks_its_level(self, cfg, bench, full_suite, bench_space):
        pts = iid_sample(bench_space, 1000, RngStream(92, purpose="corr")).points
        rho = np.corrcoef(full_suite.level_models[0](pts), bench.evaluators[0](pts))[0, 1]
        assert rho == pytest.approx(0.99, abs=0.02)


class TestReductionFactors:
    def test_mlmc_mlcv_row(self, quantities):
        r2 = quantities["methods"]["MLMC-MLCV"]["r2"]
        assert np.allclose(r2, [0.9840, 0.9920, 0.9173, 0.9202], atol=0.05)

    def test_mlmc_cv_large_sample_levels(self, quantities):
        r2 = quantities["methods"]["MLMC-CV"]["r2"]
        assert abs(r2[0] - 0.9838) <= 0.05
        assert abs(r2[1] - 0.9916) <= 0.05
        # levels 2-3 ride on the 200- and 100-point difference fits whose
        # reference values (0.8224, 0.6469) came from stronger draws
        assert 0.3 <= r2[2] <= 1.0
        assert 0.0 <= r2[3] <= 1.0

    def test_coarse_only_zeros_exact(self, quantities):
        r2 = quantities["methods"]["MLMC-CV[0]"]["r2"]
        assert abs(r2[0] - 0.9838) <= 0.05
        assert r2[1] == 0.0 and r2[2] == 0.0 and r2[3] == 0.0

    def test_cumulative_cost_sums(self, quantities):
        # variance-per-unit-cost comparison across methods
        s2 = {m: vals["s_total_sq"] for m, vals in quantities["methods"].items()}
        assert s2["MLMC"] == pytest.approx(2797.65, rel=0.10)
        assert s2["MLMC-CV[0]"] == pytest.approx(430.71, rel=0.15)
        assert s2["MLMC-MLCV"] < s2["MLMC-CV[0]"] < s2["MLMC"]
        assert s2["MLMC-MLCV"] == pytest.approx(40.04, rel=0.5)


class TestMlcvReduction:
    def test_all_controls_reduce_most_variance(self, cfg, bench, full_suite, bench_space):
        # squared multiple correlation of the finest output with all level
        # surrogates, exact control covariance and sampled cross terms
        pts = iid_sample(bench_space, 100_000, RngStream(93, purpose="mlcv-r2")).points
        y = bench.evaluators[3](pts)
        models = full_suite.level_models
        cols = np.column_stack([m(pts) for m in models])
        sigma = np.array([[pc_covariance(a, b) for b in models] for a in models])
        c = (y - y.mean()) @ (cols - cols.mean(0)) / (len(y) - 1)
        alpha, _, _ = solve_alpha(sigma, c)
        r2 = float(c @ alpha / y.var(ddof=1))
        assert r2 == pytest.approx(0.95, abs=0.04)


class TestExactSigmaReduction:
    def test_r2_within_unit_interval_on_exact_covariances(self):
        # with exact control covariances AND exact cross-covariances (both
        # available when the simulators are themselves PC models), the
        # per-level reduction factor is a true squared multiple correlation
        hier, suite, models = synthetic_pc_hierarchy(seed=11, n_levels=3)
        from mlcv.pce import combine_pc

        for level in range(3):
            controls = method_controls("MLMC-MLCV", suite, 3)[level]
            if level == 0:
                target = models[0]
            else:
                target = combine_pc(models[level], models[level - 1], 1.0, -1.0)
            sigma = controls.exact_sigma("expectation")
            c = np.array([pc_covariance(target, m) for m in controls.models])
            alpha, _, _ = solve_alpha(sigma, c)
            r2 = float(c @ alpha) / target.variance
            assert -1e-12 <= r2 <= 1.0 + 1e-12
            assert (1.0 - r2) * target.variance >= -1e-12
