"""Heat-equation benchmark tests against closed forms and quadrature oracles."""
import numpy as np
import pytest
from scipy.integrate import quad

from mlcv.errors import ConfigError, LevelRangeError
from mlcv.heatbench import (
    HeatConfig,
    correction_cost,
    evaluate_level,
    exact_correction_mean,
    exact_correction_variance,
    exact_expectation,
    exact_level_mean,
    hierarchy,
    input_space,
)
from mlcv.sampling import RngStream, iid_sample

ZERO_POINT = np.array([0.0, 0.0, 0.0, 0.005, 0.25, 0.25, 0.25])


class TestConfig:
    def test_defaults_match_reference_setup(self, cfg):
        assert cfg.level_nodes == (15, 30, 60, 120)
        assert cfg.level_costs == (0.125, 0.25, 0.5, 1.0)
        assert cfg.modes == 21

    def test_cost_normalization(self):
        c = HeatConfig(level_costs=(1.0, 2.0, 4.0, 8.0))
        assert c.level_costs == (0.125, 0.25, 0.5, 1.0)

    def test_degenerate_diffusivity_rejected(self):
        with pytest.raises(ConfigError):
            HeatConfig(nu_min=0.005, nu_max=0.005)

    def test_nodes_must_increase(self):
        with pytest.raises(ConfigError):
            HeatConfig(level_nodes=(30, 15), level_costs=(0.5, 1.0))

    def test_dict_round_trip(self, cfg):
        data = cfg.as_dict()
        assert set(data) == {"K", "T", "nu_min", "nu_max", "levels"}
        assert HeatConfig.from_dict(data) == cfg


class TestExactExpectation:
    def test_reference_value(self, cfg):
        assert exact_expectation(cfg) == pytest.approx(41.98, abs=0.01)

    def test_runtime_under_a_millisecond(self, cfg):
        import time

        exact_expectation(cfg)  # warm any lazy state
        t0 = time.perf_counter()
        exact_expectation(cfg)
        assert time.perf_counter() - t0 < 1e-3

    def test_mode_means_against_quadrature_oracle(self, cfg):
        # independent oracle: integrate the diffusivity average numerically
        t = cfg.final_time
        width = cfg.nu_max - cfg.nu_min
        for k, expected in ((1, 0.6212), (3, None), (9, None), (21, None)):
            oracle, _ = quad(
                lambda nu, k=k: 2.0 / (k * np.pi) * np.exp(-nu * k**2 * np.pi**2 * t) / width,
                cfg.nu_min,
                cfg.nu_max,
            )
            closed = (
                2.0
                * (np.exp(-cfg.nu_min * k**2 * np.pi**2 * t) - np.exp(-cfg.nu_max * k**2 * np.pi**2 * t))
                / (k**3 * np.pi**3 * t * width)
            )
            assert closed == pytest.approx(oracle, rel=1e-10)
            if expected is not None:
                assert closed == pytest.approx(expected, abs=1e-4)


class TestEvaluateLevel:
    def test_zero_initial_condition_all_levels(self, cfg):
        for level in range(cfg.n_levels):
            assert evaluate_level(cfg, level, ZERO_POINT) == 0.0

    def test_level_out_of_range(self, cfg):
        with pytest.raises(LevelRangeError):
            evaluate_level(cfg, 4, ZERO_POINT)

    def test_batch_matches_scalar(self, cfg, bench_space):
        # batch and scalar paths may use different BLAS kernels; agreement
        # is to rounding, determinism per call shape is exact
        pts = iid_sample(bench_space, 5, RngStream(0)).points
        batch = evaluate_level(cfg, 2, pts)
        for i in range(5):
            assert batch[i] == pytest.approx(evaluate_level(cfg, 2, pts[i]), rel=1e-13)
        assert np.array_equal(batch, evaluate_level(cfg, 2, pts))

    def test_sign_flip_symmetry_exact(self, cfg, bench_space):
        pts = iid_sample(bench_space, 50, RngStream(1)).points
        flipped = pts.copy()
        flipped[:, 4] *= -1.0
        for level in range(cfg.n_levels):
            assert np.array_equal(evaluate_level(cfg, level, pts), evaluate_level(cfg, level, flipped))

    def test_quadrature_convergence_pointwise(self, cfg, bench_space):
        pts = iid_sample(bench_space, 100, RngStream(2)).points
        fine_gap = np.abs(evaluate_level(cfg, 3, pts) - evaluate_level(cfg, 2, pts))
        coarse_gap = np.abs(evaluate_level(cfg, 1, pts) - evaluate_level(cfg, 0, pts))
        assert np.mean(fine_gap < coarse_gap) >= 0.95

    def test_monotone_mean_refinement(self, cfg, bench_space):
        pts = iid_sample(bench_space, 1000, RngStream(3)).points
        gaps = [
            np.mean(np.abs(evaluate_level(cfg, l, pts) - evaluate_level(cfg, l - 1, pts)))
            for l in range(1, cfg.n_levels)
        ]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_large_sample_mean_matches_exact(self, cfg, bench_space):
        n = 100_000
        pts = iid_sample(bench_space, n, RngStream(4)).points
        y = evaluate_level(cfg, 3, pts)
        se = y.std(ddof=1) / np.sqrt(n)
        assert abs(y.mean() - exact_expectation(cfg)) < 3 * se


class TestExactMoments:
    def test_level_mean_matches_monte_carlo(self, cfg, bench_space):
        n = 200_000
        pts = iid_sample(bench_space, n, RngStream(5)).points
        for level in (0, 3):
            y = evaluate_level(cfg, level, pts)
            se = y.std(ddof=1) / np.sqrt(n)
            assert abs(y.mean() - exact_level_mean(cfg, level)) < 3 * se

    def test_level_variance_matches_table(self, cfg):
        # the reported per-level correction variances are reproduced exactly
        expected = (1.0850e4, 5.9029e2, 1.0590, 5.8160e-2)
        for level, val in enumerate(expected):
            assert exact_correction_variance(cfg, level) == pytest.approx(val, rel=0.05)

    def test_correction_mean_telescopes(self, cfg):
        total = sum(exact_correction_mean(cfg, level) for level in range(cfg.n_levels))
        assert total == pytest.approx(exact_level_mean(cfg, cfg.finest), rel=1e-12)

    def test_correction_variance_matches_monte_carlo(self, cfg, bench_space):
        n = 200_000
        pts = iid_sample(bench_space, n, RngStream(6)).points
        for level in (1, 3):
            d = evaluate_level(cfg, level, pts) - evaluate_level(cfg, level - 1, pts)
            sample_var = d.var(ddof=1)
            # variance of the sample variance via fourth moments
            m4 = np.mean((d - d.mean()) ** 4)
            se = np.sqrt(max(m4 - sample_var**2, 0.0) / n)
            assert abs(sample_var - exact_correction_variance(cfg, level)) < 4 * se


class TestCosts:
    def test_reference_cost_table(self, cfg):
        assert correction_cost(cfg, 0) == pytest.approx(0.125)
        assert correction_cost(cfg, 1) == pytest.approx(0.375)
        assert correction_cost(cfg, 2) == pytest.approx(0.75)
        assert correction_cost(cfg, 3) == pytest.approx(1.5)

    def test_single_level_hierarchy(self):
        c = HeatConfig(level_nodes=(15,), level_costs=(1.0,))
        assert correction_cost(c, 0) == pytest.approx(1.0)

    def test_hierarchy_costs_align(self, cfg, bench):
        assert bench.correction_costs() == pytest.approx(
            [correction_cost(cfg, level) for level in range(cfg.n_levels)]
        )


class TestHierarchy:
    def test_evaluators_agree_with_evaluate_level(self, cfg, bench, bench_space):
        pts = iid_sample(bench_space, 20, RngStream(7)).points
        for level in range(cfg.n_levels):
            assert np.array_equal(bench.evaluators[level](pts), evaluate_level(cfg, level, pts))

    def test_space_bounds(self, bench, cfg):
        lo, hi = bench.space.lower, bench.space.upper
        assert lo[3] == cfg.nu_min and hi[3] == cfg.nu_max
        assert np.allclose(lo[:3], -np.pi) and np.allclose(hi[4:], 1.0)
