"""Design-of-experiments and random-stream tests."""
import numpy as np
import pytest
from scipy.stats import qmc

from mlcv import kernels
from mlcv.errors import DesignSizeError, EmptyDesignError
from mlcv.sampling import (
    AnnealSchedule,
    Doe,
    InputSpace,
    RngStream,
    centered_l2_discrepancy,
    iid_sample,
    lhs_sample,
    nested_subset,
    nested_subset_indices,
)

UNIT2 = InputSpace(((0.0, 1.0), (0.0, 1.0)))


class TestInputSpace:
    def test_degenerate_interval_rejected(self):
        with pytest.raises(ValueError):
            InputSpace(((0.0, 0.0),))

    def test_unit_round_trip(self):
        space = InputSpace(((-2.0, 4.0), (1.0, 3.0)))
        pts = np.array([[1.0, 2.0], [-2.0, 3.0]])
        assert np.allclose(space.from_unit(space.to_unit(pts)), pts)

    def test_uniform_variances(self):
        space = InputSpace(((0.0, 6.0),))
        assert np.allclose(space.variances, 3.0)


class TestStreams:
    def test_same_id_bit_identical(self):
        space = UNIT2
        a = iid_sample(space, 5, RngStream(7, level=1, purpose="x"))
        b = iid_sample(space, 5, RngStream(7, level=1, purpose="x"))
        assert np.array_equal(a.points, b.points)

    def test_distinct_levels_differ(self):
        a = iid_sample(UNIT2, 5, RngStream(7, level=0))
        b = iid_sample(UNIT2, 5, RngStream(7, level=1))
        assert not np.array_equal(a.points, b.points)

    def test_rank_correlation_across_levels(self):
        # matched columns across independent level streams decorrelate
        n = 1000
        a = iid_sample(UNIT2, n, RngStream(11, level=0)).points
        b = iid_sample(UNIT2, n, RngStream(11, level=1)).points
        for j in range(2):
            ra = np.argsort(np.argsort(a[:, j]))
            rb = np.argsort(np.argsort(b[:, j]))
            rho = np.corrcoef(ra, rb)[0, 1]
            assert abs(rho) < 4.0 / np.sqrt(n)

    def test_child_replaces_fields(self):
        s = RngStream(1, purpose="a")
        c = s.child(level=2, replicate=3)
        assert (c.seed, c.level, c.replicate, c.purpose) == (1, 2, 3, "a")


class TestIidSample:
    def test_deterministic_unit_interval(self):
        space = InputSpace(((0.0, 1.0),))
        d1 = iid_sample(space, 3, RngStream(5))
        d2 = iid_sample(space, 3, RngStream(5))
        assert d1.points.shape == (3, 1)
        assert np.all((0 <= d1.points) & (d1.points <= 1))
        assert np.array_equal(d1.points, d2.points)

    def test_benchmark_bounds_column_means(self, bench_space):
        n = 10_000
        doe = iid_sample(bench_space, n, RngStream(42))
        sigma = bench_space.widths / np.sqrt(12.0 * n)
        assert np.all(np.abs(doe.points.mean(axis=0) - bench_space.midpoint) < 3 * sigma)

    def test_empty_request_rejected(self):
        with pytest.raises(EmptyDesignError):
            iid_sample(UNIT2, 0, RngStream(1))


def is_lhs(doe: Doe) -> bool:
    u = doe.unit_points()
    n = doe.n
    strata = np.floor(u * n).astype(int)
    strata = np.clip(strata, 0, n - 1)
    return all(sorted(strata[:, j]) == list(range(n)) for j in range(doe.d))


class TestLhs:
    def test_each_column_is_stratified(self):
        doe = lhs_sample(UNIT2, 8, RngStream(3))
        assert doe.kind == "lhs"
        assert is_lhs(doe)

    def test_marginal_uniformity_bound(self):
        doe = lhs_sample(UNIT2, 32, RngStream(4))
        u = np.sort(doe.unit_points(), axis=0)
        n = doe.n
        # empirical CDF at strata boundaries is within 1/n of uniform
        for j in range(doe.d):
            cdf_err = np.abs(u[:, j] - (np.arange(1, n + 1) - 0.5) / n)
            assert np.all(cdf_err <= 1.0 / n + 1e-12)

    @pytest.mark.parametrize("seed", range(0, 100, 7))
    def test_anneal_never_worse_than_initial(self, seed):
        space = UNIT2
        stream = RngStream(seed)
        initial = lhs_sample(space, 24, stream, anneal=AnnealSchedule(iterations=0))
        annealed = lhs_sample(space, 24, stream, anneal=AnnealSchedule(iterations=400))
        assert is_lhs(annealed)
        assert centered_l2_discrepancy(annealed) <= centered_l2_discrepancy(initial) + 1e-15

    def test_anneal_all_seeds_improve_or_tie(self):
        worse = 0
        for seed in range(100):
            stream = RngStream(1000 + seed)
            base = centered_l2_discrepancy(lhs_sample(UNIT2, 16, stream, AnnealSchedule(iterations=0)))
            ann = centered_l2_discrepancy(lhs_sample(UNIT2, 16, stream, AnnealSchedule(iterations=200)))
            worse += ann > base + 1e-15
        assert worse == 0

    def test_beats_random_design(self):
        space = UNIT2
        wins = 0
        for seed in range(100):
            rand = iid_sample(space, 64, RngStream(seed, purpose="rand"))
            lhs = lhs_sample(space, 64, RngStream(seed, purpose="lhs"), AnnealSchedule(iterations=0))
            wins += centered_l2_discrepancy(lhs) < centered_l2_discrepancy(rand)
        assert wins >= 95

    def test_large_design_within_time_budget(self, bench_space):
        import time

        t0 = time.time()
        doe = lhs_sample(bench_space, 800, RngStream(8))
        assert time.time() - t0 < 10.0
        assert is_lhs(doe)

    def test_too_small_rejected(self):
        with pytest.raises(EmptyDesignError):
            lhs_sample(UNIT2, 1, RngStream(1))


class TestDiscrepancy:
    def test_single_midpoint_value(self):
        space = InputSpace(((0.0, 1.0),))
        doe = Doe(points=np.array([[0.5]]), space=space, seed=0, kind="iid")
        assert centered_l2_discrepancy(doe) == pytest.approx(1.0 / 12.0, abs=1e-14)

    def test_matches_scipy_oracle(self):
        rng = np.random.default_rng(0)
        u = rng.random((40, 3))
        space = InputSpace(((0.0, 1.0),) * 3)
        doe = Doe(points=u, space=space, seed=0, kind="iid")
        oracle = qmc.discrepancy(u, method="CD")
        assert centered_l2_discrepancy(doe) == pytest.approx(oracle, rel=1e-10)

    def test_coordinate_permutation_invariant(self):
        rng = np.random.default_rng(1)
        u = rng.random((20, 3))
        space = InputSpace(((0.0, 1.0),) * 3)
        a = centered_l2_discrepancy(Doe(points=u, space=space, seed=0, kind="iid"))
        b = centered_l2_discrepancy(Doe(points=u[:, [2, 0, 1]], space=space, seed=0, kind="iid"))
        assert a == pytest.approx(b, rel=1e-12)

    def test_rescaling_is_internal(self):
        # same unit-cube geometry expressed on shifted bounds gives the same value
        rng = np.random.default_rng(2)
        u = rng.random((15, 2))
        space2 = InputSpace(((-3.0, 5.0), (10.0, 11.0)))
        a = centered_l2_discrepancy(Doe(points=u, space=UNIT2, seed=0, kind="iid"))
        b = centered_l2_discrepancy(
            Doe(points=space2.from_unit(u), space=space2, seed=0, kind="iid")
        )
        assert a == pytest.approx(b, rel=1e-10)


class TestNestedSubset:
    def test_full_size_returns_parent(self):
        parent = lhs_sample(UNIT2, 10, RngStream(1))
        sub = nested_subset(parent, 10, 5, RngStream(2))
        assert np.array_equal(sub.points, parent.points)

    def test_rows_are_parent_rows(self):
        parent = lhs_sample(UNIT2, 30, RngStream(3))
        sub = nested_subset(parent, 12, 200, RngStream(4))
        assert sub.kind == "nested-subset"
        parent_rows = {tuple(r) for r in parent.points}
        assert all(tuple(r) in parent_rows for r in sub.points)

    def test_beats_median_random_subset(self, bench_space):
        parent = lhs_sample(bench_space, 200, RngStream(5))
        sub = nested_subset(parent, 100, 2000, RngStream(6))
        rng = np.random.default_rng(0)
        vals = []
        for _ in range(60):
            idx = rng.choice(parent.n, 100, replace=False)
            vals.append(
                centered_l2_discrepancy(
                    Doe(points=parent.points[idx], space=bench_space, seed=0, kind="iid")
                )
            )
        assert centered_l2_discrepancy(sub) <= np.median(vals)

    def test_single_point_minimizer(self):
        parent = lhs_sample(UNIT2, 12, RngStream(7))
        # pool large enough to visit every singleton with high probability
        sub = nested_subset(parent, 1, 500, RngStream(8))
        singles = [
            centered_l2_discrepancy(Doe(points=parent.points[[i]], space=UNIT2, seed=0, kind="iid"))
            for i in range(parent.n)
        ]
        assert centered_l2_discrepancy(sub) == pytest.approx(min(singles), rel=1e-12)

    def test_oversized_subset_rejected(self):
        parent = lhs_sample(UNIT2, 6, RngStream(9))
        with pytest.raises(DesignSizeError):
            nested_subset(parent, 7, 10, RngStream(10))

    def test_deterministic(self):
        parent = lhs_sample(UNIT2, 25, RngStream(11))
        a = nested_subset_indices(parent, 9, 300, RngStream(12))
        b = nested_subset_indices(parent, 9, 300, RngStream(12))
        assert np.array_equal(a, b)


class TestDoeSerialization:
    def test_csv_round_trip(self, tmp_path):
        doe = lhs_sample(InputSpace(((-1.0, 2.0), (0.5, 0.75))), 7, RngStream(13))
        path = tmp_path / "design.csv"
        doe.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "x1,x2"
        back = Doe.from_csv(path)
        assert np.array_equal(back.points, doe.points)
        assert back.kind == doe.kind and back.seed == doe.seed
        assert back.space == doe.space

    def test_out_of_bounds_rejected(self):
        with pytest.raises(ValueError):
            Doe(points=np.array([[2.0, 0.0]]), space=UNIT2, seed=0, kind="iid")


class TestKernelBackends:
    def test_backend_reported(self):
        assert kernels.BACKEND in ("python", "compiled")

    def test_subset_scores_match_direct_evaluation(self):
        from mlcv import _discrepancy_py as impl

        rng = np.random.default_rng(3)
        u = rng.random((20, 3))
        v, pair = impl.pair_tables(u)
        idx = np.array([rng.choice(20, 8, replace=False) for _ in range(16)])
        scores = impl.subset_scores(v, pair, idx, 3)
        for row, score in zip(idx, scores):
            assert score == pytest.approx(impl.cd2_sq(u[row]), rel=1e-12)

    def test_anneal_incremental_matches_recompute(self):
        from mlcv import _discrepancy_py as impl

        rng = np.random.default_rng(4)
        n, d = 12, 3
        u = np.empty((n, d))
        for j in range(d):
            u[:, j] = (rng.permutation(n) + rng.random(n)) / n
        steps = 600
        best_u, best_val, init_val = impl.anneal(
            u,
            rng.integers(0, d, steps),
            rng.integers(0, n, steps),
            rng.integers(0, n, steps),
            rng.random(steps),
            1e-5 * 0.99 ** np.arange(steps),
        )
        assert init_val == pytest.approx(impl.cd2_sq(u), rel=1e-12)
        assert best_val == pytest.approx(impl.cd2_sq(best_u), rel=1e-9)
        assert best_val <= init_val

    def test_compiled_matches_python(self):
        cy = pytest.importorskip("mlcv._discrepancy_cy")
        from mlcv import _discrepancy_py as py

        rng = np.random.default_rng(5)
        u = rng.random((30, 4))
        assert cy.cd2_sq(u) == pytest.approx(py.cd2_sq(u), rel=1e-12)
        v1, p1 = py.pair_tables(u)
        v2, p2 = cy.pair_tables(u)
        assert np.allclose(v1, v2, rtol=1e-13)
        assert np.allclose(p1, p2, rtol=1e-13)
        idx = np.array([rng.choice(30, 10, replace=False) for _ in range(8)])
        assert np.allclose(
            py.subset_scores(v1, p1, idx, 4), cy.subset_scores(v2, p2, idx, 4), rtol=1e-9
        )


class TestAnnealBackendContract:
    def test_compiled_anneal_contract(self):
        cy = pytest.importorskip("mlcv._discrepancy_cy")
        rng = np.random.default_rng(6)
        n, d = 24, 3
        u = np.empty((n, d))
        for j in range(d):
            u[:, j] = (rng.permutation(n) + rng.random(n)) / n
        steps = 400
        args = (
            rng.integers(0, d, steps),
            rng.integers(0, n, steps),
            rng.integers(0, n, steps),
            rng.random(steps),
            1e-6 * 0.995 ** np.arange(steps),
        )
        best_u, best_val, init_val = cy.anneal(u, *args)
        from mlcv import _discrepancy_py as py

        assert init_val == pytest.approx(py.cd2_sq(u), rel=1e-12)
        assert best_val == pytest.approx(py.cd2_sq(best_u), rel=1e-9)
        assert best_val <= init_val
        # the move preserves the LHS property
        strata = np.floor(best_u * n).astype(int)
        assert all(sorted(strata[:, j]) == list(range(n)) for j in range(d))


try:
    from hypothesis import given, settings
    from hypothesis import strategies as st

    class TestSubsetInclusionProperty:
        @given(
            n=st.integers(min_value=3, max_value=24),
            m_frac=st.floats(min_value=0.1, max_value=1.0),
            seed=st.integers(min_value=0, max_value=10_000),
        )
        @settings(max_examples=40, deadline=None)
        def test_rows_always_subset(self, n, m_frac, seed):
            m = max(1, int(round(m_frac * n)))
            parent = lhs_sample(UNIT2, n, RngStream(seed, purpose="hyp"))
            sub = nested_subset(parent, m, 20, RngStream(seed, purpose="hyp-sub"))
            parent_rows = {tuple(r) for r in parent.points}
            assert sub.n == m
            assert all(tuple(r) in parent_rows for r in sub.points)
except ImportError:  # hypothesis is an optional test dependency
    pass
