"""Shared fixtures: benchmark objects and surrogate suites.

The production-quality suite reproduces the reference surrogate setup
(800/400/200/100 nested training points, degree-adaptive sparse fits) and
takes about a minute to build, so it is session scoped and shared by the
acceptance tests. Module tests that only need structure use the small
suite.
"""
from __future__ import annotations

import numpy as np
import pytest

from mlcv.estimators import SurrogateSuite
from mlcv.harness import SurrogatePlan, build_surrogate_suite
from mlcv.heatbench import HeatConfig, hierarchy, input_space
from mlcv.pce import PcSurrogate, combine_pc, total_degree_set
from mlcv.sampling import InputSpace, RngStream


@pytest.fixture(scope="session")
def cfg():
    return HeatConfig()


@pytest.fixture(scope="session")
def bench(cfg):
    return hierarchy(cfg)


@pytest.fixture(scope="session")
def bench_space(cfg):
    return input_space(cfg)


@pytest.fixture(scope="session")
def small_build(cfg):
    plan = SurrogatePlan(
        doe_sizes=(120, 80, 50, 30),
        p_max=2,
        max_terms=25,
        pool=300,
        test_size=400,
        anneal_iterations=200,
    )
    return build_surrogate_suite(cfg, plan, RngStream(99, purpose="suite")), plan


@pytest.fixture(scope="session")
def small_suite(small_build):
    return small_build[0].suite


@pytest.fixture(scope="session")
def full_build(cfg):
    plan = SurrogatePlan()
    return build_surrogate_suite(cfg, plan, RngStream(1234, purpose="suite")), plan


@pytest.fixture(scope="session")
def full_suite(full_build):
    return full_build[0].suite


def synthetic_pc_hierarchy(seed: int = 3, n_levels: int = 3, d: int = 2):
    """Level hierarchy whose simulators are themselves sparse PC models.

    Differences of consecutive levels are then exactly representable, which
    gives perfectly correlated controls for degenerate-case tests.
    """
    from mlcv.heatbench import LevelHierarchy

    rng = np.random.default_rng(seed)
    space = InputSpace(tuple((-1.0, 1.0) for _ in range(d)))
    indices = total_degree_set(d, 2)
    models = []
    coeffs = np.zeros(indices.shape[0])
    for level in range(n_levels):
        bump = 0.5 ** np.arange(indices.shape[0]) * rng.normal(size=indices.shape[0]) * 0.5**level
        coeffs = coeffs + bump
        models.append(
            PcSurrogate(space=space, indices=indices, coeffs=coeffs.copy())
        )
    hier = LevelHierarchy(
        evaluators=tuple(models),
        costs=tuple(2.0 ** (l - n_levels + 1) for l in range(n_levels)),
        space=space,
    )
    diffs = [combine_pc(models[l], models[l - 1], 1.0, -1.0) for l in range(1, n_levels)]
    suite = SurrogateSuite.from_pc(models, diffs)
    return hier, suite, models
