"""Uncertain 1D heat-equation benchmark.

A rod of unit length with homogeneous Dirichlet boundaries, random initial
condition and random diffusivity. The output is the integrated temperature
at the final time. Level ``l`` approximates the output with a truncated
sine expansion whose quadratures use ``level_nodes[l]`` equispaced
trapezoid nodes; refinement doubles the node count and the evaluation
cost. All level evaluators are pure and vectorized over input batches.

The seven uncertain inputs are independent and uniform: three shape
parameters on [-pi, pi], the diffusivity on [nu_min, nu_max] and three
amplitude parameters on [-1, 1].
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError, LevelRangeError
from .sampling import InputSpace

__all__ = [
    "HeatConfig",
    "LevelHierarchy",
    "input_space",
    "evaluate_level",
    "hierarchy",
    "exact_expectation",
    "exact_level_mean",
    "exact_level_variance",
    "exact_correction_mean",
    "exact_correction_variance",
    "correction_cost",
]


@dataclass(frozen=True)
class HeatConfig:
    """Benchmark configuration.

    ``level_costs`` are normalized so the finest level costs 1; they are
    fixed constants rather than wall-clock measurements, which keeps
    error-versus-budget results machine independent.
    """

    modes: int = 21
    final_time: float = 0.5
    nu_min: float = 0.001
    nu_max: float = 0.009
    level_nodes: tuple[int, ...] = (15, 30, 60, 120)
    level_costs: tuple[float, ...] = (0.125, 0.25, 0.5, 1.0)

    def __post_init__(self):
        if self.modes < 1:
            raise ConfigError("mode count must be at least 1")
        if not 0 < self.nu_min < self.nu_max:
            raise ConfigError("diffusivity bounds must satisfy 0 < nu_min < nu_max")
        nodes = tuple(int(n) for n in self.level_nodes)
        costs = tuple(float(c) for c in self.level_costs)
        if len(nodes) != len(costs) or not nodes:
            raise ConfigError("level_nodes and level_costs must be non-empty and aligned")
        if any(n < 2 for n in nodes) or any(b <= a for a, b in zip(nodes, nodes[1:])):
            raise ConfigError("node counts must be >= 2 and strictly increasing")
        if any(c <= 0 for c in costs):
            raise ConfigError("costs must be positive")
        costs = tuple(c / costs[-1] for c in costs)
        object.__setattr__(self, "level_nodes", nodes)
        object.__setattr__(self, "level_costs", costs)

    @property
    def n_levels(self) -> int:
        return len(self.level_nodes)

    @property
    def finest(self) -> int:
        return self.n_levels - 1

    def as_dict(self) -> dict:
        return {
            "K": self.modes,
            "T": self.final_time,
            "nu_min": self.nu_min,
            "nu_max": self.nu_max,
            "levels": {"nodes": list(self.level_nodes), "costs": list(self.level_costs)},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "HeatConfig":
        try:
            levels = data.get("levels", {})
            return cls(
                modes=data.get("K", 21),
                final_time=data.get("T", 0.5),
                nu_min=data.get("nu_min", 0.001),
                nu_max=data.get("nu_max", 0.009),
                level_nodes=tuple(levels.get("nodes", (15, 30, 60, 120))),
                level_costs=tuple(levels.get("costs", (0.125, 0.25, 0.5, 1.0))),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"malformed benchmark config: {exc}") from exc


def input_space(cfg: HeatConfig) -> InputSpace:
    pi = np.pi
    return InputSpace(
        (
            (-pi, pi),
            (-pi, pi),
            (-pi, pi),
            (cfg.nu_min, cfg.nu_max),
            (-1.0, 1.0),
            (-1.0, 1.0),
            (-1.0, 1.0),
        )
    )


def _check_level(cfg: HeatConfig, level: int) -> None:
    if not 0 <= level < cfg.n_levels:
        raise LevelRangeError(f"level {level} outside 0..{cfg.finest}")


def _quadrature_tables(cfg: HeatConfig, level: int):
    """Per-level quadrature sums.

    With trapezoid nodes ``x_i`` and weights ``w_i`` on [0, 1], returns for
    each mode k the sums of ``w sin(k pi x)`` against 1, the single-mode
    initial profile and the multi-mode initial profile. The initial
    condition is bilinear in its two random amplitudes, so these tables
    capture the whole spatial quadrature and evaluation reduces to
    exponentials in the diffusivity.
    """
    n_nodes = cfg.level_nodes[level]
    x = np.linspace(0.0, 1.0, n_nodes)
    w = np.full(n_nodes, 1.0 / (n_nodes - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    k = np.arange(1, cfg.modes + 1)
    sin_kx = np.sin(np.pi * np.outer(k, x))
    profile_a = np.sin(np.pi * x)
    profile_b = (
        np.sin(2 * np.pi * x)
        + np.sin(3 * np.pi * x)
        + 50.0 * (np.sin(9 * np.pi * x) + np.sin(21 * np.pi * x))
    )
    s_unit = sin_kx @ w
    s_a = sin_kx @ (w * profile_a)
    s_b = sin_kx @ (w * profile_b)
    return s_unit, s_a, s_b


def _mode_rates(cfg: HeatConfig) -> np.ndarray:
    k = np.arange(1, cfg.modes + 1)
    return k**2 * np.pi**2 * cfg.final_time


def _level_coefficients(cfg: HeatConfig, level: int):
    """Coefficient vectors (per mode) multiplying exp(-nu k^2 pi^2 T) in the
    amplitude-factored form of the level output."""
    s_unit, s_a, s_b = _quadrature_tables(cfg, level)
    return 2.0 * s_unit * s_a, 2.0 * s_unit * s_b


def _amplitudes(points: np.ndarray):
    amp_prod = (
        50.0
        * (4.0 * np.abs(points[:, 4]) - 1.0)
        * (4.0 * np.abs(points[:, 5]) - 1.0)
        * (4.0 * np.abs(points[:, 6]) - 1.0)
    )
    amp_mix = 3.5 * (
        np.sin(points[:, 0])
        + 7.0 * np.sin(points[:, 1]) ** 2
        + 0.1 * points[:, 2] ** 4 * np.sin(points[:, 0])
    )
    return amp_prod, amp_mix


def evaluate_level(cfg: HeatConfig, level: int, points: np.ndarray) -> np.ndarray:
    """Level-``level`` output at one point or a batch of points.

    Accepts shape (7,) or (n, 7); returns a scalar or an (n,) array.
    """
    _check_level(cfg, level)
    pts = np.asarray(points, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != 7:
        raise ValueError("benchmark points live in 7 dimensions")
    coef_a, coef_b = _level_coefficients(cfg, level)
    rates = _mode_rates(cfg)
    amp_prod, amp_mix = _amplitudes(pts)
    decay = np.exp(-np.outer(pts[:, 3], rates))
    out = amp_prod * (decay @ coef_a) + amp_mix * (decay @ coef_b)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class LevelHierarchy:
    """Ordered simulators with their per-level evaluation costs."""

    evaluators: tuple[Callable[[np.ndarray], np.ndarray], ...]
    costs: tuple[float, ...]
    space: InputSpace

    @property
    def n_levels(self) -> int:
        return len(self.evaluators)

    @property
    def finest(self) -> int:
        return self.n_levels - 1

    def correction_cost(self, level: int) -> float:
        """Cost of one correction sample at ``level`` (both simulators)."""
        if not 0 <= level < self.n_levels:
            raise LevelRangeError(f"level {level} outside 0..{self.finest}")
        prev = self.costs[level - 1] if level > 0 else 0.0
        return self.costs[level] + prev

    def correction_costs(self) -> np.ndarray:
        return np.array([self.correction_cost(l) for l in range(self.n_levels)])


def hierarchy(cfg: HeatConfig) -> LevelHierarchy:
    """Level hierarchy of benchmark evaluators with the configured costs."""

    def make(level):
        tables = _level_coefficients(cfg, level)
        rates = _mode_rates(cfg)

        def f(points, _tables=tables, _rates=rates):
            pts = np.atleast_2d(np.asarray(points, dtype=float))
            amp_prod, amp_mix = _amplitudes(pts)
            decay = np.exp(-np.outer(pts[:, 3], _rates))
            return amp_prod * (decay @ _tables[0]) + amp_mix * (decay @ _tables[1])

        return f

    evals = tuple(make(l) for l in range(cfg.n_levels))
    return LevelHierarchy(evaluators=evals, costs=cfg.level_costs, space=input_space(cfg))


def correction_cost(cfg: HeatConfig, level: int) -> float:
    """Per-sample cost of the level-``level`` correction term."""
    _check_level(cfg, level)
    prev = cfg.level_costs[level - 1] if level > 0 else 0.0
    return cfg.level_costs[level] + prev


def exact_expectation(cfg: HeatConfig) -> float:
    """Exact expectation of the continuous (non-discretized) output.

    Only the odd sine modes present in the initial condition contribute;
    the diffusivity integral has a closed form on a uniform interval.
    """
    k = np.array([1, 3, 9, 21])
    t = cfg.final_time
    h = (
        2.0
        * (np.exp(-cfg.nu_min * k**2 * np.pi**2 * t) - np.exp(-cfg.nu_max * k**2 * np.pi**2 * t))
        / (k**3 * np.pi**3 * t * (cfg.nu_max - cfg.nu_min))
    )
    return float(50.0 * h[0] + 49.0 / 4.0 * (h[1] + 50.0 * h[2] + 50.0 * h[3]))


# moments of the two independent amplitude factors (closed form)
def _amplitude_moments():
    mean_prod = 50.0  # 50 * (4 E|U| - 1)^3 with E|U| = 1/2
    sq_prod = 2500.0 * (16.0 / 3.0 - 4.0 + 1.0) ** 3
    mean_mix = 3.5 * 3.5  # 3.5 * 7 * E[sin^2] with E[sin^2] = 1/2
    e_x4 = np.pi**4 / 5.0
    e_x8 = np.pi**8 / 9.0
    sq_mix = 3.5**2 * (0.5 * (1.0 + 0.2 * e_x4 + 0.01 * e_x8) + 49.0 * 3.0 / 8.0)
    return mean_prod, sq_prod, mean_mix, sq_mix


def _decay_mean(cfg: HeatConfig, rates: np.ndarray) -> np.ndarray:
    dn = cfg.nu_max - cfg.nu_min
    return (np.exp(-cfg.nu_min * rates) - np.exp(-cfg.nu_max * rates)) / (rates * dn)


def _correction_coefficients(cfg: HeatConfig, level: int):
    coef_a, coef_b = _level_coefficients(cfg, level)
    if level > 0:
        prev_a, prev_b = _level_coefficients(cfg, level - 1)
        coef_a = coef_a - prev_a
        coef_b = coef_b - prev_b
    return coef_a, coef_b


def exact_level_mean(cfg: HeatConfig, level: int) -> float:
    """Exact expectation of the level-``level`` output (quadrature included)."""
    _check_level(cfg, level)
    coef_a, coef_b = _level_coefficients(cfg, level)
    rates = _mode_rates(cfg)
    e_decay = _decay_mean(cfg, rates)
    mean_prod, _, mean_mix, _ = _amplitude_moments()
    return float(mean_prod * coef_a @ e_decay + mean_mix * coef_b @ e_decay)


def exact_correction_mean(cfg: HeatConfig, level: int) -> float:
    """Exact expectation of the correction ``Y_l - Y_{l-1}`` (``Y_0`` at level 0)."""
    _check_level(cfg, level)
    if level == 0:
        return exact_level_mean(cfg, 0)
    return exact_level_mean(cfg, level) - exact_level_mean(cfg, level - 1)


def _bilinear_variance(cfg: HeatConfig, coef_a: np.ndarray, coef_b: np.ndarray) -> float:
    """Variance of an output bilinear in the two independent amplitude factors.

    The mode decays depend only on the diffusivity, so all second moments
    reduce to closed forms of the uniform input distributions.
    """
    rates = _mode_rates(cfg)
    e_decay = _decay_mean(cfg, rates)
    pair_rates = rates[:, None] + rates[None, :]
    dn = cfg.nu_max - cfg.nu_min
    e_decay2 = (np.exp(-cfg.nu_min * pair_rates) - np.exp(-cfg.nu_max * pair_rates)) / (
        pair_rates * dn
    )
    mean_prod, sq_prod, mean_mix, sq_mix = _amplitude_moments()
    e_pp = coef_a @ e_decay2 @ coef_a
    e_qq = coef_b @ e_decay2 @ coef_b
    e_pq = coef_a @ e_decay2 @ coef_b
    mean = mean_prod * coef_a @ e_decay + mean_mix * coef_b @ e_decay
    second = sq_prod * e_pp + 2.0 * mean_prod * mean_mix * e_pq + sq_mix * e_qq
    return float(second - mean**2)


def exact_level_variance(cfg: HeatConfig, level: int) -> float:
    """Exact variance of the level-``level`` output."""
    _check_level(cfg, level)
    return _bilinear_variance(cfg, *_level_coefficients(cfg, level))


def exact_correction_variance(cfg: HeatConfig, level: int) -> float:
    """Exact variance of the correction ``Y_l - Y_{l-1}`` (``Y_0`` at level 0)."""
    _check_level(cfg, level)
    return _bilinear_variance(cfg, *_correction_coefficients(cfg, level))
