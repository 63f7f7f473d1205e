"""Taylor-polynomial surrogates with analytic moments.

Includes the generic first/second-order expansions around the input mean
and the benchmark-specific piecewise first-order surrogate, which handles
the absolute-value amplitude factors whose derivatives do not exist at
zero by expanding one-sidedly and carrying the exact mean correction.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import NonFiniteDerivativeError
from .heatbench import HeatConfig, _check_level, _level_coefficients, _mode_rates
from .sampling import InputSpace

__all__ = ["TaylorSurrogate", "PiecewiseT1", "t_fit", "t_moments", "heat_t1"]


@dataclass(frozen=True)
class TaylorSurrogate:
    """First or second-order expansion of an evaluator around a center point.

    ``input_variances`` are the per-coordinate variances used by the moment
    formulas; the second-order variance uses the uncorrelated-Gaussian
    moment closure.
    """

    order: int
    center: np.ndarray
    value: float
    jacobian: np.ndarray
    input_variances: np.ndarray
    hessian: np.ndarray | None = None

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        center = np.asarray(self.center, dtype=float)
        jac = np.asarray(self.jacobian, dtype=float)
        var = np.asarray(self.input_variances, dtype=float)
        if jac.shape != center.shape or var.shape != center.shape:
            raise ValueError("jacobian and input variances must match the center shape")
        if np.any(var < 0):
            raise ValueError("input variances must be nonnegative")
        hess = self.hessian
        if self.order == 2:
            if hess is None:
                raise ValueError("order 2 requires a hessian")
            hess = np.asarray(hess, dtype=float)
            if hess.shape != (center.size, center.size):
                raise ValueError("hessian shape mismatch")
            if not np.allclose(hess, hess.T, atol=1e-12, rtol=1e-12):
                raise ValueError("hessian must be symmetric")
            hess = 0.5 * (hess + hess.T)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "jacobian", jac)
        object.__setattr__(self, "input_variances", var)
        object.__setattr__(self, "hessian", hess)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        dx = pts - self.center
        out = self.value + dx @ self.jacobian
        if self.order == 2:
            out = out + 0.5 * np.einsum("ni,ij,nj->n", dx, self.hessian, dx)
        return float(out[0]) if scalar else out

    @property
    def mean(self) -> float:
        return t_moments(self)[0]

    @property
    def variance(self) -> float:
        return t_moments(self)[1]


def _fd_jacobian(f: Callable, center: np.ndarray, steps: np.ndarray) -> np.ndarray:
    d = center.size
    jac = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        jac[i] = (f(center + e) - f(center - e)) / (2.0 * steps[i])
    return jac


def _fd_hessian(f: Callable, center: np.ndarray, steps: np.ndarray, f0: float) -> np.ndarray:
    d = center.size
    hess = np.empty((d, d))
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        hess[i, i] = (f(center + e) - 2.0 * f0 + f(center - e)) / steps[i] ** 2
        for j in range(i + 1, d):
            ej = np.zeros(d)
            ej[j] = steps[j]
            hess[i, j] = hess[j, i] = (
                f(center + e + ej) - f(center + e - ej) - f(center - e + ej) + f(center - e - ej)
            ) / (4.0 * steps[i] * steps[j])
    return hess


def t_fit(
    f: Callable,
    center: np.ndarray,
    order: int = 1,
    *,
    space: InputSpace | None = None,
    input_variances: np.ndarray | None = None,
    jacobian: np.ndarray | None = None,
    hessian: np.ndarray | None = None,
    fd_step: float | np.ndarray | None = None,
) -> TaylorSurrogate:
    """Expand ``f`` around ``center`` to the requested order.

    Derivatives may be supplied analytically (``jacobian``/``hessian``
    arrays) or estimated by central finite differences with per-coordinate
    step ``fd_step`` (default 1e-6 times the interval width, which needs
    ``space``). Input variances default to the uniform variances of
    ``space``.
    """
    center = np.asarray(center, dtype=float)
    if input_variances is None:
        if space is None:
            raise ValueError("provide input_variances or a space to derive them from")
        input_variances = space.variances
    value = float(f(center))
    if not np.isfinite(value):
        raise NonFiniteDerivativeError("evaluator not finite at the center")
    if jacobian is None or (order == 2 and hessian is None):
        if fd_step is None:
            if space is None:
                raise ValueError("finite differences need fd_step or a space")
            steps = 1e-6 * space.widths
        else:
            steps = np.broadcast_to(np.asarray(fd_step, dtype=float), center.shape).copy()
        fs = lambda x: float(f(x))
        if jacobian is None:
            jacobian = _fd_jacobian(fs, center, steps)
        if order == 2 and hessian is None:
            hessian = _fd_hessian(fs, center, steps, value)
    jacobian = np.asarray(jacobian, dtype=float)
    if not np.all(np.isfinite(jacobian)):
        raise NonFiniteDerivativeError("non-finite jacobian estimate")
    if order == 2 and not np.all(np.isfinite(hessian)):
        raise NonFiniteDerivativeError("non-finite hessian estimate")
    return TaylorSurrogate(
        order=order,
        center=center,
        value=value,
        jacobian=jacobian,
        input_variances=np.asarray(input_variances, dtype=float),
        hessian=hessian if order == 2 else None,
    )


def t_moments(surrogate: TaylorSurrogate) -> tuple[float, float]:
    """Analytic (mean, variance) of the expansion under independent inputs.

    Order 1 is exact for any input law with the given variances. Order 2
    adds half the trace of the Hessian against the input covariance to the
    mean, and the element-wise squared Hessian term to the variance.
    """
    var = surrogate.input_variances
    mean = surrogate.value
    variance = float(surrogate.jacobian**2 @ var)
    if surrogate.order == 2:
        h = surrogate.hessian
        mean = mean + 0.5 * float(np.diag(h) @ var)
        variance = variance + 0.5 * float(var @ (h**2) @ var)
    return float(mean), float(variance)


@dataclass(frozen=True)
class PiecewiseT1:
    """Benchmark piecewise first-order surrogate for one level.

    The three amplitude inputs enter the simulator through absolute
    values, so the one-sided expansions fold into terms proportional to
    ``|x|``; the two inputs with zero directional sensitivity at the
    center drop out. The exact mean carries the fold correction (the
    plain center-value identity no longer holds). ``mean`` and
    ``variance`` are exact under the benchmark input distributions.
    """

    level: int
    center: np.ndarray
    center_value: float
    coeff_sine_amp: float
    coeff_diffusivity: float
    coeff_fold: float
    mean: float
    variance: float

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        scalar = pts.ndim == 1
        pts = np.atleast_2d(pts)
        out = (
            self.center_value
            + self.coeff_sine_amp * pts[:, 0]
            + self.coeff_diffusivity * (pts[:, 3] - self.center[3])
            + self.coeff_fold * (np.abs(pts[:, 4]) + np.abs(pts[:, 5]) + np.abs(pts[:, 6]))
        )
        return float(out[0]) if scalar else out


def heat_t1(cfg: HeatConfig, level: int) -> PiecewiseT1:
    """Piecewise first-order surrogate of the benchmark at one level.

    Expansion center is the input mean. The directional terms reduce to a
    linear sine-amplitude term, a linear diffusivity term and a common
    fold coefficient on the absolute amplitude inputs; the exact mean adds
    the fold coefficient times the mean absolute values.
    """
    _check_level(cfg, level)
    center = np.array([0.0, 0.0, 0.0, 0.5 * (cfg.nu_min + cfg.nu_max), 0.0, 0.0, 0.0])
    coef_a, coef_b = _level_coefficients(cfg, level)
    rates = _mode_rates(cfg)
    decay_mu = np.exp(-center[3] * rates)
    modes_sq = np.arange(1, cfg.modes + 1) ** 2
    # coef_a = 2 * s_unit * s_profile_a, coef_b = 2 * s_unit * s_profile_b;
    # product amplitude at the center is -50, mix amplitude is 0
    center_value = -50.0 * float(coef_a @ decay_mu)
    coeff_sine_amp = 3.5 * float(coef_b @ decay_mu)
    coeff_diffusivity = 50.0 * cfg.final_time * np.pi**2 * float((modes_sq * decay_mu) @ coef_a)
    coeff_fold = 200.0 * float(coef_a @ decay_mu)
    mean = center_value + 1.5 * coeff_fold
    variance = (
        coeff_sine_amp**2 * np.pi**2 / 3.0
        + coeff_diffusivity**2 * (cfg.nu_max - cfg.nu_min) ** 2 / 12.0
        + 3.0 * coeff_fold**2 / 12.0  # variance of |U[-1,1]| is 1/12
    )
    return PiecewiseT1(
        level=level,
        center=center,
        center_value=center_value,
        coeff_sine_amp=coeff_sine_amp,
        coeff_diffusivity=coeff_diffusivity,
        coeff_fold=coeff_fold,
        mean=mean,
        variance=float(variance),
    )
