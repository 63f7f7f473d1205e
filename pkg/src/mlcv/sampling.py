"""Deterministic random streams, uniform and latin-hypercube designs.

Sampling is organized around splittable streams: every operation takes an
:class:`RngStream` and is pure given its inputs, so per-level samples in
multilevel estimators are independent by construction (distinct stream ids)
rather than by bookkeeping.
"""
from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import kernels
from .errors import DesignSizeError, EmptyDesignError

__all__ = [
    "InputSpace",
    "RngStream",
    "Doe",
    "AnnealSchedule",
    "iid_sample",
    "lhs_sample",
    "centered_l2_discrepancy",
    "nested_subset",
    "nested_subset_indices",
]


@dataclass(frozen=True)
class InputSpace:
    """Hyper-rectangular input domain with independent uniform coordinates.

    Parameters
    ----------
    bounds:
        Sequence of ``(lower, upper)`` pairs, one per dimension.
    """

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        object.__setattr__(self, "bounds", bounds)
        if len(bounds) < 1:
            raise ValueError("input space needs at least one dimension")
        for a, b in bounds:
            if not a < b:
                raise ValueError(f"degenerate interval [{a}, {b}]")

    @property
    def dims(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.bounds])

    @property
    def widths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    @property
    def variances(self) -> np.ndarray:
        """Per-coordinate variances of the uniform distribution on the bounds."""
        return self.widths**2 / 12.0

    def to_unit(self, points: np.ndarray) -> np.ndarray:
        """Rescale points to the unit cube."""
        return (np.asarray(points, dtype=float) - self.lower) / self.widths

    def from_unit(self, u: np.ndarray) -> np.ndarray:
        return self.lower + np.asarray(u, dtype=float) * self.widths

    def contains(self, points: np.ndarray, rtol: float = 1e-12) -> bool:
        pts = np.atleast_2d(points)
        pad = rtol * self.widths
        return bool(np.all(pts >= self.lower - pad) and np.all(pts <= self.upper + pad))

    def as_dict(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds]}

    @classmethod
    def from_dict(cls, data: dict) -> "InputSpace":
        return cls(tuple(tuple(b) for b in data["bounds"]))


@dataclass(frozen=True)
class RngStream:
    """Identifier of an independent pseudo-random stream.

    Streams with distinct ``(seed, level, replicate, purpose)`` ids yield
    statistically independent sequences; the same id always reproduces the
    same sequence bit for bit.
    """

    seed: int
    level: int = 0
    replicate: int = 0
    purpose: str = "default"

    def __post_init__(self):
        if self.level < 0 or self.replicate < 0:
            raise ValueError("level and replicate indices must be nonnegative")

    def generator(self) -> np.random.Generator:
        key = (self.level, self.replicate, zlib.crc32(self.purpose.encode()))
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, **fields) -> "RngStream":
        """Derived stream with some id fields replaced."""
        return replace(self, **fields)


@dataclass(frozen=True)
class Doe:
    """Design of experiments: points in an input space plus provenance.

    ``kind`` is one of ``iid``, ``lhs`` or ``nested-subset``.
    """

    points: np.ndarray
    space: InputSpace
    seed: int
    kind: str

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.size == 0:
            raise EmptyDesignError("design has no points")
        if pts.shape[1] != self.space.dims:
            raise ValueError("point dimension does not match input space")
        if not self.space.contains(pts):
            raise ValueError("design points outside space bounds")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def unit_points(self) -> np.ndarray:
        return self.space.to_unit(self.points)

    def to_csv(self, path) -> None:
        """Write points as CSV with header ``x1,...,xd`` plus a metadata sidecar."""
        path = Path(path)
        header = ",".join(f"x{i + 1}" for i in range(self.d))
        lines = [header]
        for row in self.points:
            lines.append(",".join(repr(float(x)) for x in row))
        path.write_text("\n".join(lines) + "\n")
        meta = {"seed": self.seed, "kind": self.kind, "bounds": [list(b) for b in self.space.bounds]}
        path.with_suffix(path.suffix + ".meta.json").write_text(json.dumps(meta, indent=1) + "\n")

    @classmethod
    def from_csv(cls, path) -> "Doe":
        path = Path(path)
        meta = json.loads(path.with_suffix(path.suffix + ".meta.json").read_text())
        rows = path.read_text().strip().splitlines()
        pts = np.array([[float(x) for x in line.split(",")] for line in rows[1:]])
        space = InputSpace(tuple(tuple(b) for b in meta["bounds"]))
        return cls(points=pts, space=space, seed=meta["seed"], kind=meta["kind"])


@dataclass(frozen=True)
class AnnealSchedule:
    """Simulated-annealing schedule for LHS improvement.

    One swap of two entries within a random column is proposed per
    iteration (the move preserves the LHS property). Temperatures follow
    ``initial_temperature * cooling**t``. The best visited design is kept,
    so the annealed discrepancy never exceeds the initial one.
    """

    iterations: int = 10_000
    initial_temperature: float = 1e-6
    cooling: float = 0.999

    def __post_init__(self):
        if self.iterations < 0:
            raise ValueError("iterations must be nonnegative")
        if self.initial_temperature < 0:
            raise ValueError("initial temperature must be nonnegative")
        if not 0 < self.cooling <= 1:
            raise ValueError("cooling factor must lie in (0, 1]")

    def temperatures(self) -> np.ndarray:
        return self.initial_temperature * self.cooling ** np.arange(self.iterations)


def iid_sample(space: InputSpace, n: int, stream: RngStream) -> Doe:
    """Independent uniform sample of ``n`` points.

    Raises
    ------
    EmptyDesignError
        If ``n`` is zero or negative.
    """
    if n < 1:
        raise EmptyDesignError(f"cannot draw a {n}-point sample")
    rng = stream.generator()
    pts = space.from_unit(rng.random((n, space.dims)))
    return Doe(points=pts, space=space, seed=stream.seed, kind="iid")


def _random_lhs_unit(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    u = np.empty((n, d))
    for j in range(d):
        perm = rng.permutation(n)
        u[:, j] = (perm + rng.random(n)) / n
    return u


def lhs_sample(
    space: InputSpace,
    n: int,
    stream: RngStream,
    anneal: AnnealSchedule | None = None,
) -> Doe:
    """Latin hypercube design improved by simulated annealing.

    Starts from a random LHS (one point per stratum and column) and anneals
    it with within-column swaps scored by the centered-L2 discrepancy.
    Pass ``AnnealSchedule(iterations=0)`` for a plain random LHS.
    """
    if n < 2:
        raise EmptyDesignError("an LHS needs at least 2 points")
    schedule = anneal if anneal is not None else AnnealSchedule()
    rng = stream.generator()
    u = _random_lhs_unit(n, space.dims, rng)
    if schedule.iterations > 0:
        steps = schedule.iterations
        cols = rng.integers(0, space.dims, size=steps)
        rows_a = rng.integers(0, n, size=steps)
        rows_b = rng.integers(0, n, size=steps)
        thresholds = rng.random(steps)
        u, _, _ = kernels.anneal(u, cols, rows_a, rows_b, thresholds, schedule.temperatures())
    return Doe(points=space.from_unit(u), space=space, seed=stream.seed, kind="lhs")


def centered_l2_discrepancy(doe: Doe) -> float:
    """Squared centered-L2 discrepancy of a design, computed on [0,1]^d.

    Coordinates are rescaled to the unit cube using the design's own bounds.
    """
    if doe.n < 1:
        raise EmptyDesignError("empty design")
    return float(kernels.cd2_sq(doe.unit_points()))


def nested_subset_indices(parent: Doe, m: int, pool: int, stream: RngStream) -> np.ndarray:
    """Row indices of the best m-subset among ``pool`` random candidates.

    Candidates are uniformly drawn m-subsets of the parent rows; the one
    with minimal centered-L2 discrepancy wins (first minimum on ties).
    Returned indices are sorted in parent order.
    """
    if m > parent.n:
        raise DesignSizeError(f"subset size {m} exceeds parent size {parent.n}")
    if m < 1:
        raise EmptyDesignError("subset must contain at least one point")
    if pool < 1:
        raise ValueError("candidate pool must be positive")
    if m == parent.n:
        return np.arange(parent.n)

    u = parent.unit_points()
    v, pair = kernels.pair_tables(u)
    rng = stream.generator()
    best_score = np.inf
    best_idx = None
    chunk = max(1, min(pool, int(2**22 // max(m * m, m + 1)) or 1))
    remaining = pool
    while remaining > 0:
        b = min(chunk, remaining)
        remaining -= b
        keys = rng.random((b, parent.n))
        idx = np.argpartition(keys, m - 1, axis=1)[:, :m]
        scores = kernels.subset_scores(v, pair, np.ascontiguousarray(idx), parent.d)
        j = int(np.argmin(scores))
        if scores[j] < best_score:
            best_score = float(scores[j])
            best_idx = idx[j].copy()
    return np.sort(best_idx)


def nested_subset(parent: Doe, m: int, pool: int, stream: RngStream) -> Doe:
    """Extract a low-discrepancy m-subset of a parent design (see
    :func:`nested_subset_indices`)."""
    idx = nested_subset_indices(parent, m, pool, stream)
    return Doe(points=parent.points[idx], space=parent.space, seed=stream.seed, kind="nested-subset")
