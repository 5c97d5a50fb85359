"""Collocation point sets for the interval, the L-shape and the unit ball."""

from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LSHAPE_AREA = 3.0
LSHAPE_PERIMETER = 8.0
# unit-length pieces of the L-shape boundary, as (start, end)
LSHAPE_SEGMENTS = np.array([
    [[-1.0, -1.0], [0.0, -1.0]],
    [[0.0, -1.0], [0.0, 0.0]],
    [[0.0, 0.0], [1.0, 0.0]],
    [[1.0, 0.0], [1.0, 1.0]],
    [[1.0, 1.0], [0.0, 1.0]],
    [[0.0, 1.0], [-1.0, 1.0]],
    [[-1.0, 1.0], [-1.0, 0.0]],
    [[-1.0, 0.0], [-1.0, -1.0]],
])
# interior samples closer than this to the re-entrant corner are rejected
CORNER_EXCLUSION = 1e-6


@dataclass(frozen=True)
class Domain:
    kind: str  # "interval" | "lshape" | "ball"
    dim: int

    @classmethod
    def interval(cls) -> "Domain":
        return cls("interval", 1)

    @classmethod
    def lshape(cls) -> "Domain":
        return cls("lshape", 2)

    @classmethod
    def ball(cls, dim: int) -> "Domain":
        if dim < 1:
            raise ValueError("ball dimension must be positive")
        return cls("ball", dim)

    @property
    def volume(self) -> float:
        if self.kind == "interval":
            return 1.0
        if self.kind == "lshape":
            return LSHAPE_AREA
        return ball_volume(self.dim)

    @property
    def boundary_measure(self) -> float:
        if self.kind == "interval":
            return 2.0  # counting measure on {0, 1}
        if self.kind == "lshape":
            return LSHAPE_PERIMETER
        return sphere_area(self.dim)

    def contains(self, x: np.ndarray) -> np.ndarray:
        """Membership in the closed domain."""
        x = np.atleast_2d(x)
        if self.kind == "interval":
            return (x[:, 0] >= 0.0) & (x[:, 0] <= 1.0)
        if self.kind == "lshape":
            return lshape_contains(x)
        return (x * x).sum(1) <= 1.0 + 1e-12


def ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def sphere_area(dim: int) -> float:
    """Surface measure of the unit sphere bounding the ``dim``-ball."""
    return 2.0 * math.pi ** (dim / 2) / math.gamma(dim / 2)


def lshape_contains(x: np.ndarray, closed: bool = True) -> np.ndarray:
    x = np.atleast_2d(x)
    a, b = x[:, 0], x[:, 1]
    if closed:
        box = (np.abs(a) <= 1.0) & (np.abs(b) <= 1.0)
        notch = (a > 0.0) & (b < 0.0)
    else:
        box = (np.abs(a) < 1.0) & (np.abs(b) < 1.0)
        notch = (a >= 0.0) & (b <= 0.0)
    return box & ~notch


@dataclass
class PointSet:
    points: np.ndarray  # (N, d)
    weights: np.ndarray  # (N,)
    kind: str  # "interior" | "boundary"
    domain: Domain

    def __len__(self) -> int:
        return len(self.weights)

    def to_csv(self, path) -> None:
        d = self.points.shape[1]
        header = ",".join([f"x{i}" for i in range(d)] + ["weight"])
        np.savetxt(Path(path), np.column_stack([self.points, self.weights]),
                   delimiter=",", header=header, comments="", fmt="%.17g")


PURPOSES = ("interior", "boundary", "multiplier", "eval", "boundary_eval", "test")


def rng_stream(seed: int, purpose: str, index: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by (master seed, purpose, draw index)."""
    key = zlib.crc32(purpose.encode())
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, key, index])))


def _gen(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return rng_stream(int(rng), "test")


def sample_interior(domain: Domain, n: int, rng=0) -> PointSet:
    """Interior quadrature points.

    The interval uses the deterministic midpoint rule; the L-shape and the
    ball use Monte Carlo with equal weights ``|domain| / n``.
    """
    if n < 1:
        raise ValueError("need at least one interior point")
    if domain.kind == "interval":
        pts = (np.arange(n) + 0.5) / n
        return PointSet(pts[:, None], np.full(n, 1.0 / n), "interior", domain)
    g = _gen(rng)
    if domain.kind == "lshape":
        out = np.empty((0, 2))
        while len(out) < n:
            cand = g.uniform(-1.0, 1.0, size=(max(2 * (n - len(out)), 16), 2))
            keep = lshape_contains(cand, closed=False)
            keep &= np.hypot(cand[:, 0], cand[:, 1]) > CORNER_EXCLUSION
            out = np.concatenate([out, cand[keep]])
        return PointSet(out[:n], np.full(n, LSHAPE_AREA / n), "interior", domain)
    D = domain.dim
    dirs = _unit_vectors(g, n, D)
    radii = g.uniform(0.0, 1.0, size=n) ** (1.0 / D)
    return PointSet(dirs * radii[:, None], np.full(n, domain.volume / n), "interior", domain)


def _unit_vectors(g: np.random.Generator, n: int, D: int) -> np.ndarray:
    z = g.standard_normal(size=(n, D))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def sample_boundary(domain: Domain, n: int, rng=0) -> PointSet:
    """Boundary points with weights summing to the boundary measure.

    On the interval the boundary is exactly ``{0, 1}`` with unit counting
    weights, so ``n`` must be 2.
    """
    if domain.kind == "interval":
        if n != 2:
            raise ValueError("the interval boundary is the two endpoints; n must be 2")
        return PointSet(np.array([[0.0], [1.0]]), np.ones(2), "boundary", domain)
    if n < 1:
        raise ValueError("need at least one boundary point")
    g = _gen(rng)
    if domain.kind == "lshape":
        seg = g.integers(0, len(LSHAPE_SEGMENTS), size=n)
        t = g.uniform(0.0, 1.0, size=n)[:, None]
        a, b = LSHAPE_SEGMENTS[seg, 0], LSHAPE_SEGMENTS[seg, 1]
        return PointSet(a + t * (b - a), np.full(n, LSHAPE_PERIMETER / n), "boundary", domain)
    pts = _unit_vectors(g, n, domain.dim)
    return PointSet(pts, np.full(n, domain.boundary_measure / n), "boundary", domain)


def lshape_segment_index(points: np.ndarray) -> np.ndarray:
    """Index of the unit boundary segment each L-shape boundary point lies on."""
    idx = np.full(len(points), -1)
    for k, (a, b) in enumerate(LSHAPE_SEGMENTS):
        d = b - a
        t = ((points - a) @ d) / (d @ d)
        foot = a + np.clip(t, 0, 1)[:, None] * d
        on = (np.linalg.norm(points - foot, axis=1) <= 1e-12) & (idx < 0)
        idx[on] = k
    return idx


class ResampleSchedule:
    """Decides which draw of collocation points an epoch uses.

    Epochs ``[j * every, (j + 1) * every)`` share draw ``j``; ``every`` may be
    ``math.inf`` for a single fixed draw. The multiplier point set is not
    managed here and never changes during a run.
    """

    def __init__(self, every_k_epochs: float, batch_interior: int, batch_boundary: int):
        if batch_interior < 1 or batch_boundary < 1:
            raise ValueError("batch sizes must be positive")
        if not every_k_epochs > 0:
            raise ValueError("resample period must be positive (or inf)")
        self.every = every_k_epochs
        self.batch_interior = batch_interior
        self.batch_boundary = batch_boundary

    def draw_index(self, epoch: int) -> int:
        if math.isinf(self.every):
            return 0
        return int(epoch // self.every)


class Sampler:
    """Point sets for one run, cached per draw index."""

    def __init__(self, domain: Domain, schedule: ResampleSchedule, seed: int):
        self.domain = domain
        self.schedule = schedule
        self.seed = seed
        self._cache: dict[str, tuple[int, PointSet]] = {}

    def _get(self, purpose: str, epoch: int, fn, n: int) -> PointSet:
        j = self.schedule.draw_index(epoch)
        hit = self._cache.get(purpose)
        if hit is not None and hit[0] == j:
            return hit[1]
        ps = fn(self.domain, n, rng_stream(self.seed, purpose, j))
        self._cache[purpose] = (j, ps)
        return ps

    def interior(self, epoch: int) -> PointSet:
        return self._get("interior", epoch, sample_interior, self.schedule.batch_interior)

    def boundary(self, epoch: int) -> PointSet:
        n = 2 if self.domain.kind == "interval" else self.schedule.batch_boundary
        return self._get("boundary", epoch, sample_boundary, n)


def resample_schedule(every_k_epochs: float, batch_interior: int, batch_boundary: int) -> ResampleSchedule:
    return ResampleSchedule(every_k_epochs, batch_interior, batch_boundary)
