"""Benchmark problems, exact solutions and error metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import torch

from . import autodiff as ad
from .autodiff import Jet2
from .losses import PdeData
from .network import forward
from .sampling import (LSHAPE_SEGMENTS, Domain, PointSet, lshape_contains,
                       rng_stream, sample_boundary, sample_interior)

Tensor = torch.Tensor


class NotStarShapedSupported(ValueError):
    pass


# elementary functions on floats/arrays (numpy) or tensors/jets (torch)

def _is_torch(x) -> bool:
    return isinstance(x, (Tensor, Jet2))


def _exp(x):
    return ad.exp(x) if _is_torch(x) else np.exp(x)


def _sin(x):
    return ad.sin(x) if _is_torch(x) else np.sin(x)


def _atan2(y, x):
    if _is_torch(y) or _is_torch(x):
        return ad.atan2(y, x)
    return np.arctan2(y, x)


# exact solutions --------------------------------------------------------

def exact_boundary_layer(x, epsilon: float):
    """``1 - (e^{(1-x)/s} + e^{x/s}) / (e^{1/s} + 1)`` with ``s = sqrt(eps)``.

    Evaluated with numerator and denominator scaled by ``e^{-1/s}`` so that
    small ``eps`` does not overflow.
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    s = math.sqrt(epsilon)
    tail = math.exp(-1.0 / s)
    return 1.0 - (_exp(-x / s) + _exp((x - 1.0) / s)) / (1.0 + tail)


def exact_lshape(x, y):
    r2 = x * x + y * y
    q2 = (x + 1.0) * (x + 1.0) + (y - 1.0) * (y - 1.0)
    corner = r2 ** (2.0 / 3.0) * _sin((2.0 / 3.0) * (_atan2(y, -x) - math.pi))
    far = q2 ** (2.0 / 3.0) * _sin(2.0 * _atan2(y - 1.0, x + 1.0))
    return corner * far


def exact_highdim(x):
    """``sum_i x_{2i-1} x_{2i}`` over the last axis."""
    if x.shape[-1] % 2:
        raise ValueError("exact_highdim needs an even dimension")
    if isinstance(x, np.ndarray) and x.ndim == 1:
        return float((x[0::2] * x[1::2]).sum())
    return (x[..., 0::2] * x[..., 1::2]).sum(-1)


def _polar_parts(X, Y, a, b, phase):
    """Value, gradient and Laplacian of ``r^a sin(b (theta - phase))`` in (X, Y)."""
    r = np.hypot(X, Y)
    th = np.arctan2(Y, X)
    s, c = np.sin(b * (th - phase)), np.cos(b * (th - phase))
    ra1 = r ** (a - 1.0)
    cth, sth = np.cos(th), np.sin(th)
    gX = ra1 * (a * s * cth - b * c * sth)
    gY = ra1 * (a * s * sth + b * c * cth)
    lap = (a * a - b * b) * r ** (a - 2.0) * s
    return r**a * s, gX, gY, lap


def lshape_laplacian(x, y):
    """Closed-form Laplacian of :func:`exact_lshape`."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    A, AX, AY, lapA = _polar_parts(-x, y, 4.0 / 3.0, 2.0 / 3.0, math.pi)
    Ax = -AX  # reflected coordinate X = -x
    B, Bx, By, lapB = _polar_parts(x + 1.0, y - 1.0, 4.0 / 3.0, 2.0, 0.0)
    return lapA * B + 2.0 * (Ax * Bx + AY * By) + A * lapB


def _corner_offsets(x, y):
    x = np.array(x, dtype=np.float64, copy=True)
    y = np.array(y, dtype=np.float64, copy=True)
    at0 = (x == 0.0) & (y == 0.0)
    at1 = (x == -1.0) & (y == 1.0)
    x[at0], y[at0] = -1e-12, 1e-12
    x[at1], y[at1] = -1.0 + 1e-12, 1.0 - 1e-12
    return x, y


def lshape_source(x, y, epsilon: float):
    """``f = -eps lap u* + u*``.

    At the two singular corners the Laplacian is taken 1e-12 inside the
    domain (the value term is exact there).
    """
    u = exact_lshape(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    if epsilon == 0:
        return u
    xs, ys = _corner_offsets(x, y)
    return -epsilon * lshape_laplacian(xs, ys) + u


def lshape_source_jet(x, y, epsilon: float):
    """Same as :func:`lshape_source` but with the Laplacian from the jet engine."""
    xs, ys = _corner_offsets(x, y)
    pts = torch.as_tensor(np.column_stack([np.ravel(xs), np.ravel(ys)]))
    j = ad.coordinate_jet(pts, order=2)
    lap = exact_lshape(j[..., 0], j[..., 1]).d2.sum(0).numpy().reshape(np.shape(xs))
    u = exact_lshape(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64))
    return -epsilon * lap + u


# problems ---------------------------------------------------------------

@dataclass
class Problem:
    name: str
    domain: Domain
    data: PdeData
    exact: Callable | None  # generic in (N, d) arrays, tensors and jets
    eval_grid: PointSet
    boundary_eval: PointSet
    relative_l2: bool = False
    meta: dict = field(default_factory=dict)

    def exact_norm(self) -> float:
        if self.exact is None:
            raise ValueError(f"{self.name}: no exact solution")
        u = np.asarray(self.exact(self.eval_grid.points), dtype=np.float64)
        return float(np.sqrt((self.eval_grid.weights * u * u).sum()))


def _trapezoid_grid(n: int = 1001) -> PointSet:
    x = np.linspace(0.0, 1.0, n)
    w = np.full(n, 1.0 / (n - 1))
    w[[0, -1]] *= 0.5
    return PointSet(x[:, None], w, "interior", Domain.interval())


def _lshape_grid(m: int = 200) -> PointSet:
    c = -1.0 + (np.arange(m) + 0.5) * (2.0 / m)
    X, Y = np.meshgrid(c, c, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    pts = pts[lshape_contains(pts, closed=False)]
    return PointSet(pts, np.full(len(pts), (2.0 / m) ** 2), "interior", Domain.lshape())


def _lshape_boundary_grid(per_segment: int = 128) -> PointSet:
    t = (np.arange(per_segment) + 0.5) / per_segment
    pts = np.concatenate([a + t[:, None] * (b - a) for a, b in LSHAPE_SEGMENTS])
    return PointSet(pts, np.full(len(pts), 1.0 / per_segment), "boundary", Domain.lshape())


def boundary_layer_problem(epsilon: float = 0.1) -> Problem:
    data = PdeData(
        epsilon,
        f=lambda x: np.ones(len(x)),
        g=lambda x: np.zeros(len(x)),
    )
    p = Problem(
        "boundary_layer", Domain.interval(), data,
        exact=lambda x: exact_boundary_layer(x[..., 0], epsilon),
        eval_grid=_trapezoid_grid(),
        boundary_eval=sample_boundary(Domain.interval(), 2),
    )
    _self_test(p, seed=0)
    return p


def lshape_problem(epsilon: float = 1e-3) -> Problem:
    def exact(x):
        return exact_lshape(x[..., 0], x[..., 1])
    data = PdeData(
        epsilon,
        f=lambda x: lshape_source(x[:, 0], x[:, 1], epsilon),
        g=lambda x: exact_lshape(x[:, 0], x[:, 1]),
    )
    # no residual self-test: f is defined from u*
    return Problem("lshape", Domain.lshape(), data, exact, _lshape_grid(), _lshape_boundary_grid())


def highdim_problem(dim: int = 4, include_reaction: bool = False, eval_points: int = 2**15,
                    boundary_points: int = 4096) -> Problem:
    """Laplace problem on the unit ball in ``dim`` dimensions with ``u* = sum x_{2i-1} x_{2i}``."""
    if dim % 2:
        raise ValueError("dimension must be even")
    dom = Domain.ball(dim)
    if include_reaction:
        f = lambda x: exact_highdim(x)  # noqa: E731  (u* is harmonic, so f = u*)
    else:
        f = lambda x: np.zeros(len(x))  # noqa: E731
    data = PdeData(1.0, f=f, g=lambda x: exact_highdim(x), include_reaction=include_reaction)
    p = Problem(
        f"highdim{dim}", dom, data, exact_highdim,
        eval_grid=sample_interior(dom, eval_points, rng_stream(0, "eval")),
        boundary_eval=sample_boundary(dom, boundary_points, rng_stream(0, "boundary_eval")),
        relative_l2=True,
    )
    _self_test(p, seed=0)
    return p


def _self_test(p: Problem, seed: int, n: int = 100) -> None:
    pts = sample_interior(p.domain, n, rng_stream(seed, "test")) if p.domain.kind != "interval" else None
    if pts is None:
        g = rng_stream(seed, "test")
        x = g.uniform(0.0, 1.0, size=(n, 1))
    else:
        x = pts.points
    j = ad.coordinate_jet(torch.as_tensor(x), order=2)
    uj = p.exact(j)
    lu = -p.data.epsilon * uj.d2.sum(0)
    if p.data.include_reaction:
        lu = lu + uj.v
    res = (lu - torch.as_tensor(p.data.f(x))).abs().max().item()
    if res > 1e-8:
        raise AssertionError(f"{p.name}: exact solution residual {res:.3e} exceeds 1e-8")


# error metrics ----------------------------------------------------------

def _model_values(params, points, model) -> np.ndarray:
    with torch.no_grad():
        u = model(params, torch.as_tensor(points))
    return ad.value(u).detach().numpy()


def l2_error(params, problem: Problem, model=forward, relative: bool | None = None) -> float:
    """Quadrature L2 error on the problem's evaluation grid.

    Relative to ``||u*||`` when ``relative`` is true (default for the ball).
    """
    if problem.exact is None:
        raise ValueError(f"{problem.name}: no exact solution")
    grid = problem.eval_grid
    diff = _model_values(params, grid.points, model) - np.asarray(problem.exact(grid.points))
    err = float(np.sqrt((grid.weights * diff * diff).sum()))
    if problem.relative_l2 if relative is None else relative:
        err /= problem.exact_norm()
    return err


def boundary_l2_error(params, problem: Problem, model=forward) -> float:
    b = problem.boundary_eval
    diff = _model_values(params, b.points, model) - np.asarray(problem.data.g(b.points))
    return float(np.sqrt((b.weights * diff * diff).sum()))


def h1_error_1d(params, problem: Problem, model=forward) -> float:
    if problem.domain.kind != "interval" or problem.exact is None:
        raise ValueError("h1_error_1d needs a 1D problem with an exact solution")
    grid = problem.eval_grid
    x = torch.as_tensor(grid.points)
    uj = model(params, ad.coordinate_jet(x, order=1))
    sj = problem.exact(ad.coordinate_jet(x, order=1))
    dv = (uj.v - sj.v).detach().numpy()
    dd = (uj.d1[0] - sj.d1[0]).detach().numpy()
    return float(np.sqrt((grid.weights * (dv * dv + dd * dd)).sum()))


# trace constant ----------------------------------------------------------

@dataclass
class TraceBound:
    c_tr: float
    rho_max: float | None  # admissible Uzawa step for the Ritz scheme, if eps given


def trace_constant_bound(domain: Domain, x0, epsilon: float | None = None,
                         gamma: float = 0.0) -> TraceBound:
    """Upper bound on the trace constant for a domain star-shaped about ``x0``.

    ``C_tr <= (d + sqrt(d^2 + 4 max|x - x0|^2)) / (2 min (x - x0).n)``.
    When ``epsilon`` is given, also returns ``2 min(eps, 1) / C_tr^2 + 2 gamma``.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    d = domain.dim
    if domain.kind == "interval":
        a = float(x0[0])
        if not 0.0 < a < 1.0:
            raise ValueError("x0 must lie inside the interval")
        min_normal = min(a, 1.0 - a)
        max_dist2 = max(a, 1.0 - a) ** 2
    elif domain.kind == "ball":
        r0 = float(np.linalg.norm(x0))
        if r0 >= 1.0:
            raise ValueError("x0 must lie inside the ball")
        min_normal = 1.0 - r0
        max_dist2 = (1.0 + r0) ** 2
    else:
        raise NotStarShapedSupported(f"no trace bound for domain '{domain.kind}'")
    c = (d + math.sqrt(d * d + 4.0 * max_dist2)) / (2.0 * min_normal)
    rho = None if epsilon is None else 2.0 * min(epsilon, 1.0) / c**2 + 2.0 * gamma
    return TraceBound(c, rho)
