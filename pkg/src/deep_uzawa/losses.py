"""Discrete Ritz and least-squares Lagrangians with a boundary multiplier.

Both functionals share the boundary part

    sum_b w_b * (gamma/2 * (u(b) - g(b))**2 - (u(b) - g(b)) * lam(b))

and differ in the interior part: the Ritz energy
``sum_y w_y (eps/2 |grad u|^2 + u^2/2 - u f)`` or half the weighted squared
residual of ``-eps lap u + u - f``. With ``multiplier=None`` they reduce to
the penalty functionals.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable

import numpy as np
import torch

from . import autodiff as ad
from .network import forward
from .sampling import PointSet

if TYPE_CHECKING:
    from .uzawa import Multiplier

Tensor = torch.Tensor
Model = Callable  # (params, x) -> u, x a tensor or a jet


@dataclass
class PdeData:
    """``-eps lap u + u = f`` in the domain, ``u = g`` on the boundary.

    With ``include_reaction=False`` the zeroth-order term is dropped and the
    problem is ``-eps lap u = f``.
    """

    epsilon: float
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    include_reaction: bool = True

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")


class MultiplierMismatch(ValueError):
    pass


def _t(a: np.ndarray) -> Tensor:
    return torch.as_tensor(np.asarray(a, dtype=np.float64))


def boundary_term(params, multiplier: "Multiplier | None", boundary: PointSet,
                  gamma: float, data: PdeData, model: Model = forward) -> Tensor:
    u = model(params, _t(boundary.points))
    mismatch = u - _t(data.g(boundary.points))
    w = _t(boundary.weights)
    integrand = 0.5 * gamma * mismatch * mismatch
    if multiplier is not None:
        if multiplier.points is not boundary and not (
            multiplier.points.points.shape == boundary.points.shape
            and np.array_equal(multiplier.points.points, boundary.points)
        ):
            raise MultiplierMismatch("multiplier points differ from the boundary point set")
        integrand = integrand - mismatch * _t(multiplier.values)
    return (w * integrand).sum()


def ritz_energy(params, interior: PointSet, data: PdeData, model: Model = forward) -> Tensor:
    xj = ad.coordinate_jet(_t(interior.points), order=1)
    uj = model(params, xj)
    grad_sq = (uj.d1 * uj.d1).sum(0)
    u = uj.v
    density = 0.5 * data.epsilon * grad_sq - u * _t(data.f(interior.points))
    if data.include_reaction:
        density = density + 0.5 * u * u
    return (_t(interior.weights) * density).sum()


def residual_at(params, points: np.ndarray, data: PdeData, model: Model = forward) -> Tensor:
    xj = ad.coordinate_jet(_t(points), order=2)
    uj = model(params, xj)
    lu = -data.epsilon * uj.d2.sum(0)
    if data.include_reaction:
        lu = lu + uj.v
    return lu - _t(data.f(points))


def residual(params, x, data: PdeData, model: Model = forward) -> Tensor:
    """Strong residual ``-eps lap u + u - f`` at a point (d,) or batch (N, d)."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    r = residual_at(params, np.atleast_2d(x), data, model)
    return r[0] if single else r


def ritz_lagrangian(params, multiplier, interior: PointSet, boundary: PointSet,
                    gamma: float, data: PdeData, model: Model = forward) -> Tensor:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    return ritz_energy(params, interior, data, model) + boundary_term(
        params, multiplier, boundary, gamma, data, model)


def pinn_lagrangian(params, multiplier, interior: PointSet, boundary: PointSet,
                    gamma: float, data: PdeData, model: Model = forward) -> Tensor:
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    r = residual_at(params, interior.points, data, model)
    interior_part = 0.5 * (_t(interior.weights) * r * r).sum()
    return interior_part + boundary_term(params, multiplier, boundary, gamma, data, model)
