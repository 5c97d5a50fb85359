"""Network-free 1D oracle for the Ritz-Uzawa iteration.

The inner minimisation of the Ritz Lagrangian on (0, 1) is discretised with
piecewise-linear stiffness and lumped mass on a uniform grid whose two end
nodes are free. Each inner problem is then one tridiagonal solve, so the
continuum Uzawa iteration, its error identities and its spectral
convergence threshold can be checked to round-off.

The boundary of (0, 1) is two points; multipliers, traces and boundary
errors are pairs of reals with the Euclidean inner product.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import solve_banded

from .uzawa import HistoryRow, RunHistory


@dataclass
class FdGrid:
    n: int  # interior node count
    h: float = field(init=False)
    x: np.ndarray = field(init=False)
    stiff: np.ndarray = field(init=False, repr=False)  # (3, N) banded, int u'v'
    mass: np.ndarray = field(init=False, repr=False)  # (N,) lumped

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one interior node")
        N = self.n + 2
        self.h = 1.0 / (self.n + 1)
        self.x = np.linspace(0.0, 1.0, N)
        diag = np.full(N, 2.0 / self.h)
        diag[[0, -1]] = 1.0 / self.h
        off = np.full(N, -1.0 / self.h)
        self.stiff = np.vstack([off, diag, off])
        self.stiff[0, 0] = 0.0
        self.stiff[2, -1] = 0.0
        self.mass = np.full(N, self.h)
        self.mass[[0, -1]] = 0.5 * self.h

    @property
    def size(self) -> int:
        return self.n + 2

    def stiff_apply(self, u: np.ndarray) -> np.ndarray:
        out = self.stiff[1] * u
        out[:-1] += self.stiff[0, 1:] * u[1:]
        out[1:] += self.stiff[2, :-1] * u[:-1]
        return out

    def energy_norms(self, e: np.ndarray) -> tuple[float, float]:
        """``(|e'|^2, |e|^2)`` in the discrete inner products."""
        return float(e @ self.stiff_apply(e)), float(e @ (self.mass * e))

    def h1_norm(self, e: np.ndarray) -> float:
        a, b = self.energy_norms(e)
        return float(np.sqrt(a + b))


def _trace(u: np.ndarray) -> np.ndarray:
    return np.array([u[0], u[-1]])


def _operator(grid: FdGrid, epsilon: float, gamma: float) -> np.ndarray:
    ab = epsilon * grid.stiff.copy()
    ab[1] += grid.mass
    ab[1, 0] += gamma
    ab[1, -1] += gamma
    return ab


def _nodal(f, x) -> np.ndarray:
    if callable(f):
        return np.asarray(f(x), dtype=np.float64) * np.ones_like(x)
    return np.full_like(x, float(f))


def _pair(g) -> np.ndarray:
    if callable(g):
        return np.array([g(0.0), g(1.0)], dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    return np.broadcast_to(g, (2,)).copy()


def fd_inner_solve(lam, gamma: float, epsilon: float, f, g, grid: FdGrid) -> np.ndarray:
    """Minimiser of the discrete Ritz Lagrangian for a fixed multiplier pair.

    Solves ``(eps K + M + gamma B) u = M f + gamma B g + B lam`` where ``B``
    picks out the two end nodes.
    """
    if not epsilon > 0 or gamma < 0:
        raise ValueError("need epsilon > 0 and gamma >= 0")
    lam = _pair(lam)
    gb = _pair(g)
    rhs = grid.mass * _nodal(f, grid.x)
    rhs[0] += gamma * gb[0] + lam[0]
    rhs[-1] += gamma * gb[1] + lam[1]
    return solve_banded((1, 1), _operator(grid, epsilon, gamma), rhs)


def fd_saddle_point(epsilon: float, f, g, grid: FdGrid) -> tuple[np.ndarray, np.ndarray]:
    """Discrete constrained solution ``u*_h`` (with ``u = g`` at the ends) and its multiplier."""
    gb = _pair(g)
    fn = _nodal(f, grid.x)
    ab = _operator(grid, epsilon, 0.0)
    inner = ab[:, 1:-1].copy()
    inner[0, 0] = 0.0
    inner[2, -1] = 0.0
    rhs = (grid.mass * fn)[1:-1]
    rhs[0] -= ab[0, 1] * gb[0]  # coupling of node 1 to node 0
    rhs[-1] -= ab[2, -2] * gb[1]
    u = np.empty(grid.size)
    u[0], u[-1] = gb
    u[1:-1] = solve_banded((1, 1), inner, rhs)
    full = epsilon * grid.stiff_apply(u) + grid.mass * u - grid.mass * fn
    return u, _trace(full)


def discrete_lagrangian(u, lam, gamma, epsilon, f, g, grid: FdGrid) -> float:
    stiff, mass = grid.energy_norms(u)
    mis = _trace(u) - _pair(g)
    return float(0.5 * epsilon * stiff + 0.5 * mass - u @ (grid.mass * _nodal(f, grid.x))
                 + 0.5 * gamma * mis @ mis - _pair(lam) @ mis)


@dataclass
class FdHistory:
    gamma: float
    rho: float
    epsilon: float
    u_star: np.ndarray
    lam_star: np.ndarray
    lam: list[np.ndarray] = field(default_factory=list)  # lam^0 .. lam^K
    trace_err: list[np.ndarray] = field(default_factory=list)  # u^k(b) - u*(b), k < K
    stiff_err: list[float] = field(default_factory=list)  # |e^k'|^2
    mass_err: list[float] = field(default_factory=list)  # |e^k|^2
    loss: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)

    @property
    def steps(self) -> int:
        return len(self.trace_err)

    @property
    def lam_err(self) -> np.ndarray:
        return np.array([np.linalg.norm(l - self.lam_star) for l in self.lam])

    @property
    def h1_err(self) -> np.ndarray:
        return np.sqrt(np.array(self.stiff_err) + np.array(self.mass_err))

    def to_run_history(self) -> RunHistory:
        hist = RunHistory()
        for k in range(self.steps):
            be = float(np.linalg.norm(self.trace_err[k]))
            hist.append(HistoryRow(k + 1, k + 1, self.loss[k], float(np.sqrt(self.mass_err[k])), be,
                                   float(self.h1_err[k]), float(np.linalg.norm(self.lam[k])),
                                   self.seconds[k]))
        return hist


def fd_uzawa(gamma: float, rho: float, epsilon: float, f, g, grid: FdGrid, k_max: int,
             lam0=None, tol: float = 0.0) -> FdHistory:
    """Uzawa iteration ``lam^{k+1} = lam^k - rho (u^k(b) - g(b))`` with exact inner solves.

    Stops early once ``|lam^k - lam*| <= tol * max(1, |lam*|)``. A divergent
    iteration is returned as data, never raised.
    """
    u_star, lam_star = fd_saddle_point(epsilon, f, g, grid)
    gb = _pair(g)
    lam = np.zeros(2) if lam0 is None else _pair(lam0)
    hist = FdHistory(gamma, rho, epsilon, u_star, lam_star, lam=[lam.copy()])
    scale = max(1.0, float(np.linalg.norm(lam_star)))
    t0 = time.perf_counter()
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is recorded, not raised
        for _ in range(k_max):
            if tol > 0 and np.linalg.norm(lam - lam_star) <= tol * scale:
                break
            u = fd_inner_solve(lam, gamma, epsilon, f, g, grid)
            e = u - u_star
            a, b = grid.energy_norms(e)
            hist.trace_err.append(_trace(e))
            hist.stiff_err.append(a)
            hist.mass_err.append(b)
            hist.loss.append(discrete_lagrangian(u, lam, gamma, epsilon, f, g, grid))
            lam = lam - rho * (_trace(u) - gb)
            hist.lam.append(lam.copy())
            hist.seconds.append(time.perf_counter() - t0)
            if not np.isfinite(lam).all():
                break
    return hist


@dataclass
class LemmaResidual:
    recursion: float  # multiplier-error recursion
    energy: float  # error energy vs multiplier pairing


def lemma_identity_check(hist: FdHistory, k: int) -> LemmaResidual:
    """Residuals of the two error identities at iterate ``k``.

    ``|l^{k+1}-l*|^2 = |l^k-l*|^2 + rho^2 |e_b|^2 - 2 rho <l^k-l*, e_b>`` and
    ``eps |e'|^2 + |e|^2 + gamma |e_b|^2 = <l^k-l*, e_b>``.
    """
    dl = hist.lam[k] - hist.lam_star
    dl_next = hist.lam[k + 1] - hist.lam_star
    eb = hist.trace_err[k]
    rho = hist.rho
    rec = dl_next @ dl_next - (dl @ dl + rho**2 * (eb @ eb) - 2.0 * rho * (dl @ eb))
    lhs = hist.epsilon * hist.stiff_err[k] + hist.mass_err[k] + hist.gamma * (eb @ eb)
    return LemmaResidual(abs(float(rec)), abs(float(lhs - dl @ eb)))


def boundary_schur(gamma: float, epsilon: float, grid: FdGrid) -> np.ndarray:
    """2x2 map from a multiplier pair to the end-node traces it induces (f = g = 0)."""
    cols = [_trace(fd_inner_solve(unit, gamma, epsilon, 0.0, 0.0, grid)) for unit in np.eye(2)]
    return np.column_stack(cols)


def iteration_spectral_radius(gamma: float, rho: float, epsilon: float, grid: FdGrid) -> float:
    """Spectral radius of the multiplier-error map ``I - rho S``."""
    S = boundary_schur(gamma, epsilon, grid)
    return float(np.max(np.abs(np.linalg.eigvals(np.eye(2) - rho * S))))


def boundary_layer_data(epsilon: float) -> tuple[Callable, Callable]:
    """``f = 1`` and ``g = 0`` of the two-sided boundary-layer example."""
    return (lambda x: np.ones_like(x)), (lambda x: 0.0)
