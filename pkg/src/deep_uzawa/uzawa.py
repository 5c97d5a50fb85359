"""Deep Uzawa iteration: Adam on the discrete Lagrangian, then a multiplier step."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import autodiff as ad
from .losses import PdeData, pinn_lagrangian, ritz_lagrangian
from .network import MlpParams, forward, hard_bc_model, init_params
from .problems import Problem, boundary_l2_error, h1_error_1d, l2_error
from .sampling import PointSet, ResampleSchedule, Sampler, rng_stream, sample_boundary

log = logging.getLogger(__name__)

METHODS = ("RitUz", "PINNUz", "RitzPenalty", "PinnPenalty", "HardRitz", "HardPinn")
UZAWA_METHODS = ("RitUz", "PINNUz")
RITZ_METHODS = ("RitUz", "RitzPenalty", "HardRitz")
HARD_METHODS = ("HardRitz", "HardPinn")

HISTORY_FIELDS = ("uzawa_step", "epoch", "loss", "l2_error", "boundary_l2_error",
                  "h1_error", "lambda_norm", "seconds")


@dataclass
class Multiplier:
    """Discrete multiplier: one value per point of a fixed boundary set."""

    points: PointSet
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.points),):
            raise ValueError("one multiplier value per boundary point required")
        if not np.isfinite(self.values).all():
            raise ValueError("multiplier values must be finite")

    @classmethod
    def zeros(cls, points: PointSet) -> "Multiplier":
        return cls(points, np.zeros(len(points)))

    def norm(self) -> float:
        """Weighted L2(boundary) norm."""
        return float(np.sqrt((self.points.weights * self.values**2).sum()))


@dataclass
class UzawaConfig:
    method: str = "RitUz"
    rho: float = 1.0
    gamma: float = 2.0
    n_uz: int = 500
    n_sgd: int = 40
    lr: float = 1e-3
    seed: int = 0
    depth: int = 5
    width: int = 40
    batch_interior: int = 256
    batch_boundary: int = 2
    resample_every: float = math.inf
    lambda_points: int = 2
    reset_optimizer: bool = False
    record_every: int = 100  # epochs between history rows for non-Uzawa methods
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method '{self.method}'")
        if self.method in UZAWA_METHODS and not self.rho > 0:
            raise ValueError("rho must be positive for Uzawa methods")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        if self.n_uz < 1 or self.n_sgd < 0:
            raise ValueError("need n_uz >= 1 and n_sgd >= 0")

    @property
    def uses_multiplier(self) -> bool:
        return self.method in UZAWA_METHODS

    @property
    def is_ritz(self) -> bool:
        return self.method in RITZ_METHODS


@dataclass
class AdamState:
    m: torch.Tensor
    v: torch.Tensor
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def like(cls, flat: torch.Tensor) -> "AdamState":
        return cls(torch.zeros_like(flat, requires_grad=False), torch.zeros_like(flat, requires_grad=False))


def adam_step(params: MlpParams, grad: torch.Tensor, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update of ``params.flat`` in place."""
    if grad.shape != params.flat.shape:
        raise ValueError("gradient shape does not match parameters")
    if not bool(torch.isfinite(grad).all()):
        raise ad.NonFiniteGradient("adam_step", "non-finite gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    with torch.no_grad():
        state.m.mul_(b1).add_(grad, alpha=1.0 - b1)
        state.v.mul_(b2).addcmul_(grad, grad, value=1.0 - b2)
        m_hat = state.m / (1.0 - b1**state.t)
        v_hat = state.v / (1.0 - b2**state.t)
        params.flat.sub_(lr * m_hat / (v_hat.sqrt() + state.eps))


def multiplier_update(multiplier: Multiplier, params: MlpParams, g, rho: float, model=forward) -> Multiplier:
    """``lam(b) <- lam(b) - rho (u(b) - g(b))`` at every multiplier point.

    The sign makes this gradient ascent on the Lagrangian
    ``J(u) - <lam, u - g>``: where the network overshoots the boundary data
    the multiplier decreases.
    """
    if not rho > 0:
        raise ValueError("rho must be positive")
    pts = multiplier.points.points
    with torch.no_grad():
        u = ad.value(model(params, torch.as_tensor(pts))).numpy()
    return Multiplier(multiplier.points, multiplier.values - rho * (u - np.asarray(g(pts))))


@dataclass
class HistoryRow:
    uzawa_step: int
    epoch: int
    loss: float
    l2_error: float
    boundary_l2_error: float
    h1_error: float | None
    lambda_norm: float
    seconds: float


@dataclass
class RunHistory:
    rows: list[HistoryRow] = field(default_factory=list)
    diverged: bool = False
    params: MlpParams | None = None
    multiplier: Multiplier | None = None

    def append(self, row: HistoryRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(HISTORY_FIELDS)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, k)) for k in HISTORY_FIELDS])

    @classmethod
    def from_csv(cls, path) -> "RunHistory":
        h = cls()
        with open(path, newline="", encoding="utf-8") as fh:
            for rec in csv.DictReader(fh):
                h.append(HistoryRow(
                    int(rec["uzawa_step"]), int(rec["epoch"]), float(rec["loss"]),
                    float(rec["l2_error"]), float(rec["boundary_l2_error"]),
                    float(rec["h1_error"]) if rec["h1_error"] else None,
                    float(rec["lambda_norm"]), float(rec["seconds"])))
        return h


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, int):
        return str(v)
    return format(float(v), ".17g")


class Trainer:
    """Owns the parameters, optimiser state and samplers of one run."""

    def __init__(self, config: UzawaConfig, problem: Problem, params: MlpParams | None = None):
        self.config = config
        self.problem = problem
        self.params = params or init_params(config.depth, config.width, problem.domain.dim, config.seed)
        self.adam = AdamState.like(self.params.flat)
        self.model = forward
        if config.method in HARD_METHODS:
            if problem.domain.kind != "ball":
                raise ValueError("hard boundary conditioning needs the unit-ball domain")
            self.model = hard_bc_model(problem.exact)
        schedule = ResampleSchedule(config.resample_every, config.batch_interior, config.batch_boundary)
        self.sampler = Sampler(problem.domain, schedule, config.seed)
        self.loss_fn = ritz_lagrangian if config.is_ritz else pinn_lagrangian
        self.gamma = 0.0 if config.method in HARD_METHODS else config.gamma
        self.epoch = 0
        self.multiplier = None
        if config.uses_multiplier:
            n = 2 if problem.domain.kind == "interval" else config.lambda_points
            pts = sample_boundary(problem.domain, n, rng_stream(config.seed, "multiplier"))
            self.multiplier = Multiplier.zeros(pts)

    def boundary_set(self, epoch: int) -> PointSet:
        if self.multiplier is not None:
            return self.multiplier.points
        return self.sampler.boundary(epoch)

    def loss(self, epoch: int) -> torch.Tensor:
        return self.loss_fn(self.params, self.multiplier, self.sampler.interior(epoch),
                            self.boundary_set(epoch), self.gamma, self.problem.data, self.model)

    def inner_train(self, n_steps: int) -> None:
        """``n_steps`` Adam epochs on the current Lagrangian; the multiplier is left alone."""
        for _ in range(n_steps):
            root = self.loss(self.epoch)
            (g,) = ad.backward(root, self.params.leaves())
            adam_step(self.params, g, self.adam, self.config.lr)
            self.epoch += 1

    def current_loss(self) -> float:
        """Lagrangian at the current parameters on the most recent batch."""
        with torch.no_grad():
            return float(self.loss(max(self.epoch - 1, 0)))

    def metrics(self) -> tuple[float, float, float | None]:
        p = self.problem
        l2 = l2_error(self.params, p, self.model)
        bd = boundary_l2_error(self.params, p, self.model)
        h1 = h1_error_1d(self.params, p, self.model) if p.domain.kind == "interval" else None
        return l2, bd, h1


def inner_train(params: MlpParams, multiplier: Multiplier | None, config: UzawaConfig,
                problem: Problem, adam: AdamState | None = None, start_epoch: int = 0) -> MlpParams:
    """Run ``config.n_sgd`` Adam epochs on a copy of ``params`` and return it."""
    tr = Trainer(config, problem, params.copy())
    if adam is not None:
        tr.adam = adam
    tr.multiplier = multiplier
    tr.epoch = start_epoch
    tr.inner_train(config.n_sgd)
    return tr.params


def run(config: UzawaConfig, problem: Problem, params: MlpParams | None = None) -> RunHistory:
    """Algorithm driver; returns the per-step history (partial if the run diverges)."""
    tr = Trainer(config, problem, params)
    hist = RunHistory(params=tr.params, multiplier=tr.multiplier)
    t0 = time.perf_counter()
    _, bd0, _ = tr.metrics()
    limit = config.divergence_factor * max(bd0, 1e-12)

    if config.uses_multiplier:
        blocks = [(k, config.n_sgd) for k in range(config.n_uz)]
    else:
        total = config.n_uz * config.n_sgd
        step = max(config.record_every, 1)
        marks = list(range(step, total + 1, step))
        if not marks or marks[-1] != total:
            marks.append(total)
        blocks, prev = [], 0
        for k, m in enumerate(marks):
            blocks.append((k, m - prev))
            prev = m

    for k, n_steps in blocks:
        if config.reset_optimizer and config.uses_multiplier:
            tr.adam = AdamState.like(tr.params.flat)
        try:
            tr.inner_train(n_steps)
            loss = tr.current_loss()
        except ad.NonFiniteGradient as exc:
            log.warning("run diverged at outer step %d: %s", k, exc)
            hist.diverged = True
            break
        l2, bd, h1 = tr.metrics()
        lam_norm = tr.multiplier.norm() if tr.multiplier is not None else 0.0
        hist.append(HistoryRow(k + 1, tr.epoch, loss, l2, bd, h1, lam_norm, time.perf_counter() - t0))
        if not all(math.isfinite(v) for v in (loss, l2, bd)) or bd > limit:
            hist.diverged = True
            break
        if tr.multiplier is not None:
            tr.multiplier = multiplier_update(tr.multiplier, tr.params, problem.data.g, config.rho, tr.model)
            hist.multiplier = tr.multiplier
    hist.params = tr.params
    return hist
