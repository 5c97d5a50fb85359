"""SiLU multilayer perceptron ``u_theta`` and its hard-boundary wrapper."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
import torch

from . import autodiff as ad
from .autodiff import Jet2

Tensor = torch.Tensor

_MAGIC = b"DUZP"
_VERSION = 1
_HEADER = struct.Struct("<4sIIIIQ")  # magic, version, depth, width, in_dim, seed


@dataclass
class MlpParams:
    """Weights and biases of an ``L``-layer network stored in one flat vector.

    ``flat`` is the only autograd leaf; layer views are sliced out of it on
    every evaluation so that the optimiser can update it in place.
    """

    depth: int
    width: int
    in_dim: int
    flat: Tensor
    seed: int = 0
    _shapes: list[tuple[int, int]] = field(init=False, repr=False)

    def __post_init__(self):
        self._shapes = layer_dims(self.depth, self.width, self.in_dim)
        if self.flat.numel() != param_count(self.depth, self.width, self.in_dim):
            raise ValueError("flat parameter vector has the wrong length")

    @property
    def n_params(self) -> int:
        return self.flat.numel()

    def layers(self) -> list[tuple[Tensor, Tensor]]:
        out = []
        i = 0
        for n_in, n_out in self._shapes:
            W = self.flat[i : i + n_out * n_in].view(n_out, n_in)
            i += n_out * n_in
            b = self.flat[i : i + n_out]
            i += n_out
            out.append((W, b))
        return out

    def leaves(self) -> list[Tensor]:
        return [self.flat]

    def copy(self) -> "MlpParams":
        return MlpParams(self.depth, self.width, self.in_dim,
                         self.flat.detach().clone().requires_grad_(True), self.seed)

    @classmethod
    def from_layers(cls, layers, seed: int = 0) -> "MlpParams":
        """Build from explicit ``[(W_1, b_1), ...]`` (used by hand-made nets in tests)."""
        layers = [(torch.as_tensor(W, dtype=torch.float64), torch.as_tensor(b, dtype=torch.float64))
                  for W, b in layers]
        in_dim = layers[0][0].shape[1]
        width = layers[0][0].shape[0] if len(layers) > 1 else 1
        depth = len(layers)
        flat = torch.cat([t.reshape(-1) for W, b in layers for t in (W, b)])
        p = cls(depth, width, in_dim, flat.clone().requires_grad_(True), seed)
        if [(W.shape[1], W.shape[0]) for W, _ in layers] != p._shapes:
            raise ValueError("layer shapes do not form a constant-width chain")
        return p


def layer_dims(depth: int, width: int, in_dim: int) -> list[tuple[int, int]]:
    """``(d_k, d_{k+1})`` for each affine map."""
    dims = [in_dim] + [width] * (depth - 1) + [1]
    return list(zip(dims[:-1], dims[1:]))


def param_count(depth: int, width: int, in_dim: int) -> int:
    return sum(n_out * (n_in + 1) for n_in, n_out in layer_dims(depth, width, in_dim))


def silu(x):
    """``x / (1 + exp(-x))``; accepts floats, arrays, tensors and jets."""
    if isinstance(x, (float, int)):
        return x * _logistic(x)
    if isinstance(x, np.ndarray):
        return x / (1.0 + np.exp(-x))
    return ad.silu(x)


def _logistic(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + np.exp(-x))
    e = np.exp(x)
    return e / (1.0 + e)


def init_params(depth: int, width: int, in_dim: int, seed: int) -> MlpParams:
    """Glorot-uniform weights, zero biases, reproducible from ``seed``."""
    if depth < 2 or width < 1 or in_dim < 1:
        raise ValueError(f"invalid network size: depth={depth}, width={width}, in_dim={in_dim}")
    rng = np.random.default_rng(seed)
    chunks = []
    for n_in, n_out in layer_dims(depth, width, in_dim):
        lim = np.sqrt(6.0 / (n_in + n_out))
        chunks.append(rng.uniform(-lim, lim, size=n_out * n_in))
        chunks.append(np.zeros(n_out))
    flat = torch.from_numpy(np.concatenate(chunks)).requires_grad_(True)
    return MlpParams(depth, width, in_dim, flat, seed)


def forward(params: MlpParams, x):
    """Evaluate ``C_L o silu o ... o silu o C_1`` at ``x``.

    ``x`` is a point (d,), a batch (N, d), or a :class:`Jet2` whose value
    is (N, d). Returns shape () / (N,) / a jet with value (N,).
    """
    if not isinstance(x, Jet2):
        x = torch.as_tensor(x, dtype=torch.float64)
        if x.dim() == 0:
            x = x.reshape(1)
    if x.shape[-1] != params.in_dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match network input width {params.in_dim}")
    layers = params.layers()
    h = x
    for k, (W, b) in enumerate(layers):
        if isinstance(h, Jet2):
            h = h.affine(W, b)
        else:
            h = h @ W.T + b
        if k < len(layers) - 1:
            h = ad.silu(h)
    return h[..., 0]


def sq_norm(x):
    """``|x|^2`` along the last axis, for tensors or jets."""
    if isinstance(x, Jet2):
        return (x * x).sum(-1)
    x = torch.as_tensor(x, dtype=torch.float64)
    return (x * x).sum(-1)


def forward_hard_bc(params: MlpParams, x, u_star: Callable):
    """``(1 - |x|^2) u_theta(x) + |x|^2 u*(x)`` on the unit ball."""
    r2 = sq_norm(x)
    return (1.0 - r2) * forward(params, x) + r2 * u_star(x)


def hard_bc_model(u_star: Callable) -> Callable:
    """Bind ``u_star`` into a ``(params, x)`` evaluator usable by the losses."""
    def model(params, x):
        return forward_hard_bc(params, x, u_star)
    return model


# snapshots -------------------------------------------------------------

def save_params(params: MlpParams, path) -> None:
    """Write header + little-endian float64 values in layer order."""
    header = _HEADER.pack(_MAGIC, _VERSION, params.depth, params.width, params.in_dim, params.seed)
    data = params.flat.detach().numpy().astype("<f8").tobytes()
    Path(path).write_bytes(header + data)


def load_params(path) -> MlpParams:
    raw = Path(path).read_bytes()
    magic, version, depth, width, in_dim, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"{path}: not a parameter snapshot")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).astype(np.float64)
    flat = torch.from_numpy(values.copy()).requires_grad_(True)
    return MlpParams(depth, width, in_dim, flat, seed)
