"""Second-order forward jets on top of torch reverse mode.

Spatial derivatives of the network are carried forward with truncated
Taylor arithmetic (:class:`Jet2`); parameter gradients of anything built
from jets come from torch's reverse mode, so third-order mixed
derivatives (d/dtheta of a Laplacian) need no special handling.

A jet holds the value ``v`` together with first and second directional
derivatives ``d1`` and ``d2``. The derivative entries carry one extra
leading axis indexing the seed direction, so ``d`` coordinate directions
can share a single evaluation of ``v``::

    v.shape  == (N, h)
    d1.shape == (k, N, h)   # k seed directions

``d2`` may be ``None``, in which case only first-order rules run.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import torch

torch.set_default_dtype(torch.float64)

Tensor = torch.Tensor


class NonFiniteGradient(FloatingPointError):
    """Raised by :func:`backward` when the loss or a gradient is NaN/inf."""

    def __init__(self, op: str, detail: str = ""):
        self.op = op
        msg = f"non-finite value in backward pass at op '{op}'"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return torch.as_tensor(x, dtype=torch.float64)


class Jet2:
    """Truncated second-order Taylor expansion along seed directions."""

    __slots__ = ("v", "d1", "d2")
    __array_ufunc__ = None  # keep numpy from broadcasting over jets

    def __init__(self, v: Tensor, d1: Tensor, d2: Tensor | None = None):
        self.v = v
        self.d1 = d1
        self.d2 = d2

    @property
    def order(self) -> int:
        return 1 if self.d2 is None else 2

    @property
    def shape(self):
        return self.v.shape

    def __repr__(self) -> str:
        return f"Jet2(shape={tuple(self.v.shape)}, directions={self.d1.shape[0]}, order={self.order})"

    def __getitem__(self, idx) -> "Jet2":
        if not isinstance(idx, tuple):
            idx = (idx,)
        didx = (slice(None),) + idx
        return Jet2(self.v[idx], self.d1[didx], None if self.d2 is None else self.d2[didx])

    def sum(self, dim: int = -1) -> "Jet2":
        if dim < 0:
            dim_d = dim
        else:
            dim_d = dim + 1
        return Jet2(
            self.v.sum(dim),
            self.d1.sum(dim_d),
            None if self.d2 is None else self.d2.sum(dim_d),
        )

    # arithmetic -------------------------------------------------------

    def __neg__(self) -> "Jet2":
        return Jet2(-self.v, -self.d1, None if self.d2 is None else -self.d2)

    def __add__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return Jet2(self.v + other.v, self.d1 + other.d1, _add2(self.d2, other.d2))
        return Jet2(self.v + other, self.d1, self.d2)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet2":
        return self + (-other)

    def __rsub__(self, other) -> "Jet2":
        return (-self) + other

    def __mul__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            v = self.v * other.v
            d1 = self.d1 * other.v + self.v * other.d1
            d2 = None
            if self.d2 is not None and other.d2 is not None:
                d2 = self.d2 * other.v + 2.0 * self.d1 * other.d1 + self.v * other.d2
            return Jet2(v, d1, d2)
        return Jet2(self.v * other, self.d1 * other, None if self.d2 is None else self.d2 * other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet2":
        if isinstance(other, Jet2):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def __rtruediv__(self, other) -> "Jet2":
        return self.reciprocal() * other

    def reciprocal(self) -> "Jet2":
        r = 1.0 / self.v
        return _chain(self, r, -r * r, 2.0 * r * r * r)

    def __pow__(self, p: float) -> "Jet2":
        if isinstance(p, Jet2):
            raise TypeError("jet exponents are not supported")
        if p == 2:
            return self * self
        f0 = self.v**p
        f1 = p * self.v ** (p - 1)
        f2 = p * (p - 1) * self.v ** (p - 2)
        return _chain(self, f0, f1, f2)

    def affine(self, W: Tensor, b: Tensor) -> "Jet2":
        """``x -> x @ W.T + b`` applied along the last axis."""
        Wt = W.T
        v = torch.addmm(b, self.v, Wt) if self.v.dim() == 2 else self.v @ Wt + b
        return Jet2(v, self.d1 @ Wt, None if self.d2 is None else self.d2 @ Wt)


def _add2(a, b):
    if a is None or b is None:
        return None
    return a + b


def _chain(a: Jet2, f0: Tensor, f1: Tensor, f2: Tensor) -> Jet2:
    """Jet of ``f(a)`` given ``f(a.v), f'(a.v), f''(a.v)``."""
    d1 = f1 * a.d1
    d2 = None
    if a.d2 is not None:
        d2 = f1 * a.d2 + f2 * a.d1 * a.d1
    return Jet2(f0, d1, d2)


# unary functions, dispatching on tensors vs jets -----------------------

def sigmoid(x):
    if not isinstance(x, Jet2):
        return torch.sigmoid(_as_tensor(x))
    s = torch.sigmoid(x.v)
    ds = s * (1.0 - s)
    return _chain(x, s, ds, ds * (1.0 - 2.0 * s))


def silu_derivatives(v: Tensor):
    """Return ``silu(v), silu'(v), silu''(v)``."""
    s = torch.sigmoid(v)
    f1 = s * (1.0 + v * (1.0 - s))
    f2 = s * (1.0 - s) * (2.0 + v * (1.0 - 2.0 * s))
    return v * s, f1, f2


def silu(x):
    if not isinstance(x, Jet2):
        x = _as_tensor(x)
        return x * torch.sigmoid(x)
    if x.d2 is None:
        s = torch.sigmoid(x.v)
        f1 = s * (1.0 + x.v * (1.0 - s))
        return Jet2(x.v * s, f1 * x.d1)
    return _chain(x, *silu_derivatives(x.v))


def exp(x):
    if not isinstance(x, Jet2):
        return torch.exp(_as_tensor(x))
    e = torch.exp(x.v)
    return _chain(x, e, e, e)


def sin(x):
    if not isinstance(x, Jet2):
        return torch.sin(_as_tensor(x))
    s, c = torch.sin(x.v), torch.cos(x.v)
    return _chain(x, s, c, -s)


def cos(x):
    if not isinstance(x, Jet2):
        return torch.cos(_as_tensor(x))
    s, c = torch.sin(x.v), torch.cos(x.v)
    return _chain(x, c, -s, -c)


def sqrt(x):
    if not isinstance(x, Jet2):
        return torch.sqrt(_as_tensor(x))
    return x**0.5


def atan2(y, x):
    """Two-argument arctangent; either argument may be a jet."""
    if not isinstance(y, Jet2) and not isinstance(x, Jet2):
        return torch.atan2(_as_tensor(y), _as_tensor(x))
    y, x = _promote(y, x)
    r2 = x.v * x.v + y.v * y.v
    num = x.v * y.d1 - y.v * x.d1
    d1 = num / r2
    d2 = None
    if x.d2 is not None and y.d2 is not None:
        dnum = x.v * y.d2 - y.v * x.d2
        dr2 = 2.0 * (x.v * x.d1 + y.v * y.d1)
        d2 = dnum / r2 - num * dr2 / (r2 * r2)
    return Jet2(torch.atan2(y.v, x.v), d1, d2)


def _promote(a, b):
    """Lift a constant to a jet matching the other operand."""
    if isinstance(a, Jet2) and isinstance(b, Jet2):
        return a, b
    ref = a if isinstance(a, Jet2) else b
    def lift(c):
        if isinstance(c, Jet2):
            return c
        c = torch.broadcast_to(_as_tensor(c), ref.v.shape)
        zero = torch.zeros_like(ref.d1)
        return Jet2(c, zero, None if ref.d2 is None else torch.zeros_like(ref.d2))
    return lift(a), lift(b)


def value(x) -> Tensor:
    """Primal value of a jet, or the tensor itself."""
    return x.v if isinstance(x, Jet2) else x


# jets of input points -------------------------------------------------

def seed_jet(x: Tensor, directions: Tensor, order: int = 2) -> Jet2:
    """Jet of the identity map at points ``x`` (N, d) along ``directions`` (k, d)."""
    x = _as_tensor(x)
    directions = _as_tensor(directions)
    k = directions.shape[0]
    d1 = directions[:, None, :].expand(k, *x.shape)
    d2 = torch.zeros(k, *x.shape) if order == 2 else None
    return Jet2(x, d1, d2)


def coordinate_jet(x: Tensor, order: int = 2) -> Jet2:
    """Identity jet seeded along every coordinate axis ``e_1..e_d``."""
    x = _as_tensor(x)
    return seed_jet(x, torch.eye(x.shape[-1]), order)


def _batch(x) -> tuple[Tensor, bool]:
    x = _as_tensor(x)
    if x.dim() == 1:
        return x[None, :], True
    return x, False


def _check_width(params, x: Tensor) -> None:
    in_dim = getattr(params, "in_dim", None)
    if in_dim is not None and x.shape[-1] != in_dim:
        raise ValueError(f"point dimension {x.shape[-1]} does not match network input width {in_dim}")


NetworkEval = Callable[[object, object], object]


def _default_eval() -> NetworkEval:
    from .network import forward
    return forward


def directional_jet(network_eval: NetworkEval | None, params, x, direction) -> Jet2:
    """Jet of ``u = network_eval(params, .)`` at ``x`` along the unit vector ``direction``.

    ``x`` may be a single point (d,) or a batch (N, d); the returned jet
    has a direction axis of length one.
    """
    network_eval = network_eval or _default_eval()
    direction = _as_tensor(direction).reshape(-1)
    if abs(float(torch.linalg.vector_norm(direction)) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    xb, single = _batch(x)
    _check_width(params, xb)
    if xb.shape[-1] != direction.shape[0]:
        raise ValueError("direction and point dimensions differ")
    out = network_eval(params, seed_jet(xb, direction[None, :], 2))
    return out[0] if single else out


def spatial_gradient(params, x, network_eval: NetworkEval | None = None) -> Tensor:
    """Gradient of ``u`` at ``x``: shape (d,) for one point, (N, d) for a batch."""
    network_eval = network_eval or _default_eval()
    xb, single = _batch(x)
    _check_width(params, xb)
    out = network_eval(params, coordinate_jet(xb, order=1))
    grad = out.d1.transpose(0, 1)
    return grad[0] if single else grad


def laplacian(params, x, network_eval: NetworkEval | None = None) -> Tensor:
    """Sum of second derivatives along each coordinate axis."""
    network_eval = network_eval or _default_eval()
    xb, single = _batch(x)
    _check_width(params, xb)
    out = network_eval(params, coordinate_jet(xb, order=2))
    lap = out.d2.sum(0)
    return lap[0] if single else lap


def backward(root: Tensor, leaves: Sequence[Tensor]) -> list[Tensor]:
    """Gradients of the scalar ``root`` with respect to each leaf.

    Leaves that do not influence ``root`` get a zero gradient.
    """
    if root.numel() != 1:
        raise ValueError("backward requires a scalar root")
    op = type(root.grad_fn).__name__ if root.grad_fn is not None else "leaf"
    if not math.isfinite(float(root.detach())):
        raise NonFiniteGradient(op, f"root value {float(root.detach())}")
    grads = torch.autograd.grad(root, list(leaves), allow_unused=True)
    out = []
    for i, (leaf, g) in enumerate(zip(leaves, grads)):
        if g is None:
            g = torch.zeros_like(leaf)
        if not bool(torch.isfinite(g).all()):
            raise NonFiniteGradient(op, f"gradient of leaf {i}")
        out.append(g)
    return out
