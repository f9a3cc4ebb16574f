"""Dense float32 primitives with hand-derived gradients and the SGD optimizer.

Parameters are stored in float32; loss reductions elsewhere accumulate in
float64. Every op keeps the dtype of its inputs so tests can run a float64
shadow copy through the same code path.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, ShapeError

Array = np.ndarray


class TensorParam:
    """A bare trainable array with gradient and momentum buffers."""

    __slots__ = ("data", "grad", "vel")

    def __init__(self, data: Array, dtype=np.float32):
        self.data = np.array(data, dtype=dtype)
        self.grad = np.zeros_like(self.data)
        self.vel = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def copy(self) -> "TensorParam":
        out = TensorParam(self.data, dtype=self.data.dtype)
        out.grad = self.grad.copy()
        out.vel = self.vel.copy()
        return out


class LinearLayer:
    """Affine map y = x @ W.T + b with explicit gradient accumulation.

    weight is (out, in); backward accumulates grad_weight += g.T @ x and
    grad_bias += g.sum(0), returning the input gradient g @ W.
    """

    def __init__(self, in_features: int, out_features: int,
                 weight: Array | None = None, bias: Array | None = None,
                 dtype=np.float32):
        self.in_features = in_features
        self.out_features = out_features
        if weight is None:
            weight = np.zeros((out_features, in_features))
        if bias is None:
            bias = np.zeros(out_features)
        self.weight = np.array(weight, dtype=dtype)
        self.bias = np.array(bias, dtype=dtype)
        if self.weight.shape != (out_features, in_features):
            raise ShapeError(f"weight shape {self.weight.shape} != "
                             f"({out_features}, {in_features})")
        if self.bias.shape != (out_features,):
            raise ShapeError(f"bias shape {self.bias.shape} != ({out_features},)")
        self.grad_weight = np.zeros_like(self.weight)
        self.grad_bias = np.zeros_like(self.bias)
        self.vel_weight = np.zeros_like(self.weight)
        self.vel_bias = np.zeros_like(self.bias)

    def forward(self, x: Array) -> Array:
        x = np.atleast_2d(x)
        if x.shape[1] != self.in_features:
            raise ShapeError(f"input has {x.shape[1]} features, "
                             f"layer expects {self.in_features}")
        return x @ self.weight.T + self.bias

    def backward(self, x: Array, grad_out: Array) -> Array:
        x = np.atleast_2d(x)
        grad_out = np.atleast_2d(grad_out)
        if x.shape[0] != grad_out.shape[0]:
            raise ShapeError("x and grad_out disagree on batch size")
        if x.shape[1] != self.in_features or grad_out.shape[1] != self.out_features:
            raise ShapeError("backward shapes inconsistent with layer")
        self.grad_weight += (grad_out.T @ x).astype(self.grad_weight.dtype)
        self.grad_bias += grad_out.sum(axis=0).astype(self.grad_bias.dtype)
        return grad_out @ self.weight

    def zero_grad(self) -> None:
        self.grad_weight[...] = 0.0
        self.grad_bias[...] = 0.0

    def copy(self) -> "LinearLayer":
        out = LinearLayer(self.in_features, self.out_features,
                          weight=self.weight, bias=self.bias,
                          dtype=self.weight.dtype)
        out.grad_weight = self.grad_weight.copy()
        out.grad_bias = self.grad_bias.copy()
        out.vel_weight = self.vel_weight.copy()
        out.vel_bias = self.vel_bias.copy()
        return out

    def astype(self, dtype) -> "LinearLayer":
        """Shadow copy in another dtype (gradients/velocity reset to zero)."""
        return LinearLayer(self.in_features, self.out_features,
                           weight=self.weight, bias=self.bias, dtype=dtype)


@dataclass
class SgdConfig:
    """SGD with momentum and the (1 + scale*p)^(-power) annealing schedule."""

    lr0: float = 3e-3
    momentum: float = 0.9
    weight_decay: float = 1e-3
    anneal_power: float = 0.75
    anneal_scale: float = 10.0

    def __post_init__(self):
        if not self.lr0 > 0:
            raise ValueError("lr0 must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must be in [0, 1)")


def lr_at(cfg: SgdConfig, progress: float) -> float:
    """Annealed learning rate at training progress in [0, 1]."""
    return cfg.lr0 * (1.0 + cfg.anneal_scale * progress) ** (-cfg.anneal_power)


def _param_triples(p):
    if isinstance(p, LinearLayer):
        yield p.weight, p.grad_weight, p.vel_weight
        yield p.bias, p.grad_bias, p.vel_bias
    elif isinstance(p, TensorParam):
        yield p.data, p.grad, p.vel
    else:
        raise TypeError(f"not a trainable parameter: {type(p)!r}")


def sgd_step(params, cfg: SgdConfig, progress: float) -> None:
    """One momentum-SGD update for every parameter; gradients are zeroed."""
    if isinstance(params, (LinearLayer, TensorParam)):
        params = [params]
    lr = np.float32(lr_at(cfg, progress))
    wd = np.float32(cfg.weight_decay)
    mom = np.float32(cfg.momentum)
    for p in params:
        for data, grad, vel in _param_triples(p):
            vel *= mom
            vel += grad + wd * data
            data -= lr * vel
            grad[...] = 0.0


def softmax(logits: Array, tau: float = 1.0, axis: int = -1) -> Array:
    """Temperature softmax with max-subtraction for stability."""
    z = np.asarray(logits) / tau
    z = z - z.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits: Array, axis: int = -1) -> Array:
    z = np.asarray(logits)
    z = z - z.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def relu(x: Array) -> Array:
    return np.maximum(x, 0)


def sigmoid(x: Array) -> Array:
    """Numerically stable logistic function."""
    x = np.asarray(x)
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def cosine(a: Array, b: Array) -> float:
    """Cosine similarity of two vectors; rejects zero-norm inputs."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError("cosine operands must have the same length")
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine of a zero-norm vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def row_norms(m: Array) -> Array:
    return np.sqrt((np.asarray(m) ** 2).sum(axis=1))


def cosine_matrix(u: Array, m: Array) -> Array:
    """Pairwise cosine similarities between rows of u (B,d) and m (K,d)."""
    u = np.atleast_2d(u)
    m = np.atleast_2d(m)
    if u.shape[1] != m.shape[1]:
        raise ShapeError("cosine_matrix operands disagree on feature dim")
    nu = row_norms(u)
    nm = row_norms(m)
    if u.shape[0] and nu.min() == 0.0:
        raise DegenerateInputError("zero-norm row in left operand")
    if m.shape[0] and nm.min() == 0.0:
        raise DegenerateInputError("zero-norm row in right operand")
    return (u / nu[:, None]) @ (m / nm[:, None]).T


def cosine_matrix_backward(u: Array, m: Array, cos: Array, grad: Array):
    """Gradients of sum(grad * cosine_matrix(u, m)) wrt u and m."""
    u = np.atleast_2d(u)
    m = np.atleast_2d(m)
    nu = row_norms(u)
    nm = row_norms(m)
    un = u / nu[:, None]
    mn = m / nm[:, None]
    du = (grad @ mn - un * (grad * cos).sum(axis=1, keepdims=True)) / nu[:, None]
    dm = (grad.T @ un - mn * (grad * cos).sum(axis=0)[:, None]) / nm[:, None]
    return du.astype(u.dtype, copy=False), dm.astype(m.dtype, copy=False)


def normalize_rows(m: Array) -> Array:
    """Unit-normalize each row; rejects zero rows."""
    m = np.atleast_2d(m)
    n = row_norms(m)
    if m.shape[0] and n.min() == 0.0:
        raise DegenerateInputError("cannot normalize a zero-norm row")
    return (m / n[:, None]).astype(m.dtype, copy=False)
