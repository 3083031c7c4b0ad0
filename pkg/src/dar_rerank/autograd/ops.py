"""
Differentiable operations over `Tensor`.

Broadcasting is limited to a 0-d (scalar) operand against a tensor. The
only other implicit expansion is `add_bias`, which adds a vector along
the last axis and has its own backward rule.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from dar_rerank.autograd.tensor import Function, Tensor
from dar_rerank.errors import DimensionError, DomainError

logger = logging.getLogger(__name__)

PROB_FLOOR = 1e-30

_GELU_C = float(np.sqrt(2.0 / np.pi))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=np.float64))


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Collapse a gradient back onto a scalar operand."""
    if grad.shape == shape:
        return grad
    return np.asarray(grad.sum()).reshape(shape)


def _check_elementwise(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape or a.ndim == 0 or b.ndim == 0:
        return
    raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} are not broadcast-compatible")


# ── Elementwise ──────────────────────────────────────────────────────────────

class Add(Function):
    name = "add"

    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        a, b = self.inputs
        return _reduce_to(grad, a.shape), _reduce_to(grad, b.shape)


class Mul(Function):
    name = "mul"

    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return _reduce_to(grad * b.data, a.shape), _reduce_to(grad * a.data, b.shape)


class Scale(Function):
    name = "scale"

    def forward(self, a):
        return a * self.kwargs["factor"]

    def backward(self, grad):
        return (grad * self.kwargs["factor"],)


class Tanh(Function):
    name = "tanh"

    def forward(self, a):
        self.saved["y"] = np.tanh(a)
        return self.saved["y"]

    def backward(self, grad):
        y = self.saved["y"]
        return (grad * (1.0 - y * y),)


class Exp(Function):
    name = "exp"

    def forward(self, a):
        self.saved["y"] = np.exp(a)
        return self.saved["y"]

    def backward(self, grad):
        return (grad * self.saved["y"],)


class Log(Function):
    name = "log"

    def forward(self, a):
        if np.any(a <= 0):
            bad = float(a.reshape(-1)[np.argmax(a.reshape(-1) <= 0)])
            raise DomainError(f"log of non-positive value {bad}")
        return np.log(a)

    def backward(self, grad):
        return (grad / self.inputs[0].data,)


class Gelu(Function):
    """tanh approximation of GELU; smooth everywhere."""

    name = "gelu"

    def forward(self, a):
        inner = _GELU_C * (a + 0.044715 * a ** 3)
        th = np.tanh(inner)
        self.saved["th"] = th
        return 0.5 * a * (1.0 + th)

    def backward(self, grad):
        a = self.inputs[0].data
        th = self.saved["th"]
        d_inner = _GELU_C * (1.0 + 3.0 * 0.044715 * a ** 2)
        return (grad * (0.5 * (1.0 + th) + 0.5 * a * (1.0 - th * th) * d_inner),)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "add")
    return Add.apply(a, b)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_elementwise(a, b, "mul")
    return Mul.apply(a, b)


def scale(a: Tensor, factor: float) -> Tensor:
    return Scale.apply(as_tensor(a), factor=float(factor))


def tanh(a: Tensor) -> Tensor:
    return Tanh.apply(as_tensor(a))


def exp(a: Tensor) -> Tensor:
    return Exp.apply(as_tensor(a))


def log(a: Tensor) -> Tensor:
    return Log.apply(as_tensor(a))


def gelu(a: Tensor) -> Tensor:
    return Gelu.apply(as_tensor(a))


_ELEMENTWISE = {
    "tanh": tanh,
    "log": log,
    "exp": exp,
    "add": add,
    "scale": scale,
    "mul": mul,
    "gelu": gelu,
}


def elementwise(op: str, *args) -> Tensor:
    """Dispatch an elementwise op by name (tanh, log, add, scale, exp, mul, gelu)."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise DimensionError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ── Linear algebra and shape ─────────────────────────────────────────────────

class MatMul(Function):
    name = "matmul"

    def forward(self, a, b):
        return a @ b

    def backward(self, grad):
        a, b = self.inputs
        return grad @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Matrix product of [m×k] by [k×n], or batched [B×m×k] by [B×k×n].

    Leading (batch) extents must match exactly; nothing is broadcast.
    """
    a, b = as_tensor(a), as_tensor(b)
    ok = a.ndim == b.ndim and a.ndim >= 2 and a.shape[:-2] == b.shape[:-2] \
        and a.shape[-1] == b.shape[-2]
    if not ok:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    return MatMul.apply(a, b)


class Transpose(Function):
    name = "transpose"

    def forward(self, a):
        return np.transpose(a, self.kwargs["axes"])

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.kwargs["axes"])),)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    return Transpose.apply(a, axes=tuple(axes))


class Reshape(Function):
    name = "reshape"

    def forward(self, a):
        return a.reshape(self.kwargs["shape"])

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    try:
        np.empty(a.shape).reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return Reshape.apply(a, shape=tuple(shape))


class Index(Function):
    name = "index"

    def forward(self, a):
        return a[self.kwargs["key"]]

    def backward(self, grad):
        out = np.zeros_like(self.inputs[0].data)
        np.add.at(out, self.kwargs["key"], grad)
        return (out,)


def index(a: Tensor, key) -> Tensor:
    return Index.apply(as_tensor(a), key=key)


class AddBias(Function):
    name = "add_bias"

    def forward(self, x, b):
        return x + b

    def backward(self, grad):
        lead = tuple(range(grad.ndim - 1))
        return grad, grad.sum(axis=lead) if lead else grad


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """x[..., n] + b[n]."""
    x, b = as_tensor(x), as_tensor(b)
    if b.ndim != 1 or x.ndim < 1 or x.shape[-1] != b.shape[0]:
        raise DimensionError(f"add_bias: bias {b.shape} does not fit {x.shape}")
    return AddBias.apply(x, b)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """x[n×d_in] · W[out×d_in]ᵀ + B[out]."""
    out = matmul(x, transpose(weight))
    return add_bias(out, bias) if bias is not None else out


class Concat(Function):
    name = "concat"

    def forward(self, *arrays):
        self.saved["sizes"] = [a.shape[0] for a in arrays]
        return np.concatenate(arrays, axis=0)

    def backward(self, grad):
        bounds = np.cumsum(self.saved["sizes"])[:-1]
        return tuple(np.split(grad, bounds, axis=0))


def concat(*tensors: Tensor) -> Tensor:
    """Join rank-1 tensors end to end."""
    tensors = tuple(as_tensor(t) for t in tensors)
    for t in tensors:
        if t.ndim != 1:
            raise DimensionError(f"concat expects rank-1 tensors, got shape {t.shape}")
    return Concat.apply(*tensors)


class Stack(Function):
    name = "stack"

    def forward(self, *arrays):
        return np.stack(arrays, axis=0)

    def backward(self, grad):
        return tuple(grad[i] for i in range(grad.shape[0]))


def stack(tensors: Sequence[Tensor]) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    if not tensors:
        raise DimensionError("stack of zero tensors")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise DimensionError(f"stack: mixed shapes {sorted(shapes)}")
    return Stack.apply(*tensors)


# ── Reductions ───────────────────────────────────────────────────────────────

class Sum(Function):
    name = "sum"

    def forward(self, a):
        return np.asarray(a.sum())

    def backward(self, grad):
        return (np.full_like(self.inputs[0].data, float(grad)),)


def sum_all(a: Tensor) -> Tensor:
    return Sum.apply(as_tensor(a))


def mean_all(a: Tensor) -> Tensor:
    a = as_tensor(a)
    if a.size == 0:
        raise DimensionError("mean of an empty tensor")
    return scale(sum_all(a), 1.0 / a.size)


class MaxPoolRows(Function):
    name = "maxpool_rows"

    def forward(self, rows):
        # np.argmax returns the first maximum: ties go to the lowest row.
        self.saved["arg"] = np.argmax(rows, axis=0)
        return rows[self.saved["arg"], np.arange(rows.shape[1])]

    def backward(self, grad):
        out = np.zeros_like(self.inputs[0].data)
        out[self.saved["arg"], np.arange(out.shape[1])] = grad
        return (out,)


def maxpool_rows(rows: Tensor) -> Tensor:
    """Column-wise maximum of a [k×d] tensor."""
    rows = as_tensor(rows)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise DimensionError(f"maxpool_rows needs a non-empty [k×d] tensor, got {rows.shape}")
    return MaxPoolRows.apply(rows)


class LayerNorm(Function):
    name = "layer_norm"

    def forward(self, x, gamma, beta):
        mu = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv = 1.0 / np.sqrt(var + self.kwargs["eps"])
        xhat = (x - mu) * inv
        self.saved.update(xhat=xhat, inv=inv)
        return xhat * gamma + beta

    def backward(self, grad):
        _, gamma, _ = self.inputs
        xhat, inv = self.saved["xhat"], self.saved["inv"]
        lead = tuple(range(grad.ndim - 1))
        dxhat = grad * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    if gamma.shape != (x.shape[-1],) or beta.shape != gamma.shape:
        raise DimensionError(f"layer_norm: gamma {gamma.shape} / beta {beta.shape} vs input {x.shape}")
    return LayerNorm.apply(x, gamma, beta, eps=eps)


# ── Softmax family ───────────────────────────────────────────────────────────

def _masked(x: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    if mask is None:
        return x
    return np.where(mask.astype(bool), x, -np.inf)


class Softmax(Function):
    name = "softmax"

    def forward(self, x):
        z = _masked(x, self.kwargs["mask"])
        z = z - z.max(axis=-1, keepdims=True)
        e = np.exp(z)
        y = e / e.sum(axis=-1, keepdims=True)
        self.saved["y"] = y
        return y

    def backward(self, grad):
        y = self.saved["y"]
        return (y * (grad - (grad * y).sum(axis=-1, keepdims=True)),)


class LogSoftmax(Function):
    name = "log_softmax"
    allows_inf = True

    def forward(self, x):
        z = _masked(x, self.kwargs["mask"])
        lse = logsumexp(z, axis=-1, keepdims=True)
        y = z - lse
        self.saved["p"] = np.exp(y)
        return y

    def backward(self, grad):
        p = self.saved["p"]
        g = np.where(p > 0, grad, 0.0)
        return (g - p * g.sum(axis=-1, keepdims=True),)


def _check_softmax_input(x: Tensor, mask) -> np.ndarray | None:
    if x.ndim == 0 or x.shape[-1] == 0:
        raise DimensionError(f"softmax over an empty axis (shape {x.shape})")
    if mask is None:
        return None
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != x.shape:
        mask = np.broadcast_to(mask, x.shape)
    if not np.all(mask.any(axis=-1)):
        raise DimensionError("softmax row with every position masked")
    return mask


def softmax(x: Tensor, mask=None) -> Tensor:
    """Softmax over the last axis, max-subtracted; masked positions get 0."""
    x = as_tensor(x)
    return Softmax.apply(x, mask=_check_softmax_input(x, mask))


def log_softmax(x: Tensor, mask=None) -> Tensor:
    """Log-softmax over the last axis via log-sum-exp; masked positions get -inf."""
    x = as_tensor(x)
    return LogSoftmax.apply(x, mask=_check_softmax_input(x, mask))


class CrossEntropy(Function):
    name = "cross_entropy"

    def forward(self, probs):
        label = self.kwargs["label"]
        p = float(probs[label])
        if p < PROB_FLOOR:
            logger.warning("cross_entropy: probability %.3g at label %d clamped to %.0e",
                           p, label, PROB_FLOOR)
            p = PROB_FLOOR
        self.saved["p"] = p
        return np.asarray(-np.log(p))

    def backward(self, grad):
        out = np.zeros_like(self.inputs[0].data)
        out[self.kwargs["label"]] = -float(grad) / self.saved["p"]
        return (out,)


def cross_entropy(probs: Tensor, label: int) -> Tensor:
    """-log(probs[label]) with a 1e-30 floor."""
    probs = as_tensor(probs)
    if probs.ndim != 1 or not 0 <= label < probs.shape[0]:
        raise DimensionError(f"cross_entropy: label {label} outside distribution of shape {probs.shape}")
    return CrossEntropy.apply(probs, label=int(label))


def nll_from_logits(logits: Tensor, label: int, mask=None) -> Tensor:
    """-log_softmax(logits)[label]; the stable training form of cross_entropy∘softmax."""
    logits = as_tensor(logits)
    if logits.ndim != 1 or not 0 <= label < logits.shape[0]:
        raise DimensionError(f"nll_from_logits: label {label} outside logits of shape {logits.shape}")
    return scale(index(log_softmax(logits, mask=mask), label), -1.0)
