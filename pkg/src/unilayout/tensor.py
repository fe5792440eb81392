"""Minimal dense-tensor core with reverse-mode automatic differentiation.

Tensors wrap float64 numpy buffers and record the ops applied to them; calling
``backward`` on a scalar loss walks the tape in reverse topological order and
accumulates gradients into every parameter that requires them. The op set is
exactly what a small transformer needs. Everything is deliberately float64 so
finite-difference checks stay tight.
"""
from __future__ import annotations

import struct
import warnings
from typing import Callable

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)
MASK_VALUE = -1e9


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


class AutodiffUsageError(RuntimeError):
    """The autodiff API was used outside its contract."""


class Tensor:
    """A float64 array plus an optional gradient and its place in the tape."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __mul__(self, other) -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def zero_grad(self) -> None:
        self.grad = None


def _result(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward
    return out


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(grad, dtype=np.float64, copy=True)
        if t.grad.shape != t.data.shape:  # defensive; broadcasting is handled upstream
            t.grad = np.broadcast_to(grad, t.data.shape).copy()
    else:
        t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a gradient down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; trailing-axis broadcasting covers bias addition."""
    try:
        data = a.data + b.data
    except ValueError:
        raise ShapeError(f"cannot add shapes {a.shape} and {b.shape}") from None

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(grad, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(grad, b.shape))

    return _result(data, (a, b), backward)


def mul(a: Tensor, b) -> Tensor:
    """Elementwise (or scalar) product."""
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=np.float64))
    try:
        data = a.data * b.data
    except ValueError:
        raise ShapeError(f"cannot multiply shapes {a.shape} and {b.shape}") from None

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(grad * b.data, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(grad * a.data, b.shape))

    return _result(data, (a, b), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading batch axes must match."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul needs >= 2 dims, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise ShapeError(f"matmul mismatch between {a.shape} and {b.shape}")
    data = a.data @ b.data

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, grad @ b.data.swapaxes(-1, -2))
        if b.requires_grad:
            _accumulate(b, a.data.swapaxes(-1, -2) @ grad)

    return _result(data, (a, b), backward)


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = a.data.reshape(shape)

    def backward(grad: np.ndarray) -> None:
        _accumulate(a, grad.reshape(a.shape))

    return _result(data, (a,), backward)


def transpose(a: Tensor, axes: tuple[int, ...]) -> Tensor:
    data = a.data.transpose(axes)
    inverse = tuple(np.argsort(axes))

    def backward(grad: np.ndarray) -> None:
        _accumulate(a, grad.transpose(inverse))

    return _result(data, (a,), backward)


def slice_axis1(a: Tensor, start: int, stop: int) -> Tensor:
    """Take rows [start, stop) along axis 1."""
    if a.data.ndim < 2 or not 0 <= start < stop <= a.shape[1]:
        raise ShapeError(f"cannot slice [{start}:{stop}] of axis 1 in shape {a.shape}")
    data = a.data[:, start:stop]

    def backward(grad: np.ndarray) -> None:
        if a.requires_grad:
            full = np.zeros_like(a.data)
            full[:, start:stop] = grad
            _accumulate(a, full)

    return _result(data, (a,), backward)


def embedding_lookup(table: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of an embedding table: output shape ids.shape + (dim,)."""
    ids = np.asarray(ids)
    if table.data.ndim != 2:
        raise ShapeError(f"embedding table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError(f"ids out of range for table with {table.shape[0]} rows")
    data = table.data[ids]

    def backward(grad: np.ndarray) -> None:
        if table.requires_grad:
            if table.grad is None:
                table.grad = np.zeros_like(table.data)
            np.add.at(table.grad, ids.reshape(-1), grad.reshape(-1, table.shape[1]))

    return _result(data, (table,), backward)


def softmax(a: Tensor) -> Tensor:
    """Max-subtracted softmax over the last axis."""
    shifted = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    data = e / e.sum(axis=-1, keepdims=True)

    def backward(grad: np.ndarray) -> None:
        inner = (grad * data).sum(axis=-1, keepdims=True)
        _accumulate(a, (grad - inner) * data)

    return _result(data, (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    d = a.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(f"gain/bias must have shape ({d},), got {gain.shape}, {bias.shape}")
    mean = a.data.mean(axis=-1, keepdims=True)
    centered = a.data - mean
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normed = centered * inv_std
    data = normed * gain.data + bias.data

    def backward(grad: np.ndarray) -> None:
        _accumulate(bias, _unbroadcast(grad, bias.shape))
        _accumulate(gain, _unbroadcast(grad * normed, gain.shape))
        if a.requires_grad:
            g = grad * gain.data
            gn_mean = g.mean(axis=-1, keepdims=True)
            gn_dot = (g * normed).mean(axis=-1, keepdims=True)
            _accumulate(a, inv_std * (g - gn_mean - normed * gn_dot))

    return _result(data, (a, gain, bias), backward)


def gelu(a: Tensor) -> Tensor:
    """Exact (erf-based) Gaussian error linear unit."""
    cdf = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    data = a.data * cdf

    def backward(grad: np.ndarray) -> None:
        pdf = _INV_SQRT2PI * np.exp(-0.5 * a.data**2)
        _accumulate(a, grad * (cdf + a.data * pdf))

    return _result(data, (a,), backward)


def mask_add(a: Tensor, mask: np.ndarray) -> Tensor:
    """Add a constant additive mask (no gradient flows into the mask)."""
    try:
        data = a.data + mask
    except ValueError:
        raise ShapeError(f"mask shape {mask.shape} does not broadcast to {a.shape}") from None

    def backward(grad: np.ndarray) -> None:
        _accumulate(a, grad)

    return _result(data, (a,), backward)


def causal_mask(n: int) -> np.ndarray:
    """(n, n) additive mask blocking attention to future positions."""
    return np.triu(np.full((n, n), MASK_VALUE), k=1)


def causal_mask_add(scores: Tensor) -> Tensor:
    """Apply the causal mask over the last two axes of attention scores."""
    n = scores.shape[-1]
    if scores.shape[-2] != n:
        raise ShapeError(f"causal mask needs square trailing axes, got {scores.shape}")
    return mask_add(scores, causal_mask(n))


def dropout(a: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only in training mode."""
    if not 0 <= rate < 1:
        raise AutodiffUsageError(f"dropout rate must be in [0, 1), got {rate}")
    if rate == 0:
        return a
    keep = (rng.random(a.shape) >= rate) / (1.0 - rate)
    return mul(a, Tensor(keep))


def cross_entropy(logits: Tensor, targets: np.ndarray, ignore_index: int = -100) -> Tensor:
    """Mean negative log-likelihood over non-ignored positions, in log-space.

    ``logits`` has shape (..., vocab); ``targets`` matches the leading shape.
    """
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(
            f"targets shape {targets.shape} does not match logits {logits.shape[:-1]}"
        )
    flat_logits = logits.data.reshape(-1, logits.shape[-1])
    flat_targets = targets.reshape(-1)
    valid = flat_targets != ignore_index
    count = int(valid.sum())
    if count == 0:
        raise AutodiffUsageError("cross_entropy: every position is ignored")
    shifted = flat_logits - flat_logits.max(axis=-1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
    log_probs = shifted - log_z
    rows = np.arange(flat_targets.size)
    picked = np.where(valid, log_probs[rows, np.where(valid, flat_targets, 0)], 0.0)
    data = -picked.sum() / count

    def backward(grad: np.ndarray) -> None:
        if logits.requires_grad:
            probs = np.exp(log_probs)
            probs[rows[valid], flat_targets[valid]] -= 1.0
            probs[~valid] = 0.0
            _accumulate(logits, (float(grad) / count) * probs.reshape(logits.shape))

    return _result(np.asarray(data), (logits,), backward)


def backward(loss: Tensor) -> None:
    """Reverse-mode accumulation of d(loss)/d(param) through the whole tape."""
    if loss.data.size != 1:
        raise AutodiffUsageError(f"backward requires a scalar loss, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


class Adam:
    """Adam with linear learning-rate warmup; clears gradients after each step."""

    def __init__(
        self,
        params: dict[str, Tensor],
        lr: float = 1e-4,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        warmup_steps: int = 0,
    ):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.warmup_steps = warmup_steps
        self.step_count = 0
        self._m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self._v = {name: np.zeros_like(p.data) for name, p in params.items()}

    def effective_lr(self, step: int) -> float:
        if self.warmup_steps <= 0:
            return self.lr
        return self.lr * min(1.0, step / self.warmup_steps)

    def step(self) -> None:
        if all(p.grad is None for p in self.params.values()):
            warnings.warn("optimizer step with no gradients; did you call backward()?")
            return
        self.step_count += 1
        lr = self.effective_lr(self.step_count)
        b1c = 1.0 - self.beta1**self.step_count
        b2c = 1.0 - self.beta2**self.step_count
        for name, p in self.params.items():
            if p.grad is None:
                continue
            m = self._m[name]
            v = self._v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * p.grad
            v *= self.beta2
            v += (1.0 - self.beta2) * p.grad**2
            p.data -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
        for p in self.params.values():
            p.grad = None


CHECKPOINT_MAGIC = b"ULCP"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: dict[str, Tensor]) -> None:
    """Write parameters to a flat little-endian binary file, sorted by name."""
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(params)))
        for name in sorted(params):
            data = params[name].data
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<I", data.ndim))
            fh.write(struct.pack(f"<{data.ndim}I", *data.shape))
            fh.write(np.ascontiguousarray(data, dtype="<f8").tobytes())


def load_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise AutodiffUsageError(f"not a checkpoint file: bad magic {magic!r}")
        version, count = struct.unpack("<II", fh.read(8))
        if version != CHECKPOINT_VERSION:
            raise AutodiffUsageError(f"unsupported checkpoint version {version}")
        params: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<I", fh.read(4))
            name = fh.read(name_len).decode("utf-8")
            (rank,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{rank}I", fh.read(4 * rank)) if rank else ()
            n = int(np.prod(shape)) if shape else 1
            buffer = fh.read(8 * n)
            params[name] = np.frombuffer(buffer, dtype="<f8").reshape(shape).astype(np.float64)
        return params


def gradient_check(
    build: Callable[[dict[str, Tensor]], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central finite differences.

    ``build`` must construct a fresh scalar loss from the given parameters on
    every call; it is invoked 2N + 1 times.
    """
    for p in params.values():
        p.grad = None
    loss = build(params)
    backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        numeric = np.zeros_like(flat)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = build(params).item()
            flat[i] = original - h
            down = build(params).item()
            flat[i] = original
            numeric[i] = (up - down) / (2 * h)
        a = analytic[name].reshape(-1)
        denom = np.maximum(np.abs(a) + np.abs(numeric), 1e-8)
        worst = max(worst, float(np.max(np.abs(a - numeric) / denom)))
    return worst
