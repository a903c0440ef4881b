"""Small numpy layer library with hand-written backward passes.

Activations are ``(batch, time, channels)`` arrays; plain ``(time, channels)``
inputs are accepted by the functional helpers. Each layer caches what its
backward pass needs during ``forward`` and accumulates parameter gradients
into ``Parameter.grad`` during ``backward``.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NumericalError, ShapeError

SELU_LAMBDA = 1.0507009873554805
SELU_ALPHA = 1.6732632423543772

DEBUG = bool(os.environ.get("CONVPUNCT_DEBUG"))


def _check_finite(name: str, x: np.ndarray) -> None:
    if DEBUG and not np.all(np.isfinite(x)):
        raise NumericalError(f"non-finite values after {name}")


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    decay: float = 0.0
    grad: np.ndarray = field(init=False)

    def __post_init__(self):
        self.grad = np.zeros_like(self.value)

    def zero_grad(self) -> None:
        self.grad[...] = 0


@dataclass
class Context:
    """Per-call state threaded through a forward pass."""

    mask: np.ndarray | None = None
    training: bool = False
    rng: np.random.Generator | None = None


# -- functional forms ------------------------------------------------------

def same_padding(kernel: int, dilation: int) -> tuple[int, int]:
    """Left/right zero padding that keeps the sequence length.

    Tap ``k`` reads offset ``(k - ceil((K-1)/2)) * dilation``; for even
    kernels the extra tap lands on the left.
    """
    left = math.ceil((kernel - 1) / 2) * dilation
    return left, (kernel - 1) * dilation - left


def _as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    if x.ndim == 2:
        return x[None], True
    if x.ndim == 3:
        return x, False
    raise ShapeError(f"expected a (T, C) or (B, T, C) array, got shape {x.shape}")


def _im2col(xp: np.ndarray, kernel: int, dilation: int, T: int) -> np.ndarray:
    B, _, C = xp.shape
    cols = np.empty((B, T, kernel * C), dtype=xp.dtype)
    for k in range(kernel):
        cols[:, :, k * C:(k + 1) * C] = xp[:, k * dilation:k * dilation + T]
    return cols.reshape(B * T, kernel * C)


def conv1d_same(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray, dilation: int = 1) -> np.ndarray:
    """Dilated 1D convolution with length-preserving zero padding.

    ``kernels`` has shape (K, C, F); ``out[t, f] = bias[f] + sum_{k,c}
    x[t + (k - ceil((K-1)/2)) * dilation, c] * kernels[k, c, f]``.
    """
    xb, squeeze = _as_batch(x)
    K, C, F = kernels.shape
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if xb.shape[2] != C:
        raise ShapeError(f"input has {xb.shape[2]} channels, kernels expect {C}")
    B, T, _ = xb.shape
    left, right = same_padding(K, dilation)
    xp = np.pad(xb, ((0, 0), (left, right), (0, 0)))
    out = (_im2col(xp, K, dilation, T) @ kernels.reshape(K * C, F) + bias).reshape(B, T, F)
    return out[0] if squeeze else out


def selu(x: np.ndarray) -> np.ndarray:
    # expm1 only on the non-positive branch to avoid overflow warnings
    neg = SELU_LAMBDA * SELU_ALPHA * np.expm1(np.minimum(x, 0))
    return np.where(x > 0, SELU_LAMBDA * x, neg).astype(x.dtype, copy=False)


def sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free for large |x|
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dense_softmax(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return softmax(x @ weights + bias)


def dropout(x: np.ndarray, p: float, rng: np.random.Generator | None, training: bool) -> np.ndarray:
    if not 0 <= p < 1:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0:
        return x
    keep = rng.random(x.shape) >= p
    return x * keep.astype(x.dtype) / x.dtype.type(1 - p)


def masked_cross_entropy(probs: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None,
                         class_weights: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over masked-in steps, and its gradient w.r.t. the logits.

    With ``class_weights`` each step's term is scaled by the weight of its
    true class; the normaliser stays the count of masked-in steps.
    """
    labels = np.asarray(labels)
    if mask is None:
        mask = np.ones(labels.shape, dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    M = int(mask.sum())
    if M == 0:
        raise NumericalError("degenerate batch: every step is masked out")
    n_classes = probs.shape[-1]
    onehot = np.eye(n_classes, dtype=probs.dtype)[labels]
    picked = np.take_along_axis(probs, labels[..., None], axis=-1)[..., 0]
    weight = mask.astype(probs.dtype)
    if class_weights is not None:
        weight = weight * np.asarray(class_weights, dtype=probs.dtype)[labels]
    tiny = np.finfo(probs.dtype).tiny
    loss = -float(np.sum(weight * np.log(np.maximum(picked, tiny)))) / M
    grad = (probs - onehot) * (weight / M)[..., None]
    return loss, grad.astype(probs.dtype, copy=False)


# -- layers ----------------------------------------------------------------

class Layer:
    params: list[Parameter] = []

    def forward(self, x: np.ndarray, ctx: Context) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError


def _normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)


def _glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Conv1D(Layer):
    """Length-preserving dilated convolution; masked-out steps read as zeros."""

    def __init__(self, name: str, in_channels: int, filters: int, kernel: int,
                 dilation: int = 1, rng=None, dtype=np.float32):
        if dilation < 1 or kernel < 1:
            raise ShapeError("kernel and dilation must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.kernel, self.dilation = kernel, dilation
        self.W = Parameter(f"{name}.kernel",
                           _normal(rng, (kernel, in_channels, filters), kernel * in_channels, dtype))
        self.b = Parameter(f"{name}.bias", np.zeros(filters, dtype))
        self.params = [self.W, self.b]

    def forward(self, x, ctx):
        K, C, F = self.W.value.shape
        if x.shape[-1] != C:
            raise ShapeError(f"{self.W.name}: input has {x.shape[-1]} channels, expected {C}")
        self._mask = None if ctx.mask is None else ctx.mask[..., None].astype(x.dtype)
        if self._mask is not None:
            x = x * self._mask
        left, right = same_padding(K, self.dilation)
        self._xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
        self._shape = x.shape
        B, T, _ = x.shape
        cols = _im2col(self._xp, K, self.dilation, T)
        return (cols @ self.W.value.reshape(K * C, F) + self.b.value).reshape(B, T, F)

    def backward(self, dy):
        K, C, F = self.W.value.shape
        B, T, _ = self._shape
        d = self.dilation
        dy2 = dy.reshape(B * T, F)
        # Rebuild columns rather than caching them; the K=20 layer's are large.
        cols = _im2col(self._xp, K, d, T)
        self.W.grad += (cols.T @ dy2).reshape(K, C, F)
        self.b.grad += dy2.sum(axis=0)
        dcols = (dy2 @ self.W.value.reshape(K * C, F).T).reshape(B, T, K, C)
        dxp = np.zeros_like(self._xp)
        for k in range(K):
            dxp[:, k * d:k * d + T] += dcols[:, :, k]
        left, _ = same_padding(K, d)
        dx = dxp[:, left:left + T]
        if self._mask is not None:
            dx = dx * self._mask
        return dx


class SELU(Layer):
    params = []

    def forward(self, x, ctx):
        self._x = x
        return selu(x)

    def backward(self, dy):
        x = self._x
        slope = np.where(x > 0, SELU_LAMBDA, SELU_LAMBDA * SELU_ALPHA * np.exp(np.minimum(x, 0)))
        return dy * slope.astype(dy.dtype, copy=False)


class GaussianNoise(Layer):
    """Additive N(0, sigma^2) noise in training mode only.

    ``columns`` restricts the noise to a boolean subset of channels.
    """

    params = []

    def __init__(self, sigma: float, columns: np.ndarray | None = None):
        if sigma < 0:
            raise ValueError(f"noise sigma must be non-negative, got {sigma}")
        self.sigma = sigma
        self.columns = columns

    def forward(self, x, ctx):
        if not ctx.training or self.sigma == 0:
            return x
        noise = ctx.rng.normal(0.0, self.sigma, size=x.shape).astype(x.dtype)
        if self.columns is not None:
            noise *= self.columns.astype(x.dtype)
        return x + noise

    def backward(self, dy):
        return dy


class Dropout(Layer):
    params = []

    def __init__(self, p: float):
        if not 0 <= p < 1:
            raise ValueError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p

    def forward(self, x, ctx):
        self._scale = None
        if not ctx.training or self.p == 0:
            return x
        keep = ctx.rng.random(x.shape) >= self.p
        self._scale = keep.astype(x.dtype) / x.dtype.type(1 - self.p)
        return x * self._scale

    def backward(self, dy):
        return dy if self._scale is None else dy * self._scale


class Dense(Layer):
    """Per-timestep affine map producing logits."""

    def __init__(self, name: str, in_features: int, out_features: int, decay: float = 0.0,
                 rng=None, dtype=np.float32, zero_init: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        W = (np.zeros((in_features, out_features), dtype) if zero_init
             else _normal(rng, (in_features, out_features), in_features, dtype))
        self.W = Parameter(f"{name}.kernel", W, decay)
        self.b = Parameter(f"{name}.bias", np.zeros(out_features, dtype))
        self.params = [self.W, self.b]

    def forward(self, x, ctx):
        if x.shape[-1] != self.W.value.shape[0]:
            raise ShapeError(f"{self.W.name}: input has {x.shape[-1]} features, "
                             f"expected {self.W.value.shape[0]}")
        self._x = x
        return x @ self.W.value + self.b.value

    def backward(self, dy):
        x2 = self._x.reshape(-1, self._x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self.W.grad += x2.T @ dy2
        self.b.grad += dy2.sum(axis=0)
        return dy @ self.W.value.T


class LSTM(Layer):
    """Single-direction LSTM over (B, T, C) with gate order i, f, g, o.

    Masked-out steps leave the state untouched and emit zeros, so a
    right-padded window gives the same valid outputs as the unpadded
    sequence in either direction.
    """

    def __init__(self, name: str, in_features: int, hidden: int, reverse: bool = False,
                 recurrent_decay: float = 0.0, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        H = hidden
        self.hidden, self.reverse = H, reverse
        self.Wx = Parameter(f"{name}.kernel",
                            _glorot_uniform(rng, (in_features, 4 * H), in_features, 4 * H, dtype))
        self.Wh = Parameter(f"{name}.recurrent_kernel",
                            _glorot_uniform(rng, (H, 4 * H), H, 4 * H, dtype), recurrent_decay)
        b = np.zeros(4 * H, dtype)
        b[H:2 * H] = 1.0
        self.b = Parameter(f"{name}.bias", b)
        self.params = [self.Wx, self.Wh, self.b]

    def forward(self, x, ctx):
        B, T, C = x.shape
        H = self.hidden
        if C != self.Wx.value.shape[0]:
            raise ShapeError(f"{self.Wx.name}: input has {C} features, expected {self.Wx.value.shape[0]}")
        dt = x.dtype
        mask = (np.ones((B, T), dt) if ctx.mask is None else ctx.mask.astype(dt))
        xw = (x.reshape(B * T, C) @ self.Wx.value + self.b.value).reshape(B, T, 4 * H)
        Wh = self.Wh.value
        h = np.zeros((B, H), dt)
        c = np.zeros((B, H), dt)
        gates = np.empty((T, B, 4 * H), dt)
        tanh_c = np.empty((T, B, H), dt)
        c_prev = np.empty((T, B, H), dt)
        h_prev = np.empty((T, B, H), dt)
        out = np.zeros((B, T, H), dt)
        steps = range(T - 1, -1, -1) if self.reverse else range(T)
        for t in steps:
            z = xw[:, t] + h @ Wh
            a = gates[t]
            a[:, :2 * H] = sigmoid(z[:, :2 * H])
            a[:, 2 * H:3 * H] = np.tanh(z[:, 2 * H:3 * H])
            a[:, 3 * H:] = sigmoid(z[:, 3 * H:])
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            c_prev[t] = c
            h_prev[t] = h
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            tanh_c[t] = tc
            h_new = o * tc
            m = mask[:, t, None]
            c = c + m * (c_new - c)
            h = h + m * (h_new - h)
            out[:, t] = m * h_new
        self._cache = (x, mask, gates, tanh_c, c_prev, h_prev)
        return out

    def backward(self, dy):
        x, mask, gates, tanh_c, c_prev, h_prev = self._cache
        B, T, C = x.shape
        H = self.hidden
        Wh = self.Wh.value
        dxw = np.empty((B, T, 4 * H), x.dtype)
        dh = np.zeros((B, H), x.dtype)
        dc = np.zeros((B, H), x.dtype)
        dWh = np.zeros_like(Wh)
        steps = range(T) if self.reverse else range(T - 1, -1, -1)
        for t in steps:
            m = mask[:, t, None]
            a = gates[t]
            i, f, g, o = a[:, :H], a[:, H:2 * H], a[:, 2 * H:3 * H], a[:, 3 * H:]
            tc = tanh_c[t]
            # state carried: h_t = m*h_new + (1-m)*h_prev, and out_t = m*h_new
            dh_new = m * (dh + dy[:, t])
            dc_new = m * dc + dh_new * o * (1 - tc * tc)
            dz = dxw[:, t]
            dz[:, :H] = dc_new * g * i * (1 - i)
            dz[:, H:2 * H] = dc_new * c_prev[t] * f * (1 - f)
            dz[:, 2 * H:3 * H] = dc_new * i * (1 - g * g)
            dz[:, 3 * H:] = dh_new * tc * o * (1 - o)
            dWh += h_prev[t].T @ dz
            dc = dc_new * f + (1 - m) * dc
            dh = dz @ Wh.T + (1 - m) * dh
        dxw2 = dxw.reshape(B * T, 4 * H)
        self.Wx.grad += x.reshape(B * T, C).T @ dxw2
        self.Wh.grad += dWh
        self.b.grad += dxw2.sum(axis=0)
        return (dxw2 @ self.Wx.value.T).reshape(B, T, C)


class BiLSTM(Layer):
    def __init__(self, name: str, in_features: int, hidden: int, recurrent_decay: float = 0.0,
                 rng=None, dtype=np.float32):
        self.fwd = LSTM(f"{name}.forward", in_features, hidden, False, recurrent_decay, rng, dtype)
        self.bwd = LSTM(f"{name}.backward", in_features, hidden, True, recurrent_decay, rng, dtype)
        self.hidden = hidden
        self.params = self.fwd.params + self.bwd.params

    def forward(self, x, ctx):
        return np.concatenate([self.fwd.forward(x, ctx), self.bwd.forward(x, ctx)], axis=-1)

    def backward(self, dy):
        H = self.hidden
        return self.fwd.backward(dy[..., :H]) + self.bwd.backward(dy[..., H:])


class Sequential(Layer):
    def __init__(self, layers: Sequence[Layer]):
        self.layers = list(layers)
        self.params = [p for layer in self.layers for p in layer.params]
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("parameter names must be unique")

    def forward(self, x, ctx):
        for layer in self.layers:
            x = layer.forward(x, ctx)
            _check_finite(type(layer).__name__, x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()


def lstm_layer(x: np.ndarray, kernel: np.ndarray, recurrent_kernel: np.ndarray, bias: np.ndarray,
               reverse: bool = False) -> np.ndarray:
    """Hidden-state sequence of one LSTM direction over (T, C) or (B, T, C)."""
    xb, squeeze = _as_batch(x)
    H = recurrent_kernel.shape[0]
    if kernel.shape != (xb.shape[2], 4 * H) or recurrent_kernel.shape != (H, 4 * H) \
            or bias.shape != (4 * H,):
        raise ShapeError("LSTM parameter shapes do not match the input and hidden sizes")
    layer = LSTM("lstm", xb.shape[2], H, reverse, dtype=xb.dtype)
    layer.Wx.value, layer.Wh.value, layer.b.value = kernel, recurrent_kernel, bias
    out = layer.forward(xb, Context())
    return out[0] if squeeze else out


def bilstm(x: np.ndarray, forward_params: tuple, backward_params: tuple) -> np.ndarray:
    if forward_params[1].shape[0] != backward_params[1].shape[0]:
        raise ShapeError("forward and backward hidden sizes differ")
    return np.concatenate([lstm_layer(x, *forward_params, reverse=False),
                           lstm_layer(x, *backward_params, reverse=True)], axis=-1)


# -- optimisation ----------------------------------------------------------

@dataclass
class AdamState:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def decay_loss(params: Sequence[Parameter]) -> float:
    """L2 penalty whose gradient is ``decay * w``."""
    return sum(0.5 * p.decay * float(np.sum(p.value.astype(np.float64) ** 2))
               for p in params if p.decay)


def adam_step(params: Sequence[Parameter], state: AdamState) -> None:
    """One Adam update in place; weight decay enters as ``g + decay * w``."""
    state.t += 1
    t = state.t
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for p in params:
        g = p.grad + p.decay * p.value if p.decay else p.grad
        m = state.m.get(p.name)
        if m is None:
            m = state.m[p.name] = np.zeros_like(p.value)
            state.v[p.name] = np.zeros_like(p.value)
        v = state.v[p.name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p.value -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.value.dtype)


# -- verification ----------------------------------------------------------

def grad_check(net: Layer, x: np.ndarray, labels: np.ndarray, mask: np.ndarray | None = None,
               samples: int = 200, rng: np.random.Generator | None = None, h: float = 1e-5,
               training: bool = False, seed: int = 0,
               loss_fn: Callable = masked_cross_entropy) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``net`` maps inputs to logits; the loss is softmax cross-entropy. In
    training mode the noise/dropout generator is re-seeded for every
    evaluation so all passes see the same random draws.
    """
    rng = rng if rng is not None else np.random.default_rng(1234)

    def run(backprop: bool) -> float:
        ctx = Context(mask, training, np.random.default_rng(seed))
        probs = softmax(net.forward(x, ctx))
        loss, dlogits = loss_fn(probs, labels, mask)
        if backprop:
            net.backward(dlogits)
        return loss

    for p in net.params:
        p.zero_grad()
    run(True)
    analytic = {p.name: p.grad.copy() for p in net.params}
    sizes = np.array([p.value.size for p in net.params])
    flat = rng.choice(sizes.sum(), size=min(samples, int(sizes.sum())), replace=False)
    offsets = np.concatenate(([0], np.cumsum(sizes)))
    worst = 0.0
    for k in flat:
        pi = int(np.searchsorted(offsets, k, side="right") - 1)
        p = net.params[pi]
        idx = np.unravel_index(int(k - offsets[pi]), p.value.shape)
        orig = p.value[idx]
        p.value[idx] = orig + h
        up = run(False)
        p.value[idx] = orig - h
        down = run(False)
        p.value[idx] = orig
        numeric = (up - down) / (2 * h)
        a = float(analytic[p.name][idx])
        err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst
