"""
Layers of the toy binarized network, with hand-written backward passes.

Tensors are channels-last: dense inputs are (..., features), images are
(B, H, W, C). Every layer caches what its backward pass needs during
``forward`` and fills ``grads`` during ``backward``.

Binarized measure layers score each input patch against each filter with
a ``MeasureExpr`` instead of the plain +-1 dot product. Match counts come
from the moment identity

    s = x . w,  p = sum(x),  q = sum(w)
    a = (n + s + p + q) / 4     b = (n - s - p + q) / 4
    c = (n - s + p - q) / 4     d = (n + s - p - q) / 4

which is exact on +-1 data and differentiable in s, p and q.
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from ..core.bitpack import DimensionError
from ..core.measure import AlphaParams, EvalStats, MeasureExpr

logger = logging.getLogger(__name__)


def binarize(x: np.ndarray) -> np.ndarray:
    """sign(x) with sign(0) = +1."""
    return np.where(x >= 0, 1.0, -1.0)


def ste_grad(latent: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Straight-through estimator: pass the gradient where |latent| <= 1."""
    return grad * (np.abs(latent) <= 1.0)


def im2col(x: np.ndarray, kernel: int, stride: int, pad: int, pad_value: float = 0.0) -> np.ndarray:
    """(B, H, W, C) -> (B, Ho, Wo, kernel*kernel*C) patches, ordered (ky, kx, c)."""
    batch, height, width, channels = x.shape
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)), constant_values=pad_value)
    out_h = (height + 2 * pad - kernel) // stride + 1
    out_w = (width + 2 * pad - kernel) // stride + 1
    if out_h <= 0 or out_w <= 0:
        raise DimensionError(f"input {height}x{width} too small for kernel {kernel}")
    cols = np.empty((batch, out_h, out_w, kernel, kernel, channels), dtype=x.dtype)
    for i in range(kernel):
        for j in range(kernel):
            cols[:, :, :, i, j, :] = padded[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :]
    return cols.reshape(batch, out_h, out_w, kernel * kernel * channels)


def col2im(dcols: np.ndarray, x_shape: Tuple[int, int, int, int], kernel: int, stride: int, pad: int) -> np.ndarray:
    """Adjoint of ``im2col``: scatter-add patch gradients back onto the input grid."""
    batch, height, width, channels = x_shape
    out_h, out_w = dcols.shape[1:3]
    dcols = dcols.reshape(batch, out_h, out_w, kernel, kernel, channels)
    dpadded = np.zeros((batch, height + 2 * pad, width + 2 * pad, channels))
    for i in range(kernel):
        for j in range(kernel):
            dpadded[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :] += dcols[:, :, :, i, j, :]
    return dpadded[:, pad:pad + height, pad:pad + width, :]


class Layer:
    """Base layer. ``params`` are trained, ``buffers`` are saved but not trained."""

    def __init__(self):
        self.params: Dict[str, np.ndarray] = {}
        self.grads: Dict[str, np.ndarray] = {}
        self.buffers: Dict[str, np.ndarray] = {}

    def forward(self, x: np.ndarray, training: bool = True) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def post_step(self):
        pass


class Flatten(Layer):
    def forward(self, x, training=True):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._shape)


class Dense(Layer):
    """Full-precision affine layer."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator):
        super().__init__()
        limit = np.sqrt(6.0 / (in_features + out_features))
        self.params["weight"] = rng.uniform(-limit, limit, size=(in_features, out_features))
        self.params["bias"] = np.zeros(out_features)

    def forward(self, x, training=True):
        if x.shape[-1] != self.params["weight"].shape[0]:
            raise DimensionError(f"Dense expects {self.params['weight'].shape[0]} features, got {x.shape[-1]}")
        self._x = x
        return x @ self.params["weight"] + self.params["bias"]

    def backward(self, grad):
        weight = self.params["weight"]
        x2 = self._x.reshape(-1, weight.shape[0])
        g2 = grad.reshape(-1, weight.shape[1])
        self.grads["weight"] = x2.T @ g2
        self.grads["bias"] = g2.sum(axis=0)
        return grad @ weight.T


class Conv2d(Layer):
    """Full-precision convolution, zero padding."""

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 kernel: int = 3, stride: int = 1, pad: int = 1):
        super().__init__()
        self.kernel, self.stride, self.pad = kernel, stride, pad
        fan_in = kernel * kernel * in_channels
        limit = np.sqrt(6.0 / (fan_in + out_channels))
        self.params["weight"] = rng.uniform(-limit, limit, size=(fan_in, out_channels))
        self.params["bias"] = np.zeros(out_channels)

    def forward(self, x, training=True):
        self._x_shape = x.shape
        self._cols = im2col(x, self.kernel, self.stride, self.pad, 0.0)
        return self._cols @ self.params["weight"] + self.params["bias"]

    def backward(self, grad):
        weight = self.params["weight"]
        cols2 = self._cols.reshape(-1, weight.shape[0])
        g2 = grad.reshape(-1, weight.shape[1])
        self.grads["weight"] = cols2.T @ g2
        self.grads["bias"] = g2.sum(axis=0)
        return col2im(grad @ weight.T, self._x_shape, self.kernel, self.stride, self.pad)


class BatchNorm(Layer):
    """Per-channel scale/shift normalization over all but the last axis."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = np.zeros(channels)
        self.buffers["running_var"] = np.ones(channels)

    def forward(self, x, training=True):
        axes = tuple(range(x.ndim - 1))
        if training:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = self.momentum
            self.buffers["running_mean"] = (1 - m) * self.buffers["running_mean"] + m * mean
            self.buffers["running_var"] = (1 - m) * self.buffers["running_var"] + m * var
        else:
            mean = self.buffers["running_mean"]
            var = self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, axes, training)
        return self.params["gamma"] * xhat + self.params["beta"]

    def backward(self, grad):
        xhat, inv_std, axes, training = self._cache
        self.grads["gamma"] = (grad * xhat).sum(axis=axes)
        self.grads["beta"] = grad.sum(axis=axes)
        dxhat = grad * self.params["gamma"]
        if not training:
            return dxhat * inv_std
        count = grad.size // grad.shape[-1]
        return (inv_std / count) * (
            count * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes)
        )


class HardTanh(Layer):
    def forward(self, x, training=True):
        self._x = x
        return np.clip(x, -1.0, 1.0)

    def backward(self, grad):
        return grad * (np.abs(self._x) <= 1.0)


class GlobalAvgPool(Layer):
    def forward(self, x, training=True):
        self._shape = x.shape
        return x.mean(axis=(1, 2))

    def backward(self, grad):
        batch, height, width, channels = self._shape
        return np.broadcast_to(grad[:, None, None, :] / (height * width), self._shape).copy()


class _MeasureCore:
    """Counts-from-moments scoring of +-1 rows (M, n) against +-1 filters (n, C)."""

    def __init__(self, expr: MeasureExpr, normalize: bool):
        self.expr = expr
        self.normalize = normalize

    def forward(self, xb: np.ndarray, wb: np.ndarray, alphas: AlphaParams,
                stats: Optional[EvalStats]) -> np.ndarray:
        n = xb.shape[1]
        if wb.shape[0] != n:
            raise DimensionError(f"patch length {n} does not match filter length {wb.shape[0]}")
        s = xb @ wb
        p = xb.sum(axis=1, keepdims=True)
        q = wb.sum(axis=0, keepdims=True)
        scale = 1.0 / n if self.normalize else 1.0
        a = (n + s + p + q) * (0.25 * scale)
        b = (n - s - p + q) * (0.25 * scale)
        c = (n - s + p - q) * (0.25 * scale)
        d = (n + s - p - q) * (0.25 * scale)
        y, tape = self.expr.forward(a, b, c, d, alphas, stats)
        self._cache = (xb, wb, tape, scale, s.shape)
        return np.broadcast_to(y, s.shape)

    def backward(self, grad: np.ndarray) -> Tuple[np.ndarray, np.ndarray, Dict[int, np.ndarray]]:
        xb, wb, tape, scale, shape = self._cache
        g = self.expr.backward(tape, grad)
        ga, gb, gc, gd = (np.broadcast_to(v, shape) * scale for v in (g.a, g.b, g.c, g.d))
        ds = (ga - gb - gc + gd) * 0.25
        dp = ((ga - gb + gc - gd) * 0.25).sum(axis=1, keepdims=True)
        dq = ((ga + gb - gc - gd) * 0.25).sum(axis=0, keepdims=True)
        dxb = ds @ wb.T + dp
        dwb = xb.T @ ds + dq
        return dxb, dwb, g.alpha


class _MeasureLayer(Layer):
    """Shared state of binarized measure layers: latent weights, alphas, guard stats."""

    def __init__(self, fan_in: int, out_channels: int, expr: MeasureExpr,
                 rng: np.random.Generator, normalize: bool):
        super().__init__()
        self.expr = expr
        self.core = _MeasureCore(expr, normalize)
        self.stats = EvalStats()
        # identity binarization for finite-difference checks
        self.relaxed = False
        self.params["weight"] = rng.uniform(-1.0, 1.0, size=(fan_in, out_channels))
        for slot, vector in AlphaParams.init(expr, out_channels).values.items():
            self.params[f"alpha{slot + 1}"] = vector

    def alphas(self) -> AlphaParams:
        return AlphaParams({slot: self.params[f"alpha{slot + 1}"] for slot in self.expr.alpha_slots})

    def _binarize(self, x: np.ndarray) -> np.ndarray:
        return x if self.relaxed else binarize(x)

    def _ste(self, latent: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return grad if self.relaxed else ste_grad(latent, grad)

    def _store_grads(self, dwb: np.ndarray, dalpha: Dict[int, np.ndarray]):
        self.grads["weight"] = self._ste(self.params["weight"], dwb)
        for slot, g in dalpha.items():
            self.grads[f"alpha{slot + 1}"] = np.asarray(g, dtype=np.float64)

    def post_step(self):
        np.clip(self.params["weight"], -1.0, 1.0, out=self.params["weight"])


class MeasureDense(_MeasureLayer):
    """Binarized fully connected layer scored by a similarity measure."""

    def __init__(self, in_features: int, out_features: int, expr: MeasureExpr,
                 rng: np.random.Generator, normalize: bool = False):
        super().__init__(in_features, out_features, expr, rng, normalize)

    def forward(self, x, training=True):
        self._x = x
        n = self.params["weight"].shape[0]
        if x.shape[-1] != n:
            raise DimensionError(f"MeasureDense expects {n} features, got {x.shape[-1]}")
        xb = self._binarize(x).reshape(-1, n)
        y = self.core.forward(xb, self._binarize(self.params["weight"]), self.alphas(), self.stats)
        return y.reshape(x.shape[:-1] + (y.shape[-1],))

    def backward(self, grad):
        dxb, dwb, dalpha = self.core.backward(grad.reshape(-1, grad.shape[-1]))
        self._store_grads(dwb, dalpha)
        return self._ste(self._x, dxb.reshape(self._x.shape))


class MeasureConv2d(_MeasureLayer):
    """
    Binarized convolution scored by a similarity measure.

    Inputs are binarized before padding and padded with -1 (bit 0), so
    every patch is a genuine +-1 vector and counts stay exact.
    """

    def __init__(self, in_channels: int, out_channels: int, expr: MeasureExpr,
                 rng: np.random.Generator, kernel: int = 3, stride: int = 1, pad: int = 1,
                 normalize: bool = False):
        super().__init__(kernel * kernel * in_channels, out_channels, expr, rng, normalize)
        self.kernel, self.stride, self.pad = kernel, stride, pad
        self.in_channels = in_channels

    def forward(self, x, training=True):
        if x.ndim != 4 or x.shape[-1] != self.in_channels:
            raise DimensionError(f"MeasureConv2d expects (B, H, W, {self.in_channels}), got {x.shape}")
        self._x = x
        cols = im2col(self._binarize(x), self.kernel, self.stride, self.pad, -1.0)
        self._cols_shape = cols.shape
        y = self.core.forward(cols.reshape(-1, cols.shape[-1]), self._binarize(self.params["weight"]),
                              self.alphas(), self.stats)
        return y.reshape(cols.shape[:3] + (y.shape[-1],))

    def backward(self, grad):
        dxb, dwb, dalpha = self.core.backward(grad.reshape(-1, grad.shape[-1]))
        self._store_grads(dwb, dalpha)
        dx = col2im(dxb.reshape(self._cols_shape), self._x.shape, self.kernel, self.stride, self.pad)
        return self._ste(self._x, dx)
