"""Trainable layers with explicit forward/backward passes, NCHW layout.

Every layer caches what its backward pass needs during forward; calling
backward without a preceding forward raises. Analytic gradients are checked
against central finite differences in the test suite, so the math here is
kept boringly standard: cross-correlation convolutions, PyTorch-default
batchnorm semantics (eps 1e-5, momentum 0.1, biased variance for
normalization, unbiased for running stats), ReLU subgradient 0 at 0, and
maxpool ties broken to the first element in row-major window order.
"""

from __future__ import annotations

import numpy as np


class Param:
    """A named parameter tensor and its gradient accumulator."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


def _require_cache(cache, layer) -> None:
    if cache is None:
        raise RuntimeError(f"{type(layer).__name__}.backward called before forward")


def kaiming_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d:
    """Cross-correlation with square kernel; padding restricted to {0, 1}."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, padding=0,
                 *, rng: np.random.Generator, name: str, dtype=np.float64):
        if padding not in (0, 1):
            raise ValueError(f"padding must be 0 or 1, got {padding}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        self.weight = Param(f"{name}.weight",
                            kaiming_normal(rng, (out_channels, in_channels, kernel_size, kernel_size), fan_in, dtype))
        self.bias = Param(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def _out_size(self, size: int) -> int:
        span = size + 2 * self.padding - self.kernel_size
        if span < 0 or span % self.stride != 0:
            raise ValueError(
                f"input size {size} incompatible with kernel {self.kernel_size}, "
                f"stride {self.stride}, padding {self.padding}"
            )
        return span // self.stride + 1

    def _im2col(self, x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
        k, s = self.kernel_size, self.stride
        windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(2, 3))
        windows = windows[:, :, ::s, ::s]
        cols = windows.transpose(0, 1, 4, 5, 2, 3)
        return cols.reshape(x.shape[0], self.in_channels * k * k, out_h * out_w)

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input, got {x.shape}")
        out_h, out_w = self._out_size(x.shape[2]), self._out_size(x.shape[3])
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = self._im2col(xp, out_h, out_w)
        w2 = self.weight.value.reshape(self.out_channels, -1)
        out = np.matmul(w2, cols) + self.bias.value[:, None]
        self._cache = (x.shape, cols)
        return out.reshape(x.shape[0], self.out_channels, out_h, out_w)

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        _require_cache(self._cache, self)
        x_shape, cols = self._cache
        self._cache = None
        n, _, h, w = x_shape
        k, s, p = self.kernel_size, self.stride, self.padding
        out_h, out_w = grad_out.shape[2], grad_out.shape[3]

        g2 = grad_out.reshape(n, self.out_channels, -1)
        w2 = self.weight.value.reshape(self.out_channels, -1)
        self.weight.grad += np.einsum("nol,nkl->ok", g2, cols).reshape(self.weight.value.shape)
        self.bias.grad += g2.sum(axis=(0, 2))

        grad_cols = np.matmul(w2.T, g2)
        grad_cols = grad_cols.reshape(n, self.in_channels, k, k, out_h, out_w)
        grad_xp = np.zeros((n, self.in_channels, h + 2 * p, w + 2 * p), dtype=grad_out.dtype)
        for a in range(k):
            for b in range(k):
                grad_xp[:, :, a : a + out_h * s : s, b : b + out_w * s : s] += grad_cols[:, :, a, b]
        return grad_xp[:, :, p : p + h, p : p + w] if p else grad_xp


class ConvTranspose2d:
    """Transposed convolution, kernel 2x2, stride 2: exact x2 upsampling."""

    def __init__(self, in_channels, out_channels, *, rng: np.random.Generator,
                 name: str, dtype=np.float64):
        self.in_channels = in_channels
        self.out_channels = out_channels
        fan_in = in_channels * 4
        # weight layout (in, out, 2, 2): tied-weight adjoint of a 2x2 stride-2 conv
        self.weight = Param(f"{name}.weight",
                            kaiming_normal(rng, (in_channels, out_channels, 2, 2), fan_in, dtype))
        self.bias = Param(f"{name}.bias", np.zeros(out_channels, dtype=dtype))
        self._cache = None

    def parameters(self):
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ValueError(f"expected (N, {self.in_channels}, H, W) input, got {x.shape}")
        n, _, h, w = x.shape
        out = np.einsum("nihw,ioab->nohawb", x, self.weight.value)
        out = out.reshape(n, self.out_channels, 2 * h, 2 * w)
        out += self.bias.value[:, None, None]
        self._cache = x
        return out

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        _require_cache(self._cache, self)
        x = self._cache
        self._cache = None
        n, _, h, w = x.shape
        g6 = grad_out.reshape(n, self.out_channels, h, 2, w, 2)
        self.weight.grad += np.einsum("nihw,nohawb->ioab", x, g6)
        self.bias.grad += g6.sum(axis=(0, 2, 3, 4, 5))
        return np.einsum("nohawb,ioab->nihw", g6, self.weight.value)


class BatchNorm2d:
    """Per-channel batch normalization with PyTorch-default behaviour."""

    def __init__(self, channels, *, name: str, eps=1e-5, momentum=0.1, dtype=np.float64):
        self.channels = channels
        self.eps = eps
        self.momentum = momentum
        self.gamma = Param(f"{name}.gamma", np.ones(channels, dtype=dtype))
        self.beta = Param(f"{name}.beta", np.zeros(channels, dtype=dtype))
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)
        self._name = name
        self._cache = None

    def parameters(self):
        return [self.gamma, self.beta]

    def state_arrays(self):
        return {
            f"{self._name}.running_mean": self.running_mean,
            f"{self._name}.running_var": self.running_var,
        }

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ValueError(f"expected (N, {self.channels}, H, W) input, got {x.shape}")
        if train:
            m = x.shape[0] * x.shape[2] * x.shape[3]
            if m <= 1:
                raise ValueError("batchnorm needs more than one element per channel in train mode")
            mean = x.mean(axis=(0, 2, 3))
            var = x.var(axis=(0, 2, 3))
            inv_std = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[:, None, None]) * inv_std[:, None, None]
            self.running_mean = (1 - self.momentum) * self.running_mean + self.momentum * mean
            self.running_var = (1 - self.momentum) * self.running_var + self.momentum * var * m / (m - 1)
            self._cache = ("train", xhat, inv_std, m)
        else:
            inv_std = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[:, None, None]) * inv_std[:, None, None]
            self._cache = ("eval", xhat, inv_std, None)
        return self.gamma.value[:, None, None] * xhat + self.beta.value[:, None, None]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        _require_cache(self._cache, self)
        mode, xhat, inv_std, m = self._cache
        self._cache = None
        self.gamma.grad += (grad_out * xhat).sum(axis=(0, 2, 3))
        self.beta.grad += grad_out.sum(axis=(0, 2, 3))
        g = grad_out * self.gamma.value[:, None, None]
        if mode == "eval":
            return g * inv_std[:, None, None]
        sum_g = g.sum(axis=(0, 2, 3))
        sum_gx = (g * xhat).sum(axis=(0, 2, 3))
        return (inv_std[:, None, None] / m) * (
            m * g - sum_g[:, None, None] - xhat * sum_gx[:, None, None]
        )


class ReLU:
    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        mask = x > 0
        self._cache = mask
        return x * mask

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        _require_cache(self._cache, self)
        mask = self._cache
        self._cache = None
        return grad_out * mask


class MaxPool2:
    """2x2 max pooling, stride 2; gradient routed to the window argmax."""

    def __init__(self):
        self._cache = None

    def parameters(self):
        return []

    def forward(self, x: np.ndarray, train: bool = True) -> np.ndarray:
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ValueError(f"maxpool2 needs even dims, got {h}x{w}")
        windows = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
        flat = windows.reshape(n, c, h // 2, w // 2, 4)
        idx = flat.argmax(axis=-1)
        self._cache = (x.shape, idx)
        return np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(self, grad_out: np.ndarray) -> np.ndarray:
        _require_cache(self._cache, self)
        (n, c, h, w), idx = self._cache
        self._cache = None
        flat = np.zeros((n, c, h // 2, w // 2, 4), dtype=grad_out.dtype)
        np.put_along_axis(flat, idx[..., None], grad_out[..., None], axis=-1)
        windows = flat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return windows.reshape(n, c, h, w)


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Stack two feature maps along the channel axis."""
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"cannot concat {a.shape} with {b.shape}")
    return np.concatenate([a, b], axis=1)


def split_channels(grad: np.ndarray, first_channels: int) -> tuple[np.ndarray, np.ndarray]:
    """Backward of concat_channels: split the gradient at `first_channels`."""
    return grad[:, :first_channels], grad[:, first_channels:]


def mse_loss(prediction: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error over all elements and its gradient w.r.t. prediction."""
    if prediction.shape != target.shape:
        raise ValueError(f"shape mismatch: {prediction.shape} vs {target.shape}")
    diff = prediction - target
    loss = float(np.mean(diff**2))
    return loss, (2.0 / diff.size) * diff
