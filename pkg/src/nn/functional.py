"""
Neural Operators

Convolution, pixel shuffle and the weight/batch normalization ops, each
with its own forward and backward rule on top of the autograd Tensor.

Convolutions are cross-correlations with zero "same" padding and stride 1,
computed im2col-style: a strided window view of the padded input contracted
against the kernel with one BLAS call.
"""

import logging

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.autograd import Tensor
from src.errors import DimensionError, ModeError, NumericalError
from .params import BatchNormState, Conv2dParams, WeightNormParams

logger = logging.getLogger(__name__)


# ========== Convolution ==========

def _windows(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    """(N, C, H, W) -> zero-padded window view (N, C, H, W, kh, kw)."""
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    return sliding_window_view(x, (kh, kw), axis=(2, 3))


def _conv_forward(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    kh, kw = w.shape[2], w.shape[3]
    if kh == 1 and kw == 1:
        out = np.tensordot(x, w[:, :, 0, 0], axes=([1], [1]))
    else:
        out = np.tensordot(_windows(x, kh, kw), w, axes=([1, 4, 5], [1, 2, 3]))
    # (N, H, W, Cout) -> (N, Cout, H, W)
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def _conv_backward(x: np.ndarray, w: np.ndarray, grad: np.ndarray):
    """Return (grad_x, grad_w, grad_b) for y = conv(x, w) + b."""
    kh, kw = w.shape[2], w.shape[3]
    if kh == 1 and kw == 1:
        grad_w = np.tensordot(grad, x, axes=([0, 2, 3], [0, 2, 3]))[:, :, None, None]
    else:
        grad_w = np.tensordot(grad, _windows(x, kh, kw), axes=([0, 2, 3], [0, 2, 3]))
    grad_b = grad.sum(axis=(0, 2, 3))
    # transposed convolution == correlation with the flipped, channel-swapped kernel
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_x = _conv_forward(grad, flipped)
    return grad_x, grad_w.astype(w.dtype, copy=False), grad_b


def conv2d(x: Tensor, p: Conv2dParams) -> Tensor:
    """
    2D convolution of an NCHW tensor, output spatial size equal to input.

    Args:
        x: Input activations (N, Cin, H, W)
        p: Kernel and bias

    Returns:
        Output activations (N, Cout, H, W)
    """
    if x.ndim != 4:
        raise DimensionError(f"conv2d expects NCHW input, got shape {x.shape}")
    if x.shape[1] != p.in_channels:
        raise DimensionError(
            f"conv2d channel mismatch: input {x.shape} vs weight {p.weight.shape}"
        )
    if x.shape[2] < 1 or x.shape[3] < 1:
        raise DimensionError(f"conv2d needs H, W >= 1, got {x.shape}")

    x_data, w_data = x.data, p.weight.data
    out = _conv_forward(x_data, w_data) + p.bias.data.reshape(1, -1, 1, 1)

    def _backward(grad):
        return _conv_backward(x_data, w_data, grad)

    return Tensor.from_op(out, (x, p.weight, p.bias), _backward, "conv2d")


# ========== Pixel Shuffle ==========

def _shuffle(data: np.ndarray, scale: int) -> np.ndarray:
    n, c, h, w = data.shape
    out_c = c // (scale * scale)
    out = data.reshape(n, out_c, scale, scale, h, w).transpose(0, 1, 4, 2, 5, 3)
    return np.ascontiguousarray(out.reshape(n, out_c, h * scale, w * scale))


def _unshuffle(data: np.ndarray, scale: int) -> np.ndarray:
    n, c, h, w = data.shape
    out = data.reshape(n, c, h // scale, scale, w // scale, scale).transpose(0, 1, 3, 5, 2, 4)
    return np.ascontiguousarray(out.reshape(n, c * scale * scale, h // scale, w // scale))


def pixel_shuffle(x: Tensor, scale: int) -> Tensor:
    """
    Rearrange (N, C*S^2, H, W) into (N, C, S*H, S*W).

    output[n, c, S*h + dy, S*w + dx] == input[n, c*S^2 + dy*S + dx, h, w]
    """
    if x.ndim != 4:
        raise DimensionError(f"pixel_shuffle expects NCHW input, got shape {x.shape}")
    if scale < 1 or x.shape[1] % (scale * scale) != 0:
        raise DimensionError(
            f"pixel_shuffle: {x.shape[1]} channels not divisible by scale^2 = {scale * scale}"
        )
    return Tensor.from_op(
        _shuffle(x.data, scale), (x,), lambda g: (_unshuffle(g, scale),), "pixel_shuffle"
    )


def pixel_unshuffle(x: Tensor, scale: int) -> Tensor:
    """Inverse of pixel_shuffle: (N, C, S*H, S*W) -> (N, C*S^2, H, W)."""
    if x.ndim != 4:
        raise DimensionError(f"pixel_unshuffle expects NCHW input, got shape {x.shape}")
    if scale < 1 or x.shape[2] % scale or x.shape[3] % scale:
        raise DimensionError(f"pixel_unshuffle: spatial size {x.shape[2:]} not divisible by {scale}")
    return Tensor.from_op(
        _unshuffle(x.data, scale), (x,), lambda g: (_shuffle(g, scale),), "pixel_unshuffle"
    )


# ========== Weight Normalization ==========

def weight_norm_effective(p: WeightNormParams) -> Tensor:
    """
    Effective kernel w_c = (g_c / ||v_c||) * v_c, differentiable in v and g.

    Raises:
        NumericalError: if any output channel of v has zero norm
    """
    v = p.v.data
    cout = v.shape[0]
    flat = v.reshape(cout, -1)
    norms64 = np.sqrt(np.square(flat.astype(np.float64)).sum(axis=1))
    if np.any(norms64 == 0):
        zero = np.flatnonzero(norms64 == 0).tolist()
        raise NumericalError(f"weight-norm direction v has zero norm in output channels {zero}")
    norms = norms64.astype(v.dtype)
    scale = (p.g.data.astype(np.float64) / norms64).astype(v.dtype).reshape(cout, 1, 1, 1)
    w = v * scale

    def _backward(grad):
        dot = (grad.reshape(cout, -1) * flat).sum(axis=1)
        grad_g = dot / norms
        grad_v = scale * (grad - (dot / (norms * norms)).reshape(cout, 1, 1, 1) * v)
        return grad_v, grad_g

    return Tensor.from_op(w, (p.v, p.g), _backward, "weight_norm")


# ========== Batch Normalization ==========

_BN_AXES = (0, 2, 3)


def _channel(vec: np.ndarray) -> np.ndarray:
    return vec.reshape(1, -1, 1, 1)


def batch_norm_train(x: Tensor, s: BatchNormState) -> Tensor:
    """
    Normalize each channel by the current batch's mean and variance over
    (N, H, W), then scale/shift by gamma/beta.

    Side effect: the running statistics move toward the batch statistics,
    E[x] <- (1 - m) * E[x] + m * E_B[x] (same for Var).
    """
    if s.mode != "train":
        raise ModeError("batch_norm_train called while the state is in infer mode")
    if x.ndim != 4 or x.shape[1] != s.channels:
        raise DimensionError(f"batch_norm: input {x.shape} vs {s.channels} channels")
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if count < 2:
        raise DimensionError(f"batch_norm_train needs N*H*W >= 2 per channel, got {count}")

    data = x.data
    batch_mean = data.mean(axis=_BN_AXES)
    batch_var = data.var(axis=_BN_AXES)
    inv_std = (1.0 / np.sqrt(batch_var + s.epsilon)).astype(data.dtype)
    x_hat = (data - _channel(batch_mean)) * _channel(inv_std)
    gamma = s.gamma.data
    out = x_hat * _channel(gamma) + _channel(s.beta.data)

    if not s.initialized:
        s.running_mean = np.zeros(s.channels, dtype=np.float32)
        s.running_var = np.ones(s.channels, dtype=np.float32)
    m = s.momentum
    s.running_mean = ((1.0 - m) * s.running_mean + m * batch_mean).astype(np.float32)
    s.running_var = ((1.0 - m) * s.running_var + m * batch_var).astype(np.float32)

    def _backward(grad):
        grad_gamma = (grad * x_hat).sum(axis=_BN_AXES)
        grad_beta = grad.sum(axis=_BN_AXES)
        d_hat = grad * _channel(gamma)
        sum_d = d_hat.sum(axis=_BN_AXES, keepdims=True)
        sum_dx = (d_hat * x_hat).sum(axis=_BN_AXES, keepdims=True)
        grad_x = _channel(inv_std) / count * (count * d_hat - sum_d - x_hat * sum_dx)
        return grad_x, grad_gamma, grad_beta

    return Tensor.from_op(out, (x, s.gamma, s.beta), _backward, "batch_norm_train")


def batch_norm_infer(x: Tensor, s: BatchNormState) -> Tensor:
    """Normalize with the stored running statistics; never mutates the state."""
    if s.mode != "infer":
        raise ModeError("batch_norm_infer called while the state is in train mode")
    if not s.initialized:
        raise ModeError("batch_norm_infer: running statistics were never initialized")
    if x.ndim != 4 or x.shape[1] != s.channels:
        raise DimensionError(f"batch_norm: input {x.shape} vs {s.channels} channels")

    data = x.data
    inv_std = (1.0 / np.sqrt(s.running_var.astype(np.float64) + s.epsilon)).astype(data.dtype)
    x_hat = (data - _channel(s.running_mean.astype(data.dtype))) * _channel(inv_std)
    gamma = s.gamma.data
    out = x_hat * _channel(gamma) + _channel(s.beta.data)

    def _backward(grad):
        return (
            grad * _channel(gamma * inv_std),
            (grad * x_hat).sum(axis=_BN_AXES),
            grad.sum(axis=_BN_AXES),
        )

    return Tensor.from_op(out, (x, s.gamma, s.beta), _backward, "batch_norm_infer")
