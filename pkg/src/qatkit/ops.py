"""Dense-tensor layer arithmetic with hand-written backward passes.

Every operation comes as a forward/backward pair over float32 numpy
arrays.  Summation order is fixed (plain numpy reductions, single
thread), so repeated runs with the same inputs are bit-identical.
``finite_diff_check`` is the gradient oracle the test suite uses against
each backward pass; it is the one place float64 arithmetic is allowed.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, InputError, ParameterError
from .tensor import DTYPE, Param


# ---------------------------------------------------------------------------
# matmul

def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    return a @ b


def matmul_backward(g: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of ``a @ b``: (g @ b.T, a.T @ g)."""
    return g @ b.T, a.T @ g


# ---------------------------------------------------------------------------
# conv2d (NCHW, zero padding, square stride) via im2col

def conv_out_size(size: int, k: int, stride: int, pad: int) -> int:
    return (size + 2 * pad - k) // stride + 1


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Patch matrix of shape (N*OH*OW, C*kh*kw) for GEMM convolution."""
    n, c, h, w = x.shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    if oh <= 0 or ow <= 0:
        raise DimensionError(
            f"conv2d: kernel {kh}x{kw} stride {stride} pad {pad} gives "
            f"non-positive output for input {x.shape}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    # (N, C, OH, OW, kh, kw) -> (N, OH, OW, C, kh, kw) -> rows of patches
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * oh * ow, c * kh * kw)


def col2im(gcols: np.ndarray, x_shape, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Scatter-add of patch gradients back onto the (padded) input."""
    n, c, h, w = x_shape
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(w, kw, stride, pad)
    g6 = gcols.reshape(n, oh, ow, c, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    gxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=gcols.dtype)
    for r in range(kh):
        for s in range(kw):
            gxp[:, :, r:r + oh * stride:stride, s:s + ow * stride:stride] += g6[:, :, :, :, r, s]
    return gxp[:, :, pad:pad + h, pad:pad + w] if pad else gxp


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    y, _ = conv2d_forward(x, w, stride, pad)
    return y


def conv2d_forward(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0):
    """Returns (output, cols); ``cols`` is the cache for the backward pass."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d input and kernel, got {x.shape}, {w.shape}")
    n, c, h, wdt = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise DimensionError(f"conv2d: input channels {c} != kernel channels {cw}")
    if stride < 1:
        raise DimensionError(f"conv2d: stride must be >= 1, got {stride}")
    cols = im2col(x, kh, kw, stride, pad)
    oh = conv_out_size(h, kh, stride, pad)
    ow = conv_out_size(wdt, kw, stride, pad)
    y = cols @ w.reshape(f, -1).T
    return np.ascontiguousarray(y.reshape(n, oh, ow, f).transpose(0, 3, 1, 2)), cols


def conv2d_backward(g: np.ndarray, x_shape, w: np.ndarray, cols: np.ndarray,
                    stride: int = 1, pad: int = 0):
    """Gradients (gx, gw) given the output gradient and the im2col cache."""
    f = w.shape[0]
    n, fo, oh, ow = g.shape
    g_mat = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(n * oh * ow, fo)
    gw = (g_mat.T @ cols).reshape(w.shape)
    gcols = g_mat @ w.reshape(f, -1)
    gx = col2im(gcols, x_shape, w.shape[2], w.shape[3], stride, pad)
    return gx, gw


# ---------------------------------------------------------------------------
# batch normalization (per channel, any layout with channels on axis 1)

def _bn_axes(x: np.ndarray):
    return (0,) + tuple(range(2, x.ndim))


def batchnorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray,
                      running_mean: np.ndarray, running_var: np.ndarray,
                      train: bool, momentum: float = 0.9, eps: float = 1e-5):
    """Normalize per channel; returns (y, cache).

    Train mode uses batch statistics and folds them into the running
    buffers in place (``running = momentum * running + (1-momentum) * batch``,
    biased variance).  Eval mode reads the running buffers.
    """
    if eps <= 0:
        raise ParameterError("batchnorm: eps must be > 0")
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"batchnorm: gamma/beta must have shape ({c},)")
    axes = _bn_axes(x)
    shape = (1, c) + (1,) * (x.ndim - 2)
    if train:
        mu = x.mean(axis=axes)
        var = x.var(axis=axes)
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mu
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mu, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + DTYPE(eps))
    xhat = (x - mu.reshape(shape)) * inv_std.reshape(shape)
    y = gamma.reshape(shape) * xhat + beta.reshape(shape)
    cache = (xhat, inv_std, gamma, train)
    return y, cache


def batchnorm_backward(g: np.ndarray, cache):
    """Gradients (gx, ggamma, gbeta); differentiates through batch stats."""
    xhat, inv_std, gamma, train = cache
    axes = _bn_axes(g)
    shape = (1, g.shape[1]) + (1,) * (g.ndim - 2)
    gbeta = g.sum(axis=axes)
    ggamma = (g * xhat).sum(axis=axes)
    if train:
        m = g.size // g.shape[1]
        gx = (gamma * inv_std).reshape(shape) * (
            g - gbeta.reshape(shape) / m - xhat * ggamma.reshape(shape) / m)
    else:
        gx = (gamma * inv_std).reshape(shape) * g
    return gx, ggamma, gbeta


# ---------------------------------------------------------------------------
# global average pooling

def global_avgpool(x: np.ndarray) -> np.ndarray:
    if x.ndim != 4:
        raise DimensionError(f"global_avgpool: expected NCHW input, got {x.shape}")
    return x.mean(axis=(2, 3))


def global_avgpool_backward(g: np.ndarray, x_shape) -> np.ndarray:
    n, c, h, w = x_shape
    return np.broadcast_to(g[:, :, None, None], x_shape) / DTYPE(h * w)


# ---------------------------------------------------------------------------
# softmax cross-entropy

def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its logit gradient (softmax - onehot) / N."""
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy: expected 2-d logits, got {logits.shape}")
    n, c = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"softmax_cross_entropy: labels shape {labels.shape} != ({n},)")
    if labels.min(initial=0) < 0 or labels.max(initial=-1) >= c:
        raise InputError(f"softmax_cross_entropy: labels must lie in [0, {c})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    rows = np.arange(n)
    logp = shifted[rows, labels] - np.log(exp.sum(axis=1))
    loss = float(-logp.mean())
    grad = probs
    grad[rows, labels] -= 1.0
    grad /= DTYPE(n)
    return loss, grad


# ---------------------------------------------------------------------------
# optimizer step

def sgd_momentum_step(p: Param, lr: float, momentum: float = 0.0,
                      weight_decay: float = 0.0) -> None:
    """v <- momentum*v + grad + wd*value; value <- value - lr*v; grad <- 0."""
    if lr <= 0:
        raise ParameterError(f"sgd_momentum_step: lr must be > 0, got {lr}")
    v = p.velocity
    v *= DTYPE(momentum)
    v += p.grad
    if weight_decay:
        v += DTYPE(weight_decay) * p.value
    p.value -= DTYPE(lr) * v
    p.zero_grad()


# ---------------------------------------------------------------------------
# gradient oracle

def finite_diff_check(f, x: np.ndarray, h: float | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``f(x)`` must return ``(loss, grad)`` with ``grad`` matching ``x``'s
    shape.  The numeric gradient is the central difference evaluated in
    float64; the per-tensor step defaults to ``1e-2 * (1 + max|x|)``,
    which sits above the float32 noise floor.  Callers are responsible
    for keeping ``x`` away from kink points of ``f``.
    """
    if h is None:
        scale = float(np.max(np.abs(x))) if x.size else 0.0
        h = 1e-2 * (1.0 + scale)
    _, g_analytic = f(x)
    g_analytic = np.asarray(g_analytic, dtype=np.float64)
    g_numeric = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + DTYPE(h)
        lo_plus = f(x)[0]
        flat[i] = orig - DTYPE(h)
        lo_minus = f(x)[0]
        flat[i] = orig
        g_numeric.reshape(-1)[i] = (float(lo_plus) - float(lo_minus)) / (2.0 * h)
    denom = np.maximum(1.0, np.abs(g_numeric))
    return float(np.max(np.abs(g_analytic - g_numeric) / denom)) if x.size else 0.0
