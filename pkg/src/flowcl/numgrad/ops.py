"""Differentiable operations: the layer and loss primitives of the package.

Forward math is plain vectorized NumPy in float64; each op hands `record_op`
a closure mapping the output gradient to input gradients. Inputs are never
mutated (batchnorm's running statistics, which are explicitly state, are the
one documented exception).
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateVectorError, InvalidLabelError, InvalidShapeError
from .tensor import Tensor, as_tensor, record_op


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise InvalidShapeError(message)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor) -> Tensor:
    """Width-2 valid convolution along the last axis, stride 1.

    x (B, C_in, W) -> (B, C_out, W-1) with
    out[b,o,t] = sum_i k[o,i,0]*x[b,i,t] + k[o,i,1]*x[b,i,t+1] + bias[o].
    """
    x, kernel, bias = as_tensor(x), as_tensor(kernel), as_tensor(bias)
    _require(x.data.ndim == 3, f"conv1d input must be (batch, ch, width), got {x.shape}")
    _require(kernel.data.ndim == 3 and kernel.shape[2] == 2,
             f"conv1d kernel must be (out_ch, in_ch, 2), got {kernel.shape}")
    batch, in_ch, width = x.shape
    out_ch = kernel.shape[0]
    _require(width >= 2, f"conv1d needs width >= 2, got {width}")
    _require(kernel.shape[1] == in_ch,
             f"conv1d channel mismatch: input has {in_ch}, kernel expects {kernel.shape[1]}")
    _require(bias.shape == (out_ch,), f"conv1d bias must be ({out_ch},), got {bias.shape}")

    # Stack the two taps so the whole op is one batched matmul:
    # x2[b, 2i+tap, t] = x[b, i, t+tap], k2[o, 2i+tap] = kernel[o, i, tap].
    x2 = np.stack((x.data[:, :, :-1], x.data[:, :, 1:]), axis=2).reshape(batch, 2 * in_ch, width - 1)
    k2 = kernel.data.reshape(out_ch, 2 * in_ch)
    out = Tensor(np.matmul(k2, x2) + bias.data[None, :, None])

    def rule(g: np.ndarray):
        dk = np.tensordot(g, x2, axes=([0, 2], [0, 2])).reshape(kernel.shape)
        db = g.sum(axis=(0, 2))
        dx2 = np.matmul(k2.T, g).reshape(batch, in_ch, 2, width - 1)
        dx = np.zeros_like(x.data)
        dx[:, :, :-1] += dx2[:, :, 0, :]
        dx[:, :, 1:] += dx2[:, :, 1, :]
        return dx, dk, db

    return record_op(out, (x, kernel, bias), rule)


def maxpool1d(x: Tensor, window: int) -> Tensor:
    """Non-overlapping max pooling: stride == window, trailing remainder dropped."""
    x = as_tensor(x)
    _require(x.data.ndim == 3, f"maxpool1d input must be (batch, ch, width), got {x.shape}")
    batch, ch, width = x.shape
    _require(window >= 1, f"pool window must be >= 1, got {window}")
    _require(window <= width, f"pool window {window} exceeds width {width}")

    out_w = width // window
    tiles = x.data[:, :, : out_w * window].reshape(batch, ch, out_w, window)
    arg = tiles.argmax(axis=3)
    out = Tensor(tiles.max(axis=3))

    def rule(g: np.ndarray):
        dtiles = np.zeros_like(tiles)
        np.put_along_axis(dtiles, arg[..., None], g[..., None], axis=3)
        dx = np.zeros_like(x.data)
        dx[:, :, : out_w * window] = dtiles.reshape(batch, ch, out_w * window)
        return (dx,)

    return record_op(out, (x,), rule)


def global_maxpool1d(x: Tensor) -> Tensor:
    """Collapse the spatial axis entirely: (B, C, W) -> (B, C) by max."""
    x = as_tensor(x)
    _require(x.data.ndim == 3, f"global_maxpool1d input must be 3-D, got {x.shape}")
    _require(x.shape[2] >= 1, "global_maxpool1d needs width >= 1")
    arg = x.data.argmax(axis=2)
    out = Tensor(x.data.max(axis=2))

    def rule(g: np.ndarray):
        dx = np.zeros_like(x.data)
        np.put_along_axis(dx, arg[..., None], g[..., None], axis=2)
        return (dx,)

    return record_op(out, (x,), rule)


def batchnorm1d(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Per-channel batch normalization with affine scale/shift.

    x (B, C, W). Train mode normalizes by the batch's per-channel mean and
    (population) variance and folds them into the running estimates by
    exponential moving average, in place. Eval mode reads the running
    estimates and mutates nothing.
    """
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    _require(x.data.ndim == 3, f"batchnorm1d input must be (batch, ch, width), got {x.shape}")
    batch, ch, width = x.shape
    _require(gamma.shape == (ch,) and beta.shape == (ch,),
             f"batchnorm1d affine params must be ({ch},)")
    n = batch * width
    _require(n >= 1, "batchnorm1d needs at least one element per channel")
    if training:
        _require(n >= 2, "batchnorm1d train mode needs >= 2 elements per channel")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var

    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean[None, :, None]) * inv_std[None, :, None]
    out = Tensor(xhat * gamma.data[None, :, None] + beta.data[None, :, None])

    def rule(g: np.ndarray):
        dgamma = (g * xhat).sum(axis=(0, 2))
        dbeta = g.sum(axis=(0, 2))
        if training:
            dxhat = g * gamma.data[None, :, None]
            s1 = dxhat.sum(axis=(0, 2))
            s2 = (dxhat * xhat).sum(axis=(0, 2))
            dx = (inv_std[None, :, None] / n) * (
                n * dxhat - s1[None, :, None] - xhat * s2[None, :, None]
            )
        else:
            dx = g * (gamma.data * inv_std)[None, :, None]
        return dx, dgamma, dbeta

    return record_op(out, (x, gamma, beta), rule)


def relu(x: Tensor) -> Tensor:
    """Elementwise max(0, x)."""
    x = as_tensor(x)
    out = Tensor(np.maximum(x.data, 0.0))

    def rule(g: np.ndarray):
        return (g * (x.data > 0),)

    return record_op(out, (x,), rule)


def affine(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """out = x @ weight.T + bias; x (B, In), weight (Out, In), bias (Out,)."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    _require(x.data.ndim == 2, f"affine input must be (batch, in_dim), got {x.shape}")
    _require(weight.data.ndim == 2, f"affine weight must be (out_dim, in_dim), got {weight.shape}")
    _require(x.shape[1] == weight.shape[1],
             f"affine dim mismatch: input {x.shape[1]} vs weight {weight.shape[1]}")
    _require(bias.shape == (weight.shape[0],),
             f"affine bias must be ({weight.shape[0]},), got {bias.shape}")
    out = Tensor(x.data @ weight.data.T + bias.data)

    def rule(g: np.ndarray):
        return g @ weight.data, g.T @ x.data, g.sum(axis=0)

    return record_op(out, (x, weight, bias), rule)


def softmax_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log softmax probability at integer labels.

    Log-sum-exp stabilized, so arbitrarily large logits stay finite.
    """
    logits = as_tensor(logits)
    _require(logits.data.ndim == 2, f"logits must be (batch, classes), got {logits.shape}")
    batch, k = logits.shape
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (batch,):
        raise InvalidLabelError(f"labels must be ({batch},), got {y.shape}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise InvalidLabelError(f"labels must lie in [0, {k})")

    z = logits.data
    m = z.max(axis=1, keepdims=True)
    shifted = z - m
    lse = m[:, 0] + np.log(np.exp(shifted).sum(axis=1))
    picked = z[np.arange(batch), y]
    out = Tensor(np.mean(lse - picked))

    def rule(g: np.ndarray):
        p = np.exp(shifted)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(batch), y] -= 1.0
        return (p * (float(g) / batch),)

    return record_op(out, (logits,), rule)


def cosine_similarity(a: Tensor, b: Tensor) -> Tensor:
    """a.b / (|a||b|) for 1-D vectors, as a differentiable scalar in [-1, 1]."""
    a, b = as_tensor(a), as_tensor(b)
    _require(a.data.ndim == 1 and b.data.ndim == 1,
             f"cosine_similarity takes 1-D vectors, got {a.shape} and {b.shape}")
    _require(a.shape == b.shape, f"dim mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a.data))
    nb = float(np.linalg.norm(b.data))
    if na == 0.0 or nb == 0.0:
        raise DegenerateVectorError("cosine similarity of a zero-norm vector is undefined")
    c = float(np.clip(a.data @ b.data / (na * nb), -1.0, 1.0))
    out = Tensor(c)

    def rule(g: np.ndarray):
        s = float(g)
        a_hat = a.data / na
        b_hat = b.data / nb
        return s * (b_hat - c * a_hat) / na, s * (a_hat - c * b_hat) / nb

    return record_op(out, (a, b), rule)
