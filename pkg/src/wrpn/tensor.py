"""Dense tensor primitives with hand-written backward passes.

Tensors are plain ``numpy.ndarray`` objects. Feature maps use N,C,H,W layout
and filters use Cout,Cin,Kh,Kw. Float math is binary64 throughout; integer
inputs stay integer (int64) so the same kernels serve the integer path.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, DimensionError, InputError

__all__ = [
    "as_tensor",
    "output_extent",
    "conv2d",
    "conv2d_backward",
    "fully_connected",
    "fully_connected_backward",
    "clipped_relu",
    "clipped_relu_backward",
    "clip_pm1",
    "clip_pm1_backward",
    "max_pool2d",
    "max_pool2d_backward",
    "avg_pool2d",
    "avg_pool2d_backward",
    "sum_pool2d",
    "softmax_cross_entropy",
    "softmax_cross_entropy_backward",
]


def as_tensor(x) -> np.ndarray:
    """Coerce to an ndarray: integers become int64, everything else float64."""
    arr = np.asarray(x)
    if arr.dtype.kind in "iub":
        return arr.astype(np.int64, copy=False)
    return arr.astype(np.float64, copy=False)


def output_extent(size: int, kernel: int, stride: int, padding: int, what: str = "extent") -> int:
    """Output length of a sliding window; the window must tile the padded input exactly."""
    if stride < 1:
        raise ConfigurationError(f"stride must be positive, got {stride}")
    if padding < 0:
        raise ConfigurationError(f"padding must be non-negative, got {padding}")
    span = size + 2 * padding - kernel
    if span < 0:
        raise ConfigurationError(
            f"{what}: kernel {kernel} larger than padded input {size + 2 * padding}"
        )
    if span % stride:
        raise ConfigurationError(
            f"{what}: (size {size} + 2*padding {padding} - kernel {kernel}) "
            f"is not divisible by stride {stride}"
        )
    return span // stride + 1


def _pad(x, padding, value=0):
    if padding == 0:
        return x
    return np.pad(
        x,
        ((0, 0), (0, 0), (padding, padding), (padding, padding)),
        mode="constant",
        constant_values=value,
    )


def _windows(xp, kh, kw, stride):
    # N, C, Ho, Wo, Kh, Kw view; no copy until the contraction
    return sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]


def _check_conv(x, w, stride, padding):
    if x.ndim != 4:
        raise DimensionError(f"conv2d input must be N,C,H,W; got shape {x.shape}")
    if w.ndim != 4:
        raise DimensionError(f"conv2d filters must be Cout,Cin,Kh,Kw; got shape {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"conv2d channel mismatch: input has Cin={x.shape[1]}, filters expect Cin={w.shape[1]}"
        )
    ho = output_extent(x.shape[2], w.shape[2], stride, padding, "conv2d height")
    wo = output_extent(x.shape[3], w.shape[3], stride, padding, "conv2d width")
    return ho, wo


def conv2d(x, w, stride: int = 1, padding: int = 0, method: str = "im2col") -> np.ndarray:
    """2-D cross-correlation with zero padding.

    ``method="im2col"`` contracts an unfolded window view in one tensordot.
    ``method="direct"`` accumulates one kernel tap at a time; the two agree to
    within accumulation-order rounding (exactly, for integer inputs).
    """
    x = as_tensor(x)
    w = as_tensor(w)
    ho, wo = _check_conv(x, w, stride, padding)
    xp = _pad(x, padding)
    kh, kw = w.shape[2:]
    if method == "im2col":
        cols = _windows(xp, kh, kw, stride)
        out = np.tensordot(cols, w, axes=([1, 4, 5], [1, 2, 3]))
        return np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    if method == "direct":
        dtype = np.result_type(x, w)
        out = np.zeros((x.shape[0], w.shape[0], ho, wo), dtype=dtype)
        for i in range(kh):
            for j in range(kw):
                patch = xp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride]
                out += np.einsum("nchw,oc->nohw", patch, w[:, :, i, j])
        return out
    raise ConfigurationError(f"unknown conv2d method {method!r}")


def conv2d_backward(dout, x, w, stride: int = 1, padding: int = 0):
    """Gradients of :func:`conv2d` with respect to its input and filters."""
    dout = as_tensor(dout)
    x = as_tensor(x)
    w = as_tensor(w)
    ho, wo = _check_conv(x, w, stride, padding)
    expected = (x.shape[0], w.shape[0], ho, wo)
    if dout.shape != expected:
        raise DimensionError(f"conv2d upstream gradient has shape {dout.shape}, expected {expected}")
    kh, kw = w.shape[2:]
    xp = _pad(x, padding)
    cols = _windows(xp, kh, kw, stride)
    dw = np.tensordot(dout, cols, axes=([0, 2, 3], [0, 2, 3]))
    # N, Ho, Wo, Cin, Kh, Kw
    dcols = np.tensordot(dout, w, axes=([1], [0]))
    dxp = np.zeros(xp.shape, dtype=np.result_type(dout, w))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[
                :, :, :, :, i, j
            ].transpose(0, 3, 1, 2)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp), dw


def fully_connected(x, w) -> np.ndarray:
    """``x @ w.T`` for ``x`` of shape N,Din and ``w`` of shape Dout,Din."""
    x = as_tensor(x)
    w = as_tensor(w)
    if x.ndim != 2 or w.ndim != 2:
        raise DimensionError(f"fully_connected expects 2-D operands, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise DimensionError(
            f"fully_connected inner dimension mismatch: input Din={x.shape[1]}, weights Din={w.shape[1]}"
        )
    return x @ w.T


def fully_connected_backward(dout, x, w):
    dout = as_tensor(dout)
    x = as_tensor(x)
    w = as_tensor(w)
    if dout.shape != (x.shape[0], w.shape[0]):
        raise DimensionError(
            f"fully_connected upstream gradient has shape {dout.shape}, expected {(x.shape[0], w.shape[0])}"
        )
    return dout @ w, dout.T @ x


def clipped_relu(x) -> np.ndarray:
    return np.clip(as_tensor(x), 0.0, 1.0)


def clipped_relu_backward(dout, x) -> np.ndarray:
    # closed interval: the saturation boundary still passes gradient
    x = as_tensor(x)
    return np.where((x >= 0.0) & (x <= 1.0), as_tensor(dout), 0.0)


def clip_pm1(x) -> np.ndarray:
    return np.clip(as_tensor(x), -1.0, 1.0)


def clip_pm1_backward(dout, x) -> np.ndarray:
    x = as_tensor(x)
    return np.where((x >= -1.0) & (x <= 1.0), as_tensor(dout), 0.0)


def _pool_windows(x, kernel, stride, padding, fill, what):
    if x.ndim != 4:
        raise DimensionError(f"{what} input must be N,C,H,W; got shape {x.shape}")
    ho = output_extent(x.shape[2], kernel, stride, padding, f"{what} height")
    wo = output_extent(x.shape[3], kernel, stride, padding, f"{what} width")
    xp = _pad(x, padding, fill)
    return xp, _windows(xp, kernel, kernel, stride), ho, wo


def max_pool2d(x, kernel: int, stride: int | None = None, padding: int = 0) -> np.ndarray:
    """Max pooling; padded positions never win."""
    x = as_tensor(x)
    stride = kernel if stride is None else stride
    fill = np.iinfo(np.int64).min if x.dtype.kind == "i" else -np.inf
    _, win, _, _ = _pool_windows(x, kernel, stride, padding, fill, "max_pool2d")
    return win.max(axis=(4, 5))


def max_pool2d_backward(dout, x, kernel: int, stride: int | None = None, padding: int = 0):
    """Route each upstream gradient to the first maximal element of its window."""
    x = as_tensor(x)
    dout = as_tensor(dout)
    stride = kernel if stride is None else stride
    fill = np.iinfo(np.int64).min if x.dtype.kind == "i" else -np.inf
    xp, win, ho, wo = _pool_windows(x, kernel, stride, padding, fill, "max_pool2d")
    n, c = x.shape[:2]
    if dout.shape != (n, c, ho, wo):
        raise DimensionError(f"max_pool2d upstream gradient has shape {dout.shape}, expected {(n, c, ho, wo)}")
    flat = win.reshape(n, c, ho, wo, kernel * kernel).argmax(axis=-1)
    rows = np.arange(ho)[:, None] * stride + flat // kernel
    cols = np.arange(wo)[None, :] * stride + flat % kernel
    dxp = np.zeros(xp.shape, dtype=np.float64)
    nn, cc = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
    np.add.at(dxp, (nn[:, :, None, None], cc[:, :, None, None], rows, cols), dout)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp)


def avg_pool2d(x, kernel: int, stride: int | None = None, padding: int = 0) -> np.ndarray:
    """Average pooling over zero-padded windows (padding counts toward the divisor)."""
    x = as_tensor(x)
    stride = kernel if stride is None else stride
    _, win, _, _ = _pool_windows(x, kernel, stride, padding, 0, "avg_pool2d")
    return win.sum(axis=(4, 5)) / float(kernel * kernel)


def sum_pool2d(x, kernel: int, stride: int | None = None, padding: int = 0) -> np.ndarray:
    """Window sums; dtype-preserving, so integer codes stay exact."""
    x = as_tensor(x)
    stride = kernel if stride is None else stride
    _, win, _, _ = _pool_windows(x, kernel, stride, padding, 0, "sum_pool2d")
    return win.sum(axis=(4, 5))


def avg_pool2d_backward(dout, x, kernel: int, stride: int | None = None, padding: int = 0):
    x = as_tensor(x)
    dout = as_tensor(dout)
    stride = kernel if stride is None else stride
    xp, _, ho, wo = _pool_windows(x, kernel, stride, padding, 0, "avg_pool2d")
    if dout.shape != x.shape[:2] + (ho, wo):
        raise DimensionError(f"avg_pool2d upstream gradient has shape {dout.shape}")
    dxp = np.zeros(xp.shape, dtype=np.float64)
    share = dout / float(kernel * kernel)
    for i in range(kernel):
        for j in range(kernel):
            dxp[:, :, i : i + stride * ho : stride, j : j + stride * wo : stride] += share
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp)


def _check_labels(logits, labels):
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise DimensionError(f"logits must be N,C; got shape {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise DimensionError(f"expected {logits.shape[0]} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(f"labels must lie in [0, {logits.shape[1]}), got range [{labels.min()}, {labels.max()}]")
    return logits.astype(np.float64, copy=False), labels.astype(np.int64, copy=False)


def _log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax_cross_entropy(logits, labels) -> float:
    """Mean negative log-likelihood of ``labels`` under ``softmax(logits)``."""
    logits, labels = _check_labels(logits, labels)
    logp = _log_softmax(logits)
    return float(-logp[np.arange(len(labels)), labels].mean())


def softmax_cross_entropy_backward(logits, labels) -> np.ndarray:
    logits, labels = _check_labels(logits, labels)
    grad = np.exp(_log_softmax(logits))
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)
