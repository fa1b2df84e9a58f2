"""Differentiable operations over :class:`Tensor`.

Only the operations needed by the SPRITZ CNNs, the LSTM classifier and the
attacks are provided. Convolutions run channels-last through im2col + GEMM;
the NCHW entry points transpose around them.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import as_strided

from ..errors import ShapeError
from .tensor import Tensor


# ---------------------------------------------------------------- elementwise


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Tensor, b: Tensor) -> Tensor:
    out = a.data + b.data

    def backward(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._from_op(out, (a, b), backward, "add")


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data * b.data

    def backward(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._from_op(out, (a, b), backward, "mul")


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    out = np.asarray(a.data.sum(), dtype=a.dtype).reshape(1)
    return Tensor._from_op(out, (a,), lambda g: (np.broadcast_to(g.reshape(()), a.shape).copy(),), "sum")


def reshape(a: Tensor, shape) -> Tensor:
    out = a.data.reshape(shape)
    return Tensor._from_op(out, (a,), lambda g: (g.reshape(a.shape),), "reshape")


def flatten(a: Tensor) -> Tensor:
    return reshape(a, (a.shape[0], -1))


def relu(a: Tensor) -> Tensor:
    out = np.maximum(a.data, 0)
    mask = out > 0
    return Tensor._from_op(out, (a,), lambda g: (g * mask,), "relu")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul needs [N,D] @ [D,M], got {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(out, (a, b), backward, "matmul")


def dense(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map ``x @ weight + bias`` for x of shape [N, D]."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[0]:
        raise ShapeError(f"dense needs input [N,D] and weight [D,M], got {x.shape} and {weight.shape}")
    if bias.shape != (weight.shape[1],):
        raise ShapeError(f"dense bias must have shape ({weight.shape[1]},), got {bias.shape}")
    out = x.data @ weight.data + bias.data

    def backward(g):
        gx = g @ weight.data.T if x.requires_grad else None
        gw = x.data.T @ g if weight.requires_grad else None
        gb = g.sum(axis=0) if bias.requires_grad else None
        return gx, gw, gb

    return Tensor._from_op(out, (x, weight, bias), backward, "dense")


# -------------------------------------------------------------- convolution


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = np.ascontiguousarray(a.data.transpose(axes))
    return Tensor._from_op(out, (a,), lambda g: (np.ascontiguousarray(g.transpose(inverse)),), "transpose")


def _check_conv(x_shape, kernel: Tensor, bias: Optional[Tensor], padding: str, channels: int) -> None:
    if len(x_shape) != 4 or kernel.ndim != 4:
        raise ShapeError(f"conv2d needs 4-d input and kernel, got {tuple(x_shape)} and {kernel.shape}")
    if kernel.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be 3x3, got {kernel.shape[2:]}")
    if channels != kernel.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: input has {channels}, kernel expects {kernel.shape[1]}")
    if padding not in ("same", "valid"):
        raise ValueError(f"padding must be 'same' or 'valid', got {padding!r}")
    if bias is not None and bias.shape != (kernel.shape[0],):
        raise ShapeError(f"conv2d bias must have shape ({kernel.shape[0]},), got {bias.shape}")


def _windows(x: np.ndarray, pad: int):
    """Strided 3x3 windows [N, OH*WP, 3, 3, C] over x zero-padded by ``pad``.

    The padded input is viewed as a flat row-major image so that each window
    is one strided row; outputs live on the padded width WP and the two
    wrap-around columns are dropped by the caller.
    """
    n, h, w, c = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((n, hp + 1, wp, c), dtype=x.dtype)
    xp[:, pad : pad + h, pad : pad + w] = x
    s = xp.strides
    return as_strided(xp, (n, (hp - 2) * wp, 3, 3, c), (s[0], s[2], s[1], s[2], s[3]), writeable=False), hp - 2, wp


def _conv_nhwc_array(x: np.ndarray, wmat: np.ndarray, pad: int) -> np.ndarray:
    """Valid 3x3 correlation of x [N,H,W,C] zero-padded by ``pad``; wmat is [9C,K]."""
    n, c = x.shape[0], x.shape[3]
    windows, oh, wp = _windows(x, pad)
    full = (windows.reshape(-1, 9 * c) @ wmat).reshape(n, oh, wp, wmat.shape[1])
    return np.ascontiguousarray(full[:, :, : wp - 2])


_COL_BUDGET = 1 << 26  # bytes of im2col held at once in the kernel gradient


def _kernel_grad(x: np.ndarray, g: np.ndarray, pad: int) -> np.ndarray:
    """d/dkernel as [3,3,C,K], built over batch chunks to bound memory."""
    n, c = x.shape[0], x.shape[3]
    k = g.shape[3]
    windows, oh, wp = _windows(x, pad)
    per_sample = windows.shape[1] * 9 * c * x.itemsize
    step = max(1, _COL_BUDGET // per_sample)
    gk = np.zeros((9 * c, k), dtype=g.dtype)
    for i in range(0, n, step):
        gfull = np.zeros((min(step, n - i), oh, wp, k), dtype=g.dtype)
        gfull[:, :, : wp - 2] = g[i : i + step]
        gk += windows[i : i + step].reshape(-1, 9 * c).T @ gfull.reshape(-1, k)
    return gk.reshape(3, 3, c, k)


def conv2d_nhwc(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, padding: str = "same") -> Tensor:
    """3x3 stride-1 cross-correlation of channels-last x [N,H,W,C] with kernel [K,C,3,3]."""
    _check_conv(x.shape, kernel, bias, padding, x.shape[-1] if x.ndim == 4 else -1)
    pad = 1 if padding == "same" else 0
    n, h, w, c = x.shape
    if h + 2 * pad < 3 or w + 2 * pad < 3:
        raise ShapeError(f"conv2d input {x.shape} too small for a 3x3 kernel with {padding} padding")
    k = kernel.shape[0]
    wmat = np.ascontiguousarray(kernel.data.transpose(2, 3, 1, 0)).reshape(9 * c, k)
    out = _conv_nhwc_array(x.data, wmat, pad)
    if bias is not None:
        out += bias.data
    oh, ow = out.shape[1:3]

    def backward(g):
        gx = gk = gb = None
        if x.requires_grad:
            # full correlation with the flipped, channel-transposed kernel
            flipped = np.ascontiguousarray(kernel.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1)).reshape(9 * k, c)
            gx = _conv_nhwc_array(np.ascontiguousarray(g), flipped, 2 - pad)
        if kernel.requires_grad:
            gk = np.ascontiguousarray(_kernel_grad(x.data, g, pad).transpose(3, 2, 0, 1))
        if bias is not None and bias.requires_grad:
            gb = g.sum(axis=(0, 1, 2))
        return gx, gk, gb

    parents = (x, kernel) if bias is None else (x, kernel, bias)
    return Tensor._from_op(out, parents, backward, "conv2d")


def conv2d(x: Tensor, kernel: Tensor, bias: Optional[Tensor] = None, padding: str = "same") -> Tensor:
    """3x3, stride-1 cross-correlation of x [N,C,H,W] with kernel [K,C,3,3].

    ``padding="same"`` zero-pads by one cell and keeps H, W; ``"valid"`` shrinks
    each spatial dim by two.
    """
    _check_conv(x.shape, kernel, bias, padding, x.shape[1] if x.ndim == 4 else -1)
    out = conv2d_nhwc(transpose(x, (0, 2, 3, 1)), kernel, bias, padding)
    return transpose(out, (0, 3, 1, 2))


def _pool_windows(stride: int, oh: int, ow: int):
    # row-major order inside the 2x2 window fixes the tie rule
    return [
        (slice(dy, dy + stride * (oh - 1) + 1, stride), slice(dx, dx + stride * (ow - 1) + 1, stride))
        for dy, dx in ((0, 0), (0, 1), (1, 0), (1, 1))
    ]


def maxpool2d_nhwc(x: Tensor, stride: int = 2) -> Tensor:
    """2x2 max pooling over channels-last x [N,H,W,C].

    Ties send the gradient to the first maximum in row-major window order.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d needs a 4-d input, got {x.shape}")
    if stride not in (1, 2):
        raise ValueError(f"maxpool2d stride must be 1 or 2, got {stride}")
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2d needs spatial dims >= 2, got {h}x{w}")
    oh = (h - 2) // stride + 1
    ow = (w - 2) // stride + 1
    windows = _pool_windows(stride, oh, ow)
    stacked = np.stack([x.data[:, ys, xs] for ys, xs in windows])
    idx = stacked.argmax(axis=0)
    out = np.take_along_axis(stacked, idx[None], axis=0)[0]

    def backward(g):
        gx = np.zeros_like(x.data)
        for k, (ys, xs) in enumerate(windows):
            gx[:, ys, xs] += g * (idx == k)
        return (gx,)

    return Tensor._from_op(out, (x,), backward, "maxpool2d")


def maxpool2d(x: Tensor, stride: int = 2) -> Tensor:
    """2x2 max pooling over x [N,C,H,W] with stride 1 or 2."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d needs [N,C,H,W], got {x.shape}")
    return transpose(maxpool2d_nhwc(transpose(x, (0, 2, 3, 1)), stride), (0, 3, 1, 2))


# --------------------------------------------------------------------- loss


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_crossentropy(logits: Tensor, labels, reduction: str = "mean") -> Tensor:
    """Cross-entropy of binary logits [N,2] against class ids in {0, 1}.

    ``reduction="sum"`` keeps per-sample gradients unscaled, which the attacks
    rely on when they batch independent samples.
    """
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise ShapeError(f"softmax_crossentropy expects [N,2] logits, got {logits.shape}")
    labels = np.asarray(labels).reshape(-1)
    if labels.shape[0] != logits.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {logits.shape[0]} rows")
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError(f"labels must be 0 or 1, got {np.unique(labels).tolist()}")
    if reduction not in ("mean", "sum"):
        raise ValueError(f"reduction must be 'mean' or 'sum', got {reduction!r}")
    labels = labels.astype(np.int64)
    n = logits.shape[0]
    logp = log_softmax(logits.data)
    nll = -logp[np.arange(n), labels]
    scale = 1.0 / n if reduction == "mean" else 1.0
    loss = np.asarray(nll.sum() * scale, dtype=logits.dtype).reshape(1)

    def backward(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        return (grad * (scale * g.reshape(()))).astype(logits.dtype, copy=False),

    return Tensor._from_op(loss, (logits,), backward, "softmax_crossentropy")


# --------------------------------------------------------------------- lstm


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so no overflow warnings
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(z.dtype, copy=False)


def lstm(x: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """Single-layer LSTM over x [N,T,D]; returns the last hidden state [N,H].

    Gate order in the fused weights is (input, forget, cell, output):
    ``w_ih`` is [D,4H], ``w_hh`` is [H,4H], ``bias`` is [4H].
    """
    if x.ndim != 3:
        raise ShapeError(f"lstm needs [N,T,D] input, got {x.shape}")
    n, steps, d = x.shape
    if w_ih.ndim != 2 or w_ih.shape[0] != d or w_ih.shape[1] % 4:
        raise ShapeError(f"lstm w_ih must be [{d},4H], got {w_ih.shape}")
    hid = w_ih.shape[1] // 4
    if w_hh.shape != (hid, 4 * hid) or bias.shape != (4 * hid,):
        raise ShapeError(f"lstm w_hh/bias shapes {w_hh.shape}/{bias.shape} do not match hidden size {hid}")

    dt = x.dtype
    h = np.zeros((n, hid), dtype=dt)
    c = np.zeros((n, hid), dtype=dt)
    hs, cs, gates = [h], [c], []
    xw = np.matmul(x.data, w_ih.data) + bias.data  # [N,T,4H]
    for t in range(steps):
        z = xw[:, t] + h @ w_hh.data
        i = _sigmoid(z[:, :hid])
        f = _sigmoid(z[:, hid : 2 * hid])
        gg = np.tanh(z[:, 2 * hid : 3 * hid])
        o = _sigmoid(z[:, 3 * hid :])
        c = f * c + i * gg
        h = o * np.tanh(c)
        gates.append((i, f, gg, o))
        hs.append(h)
        cs.append(c)

    def backward(g):
        dz_all = np.empty((n, steps, 4 * hid), dtype=dt)
        dh = g.astype(dt, copy=True)
        dc = np.zeros((n, hid), dtype=dt)
        for t in range(steps - 1, -1, -1):
            i, f, gg, o = gates[t]
            tc = np.tanh(cs[t + 1])
            do = dh * tc
            dc = dc + dh * o * (1 - tc * tc)
            di = dc * gg
            df = dc * cs[t]
            dg = dc * i
            dz = dz_all[:, t]
            dz[:, :hid] = di * i * (1 - i)
            dz[:, hid : 2 * hid] = df * f * (1 - f)
            dz[:, 2 * hid : 3 * hid] = dg * (1 - gg * gg)
            dz[:, 3 * hid :] = do * o * (1 - o)
            dc = dc * f
            dh = dz @ w_hh.data.T
        gx = np.matmul(dz_all, w_ih.data.T) if x.requires_grad else None
        gw_ih = np.tensordot(x.data, dz_all, axes=([0, 1], [0, 1])) if w_ih.requires_grad else None
        if w_hh.requires_grad:
            h_prev = np.stack(hs[:-1], axis=1)  # [N,T,H]
            gw_hh = np.tensordot(h_prev, dz_all, axes=([0, 1], [0, 1]))
        else:
            gw_hh = None
        gb = dz_all.sum(axis=(0, 1)) if bias.requires_grad else None
        return gx, gw_ih, gw_hh, gb

    return Tensor._from_op(h, (x, w_ih, w_hh, bias), backward, "lstm")


def stack_rows(parts: Sequence[Tensor]) -> Tensor:
    """Concatenate tensors along axis 0."""
    out = np.concatenate([p.data for p in parts], axis=0)
    sizes = np.cumsum([p.shape[0] for p in parts])[:-1]

    def backward(g):
        return tuple(np.split(g, sizes, axis=0))

    return Tensor._from_op(out, tuple(parts), backward, "stack_rows")
