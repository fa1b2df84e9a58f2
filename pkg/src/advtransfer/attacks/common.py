"""Input-gradient helpers shared by the attacks.

Every helper works on a batch and on any object exposing
``forward(Tensor) -> Tensor[N,2]`` without touching its parameters. Losses are
summed over the batch so each row's gradient is exactly its own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..engine import Tensor, get_dtype, ops


@dataclass
class CoreOutput:
    """Raw batched attack output before per-sample bookkeeping."""

    adversarial: np.ndarray
    iterations: np.ndarray
    failures: Dict[int, str] = field(default_factory=dict)
    diagnostics: List[dict] = field(default_factory=list)


def _forward(model, x: np.ndarray) -> Tuple[Tensor, Tensor]:
    inp = Tensor(np.asarray(x, dtype=get_dtype()), requires_grad=True)
    return inp, model.forward(inp)


def finite_rows(a: np.ndarray) -> np.ndarray:
    return np.isfinite(a.reshape(len(a), -1)).all(axis=1)


def loss_gradient(model, x: np.ndarray, labels) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of the per-sample cross-entropy w.r.t. ``x``; also returns logits."""
    inp, logits = _forward(model, x)
    loss = ops.softmax_crossentropy(logits, np.asarray(labels), reduction="sum")
    loss.backward()
    return inp.grad, logits.data


def logit_direction_gradient(model, x: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradient of sum_n weights[n] . logits[n] w.r.t. ``x``."""
    inp, logits = _forward(model, x)
    logits.backward(np.asarray(weights, dtype=logits.data.dtype))
    return inp.grad, logits.data


def class_jacobian(model, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Logits [N,2] and per-class input gradients [N,2,...] from one forward pass."""
    inp, logits = _forward(model, x)
    n, k = logits.shape
    grads = []
    for cls in range(k):
        seed = np.zeros((n, k), dtype=logits.data.dtype)
        seed[:, cls] = 1
        inp.zero_grad()
        logits.backward(seed)
        grads.append(inp.grad)
    return logits.data, np.stack(grads, axis=1)


def predicted_labels(model, x: np.ndarray, batch_size: int = 100) -> np.ndarray:
    x = np.asarray(x, dtype=get_dtype())
    out = [model.forward(Tensor(x[i : i + batch_size])).data.argmax(axis=1) for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def enforce_linf(adv: np.ndarray, x: np.ndarray, bound: float) -> np.ndarray:
    """Project ``adv`` onto the float64-exact L-inf ball of radius ``bound`` around ``x``.

    Float32 accumulation can land a cell a few ulps past the bound; the
    inward-rounded box pulls it back without leaving [0,1], since ``x`` is inside.
    """
    lower, upper = linf_box(x, bound, -np.inf, np.inf)
    return np.minimum(np.maximum(adv, lower), upper)


def linf_box(x: np.ndarray, radius: float, lo: float, hi: float) -> Tuple[np.ndarray, np.ndarray]:
    """Tightest representable bounds of {a : |a - x| <= radius} within [lo, hi].

    Bounds are rounded inward in ``x``'s dtype so that clipping to them is
    the exact projection, checked in float64.
    """
    x64 = x.astype(np.float64)
    up64, dn64 = x64 + radius, x64 - radius
    upper = up64.astype(x.dtype)
    lower = dn64.astype(x.dtype)
    inf = np.asarray(np.inf, dtype=x.dtype)
    upper = np.where(upper.astype(np.float64) > up64, np.nextafter(upper, -inf), upper)
    lower = np.where(lower.astype(np.float64) < dn64, np.nextafter(lower, inf), lower)
    upper = np.minimum(np.maximum(upper, x), np.asarray(hi, dtype=x.dtype))
    lower = np.maximum(np.minimum(lower, x), np.asarray(lo, dtype=x.dtype))
    return lower, upper
