"""Binary DeepFool on the logit margin f = logit_1 - logit_0.

Each round linearizes f at the current point and adds the minimal L2 step
onto the linearized boundary; the accumulated step is scaled by
(1 + overshoot) before it is applied. A point with f exactly 0 is labelled
class 0 by the argmax tie rule, so its step is taken toward class 1 with the
margin floored at ``BOUNDARY_MARGIN``.
"""

from __future__ import annotations

import numpy as np

from ..engine import get_dtype
from .common import CoreOutput, logit_direction_gradient
from .config import AttackConfig, AttackKind

SINGULAR_GRAD_NORM = 1e-12
BOUNDARY_MARGIN = 1e-4


def deepfool_batch(model, x: np.ndarray, cfg: AttackConfig) -> CoreOutput:
    if cfg.kind is not AttackKind.DEEPFOOL:
        raise ValueError(f"deepfool needs a DEEPFOOL config, got {cfg.kind.value}")
    dtype = get_dtype()
    x = np.asarray(x, dtype=dtype)
    n = len(x)
    x64 = x.reshape(n, -1).astype(np.float64)
    lo, hi = cfg.clip
    scale = 1.0 + cfg.deepfool_overshoot
    r_tot = np.zeros_like(x64)
    adv = x.copy()
    iterations = np.zeros(n, dtype=np.int64)
    failures = {}
    active = np.ones(n, dtype=bool)
    start_label = None
    seed = np.tile(np.array([-1.0, 1.0]), (n, 1))

    for it in range(cfg.deepfool_max_iter + 1):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        grad, logits = logit_direction_gradient(model, adv[idx], seed[idx])
        label = logits.argmax(axis=1)
        if start_label is None:
            start_label = label.copy()
        flipped = label != start_label[idx]
        active[idx[flipped]] = False
        keep = ~flipped
        if it == cfg.deepfool_max_iter:
            break
        idx, grad, logits, label = idx[keep], grad[keep], logits[keep], label[keep]
        if len(idx) == 0:
            break
        w = grad.reshape(len(idx), -1).astype(np.float64)
        f = logits[:, 1].astype(np.float64) - logits[:, 0].astype(np.float64)
        norm2 = np.einsum("nd,nd->n", w, w)
        singular = ~(np.sqrt(norm2) >= SINGULAR_GRAD_NORM)
        for j in idx[singular]:
            failures[int(j)] = f"DeepFool gradient norm below {SINGULAR_GRAD_NORM:g} at step {it + 1}"
        active[idx[singular]] = False
        ok = ~singular
        idx, w, f, norm2, label = idx[ok], w[ok], f[ok], norm2[ok], label[ok]
        # move toward the other class: class 0 needs f up, class 1 needs f down
        toward = np.where(label == 0, 1.0, -1.0)
        margin = np.maximum(np.abs(f), np.where(f == 0, BOUNDARY_MARGIN, 0.0))
        r_tot[idx] += (toward * margin / norm2)[:, None] * w
        iterations[idx] += 1
        moved = np.clip(x64[idx] + scale * r_tot[idx], lo, hi)
        adv[idx] = moved.reshape((len(idx),) + x.shape[1:]).astype(dtype)
    return CoreOutput(adv, iterations, failures)
