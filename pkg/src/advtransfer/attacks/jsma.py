"""Single-cell saliency-map attack toward a target class.

Class scores are the logits. Each round computes the Jacobian of both class
scores, scores every cell, and raises the best one by theta.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from ..engine import get_dtype
from .common import CoreOutput, class_jacobian, finite_rows, predicted_labels
from .config import AttackConfig, AttackKind


def saliency_map(grad_target: np.ndarray, grad_others: np.ndarray) -> np.ndarray:
    """Per-cell saliency.

    Zero where the target-score gradient is negative or the summed
    other-class gradient is positive, else ``grad_target * |grad_others|``.

    Args:
        grad_target: d F_t / d x, any shape.
        grad_others: sum over j != t of d F_j / d x, same shape.
    """
    gt = np.asarray(grad_target, dtype=np.float64)
    go = np.asarray(grad_others, dtype=np.float64)
    zero = (gt < 0) | (go > 0)
    return np.where(zero, 0.0, gt * np.abs(go))


def jsma_batch(model, x: np.ndarray, targets: np.ndarray, cfg: AttackConfig, trace: Optional[list] = None) -> CoreOutput:
    """Run the attack on a batch; ``targets`` holds one target class per row.

    Stops per sample on success, all-zero saliency, once the distinct-cell
    budget is used up, or after ``jsma_max_iter`` rounds (default: the budget).
    If ``trace`` is a list, each round appends (row, chosen cell, input before
    the change) for every row it modifies.
    """
    if cfg.kind is not AttackKind.JSMA:
        raise ValueError(f"jsma needs a JSMA config, got {cfg.kind.value}")
    x = np.asarray(x, dtype=get_dtype())
    n = len(x)
    adv = x.copy()
    flat = adv.reshape(n, -1)
    cells = flat.shape[1]
    lo, hi = cfg.clip
    budget = cfg.budget_cells(cells)
    max_iter = cfg.jsma_max_iter if cfg.jsma_max_iter is not None else budget
    targets = np.asarray(targets)
    searchable = flat < hi
    modified = np.zeros_like(searchable)
    iterations = np.zeros(n, dtype=np.int64)
    stop = np.array([""] * n, dtype=object)
    failures = {}
    active = np.ones(n, dtype=bool)
    theta = np.asarray(cfg.theta, dtype=adv.dtype)

    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        logits, jac = class_jacobian(model, adv[idx])
        jac = jac.reshape(len(idx), jac.shape[1], -1)
        ok = finite_rows(jac)
        for j in idx[~ok]:
            failures[int(j)] = f"non-finite Jacobian after {iterations[j]} rounds"
            stop[j] = "error"
        done = logits.argmax(axis=1) == targets[idx]
        stop[idx[done & ok]] = "success"
        keep = ok & ~done
        active[idx[~keep]] = False
        idx, jac = idx[keep], jac[keep]
        if len(idx) == 0:
            break
        t = targets[idx]
        g_t = jac[np.arange(len(idx)), t]
        g_o = jac.sum(axis=1) - g_t
        sal = saliency_map(g_t, g_o)
        sal[~searchable[idx]] = 0.0
        best = sal.argmax(axis=1)
        zero = sal[np.arange(len(idx)), best] <= 0
        stop[idx[zero]] = "zero_saliency"
        active[idx[zero]] = False
        idx, best = idx[~zero], best[~zero]
        if trace is not None:
            trace.extend((int(i), int(c), adv[i].copy()) for i, c in zip(idx, best))
        flat[idx, best] = np.minimum(flat[idx, best] + theta, np.asarray(hi, dtype=adv.dtype))
        modified[idx, best] = True
        exhausted = flat[idx, best] >= hi
        searchable[idx[exhausted], best[exhausted]] = False
        iterations[idx] += 1
        spent = modified[idx].sum(axis=1) >= budget
        stop[idx[spent]] = "budget"
        active[idx[spent]] = False
    stop[stop == ""] = "max_iter"
    # rows that ran out of rounds or cells may have reached the target on their last move
    check = np.flatnonzero((stop == "max_iter") | (stop == "budget"))
    if len(check):
        reached = predicted_labels(model, adv[check]) == targets[check]
        stop[check[reached]] = "success"
    diag = [{"stop": str(s), "cells_modified": int(m)} for s, m in zip(stop, modified.sum(axis=1))]
    return CoreOutput(adv, iterations, failures, diag)
