"""Iterated sign-gradient attacks: I-FGSM and PGD."""

from __future__ import annotations

import numpy as np

from .. import rng as rngmod
from ..engine import get_dtype
from .common import CoreOutput, enforce_linf, finite_rows, linf_box, loss_gradient
from .config import AttackConfig, AttackKind


def _sign_steps(model, x, labels, eps, steps, lower, upper, start) -> CoreOutput:
    adv = start.copy()
    active = np.ones(len(x), dtype=bool)
    failures = {}
    step = np.asarray(eps, dtype=adv.dtype)
    for i in range(steps):
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        grad, _ = loss_gradient(model, adv[idx], labels[idx])
        ok = finite_rows(grad)
        for j in idx[~ok]:
            failures[int(j)] = f"non-finite input gradient at step {i + 1}"
        active[idx[~ok]] = False
        idx, grad = idx[ok], grad[ok]
        moved = adv[idx] + step * np.sign(grad)
        adv[idx] = np.minimum(np.maximum(moved, lower[idx]), upper[idx])
    return CoreOutput(adv, np.full(len(x), steps), failures)


def ifgsm_batch(model, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> CoreOutput:
    """Adv_{i+1} = clip(Adv_i + eps * sign(grad_x CE(Adv_i, y))) for ``steps`` rounds."""
    if cfg.kind is not AttackKind.IFGSM:
        raise ValueError(f"ifgsm needs an IFGSM config, got {cfg.kind.value}")
    x = np.asarray(x, dtype=get_dtype())
    lo, hi = cfg.clip
    lower = np.full_like(x, lo)
    upper = np.full_like(x, hi)
    out = _sign_steps(model, x, np.asarray(labels), cfg.epsilon, cfg.n_steps, lower, upper, x)
    out.adversarial = enforce_linf(out.adversarial, x, cfg.n_steps * cfg.epsilon)
    return out


def pgd_batch(model, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> CoreOutput:
    """Sign steps projected onto the L-inf ball of ``pgd_radius`` around x, inside the clip box."""
    if cfg.kind is not AttackKind.PGD:
        raise ValueError(f"pgd needs a PGD config, got {cfg.kind.value}")
    x = np.asarray(x, dtype=get_dtype())
    lo, hi = cfg.clip
    r = cfg.radius
    lower, upper = linf_box(x, r, lo, hi)
    start = x
    if cfg.pgd_random_start:
        gen = rngmod.stream(cfg.seed, "pgd-start")
        start = gen.uniform(lower, upper).astype(x.dtype)
    out = _sign_steps(model, x, np.asarray(labels), cfg.epsilon, cfg.n_steps, lower, upper, start)
    # from x, n sign steps cannot travel further than n * eps either
    bound = r if cfg.pgd_random_start else min(r, cfg.n_steps * cfg.epsilon)
    out.adversarial = enforce_linf(out.adversarial, x, bound)
    return out
