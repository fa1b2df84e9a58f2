"""Box-constrained L-BFGS attack with a search over the loss weight c.

Objective per sample: ||a - x||^2 + c * CE(model(a), target) over the clip box.
c grows geometrically until the target class is reached, then bisection
shrinks it toward the smallest successful value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from ..engine import get_dtype, ops
from .common import CoreOutput, loss_gradient, predicted_labels
from .config import AttackConfig, AttackKind

FunGrad = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray]]


@dataclass
class BoxLBFGSResult:
    x: np.ndarray  # [N, D]
    f: np.ndarray  # [N]
    iterations: np.ndarray  # [N]
    converged: np.ndarray  # [N] bool


def _two_loop(g, S, Y, rho, count, head, memory):
    """H_k g for each row via the L-BFGS two-loop recursion over ring buffers."""
    n = len(g)
    q = g.copy()
    alphas = np.zeros((n, memory))
    rows = np.arange(n)
    # newest to oldest
    for k in range(memory):
        use = count > k
        if not use.any():
            break
        slot = (head - 1 - k) % memory
        s, y, r = S[rows, slot], Y[rows, slot], rho[rows, slot]
        a = np.where(use, r * np.einsum("nd,nd->n", s, q), 0.0)
        alphas[:, k] = a
        q -= a[:, None] * y
    newest = (head - 1) % memory
    s, y = S[rows, newest], Y[rows, newest]
    yy = np.einsum("nd,nd->n", y, y)
    gamma = np.where((count > 0) & (yy > 0), np.einsum("nd,nd->n", s, y) / np.where(yy > 0, yy, 1.0), 1.0)
    q *= gamma[:, None]
    for k in reversed(range(memory)):
        use = count > k
        if not use.any():
            continue
        slot = (head - 1 - k) % memory
        s, y, r = S[rows, slot], Y[rows, slot], rho[rows, slot]
        b = r * np.einsum("nd,nd->n", y, q)
        q += np.where(use, alphas[:, k] - b, 0.0)[:, None] * s
    return q


def minimize_box_lbfgs(
    fun: FunGrad,
    x0: np.ndarray,
    lower,
    upper,
    memory: int = 10,
    max_iter: int = 50,
    gtol: float = 1e-8,
    ftol: float = 1e-12,
) -> BoxLBFGSResult:
    """Projected L-BFGS for a batch of independent box-constrained problems.

    Variables at a bound with the gradient pushing outward are frozen for the
    step; the rest follow the two-loop direction with Armijo backtracking on
    the projected path.

    Args:
        fun: maps (x [n,D], row indices [n]) to (f [n], grad [n,D]).
        x0: starting points [N,D].
        lower, upper: bounds broadcastable to x0.
        memory: number of curvature pairs kept.
        max_iter: outer iterations per row.
        gtol: stop once the projected gradient's max-norm falls below this.
        ftol: stop once the relative decrease falls below this.

    Returns:
        BoxLBFGSResult with per-row solution, value and iteration count.
    """
    x = np.clip(np.asarray(x0, dtype=np.float64), lower, upper)
    n, d = x.shape
    lower = np.broadcast_to(np.asarray(lower, dtype=np.float64), x.shape)
    upper = np.broadcast_to(np.asarray(upper, dtype=np.float64), x.shape)
    all_rows = np.arange(n)
    f, g = fun(x, all_rows)
    f, g = np.asarray(f, dtype=np.float64), np.asarray(g, dtype=np.float64).reshape(n, d)
    S = np.zeros((n, memory, d))
    Y = np.zeros((n, memory, d))
    rho = np.zeros((n, memory))
    count = np.zeros(n, dtype=np.int64)
    head = np.zeros(n, dtype=np.int64)
    iters = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    converged = np.zeros(n, dtype=bool)

    for _ in range(max_iter):
        pg = x - np.clip(x - g, lower, upper)
        small = np.abs(pg).max(axis=1) <= gtol
        converged |= active & small
        active &= ~small
        idx = np.flatnonzero(active)
        if len(idx) == 0:
            break
        xi, gi = x[idx], g[idx]
        fixed = ((xi <= lower[idx]) & (gi > 0)) | ((xi >= upper[idx]) & (gi < 0))
        gfree = np.where(fixed, 0.0, gi)
        direction = -_two_loop(gfree, S[idx], Y[idx], rho[idx], count[idx], head[idx], memory)
        direction[fixed] = 0.0
        slope = np.einsum("nd,nd->n", direction, gi)
        bad = slope >= 0
        direction[bad] = -gfree[bad]
        # first step of a fresh history is scaled to unit max-norm
        fresh = count[idx] == 0
        scale = np.ones(len(idx))
        dmax = np.abs(direction).max(axis=1)
        scale[fresh] = np.where(dmax[fresh] > 0, np.minimum(1.0, 1.0 / np.maximum(dmax[fresh], 1e-300)), 1.0)

        step = scale.copy()
        pending = np.ones(len(idx), dtype=bool)
        x_new = xi.copy()
        f_new = f[idx].copy()
        g_new = gi.copy()
        for _ls in range(30):
            p = np.flatnonzero(pending)
            if len(p) == 0:
                break
            trial = np.clip(xi[p] + step[p, None] * direction[p], lower[idx[p]], upper[idx[p]])
            ft, gt = fun(trial, idx[p])
            ft = np.asarray(ft, dtype=np.float64)
            gt = np.asarray(gt, dtype=np.float64).reshape(len(p), d)
            decrease = np.einsum("nd,nd->n", gi[p], trial - xi[p])
            accept = np.isfinite(ft) & (ft <= f[idx[p]] + 1e-4 * decrease)
            a = p[accept]
            x_new[a], f_new[a], g_new[a] = trial[accept], ft[accept], gt[accept]
            pending[a] = False
            step[p[~accept]] *= 0.5
        failed = pending
        iters[idx] += 1

        moved = ~failed
        m = idx[moved]
        s = x_new[moved] - xi[moved]
        y = g_new[moved] - gi[moved]
        sy = np.einsum("nd,nd->n", s, y)
        yy = np.einsum("nd,nd->n", y, y)
        good = sy > 1e-10 * np.maximum(yy, 1e-300)
        gm = m[good]
        slot = head[gm]
        S[gm, slot] = s[good]
        Y[gm, slot] = y[good]
        rho[gm, slot] = 1.0 / sy[good]
        head[gm] = (head[gm] + 1) % memory
        count[gm] = np.minimum(count[gm] + 1, memory)

        f_old = f[m].copy()
        x[m], f[m], g[m] = x_new[moved], f_new[moved], g_new[moved]
        flat = np.abs(f_old - f[m]) <= ftol * np.maximum(1.0, np.abs(f[m]))
        converged[m[flat]] = True
        active[m[flat]] = False
        # a failed line search means no descent is left along any tried step
        converged[idx[failed]] = True
        active[idx[failed]] = False
    return BoxLBFGSResult(x, f, iters, converged)


def lbfgs_batch(model, x: np.ndarray, targets: np.ndarray, cfg: AttackConfig) -> CoreOutput:
    """Minimal-c targeted attack for each row of ``x``."""
    if cfg.kind is not AttackKind.LBFGS:
        raise ValueError(f"lbfgs needs an LBFGS config, got {cfg.kind.value}")
    dtype = get_dtype()
    x = np.asarray(x, dtype=dtype)
    n = len(x)
    shape = x.shape
    x64 = x.reshape(n, -1).astype(np.float64)
    targets = np.asarray(targets)
    lo, hi = cfg.clip

    best = x.copy()
    found = predicted_labels(model, x) == targets
    c_low = np.zeros(n)
    c_high = np.full(n, np.inf)
    c_try = np.full(n, float(cfg.lbfgs_initial_c))
    inner_iters = np.zeros(n, dtype=np.int64)
    failures = {}
    last = x.copy()

    def solve(rows, c):
        def fun(a, sub):
            r = rows[sub]
            adv = a.reshape((len(sub),) + shape[1:]).astype(dtype)
            grad, logits = loss_gradient(model, adv, targets[r])
            ce = -ops.log_softmax(logits.astype(np.float64))[np.arange(len(sub)), targets[r]]
            diff = a - x64[r]
            f = np.einsum("nd,nd->n", diff, diff) + c[sub] * ce
            g = 2.0 * diff + c[sub, None] * grad.reshape(len(sub), -1).astype(np.float64)
            bad = ~np.isfinite(g).all(axis=1)
            f[bad] = np.nan
            return f, g

        res = minimize_box_lbfgs(fun, x64[rows], lo, hi, memory=cfg.lbfgs_memory, max_iter=cfg.lbfgs_max_iter)
        adv = np.clip(res.x.reshape((len(rows),) + shape[1:]).astype(dtype), lo, hi)
        inner_iters[rows] += res.iterations
        return adv, predicted_labels(model, adv) == targets[rows]

    # geometric growth until each row first succeeds
    pending = ~found
    for _ in range(cfg.lbfgs_max_growth + 1):
        rows = np.flatnonzero(pending)
        if len(rows) == 0:
            break
        adv, ok = solve(rows, c_try[rows])
        last[rows] = adv
        won = rows[ok]
        best[won] = adv[ok]
        c_high[won] = c_try[won]
        lost = rows[~ok]
        c_low[lost] = c_try[lost]
        c_try[lost] *= cfg.lbfgs_growth
        pending[won] = False
    searched = np.isfinite(c_high)
    # bisection between the last failing and first succeeding c
    for _ in range(cfg.lbfgs_bisection_steps):
        rows = np.flatnonzero(searched)
        if len(rows) == 0:
            break
        mid = 0.5 * (c_low[rows] + c_high[rows])
        adv, ok = solve(rows, mid)
        won = rows[ok]
        best[won] = adv[ok]
        c_high[won] = mid[ok]
        c_low[rows[~ok]] = mid[~ok]
    never = ~found & ~searched
    best[never] = last[never]
    diag = []
    for i in range(n):
        if found[i]:
            diag.append({"c": 0.0, "status": "already_target"})
        elif searched[i]:
            diag.append({"c": float(c_high[i]), "status": "success"})
        else:
            diag.append({"c_max": float(c_low[i]), "status": "no_successful_c"})
    return CoreOutput(best, inner_iters, failures, diag)
