"""Single-sample attack entry points and the batched runner."""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .. import metrics
from ..engine import get_dtype
from ..errors import AttackError
from .common import CoreOutput, predicted_labels
from .config import AttackConfig, AttackKind, AttackResult
from .deepfool import deepfool_batch
from .gradient_sign import ifgsm_batch, pgd_batch
from .jsma import jsma_batch
from .lbfgs import lbfgs_batch

logger = logging.getLogger(__name__)

CHUNK_SIZE = 25


def craft(model, x: np.ndarray, labels: np.ndarray, cfg: AttackConfig) -> CoreOutput:
    """Dispatch a batch to the attack named by ``cfg.kind``.

    Untargeted attacks use ``labels`` as the true class; targeted ones aim at
    the other class of the binary task.
    """
    labels = np.asarray(labels)
    kind = cfg.kind
    if kind is AttackKind.IFGSM:
        return ifgsm_batch(model, x, labels, cfg)
    if kind is AttackKind.PGD:
        return pgd_batch(model, x, labels, cfg)
    if kind is AttackKind.JSMA:
        return jsma_batch(model, x, 1 - labels, cfg)
    if kind is AttackKind.LBFGS:
        return lbfgs_batch(model, x, 1 - labels, cfg)
    if kind is AttackKind.DEEPFOOL:
        return deepfool_batch(model, x, cfg)
    raise AttackError(f"unsupported attack kind {kind}")


def _check_output(adv: np.ndarray, cfg: AttackConfig) -> None:
    lo, hi = cfg.clip
    if not np.all(np.isfinite(adv)) or adv.min() < lo or adv.max() > hi:
        raise AttackError(f"{cfg.kind.value} produced values outside [{lo}, {hi}]")


def _attack_chunk(model, x, y, ids, cfg) -> Tuple[List[Optional[AttackResult]], List[Tuple[int, str]]]:
    start = time.perf_counter()
    clean = predicted_labels(model, x)
    out = craft(model, x, y, cfg)
    _check_output(out.adversarial, cfg)
    adv_labels = predicted_labels(model, out.adversarial)
    per_sample = (time.perf_counter() - start) / len(x)
    results: List[Optional[AttackResult]] = []
    failures = []
    for i in range(len(x)):
        if i in out.failures:
            results.append(None)
            failures.append((i, out.failures[i]))
            continue
        diag = out.diagnostics[i] if out.diagnostics else {}
        results.append(
            AttackResult.build(
                x[i], out.adversarial[i], clean[i], adv_labels[i], out.iterations[i], per_sample,
                true_label=int(y[i]), source_id=ids[i], diagnostics=dict(diag),
            )
        )
    return results, failures


def _single(model, sample, cfg: AttackConfig, kind: AttackKind, label=None, target_class=None) -> AttackResult:
    if cfg.kind is not kind:
        raise ValueError(f"{kind.value} needs a {kind.name} config, got {cfg.kind.value}")
    patch = getattr(sample, "patch", sample)
    x = np.asarray(patch, dtype=get_dtype())[None]
    if label is None:
        label = getattr(sample, "label", None)
    if label is None:
        label = int(predicted_labels(model, x)[0])
    if target_class is not None:
        if target_class == label:
            raise ValueError("target_class must differ from the original label")
        label = 1 - int(target_class)
    source_id = getattr(sample, "source_id", "")
    results, failures = _attack_chunk(model, x, np.array([int(label)]), [source_id], cfg)
    if failures:
        raise AttackError(failures[0][1])
    return results[0]


def ifgsm(model, sample, cfg: AttackConfig, label: Optional[int] = None) -> AttackResult:
    """Iterated FGSM on one sample (a PatchSample or a [1,64,64] array)."""
    return _single(model, sample, cfg, AttackKind.IFGSM, label)


def pgd(model, sample, cfg: AttackConfig, label: Optional[int] = None) -> AttackResult:
    return _single(model, sample, cfg, AttackKind.PGD, label)


def jsma(model, sample, cfg: AttackConfig, target_class: Optional[int] = None) -> AttackResult:
    return _single(model, sample, cfg, AttackKind.JSMA, target_class=target_class)


def lbfgs(model, sample, cfg: AttackConfig, target_class: Optional[int] = None) -> AttackResult:
    return _single(model, sample, cfg, AttackKind.LBFGS, target_class=target_class)


def deepfool(model, sample, cfg: AttackConfig) -> AttackResult:
    return _single(model, sample, cfg, AttackKind.DEEPFOOL)


@dataclass
class BatchSummary:
    attack: dict
    n_samples: int
    n_eligible: int
    no_eligible_samples: bool
    asr: Optional[float]
    mean_psnr_db: Optional[float]
    mean_l1: Optional[float]
    mean_l1_sum: Optional[float]
    mean_linf: Optional[float]
    mean_l2: Optional[float]
    total_wall_clock_s: float
    n_failures: int

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        if d["mean_psnr_db"] is not None and math.isinf(d["mean_psnr_db"]):
            d["mean_psnr_db"] = "inf"
        return d


@dataclass
class BatchOutcome:
    results: List[Optional[AttackResult]]
    summary: BatchSummary
    failures: List[Tuple[int, str, str]] = field(default_factory=list)
    originals: Optional[np.ndarray] = None

    @property
    def adversarials(self) -> np.ndarray:
        return np.stack([r.adversarial if r is not None else o for r, o in zip(self.results, self.originals)])


def summarize(results: Sequence[Optional[AttackResult]], originals: np.ndarray, cfg: AttackConfig, failures: int = 0) -> BatchSummary:
    """Aggregate over the eligible set: results whose clean prediction is right."""
    eligible = [(r, o) for r, o in zip(results, originals) if r is not None and r.original_label == r.true_label]
    total = float(sum(r.wall_clock_s for r in results if r is not None))
    if not eligible:
        return BatchSummary(cfg.resolved().to_dict(), len(results), 0, True, None, None, None, None, None, None, total, failures)
    rs = [r for r, _ in eligible]
    l2 = [float(np.linalg.norm((r.adversarial.astype(np.float64) - o.astype(np.float64)).ravel())) for r, o in eligible]
    return BatchSummary(
        attack=cfg.resolved().to_dict(),
        n_samples=len(results),
        n_eligible=len(rs),
        no_eligible_samples=False,
        asr=float(np.mean([r.adversarial_label != r.true_label for r in rs])),
        mean_psnr_db=metrics.mean_psnr([r.psnr_db for r in rs]),
        mean_l1=float(np.mean([r.l1 for r in rs])),
        mean_l1_sum=float(np.mean([r.l1_sum for r in rs])),
        mean_linf=float(np.mean([r.linf for r in rs])),
        mean_l2=float(np.mean(l2)),
        total_wall_clock_s=total,
        n_failures=failures,
    )


def _unpack_samples(samples):
    if isinstance(samples, tuple) and len(samples) in (2, 3):
        x, y = np.asarray(samples[0]), np.asarray(samples[1])
        ids = list(samples[2]) if len(samples) == 3 else [str(i) for i in range(len(x))]
        return x, y, ids
    samples = list(samples)
    x = np.stack([np.asarray(s.patch) for s in samples]) if samples else np.zeros((0, 1, 64, 64))
    y = np.array([s.label for s in samples], dtype=np.int64)
    return x, y, [s.source_id for s in samples]


def run_attack_batch(model, samples, cfg: AttackConfig, threads: int = 1, chunk_size: int = CHUNK_SIZE) -> BatchOutcome:
    """Attack every sample and aggregate.

    Args:
        model: white-box model, read only.
        samples: sequence of PatchSample, or an (x, labels[, source_ids]) tuple.
        cfg: attack configuration.
        threads: worker threads; chunks are fixed-size so results do not
            depend on the thread count.
        chunk_size: samples per batched attack call.

    Returns:
        BatchOutcome with per-sample results in input order (``None`` for
        failed samples), the summary, and the failure list.
    """
    x, y, ids = _unpack_samples(samples)
    if len(x) == 0:
        raise ValueError("run_attack_batch needs at least one sample")
    x = np.asarray(x, dtype=get_dtype())
    bounds = [(lo, min(lo + chunk_size, len(x))) for lo in range(0, len(x), chunk_size)]

    def work(b):
        lo, hi = b
        return _attack_chunk(model, x[lo:hi], y[lo:hi], ids[lo:hi], cfg)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, bounds))
    else:
        parts = [work(b) for b in bounds]
    results: List[Optional[AttackResult]] = []
    failures = []
    for (lo, _), (res, fails) in zip(bounds, parts):
        results.extend(res)
        failures.extend((lo + i, ids[lo + i], msg) for i, msg in fails)
    for i, sid, msg in failures:
        logger.warning("attack %s failed on sample %d (%s): %s", cfg.kind.value, i, sid, msg)
    summary = summarize(results, x, cfg, len(failures))
    return BatchOutcome(results, summary, failures, originals=x)
