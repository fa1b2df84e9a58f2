"""Craft on the source network, replay the same tensors on the target network."""

from __future__ import annotations

import hashlib
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import metrics
from .. import rng as rngmod
from ..attacks import AdversarialArchive, AttackConfig, run_attack_batch, save_archive
from ..attacks.archive import archive_bytes
from ..binfmt import dumps_header
from ..errors import AdvTransferError
from ..models import Model, predict
from .registry import ModelRegistry
from .scenario import ScenarioCase, validate_case

logger = logging.getLogger(__name__)


def select_samples(model: Model, dataset, count: int, seed: int) -> np.ndarray:
    """First ``count`` test samples the model classifies correctly, under a seeded shuffle.

    Returns dataset indices in selection order (fewer if the split runs out).
    """
    test = dataset.split_indices("test")
    order = test[rngmod.stream(seed, "attack-sampling").permutation(len(test))]
    labels = predict(model, dataset.patches[order]).labels
    correct = order[labels == dataset.labels[order]]
    return correct[:count]


@dataclass
class CraftedSet:
    """Adversarial examples crafted once on a source model."""

    indices: np.ndarray
    source_ids: List[str]
    labels: np.ndarray
    originals: np.ndarray
    adversarials: np.ndarray
    ok: np.ndarray  # False where the attack failed on that sample
    failures: List[Tuple[int, str, str]]
    summary: dict
    wall_clock_s: float

    def archive(self) -> AdversarialArchive:
        return AdversarialArchive(self.source_ids, self.labels, self.originals, self.adversarials)

    @property
    def archive_sha256(self) -> str:
        return hashlib.sha256(archive_bytes(self.archive())).hexdigest()


class CraftCache:
    """Crafted sets keyed by (source fingerprint, dataset, attack, samples)."""

    def __init__(self, archive_dir: Optional[Path] = None):
        self._sets: Dict[str, CraftedSet] = {}
        self._locks: Dict[str, threading.Lock] = {}
        self._guard = threading.Lock()
        self.archive_dir = Path(archive_dir) if archive_dir is not None else None
        self.hits = 0

    @staticmethod
    def key(sn_fingerprint: str, dataset_fingerprint: str, attack: AttackConfig, indices: np.ndarray) -> str:
        payload = {
            "sn": sn_fingerprint,
            "dataset": dataset_fingerprint,
            "attack": attack.resolved().to_dict(),
            "indices": [int(i) for i in indices],
        }
        return hashlib.sha256(dumps_header(payload)).hexdigest()

    def get_or_craft(self, key: str, craft_fn) -> CraftedSet:
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key in self._sets:
                self.hits += 1
                return self._sets[key]
            crafted = craft_fn()
            if self.archive_dir is not None:
                save_archive(self.archive_dir / f"{key[:16]}.spad", crafted.archive())
            self._sets[key] = crafted
            return crafted


def craft_on_source(model: Model, dataset, indices: np.ndarray, attack: AttackConfig, threads: int = 1) -> CraftedSet:
    x = dataset.patches[indices]
    y = dataset.labels[indices]
    ids = [dataset.source_ids[i] for i in indices]
    outcome = run_attack_batch(model, (x, y, ids), attack, threads=threads)
    ok = np.array([r is not None for r in outcome.results], dtype=bool)
    return CraftedSet(
        indices=np.asarray(indices),
        source_ids=ids,
        labels=np.asarray(y),
        originals=np.asarray(x),
        adversarials=outcome.adversarials,
        ok=ok,
        failures=outcome.failures,
        summary=outcome.summary.to_dict(),
        wall_clock_s=outcome.summary.total_wall_clock_s,
    )


def transfer_metrics(sn: Model, tn: Model, crafted: CraftedSet) -> metrics.ScenarioMetrics:
    """SN and TN success rates on one crafted set, with SN-eligible distortion means."""
    ok = crafted.ok
    x, adv, y = crafted.originals[ok], crafted.adversarials[ok], crafted.labels[ok]
    if len(y) == 0:
        return metrics.ScenarioMetrics(None, None, float("nan"), float("nan"), float("nan"), 0, 0)
    sn_clean, sn_adv = predict(sn, x).labels, predict(sn, adv).labels
    if tn is sn:
        tn_clean, tn_adv = sn_clean, sn_adv
    else:
        tn_clean, tn_adv = predict(tn, x).labels, predict(tn, adv).labels
    eligible = sn_clean == y
    pairs = [(a, b) for a, b, e in zip(x, adv, eligible) if e]
    psnrs = [metrics.psnr(a, b) for a, b in pairs]
    return metrics.ScenarioMetrics(
        asr_sn=metrics.asr_from_predictions(sn_clean, sn_adv, y),
        asr_tn=metrics.asr_from_predictions(tn_clean, tn_adv, y),
        mean_psnr_db=metrics.mean_psnr(psnrs) if pairs else float("nan"),
        mean_l1=float(np.mean([metrics.l1_distortion(a, b) for a, b in pairs])) if pairs else float("nan"),
        mean_linf=float(np.mean([metrics.max_abs_distortion(a, b) for a, b in pairs])) if pairs else float("nan"),
        n_eligible=int(eligible.sum()),
        n_eligible_tn=int(np.sum(tn_clean == y)),
        mean_l1_sum=float(np.mean([metrics.l1_sum(a, b) for a, b in pairs])) if pairs else float("nan"),
    )


def _json_metric(v):
    if isinstance(v, float) and not np.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    return v


def _from_json_metric(v):
    return float(v) if v in ("inf", "-inf", "nan") else v


@dataclass
class ScenarioReport:
    case: ScenarioCase
    metrics: metrics.ScenarioMetrics
    sn_checkpoint: str
    tn_checkpoint: str
    attack_wall_clock_s: float
    created_at: str
    archive_sha256: str = ""
    sample_ids: List[str] = field(default_factory=list)
    failures: List[str] = field(default_factory=list)
    attack_summary: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return self.case.fingerprint

    def canonical_dict(self) -> dict:
        """Everything except wall-clock fields; identical across reruns."""
        summary = {k: v for k, v in self.attack_summary.items() if k != "total_wall_clock_s"}
        return {
            "case": self.case.to_dict(),
            "case_fingerprint": self.case.fingerprint,
            "metrics": {k: _json_metric(v) for k, v in self.metrics.to_dict().items()},
            "checkpoints": {"sn": self.sn_checkpoint, "tn": self.tn_checkpoint},
            "samples": {"archive_sha256": self.archive_sha256, "source_ids": self.sample_ids, "failures": self.failures},
            "attack_summary": summary,
        }

    def to_dict(self) -> dict:
        d = self.canonical_dict()
        d["timing"] = {"attack_wall_clock_s": self.attack_wall_clock_s, "created_at": self.created_at}
        return d

    def canonical_bytes(self) -> bytes:
        return dumps_header(self.canonical_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioReport":
        m = {k: _from_json_metric(v) for k, v in d["metrics"].items()}
        return cls(
            case=ScenarioCase.from_dict(d["case"]),
            metrics=metrics.ScenarioMetrics.from_dict(m),
            sn_checkpoint=d["checkpoints"]["sn"],
            tn_checkpoint=d["checkpoints"]["tn"],
            attack_wall_clock_s=d["timing"]["attack_wall_clock_s"],
            created_at=d["timing"]["created_at"],
            archive_sha256=d["samples"]["archive_sha256"],
            sample_ids=list(d["samples"]["source_ids"]),
            failures=list(d["samples"]["failures"]),
            attack_summary=dict(d.get("attack_summary", {})),
        )


def run_case(
    case: ScenarioCase,
    registry: ModelRegistry,
    cache: Optional[CraftCache] = None,
    threads: int = 1,
    report_dir=None,
    adversarials: Optional[np.ndarray] = None,
) -> ScenarioReport:
    """Attack the SN on its own test split and evaluate the same tensors on the TN.

    Args:
        case: validated scenario case.
        registry: trained models and datasets.
        cache: shared crafting cache; a fresh one is used when omitted.
        threads: attack worker threads.
        report_dir: if given, the report is written there and indexed.
        adversarials: replace the crafted tensors (for controls such as
            evaluating the clean originals).
    """
    validate_case(case)
    sn = registry.model(case.sn)
    tn = registry.model(case.tn)
    dataset = registry.dataset(case.sn.dataset)
    cache = cache or CraftCache()
    indices = select_samples(sn, dataset, case.sample_count, case.seed)
    if len(indices) == 0:
        logger.warning("case %s: the source model classifies no test sample correctly", case.fingerprint[:12])
    sn_fp = registry.fingerprint(case.sn)
    key = CraftCache.key(sn_fp, dataset.fingerprint, case.attack, indices)
    if len(indices):
        crafted = cache.get_or_craft(key, lambda: craft_on_source(sn, dataset, indices, case.attack, threads))
    else:
        empty = np.zeros((0, 1, 64, 64), np.float32)
        crafted = CraftedSet(indices, [], np.zeros(0, np.int64), empty, empty, np.zeros(0, bool), [], {}, 0.0)
    if adversarials is not None:
        crafted = CraftedSet(**{**crafted.__dict__, "adversarials": np.asarray(adversarials, dtype=np.float32)})
    m = transfer_metrics(sn, tn, crafted)
    report = ScenarioReport(
        case=case,
        metrics=m,
        sn_checkpoint=sn_fp,
        tn_checkpoint=registry.fingerprint(case.tn),
        attack_wall_clock_s=crafted.wall_clock_s,
        created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
        archive_sha256=crafted.archive_sha256 if len(indices) else "",
        sample_ids=crafted.source_ids,
        failures=[f"{sid}: {msg}" for _, sid, msg in crafted.failures],
        attack_summary=crafted.summary,
    )
    if report_dir is not None:
        from .reports import write_report

        write_report(report_dir, report)
    return report


@dataclass
class SuiteResult:
    reports: List[ScenarioReport]
    failures: List[Tuple[str, str]]  # (case fingerprint, message)
    rows: List[dict]


def run_suite(
    cases: Sequence[ScenarioCase],
    registry: ModelRegistry,
    report_dir=None,
    threads: int = 1,
    workers: int = 1,
    cache: Optional[CraftCache] = None,
) -> SuiteResult:
    """Run every case; failures are recorded and the suite continues.

    Duplicate cases (same fingerprint) run once. Cases sharing a source model,
    attack and sample set share one crafting run.
    """
    from .reports import matrix_rows, write_matrix

    for case in cases:
        validate_case(case)
    unique: Dict[str, ScenarioCase] = {}
    for case in cases:
        unique.setdefault(case.fingerprint, case)
    cache = cache or CraftCache(Path(report_dir) / "archives" if report_dir is not None else None)

    def one(case):
        try:
            return run_case(case, registry, cache, threads, report_dir), None
        except AdvTransferError as exc:
            logger.error("case %s failed: %s", case.fingerprint[:12], exc)
            return None, (case.fingerprint, str(exc))

    todo = list(unique.values())
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, todo))
    else:
        outcomes = [one(c) for c in todo]
    reports = [r for r, _ in outcomes if r is not None]
    failures = [f for _, f in outcomes if f is not None]
    rows = matrix_rows(reports)
    if report_dir is not None:
        write_matrix(report_dir, rows)
    return SuiteResult(reports, failures, rows)
