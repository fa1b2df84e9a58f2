"""Target-side defenses: fine-tuning on transferable attacks and an architecture swap."""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import metrics
from . import rng as rngmod
from .attacks import AttackConfig
from .binfmt import dumps_header
from .errors import ConfigError, ScenarioError
from .harness.runner import CraftCache, craft_on_source, select_samples
from .models import Model, TrainConfig, TrainReport, accuracy, fit, model_fingerprint, predict

logger = logging.getLogger(__name__)


class DefenseKind(str, Enum):
    MPA_FINETUNE = "mpa_finetune"
    ARCH_MISMATCH = "arch_mismatch"


@dataclass(frozen=True)
class DefenseConfig:
    """Settings for one defense run.

    Args:
        kind: which defense.
        mpa_attacks: attacks whose examples go into the fine-tuning set.
        finetune_epochs: passes over the fine-tuning set.
        adversarial_mix_ratio: share of adversarial rows in the fine-tuning set.
        seed: drives sample selection and the fine-tuning shuffle.
        finetune_adv_count: training samples attacked per configuration.
        finetune_learning_rate: Adam step size while fine-tuning.
        eval_count: evaluation samples (same selection rule as the harness).
    """

    kind: DefenseKind
    mpa_attacks: Tuple[AttackConfig, ...] = ()
    finetune_epochs: int = 5
    adversarial_mix_ratio: float = 0.5
    seed: int = 0
    finetune_adv_count: int = 200
    finetune_learning_rate: float = 1e-4
    eval_count: int = 100

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", DefenseKind(self.kind))
        except ValueError:
            raise ConfigError(f"unknown defense kind {self.kind!r}") from None
        object.__setattr__(self, "mpa_attacks", tuple(self.mpa_attacks))
        if not 0.0 < self.adversarial_mix_ratio <= 1.0:
            raise ConfigError(f"adversarial_mix_ratio must lie in (0, 1], got {self.adversarial_mix_ratio}")
        if self.kind is DefenseKind.MPA_FINETUNE and not self.mpa_attacks:
            raise ConfigError("MPA fine-tuning needs at least one transferable attack in mpa_attacks")
        if self.finetune_epochs < 0:
            raise ConfigError("finetune_epochs must be >= 0")
        if self.finetune_adv_count < 1 or self.eval_count < 1:
            raise ConfigError("finetune_adv_count and eval_count must be >= 1")
        if self.finetune_learning_rate <= 0:
            raise ConfigError("finetune_learning_rate must be positive")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "mpa_attacks": [a.resolved().to_dict() for a in self.mpa_attacks],
            "finetune_epochs": self.finetune_epochs,
            "adversarial_mix_ratio": self.adversarial_mix_ratio,
            "seed": self.seed,
            "finetune_adv_count": self.finetune_adv_count,
            "finetune_learning_rate": self.finetune_learning_rate,
            "eval_count": self.eval_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DefenseConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown defense keys: {sorted(extra)}")
        d = dict(d)
        d["mpa_attacks"] = tuple(AttackConfig.from_dict(a) for a in d.get("mpa_attacks", ()))
        return cls(**d)


@dataclass
class AttackOutcome:
    """Pre/post target success rate for one attack on its paired evaluation set."""

    attack: dict
    pre_asr_tn: Optional[float]
    post_asr_tn: Optional[float]
    asr_sn: Optional[float]
    n_eval: int


@dataclass
class DefenseReport:
    defense: DefenseConfig
    pre_asr_tn: Optional[float]
    post_asr_tn: Optional[float]
    tn_accuracy_before: float
    tn_accuracy_after: float
    per_attack: List[AttackOutcome] = field(default_factory=list)
    sn_checkpoint: str = ""
    tn_checkpoint_before: str = ""
    tn_checkpoint_after: str = ""
    n_finetune: int = 0
    finetune_losses: List[float] = field(default_factory=list)

    @property
    def accuracy_drop_points(self) -> float:
        return 100.0 * (self.tn_accuracy_before - self.tn_accuracy_after)

    def to_dict(self) -> dict:
        return {
            "defense": self.defense.to_dict(),
            "metrics": {
                "pre_asr_tn": self.pre_asr_tn,
                "post_asr_tn": self.post_asr_tn,
                "tn_accuracy_before": self.tn_accuracy_before,
                "tn_accuracy_after": self.tn_accuracy_after,
            },
            "per_attack": [o.__dict__ for o in self.per_attack],
            "checkpoints": {
                "sn": self.sn_checkpoint,
                "tn_before": self.tn_checkpoint_before,
                "tn_after": self.tn_checkpoint_after,
            },
            "finetune": {"n_samples": self.n_finetune, "epoch_losses": self.finetune_losses},
        }

    @property
    def fingerprint(self) -> str:
        key = {"defense": self.defense.to_dict(), "checkpoints": self.to_dict()["checkpoints"]}
        return hashlib.sha256(dumps_header(key)).hexdigest()


def write_defense_report(directory, report: DefenseReport) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / f"defense-{report.fingerprint}.json"
    path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _pooled_asr(clean_labels, adv_labels, y) -> Optional[float]:
    if not clean_labels:
        return None
    return metrics.asr_from_predictions(np.concatenate(clean_labels), np.concatenate(adv_labels), np.concatenate(y))


def _eval_sets(sn, dataset, attacks, count, seed, cache, threads):
    indices = select_samples(sn, dataset, count, seed)
    if len(indices) == 0:
        raise ScenarioError("the source model classifies no test sample correctly; nothing to evaluate")
    sn_fp = model_fingerprint(sn)
    sets = []
    for attack in attacks:
        key = CraftCache.key(sn_fp, dataset.fingerprint, attack, indices)
        crafted = cache.get_or_craft(key, lambda a=attack: craft_on_source(sn, dataset, indices, a, threads))
        sets.append(crafted)
    return sets


def _finetune_set(sn, tn_dataset, sn_dataset, cfg: DefenseConfig, threads) -> Tuple[np.ndarray, np.ndarray]:
    gen = rngmod.stream(cfg.seed, "defense-mix")
    train_idx = sn_dataset.split_indices("train")
    chosen = np.sort(train_idx[gen.permutation(len(train_idx))[: cfg.finetune_adv_count]])
    xs, ys = [], []
    for attack in cfg.mpa_attacks:
        crafted = craft_on_source(sn, sn_dataset, chosen, attack, threads)
        xs.append(crafted.adversarials[crafted.ok])
        ys.append(crafted.labels[crafted.ok])
    x_adv = np.concatenate(xs)
    y_adv = np.concatenate(ys)
    n_clean = int(round(len(y_adv) * (1.0 - cfg.adversarial_mix_ratio) / cfg.adversarial_mix_ratio))
    clean_idx = tn_dataset.split_indices("train")
    clean_idx = clean_idx[gen.permutation(len(clean_idx))[: min(n_clean, len(clean_idx))]]
    x = np.concatenate([x_adv, tn_dataset.patches[clean_idx]])
    y = np.concatenate([y_adv, tn_dataset.labels[clean_idx]])
    return x, y


def mpa_finetune(
    tn_model: Model,
    sn_model: Model,
    dataset,
    cfg: DefenseConfig,
    tn_dataset=None,
    cache: Optional[CraftCache] = None,
    threads: int = 1,
) -> Tuple[Model, DefenseReport]:
    """Fine-tune a copy of the target on adversarial examples crafted on the source.

    Args:
        tn_model: target network; left untouched, a copy is fine-tuned.
        sn_model: source network; never modified.
        dataset: the source's dataset. Its train split feeds crafting and its
            test split the paired evaluation set.
        cfg: an MPA_FINETUNE configuration.
        tn_dataset: the target's own dataset for clean rows and clean
            accuracy; defaults to ``dataset``.
        cache: crafting cache shared with the harness.
        threads: attack worker threads.

    Returns:
        The defended model and its report.
    """
    if cfg.kind is not DefenseKind.MPA_FINETUNE:
        raise ConfigError(f"mpa_finetune needs an MPA_FINETUNE config, got {cfg.kind.value}")
    tn_dataset = tn_dataset if tn_dataset is not None else dataset
    cache = cache or CraftCache()
    sn_fp = model_fingerprint(sn_model)

    sets = _eval_sets(sn_model, dataset, cfg.mpa_attacks, cfg.eval_count, cfg.seed, cache, threads)
    x_test, y_test = tn_dataset.arrays("test")
    acc_before = accuracy(tn_model, x_test, y_test)

    x_ft, y_ft = _finetune_set(sn_model, tn_dataset, dataset, cfg, threads)
    defended = tn_model.copy()
    train_cfg = TrainConfig(epochs=cfg.finetune_epochs, learning_rate=cfg.finetune_learning_rate, seed=cfg.seed)
    log = fit(defended, x_ft, y_ft, train_cfg, TrainReport())
    acc_after = accuracy(defended, x_test, y_test)
    if model_fingerprint(sn_model) != sn_fp:
        raise RuntimeError("source model changed during fine-tuning")

    outcomes, pooled = [], {"pre": ([], [], []), "post": ([], [], [])}
    for attack, crafted in zip(cfg.mpa_attacks, sets):
        ok = crafted.ok
        x, adv, y = crafted.originals[ok], crafted.adversarials[ok], crafted.labels[ok]
        rates = {}
        for tag, model in (("pre", tn_model), ("post", defended)):
            clean, fooled = predict(model, x).labels, predict(model, adv).labels
            rates[tag] = metrics.asr_from_predictions(clean, fooled, y)
            for bucket, arr in zip(pooled[tag], (clean, fooled, y)):
                bucket.append(arr)
        asr_sn = metrics.asr_from_predictions(predict(sn_model, x).labels, predict(sn_model, adv).labels, y)
        outcomes.append(AttackOutcome(attack.resolved().to_dict(), rates["pre"], rates["post"], asr_sn, int(ok.sum())))
        logger.info("%s %s: TN ASR %s -> %s", attack.kind.value, attack.params_label(), rates["pre"], rates["post"])

    report = DefenseReport(
        defense=cfg,
        pre_asr_tn=_pooled_asr(*pooled["pre"]),
        post_asr_tn=_pooled_asr(*pooled["post"]),
        tn_accuracy_before=acc_before,
        tn_accuracy_after=acc_after,
        per_attack=outcomes,
        sn_checkpoint=sn_fp,
        tn_checkpoint_before=model_fingerprint(tn_model),
        tn_checkpoint_after=model_fingerprint(defended),
        n_finetune=len(y_ft),
        finetune_losses=list(log.epoch_losses),
    )
    return defended, report


def arch_mismatch_eval(
    sn_cnn: Model,
    dataset,
    attack_cfg: AttackConfig,
    lstm_tn: Optional[Model],
    cnn_tn: Optional[Model] = None,
    sample_count: int = 100,
    seed: int = 0,
    cache: Optional[CraftCache] = None,
    threads: int = 1,
) -> DefenseReport:
    """Craft on a CNN source and evaluate on a recurrent target trained on the same data.

    ``pre_asr_tn`` is the success rate on ``cnn_tn`` (None when not given) and
    ``post_asr_tn`` the rate on the LSTM. With the same sample count and seed
    as a harness case the crafted set, and hence the CNN figure, match it.
    """
    if lstm_tn is None:
        raise ScenarioError("architecture-mismatch evaluation needs a trained LSTM target checkpoint")
    if not lstm_tn.spec.is_recurrent:
        raise ScenarioError(f"target must be recurrent, got {lstm_tn.spec.name}")
    cfg = DefenseConfig(DefenseKind.ARCH_MISMATCH, (attack_cfg,), finetune_epochs=0, seed=seed, eval_count=sample_count)
    cache = cache or CraftCache()
    (crafted,) = _eval_sets(sn_cnn, dataset, [attack_cfg], sample_count, seed, cache, threads)
    ok = crafted.ok
    x, adv, y = crafted.originals[ok], crafted.adversarials[ok], crafted.labels[ok]

    def rate(model):
        return metrics.asr_from_predictions(predict(model, x).labels, predict(model, adv).labels, y)

    x_test, y_test = dataset.arrays("test")
    pre = rate(cnn_tn) if cnn_tn is not None else None
    post = rate(lstm_tn)
    outcome = AttackOutcome(attack_cfg.resolved().to_dict(), pre, post, rate(sn_cnn), int(ok.sum()))
    return DefenseReport(
        defense=cfg,
        pre_asr_tn=pre,
        post_asr_tn=post,
        tn_accuracy_before=accuracy(cnn_tn, x_test, y_test) if cnn_tn is not None else float("nan"),
        tn_accuracy_after=accuracy(lstm_tn, x_test, y_test),
        per_attack=[outcome],
        sn_checkpoint=model_fingerprint(sn_cnn),
        tn_checkpoint_before=model_fingerprint(cnn_tn) if cnn_tn is not None else "",
        tn_checkpoint_after=model_fingerprint(lstm_tn),
    )


def transferable_attacks(reports: Sequence, tn=None) -> List[AttackConfig]:
    """Attack configurations flagged transferable in harness reports (optionally for one target)."""
    out, seen = [], set()
    for r in reports:
        if not r.metrics.transferable or (tn is not None and str(r.case.tn) != str(tn)):
            continue
        key = json.dumps(r.case.attack.resolved().to_dict(), sort_keys=True)
        if key not in seen:
            seen.add(key)
            out.append(r.case.attack)
    return out
