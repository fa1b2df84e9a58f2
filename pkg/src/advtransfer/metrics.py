"""Distortion and success metrics.

ASR counts only samples the model gets right on the clean input; when no
sample qualifies the rate is undefined and reported as ``None``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ShapeError

TRANSFER_THRESHOLD = 0.5


def _pair(x, y):
    a = np.asarray(x, dtype=np.float64)
    b = np.asarray(y, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(x, y, peak: float = 1.0) -> float:
    """10*log10(peak^2 / MSE) in dB; identical inputs give ``math.inf``."""
    a, b = _pair(x, y)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def l1_distortion(x, y) -> float:
    """Mean absolute difference per cell."""
    a, b = _pair(x, y)
    return float(np.mean(np.abs(a - b)))


def l1_sum(x, y) -> float:
    a, b = _pair(x, y)
    return float(np.sum(np.abs(a - b)))


def max_abs_distortion(x, y) -> float:
    a, b = _pair(x, y)
    return float(np.max(np.abs(a - b)))


def asr_from_predictions(clean_pred, adv_pred, labels) -> Optional[float]:
    """ASR from predicted labels; ``None`` when no sample is eligible."""
    clean_pred = np.asarray(clean_pred)
    adv_pred = np.asarray(adv_pred)
    labels = np.asarray(labels)
    if not (clean_pred.shape == adv_pred.shape == labels.shape):
        raise ShapeError("predictions and labels must have equal length")
    eligible = clean_pred == labels
    n = int(eligible.sum())
    if n == 0:
        return None
    return float(np.sum(adv_pred[eligible] != labels[eligible])) / n


def asr(model, originals, adversarials, original_labels) -> Optional[float]:
    """Fraction of correctly-classified originals whose adversarial is misclassified."""
    from .models.network import predict

    originals = np.asarray(originals)
    adversarials = np.asarray(adversarials)
    labels = np.asarray(original_labels)
    if not (len(originals) == len(adversarials) == len(labels)):
        raise ShapeError("originals, adversarials and labels must have equal length")
    if len(labels) == 0:
        return None
    clean = predict(model, originals).labels
    adv = predict(model, adversarials).labels
    return asr_from_predictions(clean, adv, labels)


def decide_transferable(asr_tn: Optional[float]) -> Optional[bool]:
    """Strictly above 50% ASR on the target network; ``None`` if undefined."""
    if asr_tn is None or (isinstance(asr_tn, float) and math.isnan(asr_tn)):
        return None
    return asr_tn > TRANSFER_THRESHOLD


def mean_psnr(values: Sequence[float]) -> float:
    """Mean over finite PSNRs; ``math.inf`` when every pair was identical."""
    finite = [v for v in values if math.isfinite(v)]
    if not finite:
        return math.inf
    return float(np.mean(finite))


@dataclass
class ScenarioMetrics:
    asr_sn: Optional[float]
    asr_tn: Optional[float]
    mean_psnr_db: float
    mean_l1: float
    mean_linf: float
    n_eligible: int
    n_eligible_tn: int = 0
    mean_l1_sum: float = 0.0

    @property
    def transferable(self) -> Optional[bool]:
        return decide_transferable(self.asr_tn)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["transferable"] = self.transferable
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioMetrics":
        d = {k: v for k, v in d.items() if k != "transferable"}
        return cls(**d)
