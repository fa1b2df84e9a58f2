"""Evasion attacks crafted with white-box access to a source model."""

from .archive import AdversarialArchive, archive_from_outcome, load_archive, parse_archive, save_archive
from .batch import BatchOutcome, BatchSummary, craft, deepfool, ifgsm, jsma, lbfgs, pgd, run_attack_batch, summarize
from .config import AttackConfig, AttackKind, AttackResult
from .jsma import saliency_map
from .lbfgs import minimize_box_lbfgs

__all__ = [
    "AdversarialArchive",
    "AttackConfig",
    "AttackKind",
    "AttackResult",
    "BatchOutcome",
    "BatchSummary",
    "archive_from_outcome",
    "craft",
    "deepfool",
    "ifgsm",
    "jsma",
    "lbfgs",
    "load_archive",
    "minimize_box_lbfgs",
    "parse_archive",
    "pgd",
    "run_attack_batch",
    "saliency_map",
    "save_archive",
    "summarize",
]
