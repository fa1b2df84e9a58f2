"""The reference attack grid and the default three-scenario suite."""

from __future__ import annotations

from typing import List, Sequence

from ..attacks import AttackConfig, AttackKind
from .scenario import ModelRef, ScenarioCase, case_for

IFGSM_EPSILONS = (0.1, 0.01, 0.001)
JSMA_THETAS = (0.1, 0.01)


def reference_grid(seed: int = 0) -> List[AttackConfig]:
    """I-FGSM over three step sizes, JSMA over two, plus L-BFGS, PGD and DeepFool at defaults."""
    grid = [AttackConfig(AttackKind.IFGSM, epsilon=e, seed=seed) for e in IFGSM_EPSILONS]
    grid += [AttackConfig(AttackKind.JSMA, theta=t, seed=seed) for t in JSMA_THETAS]
    grid += [AttackConfig(k, seed=seed) for k in (AttackKind.LBFGS, AttackKind.PGD, AttackKind.DEEPFOOL)]
    return grid


def default_pairs(source: str = "spritz1@A", other_arch: str = "spritz2", other_dataset: str = "B") -> List[ModelRef]:
    """Targets covering one cross-training, one cross-model and one combined mismatch."""
    sn = ModelRef.parse(source)
    return [
        ModelRef(sn.arch, other_dataset),
        ModelRef(other_arch, sn.dataset),
        ModelRef(other_arch, other_dataset),
    ]


def default_suite_cases(
    attacks: Sequence[AttackConfig] = None,
    source: str = "spritz1@A",
    other_arch: str = "spritz2",
    other_dataset: str = "B",
    sample_count: int = 100,
    seed: int = 0,
) -> List[ScenarioCase]:
    attacks = list(attacks) if attacks is not None else reference_grid(seed)
    sn = ModelRef.parse(source)
    return [
        case_for(sn, tn, attack, sample_count, seed)
        for tn in default_pairs(source, other_arch, other_dataset)
        for attack in attacks
    ]
