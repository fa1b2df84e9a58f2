"""Attack configuration and per-sample result records."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from .. import metrics
from ..errors import ConfigError


class AttackKind(str, Enum):
    IFGSM = "ifgsm"
    JSMA = "jsma"
    LBFGS = "lbfgs"
    PGD = "pgd"
    DEEPFOOL = "deepfool"


DEFAULT_STEPS = {AttackKind.IFGSM: 10, AttackKind.PGD: 40}


@dataclass(frozen=True)
class AttackConfig:
    """Hyperparameters for one attack.

    ``None`` fields take kind-specific defaults in :meth:`resolved`, which is
    what reports record so that every run is pinned.
    """

    kind: AttackKind
    epsilon: float = 0.01
    steps: Optional[int] = None
    theta: float = 0.1
    jsma_budget: float = 0.1
    jsma_max_iter: Optional[int] = None
    pgd_radius: Optional[float] = None
    pgd_random_start: bool = False
    lbfgs_initial_c: float = 1e-2
    lbfgs_growth: float = 10.0
    lbfgs_max_growth: int = 5
    lbfgs_bisection_steps: int = 10
    lbfgs_memory: int = 10
    lbfgs_max_iter: int = 20
    deepfool_max_iter: int = 50
    deepfool_overshoot: float = 0.02
    clip: Tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self):
        try:
            kind = AttackKind(self.kind)
        except ValueError:
            raise ConfigError(f"unknown attack kind {self.kind!r}; choose from {[k.value for k in AttackKind]}") from None
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "clip", tuple(float(c) for c in self.clip))
        lo, hi = self.clip
        if not 0.0 <= lo < hi <= 1.0:
            raise ConfigError(f"clip must satisfy 0 <= lo < hi <= 1, got {self.clip}")
        if kind in (AttackKind.IFGSM, AttackKind.PGD):
            if not self.epsilon > 0:
                raise ConfigError(f"epsilon must be > 0 for {kind.value}, got {self.epsilon}")
            if self.steps is not None and self.steps < 1:
                raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if kind is AttackKind.PGD and self.pgd_radius is not None and self.pgd_radius < 0:
            raise ConfigError("pgd_radius must be >= 0")
        if kind is AttackKind.JSMA:
            if not 0.0 < self.theta <= 1.0:
                raise ConfigError(f"theta must lie in (0, 1], got {self.theta}")
            if not 0.0 < self.jsma_budget <= 1.0:
                raise ConfigError(f"jsma_budget must lie in (0, 1], got {self.jsma_budget}")
            if self.jsma_max_iter is not None and self.jsma_max_iter < 1:
                raise ConfigError("jsma_max_iter must be >= 1")
        if kind is AttackKind.LBFGS:
            if not self.lbfgs_initial_c > 0 or not self.lbfgs_growth > 1:
                raise ConfigError("lbfgs_initial_c must be > 0 and lbfgs_growth > 1")
            if min(self.lbfgs_memory, self.lbfgs_max_iter) < 1 or min(self.lbfgs_max_growth, self.lbfgs_bisection_steps) < 0:
                raise ConfigError("lbfgs search budgets must be non-negative and memory/max_iter >= 1")
        if kind is AttackKind.DEEPFOOL:
            if self.deepfool_max_iter < 1 or self.deepfool_overshoot < 0:
                raise ConfigError("deepfool_max_iter must be >= 1 and deepfool_overshoot >= 0")

    @property
    def n_steps(self) -> int:
        return self.steps if self.steps is not None else DEFAULT_STEPS.get(self.kind, 1)

    @property
    def radius(self) -> float:
        return self.pgd_radius if self.pgd_radius is not None else 10.0 * self.epsilon

    def budget_cells(self, cells: int) -> int:
        return int(math.ceil(self.jsma_budget * cells - 1e-9))

    def resolved(self) -> "AttackConfig":
        """Copy with every defaulted field materialized."""
        out = replace(self, steps=self.n_steps)
        if self.kind is AttackKind.PGD:
            out = replace(out, pgd_radius=self.radius)
        return out

    def params_label(self) -> str:
        """Short parameter tag used in result tables."""
        if self.kind is AttackKind.IFGSM:
            return f"eps={self.epsilon:g}"
        if self.kind is AttackKind.JSMA:
            return f"theta={self.theta:g}"
        return "default"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["clip"] = list(self.clip)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "AttackConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown attack keys: {sorted(unknown)}")
        if "kind" not in d:
            raise ConfigError("attack entry needs a 'kind'")
        d = dict(d)
        if "clip" in d:
            d["clip"] = tuple(d["clip"])
        return cls(**d)


@dataclass
class AttackResult:
    adversarial: np.ndarray  # [1,64,64]
    original_label: int  # model prediction on the clean input
    adversarial_label: int
    success: bool
    l1: float
    linf: float
    psnr_db: float
    iterations_used: int
    wall_clock_s: float
    true_label: int = -1
    l1_sum: float = 0.0
    source_id: str = ""
    diagnostics: dict = field(default_factory=dict)

    @classmethod
    def build(cls, original, adversarial, original_label, adversarial_label, iterations, seconds, **extra) -> "AttackResult":
        return cls(
            adversarial=adversarial,
            original_label=int(original_label),
            adversarial_label=int(adversarial_label),
            success=bool(original_label != adversarial_label),
            l1=metrics.l1_distortion(original, adversarial),
            linf=metrics.max_abs_distortion(original, adversarial),
            psnr_db=metrics.psnr(original, adversarial),
            iterations_used=int(iterations),
            wall_clock_s=float(seconds),
            l1_sum=metrics.l1_sum(original, adversarial),
            **extra,
        )

    def summary_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if k != "adversarial"}
        d["psnr_db"] = _json_float(d["psnr_db"])
        return d


def _json_float(v: float):
    return "inf" if isinstance(v, float) and math.isinf(v) else v

