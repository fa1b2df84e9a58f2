"""Run configuration files (YAML or JSON), validated before any work starts.

Example::

    seed: 0
    output_dir: runs/demo
    datasets:
      A: {format: synthetic, n_per_class: 500, class_separation: 0.1, noise_sigma: 0.1, seed: 1}
      B: {format: synthetic, n_per_class: 500, class_separation: 0.1, noise_sigma: 0.1, seed: 2}
    models:
      spritz1@A: {epochs: 20}
      spritz2@A: {epochs: 3}
    attacks:
      ifgsm: {epsilon: [0.1, 0.01, 0.001]}
      jsma: {theta: [0.1, 0.01]}
    scenarios:
      sample_count: 100
      cases:
        - {sn: spritz1@A, tn: spritz2@A}
"""

from __future__ import annotations

import itertools
import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .attacks import AttackConfig, AttackKind
from .defenses import DefenseConfig, DefenseKind
from .errors import AdvTransferError, ConfigError
from .harness import ModelRef, ScenarioCase, case_for, reference_grid


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class SyntheticSource(_Strict):
    format: Literal["synthetic"]
    n_per_class: int = Field(500, ge=1)
    class_separation: float = 0.1
    noise_sigma: float = Field(0.1, ge=0)
    seed: int = 0


class TabularSource(_Strict):
    format: Literal["tabular"]
    input: str
    label_column: str = "label"
    normalization: Literal["minmax"] = "minmax"
    seed: int = 0


class DomainSource(_Strict):
    format: Literal["domains"]
    benign: str
    malicious: str
    seed: int = 0


class CachedSource(_Strict):
    format: Literal["cache"]
    path: str


DatasetSource = Union[SyntheticSource, TabularSource, DomainSource, CachedSource]


class ModelEntry(_Strict):
    epochs: int = Field(20, ge=0)
    learning_rate: float = Field(1e-4, gt=0)
    train_batch: int = Field(64, ge=1)
    seed: int = 0
    width: float = Field(1.0, gt=0)
    hidden_dim: int = Field(128, ge=1)
    checkpoint: Optional[str] = None


class CaseEntry(_Strict):
    sn: str
    tn: str
    scenario: Optional[str] = None


class ScenarioSection(_Strict):
    sample_count: int = Field(100, ge=1)
    cases: List[CaseEntry] = Field(default_factory=list)
    workers: int = Field(1, ge=1)


class DefenseEntry(_Strict):
    kind: Literal["mpa_finetune", "arch_mismatch"]
    sn: str
    tn: str
    cnn_tn: Optional[str] = None
    # "transferable" picks the attacks the suite flagged for this target
    mpa_attacks: Union[Literal["transferable"], List[Dict[str, Any]]] = "transferable"
    finetune_epochs: int = Field(5, ge=0)
    adversarial_mix_ratio: float = 0.5
    finetune_adv_count: int = Field(200, ge=1)
    finetune_learning_rate: float = Field(1e-4, gt=0)
    eval_count: int = Field(100, ge=1)

    @field_validator("adversarial_mix_ratio")
    @classmethod
    def _ratio(cls, v):
        if not 0.0 < v <= 1.0:
            raise ValueError("must lie in (0, 1]")
        return v


class RunConfig(_Strict):
    seed: int = 0
    output_dir: str = "runs"
    threads: Optional[int] = Field(None, ge=1)
    datasets: Dict[str, DatasetSource] = Field(default_factory=dict)
    models: Dict[str, ModelEntry] = Field(default_factory=dict)
    # attack kind -> parameters; list values expand into a grid
    attacks: Optional[Dict[str, Dict[str, Any]]] = None
    scenarios: ScenarioSection = Field(default_factory=ScenarioSection)
    defenses: List[DefenseEntry] = Field(default_factory=list)

    @model_validator(mode="after")
    def _cross_check(self):
        for ref in self.models:
            parsed = _ref(ref)
            if parsed.dataset not in self.datasets:
                raise ValueError(f"model {ref}: dataset {parsed.dataset!r} is not defined under datasets")
            if parsed.arch not in ("spritz1", "spritz2", "lstm"):
                raise ValueError(f"model {ref}: unknown architecture {parsed.arch!r}")
        for c in self.scenarios.cases:
            for side in (c.sn, c.tn):
                if str(_ref(side)) not in {str(_ref(m)) for m in self.models}:
                    raise ValueError(f"case {c.sn} -> {c.tn}: model {side} is not defined under models")
        for d in self.defenses:
            for side in filter(None, (d.sn, d.tn, d.cnn_tn)):
                if str(_ref(side)) not in {str(_ref(m)) for m in self.models}:
                    raise ValueError(f"defense {d.kind}: model {side} is not defined under models")
        self.attack_grid()
        self.cases()
        self.defense_configs()
        return self

    def attack_grid(self) -> List[AttackConfig]:
        """Expand the attack section into concrete configurations."""
        if self.attacks is None:
            return reference_grid(self.seed)
        grid = []
        for kind, params in self.attacks.items():
            try:
                kind_enum = AttackKind(kind)
            except ValueError:
                raise ValueError(f"unknown attack {kind!r}; choose from {[k.value for k in AttackKind]}") from None
            keys = list(params)
            values = [v if isinstance(v, list) else [v] for v in params.values()]
            for combo in itertools.product(*values):
                kw = dict(zip(keys, combo))
                kw.setdefault("seed", self.seed)
                if "clip" in kw:
                    kw["clip"] = tuple(kw["clip"])
                try:
                    grid.append(AttackConfig(kind_enum, **kw))
                except TypeError as exc:
                    raise ValueError(f"attack {kind}: {exc}") from None
        return grid

    def cases(self) -> List[ScenarioCase]:
        grid = self.attack_grid()
        out = []
        for c in self.scenarios.cases:
            for attack in grid:
                out.append(case_for(c.sn, c.tn, attack, self.scenarios.sample_count, self.seed, scenario=c.scenario))
        return out

    def defense_configs(self, transferable: Optional[Dict[str, List[AttackConfig]]] = None) -> List[Optional[DefenseConfig]]:
        """Concrete defense configs.

        Args:
            transferable: target ref -> attacks the suite flagged for it. When
                omitted, entries asking for the flagged set are checked with a
                placeholder attack only.

        Returns:
            One config per entry; None for a fine-tuning entry whose target
            has no flagged attack.
        """
        out = []
        for d in self.defenses:
            if d.mpa_attacks != "transferable":
                attacks = [AttackConfig.from_dict({"seed": self.seed, **a}) for a in d.mpa_attacks]
            elif transferable is None:
                attacks = [AttackConfig(AttackKind.IFGSM, seed=self.seed)]
            else:
                attacks = list(transferable.get(str(_ref(d.tn)), []))
                if not attacks:
                    out.append(None)
                    continue
            out.append(
                DefenseConfig(
                    DefenseKind(d.kind),
                    tuple(attacks),
                    d.finetune_epochs,
                    d.adversarial_mix_ratio,
                    self.seed,
                    d.finetune_adv_count,
                    d.finetune_learning_rate,
                    d.eval_count,
                )
            )
        return out

    def effective(self) -> dict:
        """Every field with defaults filled in; the attack grid fully expanded."""
        d = self.model_dump(mode="json")
        d["attack_grid"] = [a.resolved().to_dict() for a in self.attack_grid()]
        return d


def _ref(text: str) -> ModelRef:
    return ModelRef.parse(text)


def _describe(exc: ValidationError) -> str:
    parts = []
    for err in exc.errors():
        loc = ".".join(str(x) for x in err["loc"]) or "<root>"
        parts.append(f"{loc}: {err['msg']}")
    return "; ".join(parts)


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping at the top level")
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_describe(exc)}") from None
    except AdvTransferError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path) -> RunConfig:
    """Read a YAML (``.yaml``/``.yml``) or JSON run configuration."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from None
    return parse_config(data if data is not None else {})
