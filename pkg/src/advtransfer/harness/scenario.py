"""Transfer scenarios and their (source, target) mismatch patterns."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from ..attacks import AttackConfig
from ..binfmt import dumps_header
from ..errors import ScenarioError


class Scenario(str, Enum):
    CROSS_TRAINING = "CrossTraining"
    CROSS_MODEL = "CrossModel"
    CROSS_MODEL_AND_TRAINING = "CrossModelAndTraining"
    # sanity check only: source and target are the same trained model
    SELF_TRANSFER = "SelfTransfer"


@dataclass(frozen=True)
class ModelRef:
    """A trained model named by architecture and the dataset it was trained on."""

    arch: str
    dataset: str

    @classmethod
    def parse(cls, text: str) -> "ModelRef":
        arch, sep, dataset = str(text).partition("@")
        if not sep or not arch or not dataset:
            raise ScenarioError(f"model reference must look like 'arch@dataset', got {text!r}")
        return cls(arch.strip().lower(), dataset.strip())

    def __str__(self) -> str:
        return f"{self.arch}@{self.dataset}"


def classify(sn: ModelRef, tn: ModelRef) -> Scenario:
    """The unique scenario for a (source, target) pair."""
    same_arch = sn.arch == tn.arch
    same_data = sn.dataset == tn.dataset
    if same_arch and same_data:
        return Scenario.SELF_TRANSFER
    if same_arch:
        return Scenario.CROSS_TRAINING
    if same_data:
        return Scenario.CROSS_MODEL
    return Scenario.CROSS_MODEL_AND_TRAINING


_RULES = {
    Scenario.CROSS_TRAINING: "tn.arch must equal sn.arch and tn.dataset must differ from sn.dataset",
    Scenario.CROSS_MODEL: "tn.arch must differ from sn.arch and tn.dataset must equal sn.dataset",
    Scenario.CROSS_MODEL_AND_TRAINING: "tn.arch and tn.dataset must both differ from the source",
    Scenario.SELF_TRANSFER: "tn must be the same model as sn",
}


@dataclass(frozen=True)
class ScenarioCase:
    scenario: Scenario
    sn: ModelRef
    tn: ModelRef
    attack: AttackConfig
    sample_count: int = 250
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "scenario", Scenario(self.scenario))
        except ValueError:
            raise ScenarioError(f"unknown scenario {self.scenario!r}") from None
        for name in ("sn", "tn"):
            ref = getattr(self, name)
            if not isinstance(ref, ModelRef):
                object.__setattr__(self, name, ModelRef.parse(ref))
        if self.sample_count < 1:
            raise ScenarioError("sample_count must be >= 1")

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario.value,
            "sn": str(self.sn),
            "tn": str(self.tn),
            "attack": self.attack.resolved().to_dict(),
            "sample_count": self.sample_count,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioCase":
        extra = set(d) - {"scenario", "sn", "tn", "attack", "sample_count", "seed"}
        if extra:
            raise ScenarioError(f"unknown case keys: {sorted(extra)}")
        return cls(
            scenario=d["scenario"],
            sn=ModelRef.parse(d["sn"]),
            tn=ModelRef.parse(d["tn"]),
            attack=AttackConfig.from_dict(d["attack"]),
            sample_count=int(d.get("sample_count", 250)),
            seed=int(d.get("seed", 0)),
        )

    @property
    def fingerprint(self) -> str:
        return hashlib.sha256(dumps_header(self.to_dict())).hexdigest()


def validate_case(case: ScenarioCase) -> None:
    """Raise ScenarioError naming the offending field if the pair does not fit the scenario."""
    actual = classify(case.sn, case.tn)
    if actual is case.scenario:
        return
    if case.scenario is Scenario.CROSS_TRAINING:
        field = "tn.arch" if case.sn.arch != case.tn.arch else "tn.dataset"
    elif case.scenario is Scenario.CROSS_MODEL:
        field = "tn.dataset" if case.sn.dataset != case.tn.dataset else "tn.arch"
    elif case.scenario is Scenario.CROSS_MODEL_AND_TRAINING:
        field = "tn.arch" if case.sn.arch == case.tn.arch else "tn.dataset"
    else:
        field = "tn"
    raise ScenarioError(
        f"{case.scenario.value} case {case.sn} -> {case.tn}: {field} violates the pattern "
        f"({_RULES[case.scenario]}); the pair is a {actual.value} pair"
    )


def case_for(sn, tn, attack: AttackConfig, sample_count: int = 250, seed: int = 0, scenario: Optional[Scenario] = None) -> ScenarioCase:
    """Build a case, inferring the scenario from the pair when not given."""
    sn = sn if isinstance(sn, ModelRef) else ModelRef.parse(sn)
    tn = tn if isinstance(tn, ModelRef) else ModelRef.parse(tn)
    case = ScenarioCase(scenario or classify(sn, tn), sn, tn, attack, sample_count, seed)
    validate_case(case)
    return case
