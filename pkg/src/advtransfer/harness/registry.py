"""Lookup of trained models and datasets by name."""

from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Union

from ..data import Dataset, load_dataset
from ..errors import ScenarioError
from ..models import Model, load_checkpoint, model_fingerprint
from .scenario import ModelRef


class ModelRegistry:
    """Read-only handles to models (by ModelRef) and datasets (by name)."""

    def __init__(self):
        self._models: Dict[ModelRef, Model] = {}
        self._fingerprints: Dict[ModelRef, str] = {}
        self._datasets: Dict[str, Dataset] = {}

    def add_dataset(self, name: str, dataset: Dataset) -> None:
        self._datasets[name] = dataset

    def add_model(self, ref: Union[ModelRef, str], model: Model) -> ModelRef:
        ref = ref if isinstance(ref, ModelRef) else ModelRef.parse(ref)
        self._models[ref] = model
        self._fingerprints[ref] = model_fingerprint(model)
        return ref

    def load_model(self, ref: Union[ModelRef, str], path) -> ModelRef:
        return self.add_model(ref, load_checkpoint(Path(path)))

    def load_dataset(self, name: str, path) -> None:
        self.add_dataset(name, load_dataset(Path(path)))

    def model(self, ref: ModelRef) -> Model:
        try:
            return self._models[ref]
        except KeyError:
            raise ScenarioError(f"no checkpoint registered for {ref}") from None

    def fingerprint(self, ref: ModelRef) -> str:
        self.model(ref)
        return self._fingerprints[ref]

    def dataset(self, name: str) -> Dataset:
        try:
            return self._datasets[name]
        except KeyError:
            raise ScenarioError(f"no dataset registered under {name!r}") from None

    def has_model(self, ref: ModelRef) -> bool:
        return ref in self._models

    def get(self, ref: ModelRef) -> Optional[Model]:
        return self._models.get(ref)
