"""Materialize the datasets and trained models a run configuration names."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict

from .config import CachedSource, DomainSource, ModelEntry, RunConfig, SyntheticSource, TabularSource
from .data import Dataset, SyntheticSpec, generate_synthetic, ingest_domain_strings, ingest_tabular_csv, load_dataset, save_dataset
from .errors import CheckpointError
from .harness import ModelRef, ModelRegistry
from .models import Model, TrainConfig, build, load_checkpoint, train

logger = logging.getLogger(__name__)


def build_dataset(source) -> Dataset:
    if isinstance(source, SyntheticSource):
        return generate_synthetic(SyntheticSpec(source.n_per_class, source.class_separation, source.noise_sigma, seed=source.seed))
    if isinstance(source, TabularSource):
        return ingest_tabular_csv(source.input, source.label_column, source.normalization, seed=source.seed)
    if isinstance(source, DomainSource):
        return ingest_domain_strings(source.benign, source.malicious, seed=source.seed)
    if isinstance(source, CachedSource):
        return load_dataset(source.path)
    raise TypeError(f"unsupported dataset source {type(source).__name__}")


def arch_kwargs(arch: str, entry: ModelEntry) -> dict:
    if arch == "lstm":
        return {"hidden_dim": entry.hidden_dim}
    return {"width": entry.width}


def train_config(entry: ModelEntry) -> TrainConfig:
    return TrainConfig(epochs=entry.epochs, learning_rate=entry.learning_rate, train_batch=entry.train_batch, seed=entry.seed)


def obtain_model(ref: ModelRef, entry: ModelEntry, dataset: Dataset, path: Path) -> Model:
    """Load ``path`` if it holds this exact model trained this way; train otherwise."""
    spec = build(ref.arch, **arch_kwargs(ref.arch, entry))
    cfg = train_config(entry)
    if path.exists():
        try:
            model, info = load_checkpoint(path, with_info=True)
        except CheckpointError as exc:
            logger.warning("ignoring unreadable checkpoint %s: %s", path, exc)
        else:
            if model.spec == spec and info.train_config == cfg.to_dict() and info.dataset_fingerprint == dataset.fingerprint:
                logger.info("reusing checkpoint %s", path)
                return model
            logger.info("checkpoint %s was trained differently; retraining", path)
    model = Model.init(spec, seed=entry.seed)
    report = train(model, dataset, cfg, checkpoint_path=path)
    logger.info("trained %s: test accuracy %.4f in %.1fs", ref, report.test_accuracy, report.wall_clock_s)
    return model


def materialize(config: RunConfig, root=None) -> ModelRegistry:
    """Registry holding every dataset and model of ``config``.

    Datasets are cached under ``<root>/datasets``; models are loaded from their
    configured checkpoint or from ``<root>/models/<arch>@<dataset>.sptz``,
    and trained when no matching checkpoint exists.
    """
    root = Path(root if root is not None else config.output_dir)
    registry = ModelRegistry()
    datasets: Dict[str, Dataset] = {}
    for name, source in config.datasets.items():
        ds = build_dataset(source)
        save_dataset(root / "datasets" / f"{name}.spdz", ds)
        datasets[name] = ds
        registry.add_dataset(name, ds)
    for text, entry in config.models.items():
        ref = ModelRef.parse(text)
        path = Path(entry.checkpoint) if entry.checkpoint else root / "models" / f"{ref}.sptz"
        registry.add_model(ref, obtain_model(ref, entry, datasets[ref.dataset], path))
    return registry
