"""Labeled 64x64 patch datasets, stratified splits and the SPDZ cache file."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .. import rng as rngmod
from ..binfmt import F32LE, Reader, Writer
from ..errors import CheckpointError

PATCH_SIDE = 64
PATCH_CELLS = PATCH_SIDE * PATCH_SIDE
SPLIT_NAMES = ("train", "val", "test")
BENIGN, MALICIOUS = 0, 1
PROVENANCES = ("tabular-csv", "domain-strings", "synthetic")


@dataclass(frozen=True)
class PatchSample:
    patch: np.ndarray  # [1,64,64] float32 in [0,1]
    label: int
    source_id: str


class Dataset:
    """Immutable collection of patches with train/val/test index lists."""

    def __init__(
        self,
        patches: np.ndarray,
        labels: Sequence[int],
        source_ids: Sequence[str],
        splits: Optional[Dict[str, Sequence[int]]] = None,
        provenance: str = "synthetic",
        diagnostics: Iterable[str] = (),
        meta: Optional[dict] = None,
    ):
        patches = np.ascontiguousarray(patches, dtype=np.float32)
        if patches.ndim == 3:
            patches = patches[:, None]
        labels = np.asarray(labels, dtype=np.int64)
        if patches.ndim != 4 or patches.shape[1:] != (1, PATCH_SIDE, PATCH_SIDE):
            raise ValueError(f"patches must be [N,1,64,64], got {patches.shape}")
        if len(labels) != len(patches) or len(source_ids) != len(patches):
            raise ValueError("patches, labels and source_ids must have equal length")
        if not np.all((labels == BENIGN) | (labels == MALICIOUS)):
            raise ValueError("labels must be 0 (benign) or 1 (malicious)")
        if patches.size and (patches.min() < 0.0 or patches.max() > 1.0 or not np.all(np.isfinite(patches))):
            raise ValueError("patch values must lie in [0, 1]")
        if provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        self.patches = patches
        self.patches.setflags(write=False)
        self.labels = labels
        self.labels.setflags(write=False)
        self.source_ids = [str(s) for s in source_ids]
        self.provenance = provenance
        self.diagnostics = list(diagnostics)
        self.meta = dict(meta or {})
        if splits is None:
            splits = {"train": np.arange(len(labels)), "val": [], "test": []}
        self.splits = {name: np.asarray(splits.get(name, []), dtype=np.int64) for name in SPLIT_NAMES}
        self._check_splits()
        self.fingerprint = self._fingerprint()

    def _check_splits(self) -> None:
        joined = np.concatenate([self.splits[n] for n in SPLIT_NAMES])
        if len(joined) != len(self.labels) or not np.array_equal(np.sort(joined), np.arange(len(self.labels))):
            raise ValueError("splits must be disjoint and cover every sample exactly once")

    def _fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(self.provenance.encode())
        h.update(np.int64(len(self.labels)).tobytes())
        h.update(self.patches.astype(F32LE).tobytes())
        h.update(self.labels.astype("<i8").tobytes())
        h.update("\0".join(self.source_ids).encode("utf-8"))
        for name in SPLIT_NAMES:
            h.update(name.encode())
            h.update(self.splits[name].astype("<i8").tobytes())
        return h.hexdigest()

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> PatchSample:
        return PatchSample(self.patches[i], int(self.labels[i]), self.source_ids[i])

    def split_indices(self, name: str) -> np.ndarray:
        if name not in SPLIT_NAMES:
            raise KeyError(f"unknown split {name!r}")
        return self.splits[name]

    def arrays(self, name: str) -> Tuple[np.ndarray, np.ndarray]:
        idx = self.split_indices(name)
        return self.patches[idx], self.labels[idx]

    def class_counts(self, name: str) -> Tuple[int, int]:
        y = self.labels[self.split_indices(name)]
        return int(np.sum(y == 0)), int(np.sum(y == 1))

    def with_splits(self, splits: Dict[str, Sequence[int]]) -> "Dataset":
        return Dataset(self.patches, self.labels, self.source_ids, splits, self.provenance, self.diagnostics, self.meta)

    def __repr__(self) -> str:
        sizes = {n: len(self.splits[n]) for n in SPLIT_NAMES}
        return f"Dataset({self.provenance}, n={len(self)}, splits={sizes}, fingerprint={self.fingerprint[:12]})"


def stratified_counts(n: int, ratios: Sequence[float]) -> List[int]:
    """Split ``n`` items by ``ratios`` with largest-remainder rounding."""
    raw = [r * n for r in ratios]
    counts = [int(np.floor(x + 1e-9)) for x in raw]
    rest = n - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def split_indices(labels: np.ndarray, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> Dict[str, np.ndarray]:
    """Stratified train/val/test index lists (sorted) for ``labels``."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"need three non-negative ratios, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1, got {sum(ratios)}")
    labels = np.asarray(labels)
    gen = rngmod.stream(seed, "split")
    parts: Dict[str, List[np.ndarray]] = {n: [] for n in SPLIT_NAMES}
    for cls in (BENIGN, MALICIOUS):
        members = np.flatnonzero(labels == cls)
        members = members[gen.permutation(len(members))]
        lo = 0
        for name, count in zip(SPLIT_NAMES, stratified_counts(len(members), ratios)):
            parts[name].append(members[lo : lo + count])
            lo += count
    out = {n: np.sort(np.concatenate(parts[n])) for n in SPLIT_NAMES}
    for name, ratio in zip(SPLIT_NAMES, ratios):
        if ratio > 0:
            y = labels[out[name]]
            if len(y) == 0:
                raise ValueError(f"split {name!r} would be empty")
            if not (np.any(y == BENIGN) and np.any(y == MALICIOUS)):
                raise ValueError(f"split {name!r} would miss a class")
    return out


def split(dataset: Dataset, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> Dataset:
    return dataset.with_splits(split_indices(dataset.labels, ratios, seed))


# ------------------------------------------------------------------ SPDZ cache

CACHE_MAGIC = b"SPDZ"
CACHE_VERSION = 1


def save_dataset(path, dataset: Dataset) -> Path:
    """Cache layout: magic, u16 version, u32-length JSON header (fingerprint,
    provenance, labels, source ids, splits, diagnostics), then N x 4096
    float32 LE cells."""
    w = Writer(CACHE_MAGIC, CACHE_VERSION)
    w.header(
        {
            "fingerprint": dataset.fingerprint,
            "provenance": dataset.provenance,
            "count": len(dataset),
            "labels": dataset.labels.tolist(),
            "source_ids": dataset.source_ids,
            "splits": {n: dataset.splits[n].tolist() for n in SPLIT_NAMES},
            "diagnostics": dataset.diagnostics,
            "meta": dataset.meta,
        }
    )
    w.array(dataset.patches)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(w.getvalue())
    return path


def load_dataset(path) -> Dataset:
    r = Reader(Path(path).read_bytes(), CACHE_MAGIC, CACHE_VERSION, "dataset cache")
    h = r.header()
    patches = r.array((h["count"], 1, PATCH_SIDE, PATCH_SIDE))
    r.finish()
    ds = Dataset(patches, h["labels"], h["source_ids"], h["splits"], h["provenance"], h["diagnostics"], h.get("meta"))
    if ds.fingerprint != h["fingerprint"]:
        raise CheckpointError("dataset cache: content does not match stored fingerprint")
    return ds
