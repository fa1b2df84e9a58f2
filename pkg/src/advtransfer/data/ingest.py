"""Turn tabular traffic records and domain-name lists into 64x64 patches.

Tabular layout: the min-max normalized feature vector is written row-major
and repeated ``4096 // F`` times; the remaining cells stay zero. Domain layout:
the lowercased UTF-8 bytes of the name divided by 255, row-major, truncated
at 4096 cells and zero-padded.
"""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import IngestError
from .dataset import BENIGN, MALICIOUS, PATCH_CELLS, PATCH_SIDE, Dataset, split_indices

logger = logging.getLogger(__name__)

LABEL_WORDS = {"0": BENIGN, "1": MALICIOUS, "benign": BENIGN, "malicious": MALICIOUS}


def features_to_patch(features: np.ndarray) -> np.ndarray:
    """Tile a vector of F <= 4096 values in [0,1] into a [1,64,64] patch."""
    features = np.asarray(features, dtype=np.float32).reshape(-1)
    f = len(features)
    if f == 0 or f > PATCH_CELLS:
        raise IngestError(f"feature vector length {f} must be in [1, {PATCH_CELLS}]")
    cells = np.zeros(PATCH_CELLS, dtype=np.float32)
    reps = PATCH_CELLS // f
    cells[: reps * f] = np.tile(features, reps)
    return cells.reshape(1, PATCH_SIDE, PATCH_SIDE)


def string_to_patch(name: str) -> np.ndarray:
    raw = name.lower().encode("utf-8")[:PATCH_CELLS]
    cells = np.zeros(PATCH_CELLS, dtype=np.float32)
    cells[: len(raw)] = np.frombuffer(raw, dtype=np.uint8).astype(np.float32) / 255.0
    return cells.reshape(1, PATCH_SIDE, PATCH_SIDE)


def _parse_label(value: str):
    return LABEL_WORDS.get(value.strip().lower())


def read_tabular_csv(path, label_column: str) -> Tuple[List[str], np.ndarray, np.ndarray]:
    """Parse a headered CSV into (feature names, float64 matrix, labels).

    All bad cells are collected before raising, with line and column named.
    """
    problems: List[str] = []
    rows: List[List[float]] = []
    labels: List[int] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: empty CSV, header row required") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise IngestError(f"{path}: label column {label_column!r} not in header {header}")
        li = header.index(label_column)
        names = [h for i, h in enumerate(header) if i != li]
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                problems.append(f"line {lineno}: expected {len(header)} cells, found {len(row)}")
                continue
            label = _parse_label(row[li]) if row[li].strip() else None
            if label is None:
                problems.append(f"line {lineno}, column {label_column!r}: missing or invalid label {row[li]!r}")
            values = []
            for i, cell in enumerate(row):
                if i == li:
                    continue
                try:
                    v = float(cell)
                    if not np.isfinite(v):
                        raise ValueError
                except ValueError:
                    problems.append(f"line {lineno}, column {header[i]!r}: non-numeric cell {cell!r}")
                    v = 0.0
                values.append(v)
            rows.append(values)
            labels.append(label if label is not None else -1)
    if problems:
        raise IngestError(f"{path}: {len(problems)} problem(s); first: {problems[0]}", problems)
    if not rows:
        raise IngestError(f"{path}: no data rows")
    return names, np.asarray(rows, dtype=np.float64), np.asarray(labels, dtype=np.int64)


def ingest_tabular_csv(
    path,
    label_column: str = "label",
    normalization: str = "minmax",
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> Dataset:
    """Tabular CSV -> patch dataset.

    Min-max statistics come from the train split only; val/test values are
    clipped into [0,1]. A feature constant on the train split maps to 0.5.
    """
    if normalization != "minmax":
        raise ValueError(f"unsupported normalization {normalization!r}")
    names, x, y = read_tabular_csv(path, label_column)
    if x.shape[1] > PATCH_CELLS:
        raise IngestError(f"{path}: {x.shape[1]} features exceed the {PATCH_CELLS}-cell patch")
    splits = split_indices(y, ratios, seed)
    train = x[splits["train"]] if len(splits["train"]) else x
    lo, hi = train.min(axis=0), train.max(axis=0)
    span = hi - lo
    constant = span == 0
    diagnostics = [f"column {names[i]!r}: constant on train split, mapped to 0.5" for i in np.flatnonzero(constant)]
    for d in diagnostics:
        logger.warning("%s: %s", path, d)
    norm = np.where(constant, 0.5, (x - lo) / np.where(constant, 1.0, span))
    norm = np.clip(norm, 0.0, 1.0)
    patches = np.stack([features_to_patch(row) for row in norm])
    ids = [f"{Path(path).name}:{i + 2}" for i in range(len(y))]
    meta = {"features": len(names), "source": Path(path).name}
    return Dataset(patches, y, ids, splits, "tabular-csv", diagnostics, meta)


def _read_names(path) -> Tuple[List[Tuple[int, str]], int]:
    names, skipped = [], 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            name = line.strip().lower()
            if not name:
                skipped += 1
                continue
            names.append((lineno, name))
    if not names:
        raise IngestError(f"{path}: no domain names (empty file)")
    return names, skipped


def ingest_domain_strings(
    path_benign, path_malicious, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0
) -> Dataset:
    """Benign and malicious domain lists (one per line) -> patch dataset."""
    diagnostics: List[str] = []
    patches, labels, ids = [], [], []
    seen: Dict[str, set] = {}
    for label, path in ((BENIGN, path_benign), (MALICIOUS, path_malicious)):
        names, skipped = _read_names(path)
        if skipped:
            diagnostics.append(f"{Path(path).name}: skipped {skipped} empty line(s)")
        tag = "benign" if label == BENIGN else "malicious"
        for lineno, name in names:
            patches.append(string_to_patch(name))
            labels.append(label)
            ids.append(f"{tag}:{lineno}")
            seen.setdefault(name, set()).add(label)
    for name in sorted(n for n, ls in seen.items() if len(ls) > 1):
        diagnostics.append(f"label conflict: {name!r} appears in both lists")
    for d in diagnostics:
        logger.warning(d)
    labels_arr = np.asarray(labels)
    splits = split_indices(labels_arr, ratios, seed)
    return Dataset(np.stack(patches), labels_arr, ids, splits, "domain-strings", diagnostics)
