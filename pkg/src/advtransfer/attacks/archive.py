"""SPAD adversarial archive.

Layout, little-endian throughout::

    b"SPAD" | u16 version | u32 count
    per sample: u16 id length | id (UTF-8) | u8 label
                | 4096 x f32 original | 4096 x f32 adversarial
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Sequence

import numpy as np

from ..binfmt import Reader, Writer
from ..errors import ShapeError

MAGIC = b"SPAD"
VERSION = 1
PATCH = (1, 64, 64)


@dataclass
class AdversarialArchive:
    source_ids: List[str]
    labels: np.ndarray  # [N] original labels
    originals: np.ndarray  # [N,1,64,64] float32
    adversarials: np.ndarray  # [N,1,64,64] float32

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.originals = np.asarray(self.originals, dtype=np.float32).reshape((-1,) + PATCH)
        self.adversarials = np.asarray(self.adversarials, dtype=np.float32).reshape((-1,) + PATCH)
        n = len(self.source_ids)
        if not (len(self.labels) == len(self.originals) == len(self.adversarials) == n):
            raise ShapeError("archive fields must have equal length")

    def __len__(self) -> int:
        return len(self.source_ids)


def archive_bytes(archive: AdversarialArchive) -> bytes:
    w = Writer(MAGIC, VERSION)
    w.u32(len(archive))
    for sid, label, orig, adv in zip(archive.source_ids, archive.labels, archive.originals, archive.adversarials):
        w.text(sid)
        w.u8(int(label))
        w.array(orig)
        w.array(adv)
    return w.getvalue()


def save_archive(path, archive: AdversarialArchive) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(archive_bytes(archive))
    tmp.replace(path)
    return path


def parse_archive(data: bytes) -> AdversarialArchive:
    r = Reader(data, MAGIC, VERSION, "adversarial archive")
    count = r.u32()
    ids, labels, origs, advs = [], [], [], []
    for _ in range(count):
        ids.append(r.text())
        labels.append(r.u8())
        origs.append(r.array(PATCH))
        advs.append(r.array(PATCH))
    r.finish()
    empty = np.zeros((0,) + PATCH, dtype=np.float32)
    return AdversarialArchive(
        ids, np.array(labels, dtype=np.int64), np.stack(origs) if origs else empty, np.stack(advs) if advs else empty
    )


def load_archive(path) -> AdversarialArchive:
    return parse_archive(Path(path).read_bytes())


def archive_from_outcome(outcome, source_ids: Sequence[str], labels) -> AdversarialArchive:
    """Archive a BatchOutcome; failed samples keep their original as the adversarial."""
    return AdversarialArchive(list(source_ids), np.asarray(labels), outcome.originals, outcome.adversarials)


__all__ = ["AdversarialArchive", "archive_bytes", "save_archive", "parse_archive", "load_archive", "archive_from_outcome"]
