"""SPTZ checkpoint files.

Layout (all integers little-endian)::

    "SPTZ"                       4 bytes magic
    u16 version                  = 1
    u32 header_len, header       UTF-8 JSON: spec, train_config,
                                 dataset_fingerprint, test_accuracy, rng_seed
    u32 param_count
    per parameter, in spec order:
        u16 name_len, name       UTF-8
        u32 ndim, ndim x u32     dims
        float32 payload          row-major
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..binfmt import Reader, Writer
from ..engine import Tensor
from ..errors import CheckpointError, ShapeTableError
from .network import Model
from .spec import ModelSpec
from .training import TrainConfig

MAGIC = b"SPTZ"
VERSION = 1


@dataclass
class CheckpointInfo:
    train_config: Optional[dict]
    dataset_fingerprint: Optional[str]
    test_accuracy: Optional[float]


def checkpoint_bytes(
    model: Model,
    train_config: Optional[TrainConfig] = None,
    dataset_fingerprint: Optional[str] = None,
    test_accuracy: Optional[float] = None,
) -> bytes:
    w = Writer(MAGIC, VERSION)
    w.header(
        {
            "spec": model.spec.to_dict(),
            "train_config": train_config.to_dict() if train_config is not None else None,
            "dataset_fingerprint": dataset_fingerprint,
            "test_accuracy": test_accuracy,
            "rng_seed": model.rng_seed,
        }
    )
    w.u32(len(model.params))
    for name, p in model.params.items():
        w.text(name)
        w.u32(p.ndim)
        for d in p.shape:
            w.u32(d)
        w.array(p.data)
    return w.getvalue()


def save_checkpoint(path, model: Model, train_config=None, dataset_fingerprint=None, test_accuracy=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = checkpoint_bytes(model, train_config, dataset_fingerprint, test_accuracy)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return path


def parse_checkpoint(data: bytes):
    r = Reader(data, MAGIC, VERSION, "checkpoint")
    header = r.header()
    try:
        spec = ModelSpec.from_dict(header["spec"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint: invalid spec in header ({exc})") from None
    expected = spec.param_shapes()
    count = r.u32()
    if count != len(expected):
        raise ShapeTableError(f"checkpoint declares {count} parameters, spec {spec.name!r} has {len(expected)}")
    params = {}
    for want_name, want_shape in expected:
        name = r.text()
        ndim = r.u32()
        shape = tuple(r.u32() for _ in range(ndim))
        if name != want_name or shape != tuple(want_shape):
            raise ShapeTableError(f"checkpoint entry {name!r}{list(shape)} does not match spec {want_name!r}{list(want_shape)}")
        params[name] = Tensor(r.array(shape), requires_grad=True)
    r.finish()
    model = Model(spec, params, rng_seed=int(header.get("rng_seed") or 0))
    info = CheckpointInfo(header.get("train_config"), header.get("dataset_fingerprint"), header.get("test_accuracy"))
    return model, info


def load_checkpoint(path, with_info: bool = False):
    """Load a model; with ``with_info`` also return the header metadata."""
    model, info = parse_checkpoint(Path(path).read_bytes())
    return (model, info) if with_info else model


def model_fingerprint(model: Model) -> str:
    """sha256 over the spec and the float32 LE parameter bytes, in spec order."""
    import hashlib

    from ..binfmt import F32LE, dumps_header

    h = hashlib.sha256(dumps_header(model.spec.to_dict()))
    for name, p in model.params.items():
        h.update(name.encode("utf-8"))
        h.update(p.data.astype(F32LE).tobytes())
    return h.hexdigest()
