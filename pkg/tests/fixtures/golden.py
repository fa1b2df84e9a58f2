"""Recipes for the committed golden files; ``python golden.py`` rewrites them."""

import hashlib
import json
from pathlib import Path

from advtransfer.attacks import AttackConfig, AttackKind, archive_from_outcome, run_attack_batch
from advtransfer.attacks.archive import archive_bytes
from advtransfer.data import SyntheticSpec, generate_synthetic
from advtransfer.models import Model, TrainConfig, build_lstm, build_spritz1, checkpoint_bytes, train

HERE = Path(__file__).parent
MANIFEST = HERE / "golden.json"


def build_all() -> dict:
    """File name -> bytes, computed from fixed seeds."""
    ds = generate_synthetic(SyntheticSpec(n_per_class=6, class_separation=0.4, noise_sigma=0.05, seed=11))
    lstm = Model.init(build_lstm(hidden_dim=4), seed=5)
    cfg = TrainConfig(epochs=1, learning_rate=1e-3, train_batch=4, seed=5)
    report = train(lstm, ds, cfg)
    cnn = Model.init(build_spritz1(width=0.125), seed=6)
    x, y = ds.arrays("test")
    ids = [ds.source_ids[i] for i in ds.split_indices("test")]
    outcome = run_attack_batch(cnn, (x, y, ids), AttackConfig(AttackKind.IFGSM, epsilon=0.05, steps=3))
    return {
        "lstm.sptz": checkpoint_bytes(lstm, cfg, ds.fingerprint, report.test_accuracy),
        "spritz1.sptz": checkpoint_bytes(cnn),
        "ifgsm.spad": archive_bytes(archive_from_outcome(outcome, ids, y)),
    }


def sha256(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


if __name__ == "__main__":
    blobs = build_all()
    for name, blob in blobs.items():
        (HERE / name).write_bytes(blob)
    MANIFEST.write_text(json.dumps({n: sha256(b) for n, b in blobs.items()}, indent=2, sort_keys=True) + "\n")
