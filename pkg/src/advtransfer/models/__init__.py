from .checkpoint import checkpoint_bytes, load_checkpoint, model_fingerprint, parse_checkpoint, save_checkpoint
from .network import Model, Prediction, accuracy, predict
from .spec import Layer, ModelSpec, build, build_lstm, build_spritz1, build_spritz2
from .training import TrainConfig, TrainReport, fit, train

__all__ = [
    "Layer",
    "Model",
    "ModelSpec",
    "Prediction",
    "TrainConfig",
    "TrainReport",
    "accuracy",
    "build",
    "build_lstm",
    "build_spritz1",
    "build_spritz2",
    "checkpoint_bytes",
    "load_checkpoint",
    "model_fingerprint",
    "parse_checkpoint",
    "predict",
    "save_checkpoint",
    "train",
    "fit",
]
