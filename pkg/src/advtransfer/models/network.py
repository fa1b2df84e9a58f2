"""Parameterized models built from a :class:`ModelSpec`."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from .. import rng as rngmod
from ..engine import Tensor, get_dtype, ops
from ..errors import ShapeError
from .spec import ModelSpec

# batch size used by predict(); fixed so repeated evaluations are bit-identical
PREDICT_BATCH = 100


class Model:
    """A classifier F with parameters theta.

    ``forward`` returns logits [N,2] for inputs [N,1,64,64]. Recurrent specs
    also accept the [N,64,64] sequence view.
    """

    def __init__(self, spec: ModelSpec, params: Dict[str, Tensor], rng_seed: int = 0):
        expected = spec.param_shapes()
        if [n for n, _ in expected] != list(params):
            raise ShapeError(f"parameter names {list(params)} do not match spec {[n for n, _ in expected]}")
        for name, shape in expected:
            if params[name].shape != shape:
                raise ShapeError(f"parameter {name!r} has shape {params[name].shape}, spec needs {shape}")
        self.spec = spec
        self.params = params
        self.rng_seed = rng_seed

    @classmethod
    def init(cls, spec: ModelSpec, seed: int = 0) -> "Model":
        """He-normal conv/dense weights, scaled-normal LSTM weights, zero biases
        (forget-gate bias 1)."""
        gen = rngmod.stream(seed, "init")
        dtype = get_dtype()
        params: Dict[str, Tensor] = {}
        for name, shape in spec.param_shapes():
            if name.endswith(".bias"):
                value = np.zeros(shape)
                if name.startswith("lstm"):
                    h = shape[0] // 4
                    value[h : 2 * h] = 1.0
            elif name.startswith("conv"):
                fan_in = shape[1] * 9
                value = gen.standard_normal(shape) * np.sqrt(2.0 / fan_in)
            elif name.startswith("dense"):
                value = gen.standard_normal(shape) * np.sqrt(2.0 / shape[0])
            else:
                value = gen.standard_normal(shape) / np.sqrt(shape[0] + shape[1] // 4)
            params[name] = Tensor(value.astype(dtype), requires_grad=True)
        return cls(spec, params, rng_seed=seed)

    def copy(self) -> "Model":
        params = {k: Tensor(v.data.copy(), requires_grad=True) for k, v in self.params.items()}
        return Model(self.spec, params, self.rng_seed)

    def num_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def _check_input(self, x: Tensor) -> Tensor:
        want = tuple(self.spec.input_shape)
        if x.shape[1:] == want:
            return x
        if self.spec.is_recurrent and want[0] == 1 and x.shape[1:] == want[1:]:
            return ops.reshape(x, (x.shape[0],) + want)
        raise ShapeError(f"{self.spec.name} expects inputs [N,{','.join(map(str, want))}], got {list(x.shape)}")

    def forward(self, x: Tensor, *, param_grads: bool = False) -> Tensor:
        """Logits for ``x``.

        With ``param_grads=False`` the parameters enter the graph as constants,
        so backward only produces input gradients (what the attacks need) and
        the model is never written to.
        """
        x = self._check_input(x)
        if param_grads:
            p = self.params
        else:
            p = {k: Tensor(v.data) for k, v in self.params.items()}
        counters = {"conv": 0, "dense": 0, "lstm": 0}
        h = x
        if not self.spec.is_recurrent:
            # conv stack runs channels-last; flatten order is therefore (H, W, C)
            if h.shape[1] == 1:
                h = ops.reshape(h, (h.shape[0], h.shape[2], h.shape[3], 1))
            else:
                h = ops.transpose(h, (0, 2, 3, 1))
        for layer in self.spec.layers:
            kind = layer.kind
            if kind in counters:
                counters[kind] += 1
                prefix = f"{kind}{counters[kind]}"
            if kind == "conv":
                h = ops.conv2d_nhwc(h, p[f"{prefix}.weight"], p[f"{prefix}.bias"], padding=layer.padding)
            elif kind == "relu":
                h = ops.relu(h)
            elif kind == "maxpool":
                h = ops.maxpool2d_nhwc(h, stride=layer.stride)
            elif kind == "flatten":
                h = ops.flatten(h)
            elif kind == "dense":
                h = ops.dense(h, p[f"{prefix}.weight"], p[f"{prefix}.bias"])
            elif kind == "lstm":
                if h.ndim == 4:
                    h = ops.reshape(h, (h.shape[0], h.shape[2], h.shape[3]))
                h = ops.lstm(h, p[f"{prefix}.w_ih"], p[f"{prefix}.w_hh"], p[f"{prefix}.bias"])
        return h

    def logits(self, x: np.ndarray, batch_size: int = PREDICT_BATCH) -> np.ndarray:
        """Logits as a numpy array, evaluated in fixed-size chunks."""
        x = np.asarray(x, dtype=get_dtype())
        if x.ndim == len(self.spec.input_shape):
            x = x[None]
        outs = [self.forward(Tensor(x[i : i + batch_size])).data for i in range(0, len(x), batch_size)]
        return np.concatenate(outs, axis=0)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.logits(x)

    def __repr__(self) -> str:
        return f"Model({self.spec.name}, params={self.num_params()}, seed={self.rng_seed})"


@dataclass
class Prediction:
    logits: np.ndarray
    labels: np.ndarray
    probabilities: np.ndarray


def predict(model: Model, batch, batch_size: int = PREDICT_BATCH) -> Prediction:
    """Logits, argmax labels and softmax probabilities for a batch."""
    logits = model.logits(batch, batch_size=batch_size)
    return Prediction(logits=logits, labels=logits.argmax(axis=1), probabilities=ops.softmax(logits.astype(np.float64)))


def accuracy(model: Model, x: np.ndarray, y: np.ndarray, batch_size: Optional[int] = None) -> float:
    if len(y) == 0:
        raise ValueError("accuracy of an empty set is undefined")
    pred = predict(model, x, batch_size=batch_size or PREDICT_BATCH)
    return float(np.mean(pred.labels == np.asarray(y)))
