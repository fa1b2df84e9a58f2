"""Declarative layer lists for the SPRITZ CNNs and the LSTM classifier."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Tuple

from ..errors import ShapeError

INPUT_SHAPE = (1, 64, 64)
NUM_CLASSES = 2

LAYER_KINDS = ("conv", "maxpool", "flatten", "dense", "relu", "lstm")


@dataclass(frozen=True)
class Layer:
    """One layer descriptor.

    Only the fields relevant to ``kind`` are meaningful: ``out_channels`` and
    ``padding`` for conv, ``stride`` for maxpool, ``out_dim`` for dense,
    ``hidden_dim`` for lstm.
    """

    kind: str
    out_channels: int = 0
    padding: str = "same"
    stride: int = 2
    out_dim: int = 0
    hidden_dim: int = 0

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "conv":
            d.update(out_channels=self.out_channels, padding=self.padding)
        elif self.kind == "maxpool":
            d.update(stride=self.stride)
        elif self.kind == "dense":
            d.update(out_dim=self.out_dim)
        elif self.kind == "lstm":
            d.update(hidden_dim=self.hidden_dim)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Layer":
        if d.get("kind") not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {d.get('kind')!r}")
        return cls(**d)


def conv(out_channels: int, padding: str = "same") -> Layer:
    return Layer("conv", out_channels=out_channels, padding=padding)


def maxpool(stride: int = 2) -> Layer:
    return Layer("maxpool", stride=stride)


def dense(out_dim: int) -> Layer:
    return Layer("dense", out_dim=out_dim)


def lstm_layer(hidden_dim: int) -> Layer:
    return Layer("lstm", hidden_dim=hidden_dim)


RELU = Layer("relu")
FLATTEN = Layer("flatten")


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: Tuple[Layer, ...]
    input_shape: Tuple[int, ...] = INPUT_SHAPE
    num_classes: int = NUM_CLASSES
    # not part of the layer chain; recorded so checkpoints rebuild the same plan
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        out = self.output_shape()
        if out != (self.num_classes,):
            raise ShapeError(f"spec {self.name!r} ends in shape {out}, expected ({self.num_classes},)")

    def count(self, kind: str) -> int:
        return sum(1 for layer in self.layers if layer.kind == kind)

    def shapes(self) -> List[Tuple[int, ...]]:
        """Per-sample activation shape after each layer."""
        shape = tuple(self.input_shape)
        out = []
        for layer in self.layers:
            shape = _next_shape(layer, shape)
            out.append(shape)
        return out

    def output_shape(self) -> Tuple[int, ...]:
        shapes = self.shapes()
        return shapes[-1] if shapes else tuple(self.input_shape)

    def param_shapes(self) -> List[Tuple[str, Tuple[int, ...]]]:
        """Ordered (name, shape) pairs for every trainable tensor."""
        shape = tuple(self.input_shape)
        params = []
        counters = {"conv": 0, "dense": 0, "lstm": 0}
        for layer in self.layers:
            if layer.kind in counters:
                counters[layer.kind] += 1
                prefix = f"{layer.kind}{counters[layer.kind]}"
                if layer.kind == "conv":
                    params.append((f"{prefix}.weight", (layer.out_channels, shape[0], 3, 3)))
                    params.append((f"{prefix}.bias", (layer.out_channels,)))
                elif layer.kind == "dense":
                    params.append((f"{prefix}.weight", (shape[0], layer.out_dim)))
                    params.append((f"{prefix}.bias", (layer.out_dim,)))
                else:
                    h = layer.hidden_dim
                    params.append((f"{prefix}.w_ih", (shape[-1], 4 * h)))
                    params.append((f"{prefix}.w_hh", (h, 4 * h)))
                    params.append((f"{prefix}.bias", (4 * h,)))
            shape = _next_shape(layer, shape)
        return params

    def num_params(self) -> int:
        total = 0
        for _, shape in self.param_shapes():
            n = 1
            for d in shape:
                n *= d
            total += n
        return total

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "layers": [layer.to_dict() for layer in self.layers],
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "meta": dict(self.meta),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(
            name=d["name"],
            layers=tuple(Layer.from_dict(x) for x in d["layers"]),
            input_shape=tuple(d["input_shape"]),
            num_classes=int(d["num_classes"]),
            meta=dict(d.get("meta", {})),
        )

    @property
    def is_recurrent(self) -> bool:
        return any(layer.kind == "lstm" for layer in self.layers)


def _next_shape(layer: Layer, shape: Tuple[int, ...]) -> Tuple[int, ...]:
    kind = layer.kind
    if kind == "conv":
        if len(shape) != 3:
            raise ShapeError(f"conv needs a [C,H,W] input, got {shape}")
        c, h, w = shape
        if layer.padding == "valid":
            h, w = h - 2, w - 2
        if h < 1 or w < 1:
            raise ShapeError(f"conv output would be empty from {shape}")
        return (layer.out_channels, h, w)
    if kind == "maxpool":
        if len(shape) != 3 or shape[1] < 2 or shape[2] < 2:
            raise ShapeError(f"maxpool needs [C,H,W] with H,W >= 2, got {shape}")
        c, h, w = shape
        s = layer.stride
        return (c, (h - 2) // s + 1, (w - 2) // s + 1)
    if kind == "flatten":
        n = 1
        for d in shape:
            n *= d
        return (n,)
    if kind == "dense":
        if len(shape) != 1:
            raise ShapeError(f"dense needs a flat input, got {shape}")
        return (layer.out_dim,)
    if kind == "relu":
        return shape
    if kind == "lstm":
        # [1,T,D] patches are read as T steps of D-dim rows
        if len(shape) == 3 and shape[0] == 1:
            shape = shape[1:]
        if len(shape) != 2:
            raise ShapeError(f"lstm needs a [T,D] sequence, got {shape}")
        return (layer.hidden_dim,)
    raise ValueError(f"unknown layer kind {kind!r}")


# Channel plans. Pools follow conv 4 and conv 8 (SPRITZ1) and conv 5 and
# conv 10 (SPRITZ2); the last conv halves the feature maps of the one before.
SPRITZ1_CHANNELS = (32, 32, 32, 32, 64, 64, 64, 64, 32)
SPRITZ1_POOL_AFTER = (4, 8)
SPRITZ2_CHANNELS = (32,) * 5 + (64,) * 5 + (128,) * 4 + (64,)
SPRITZ2_POOL_AFTER = (5, 10)


def _cnn(name: str, channels, pool_after, pool_stride: int, width: float) -> ModelSpec:
    if width <= 0:
        raise ValueError("width multiplier must be positive")
    layers: List[Layer] = []
    for i, ch in enumerate(channels, start=1):
        layers.append(conv(max(1, int(round(ch * width)))))
        layers.append(RELU)
        if i in pool_after:
            layers.append(maxpool(pool_stride))
    layers += [FLATTEN, dense(NUM_CLASSES)]
    meta = {"width": width} if width != 1.0 else {}
    return ModelSpec(name, tuple(layers), meta=meta)


def build_spritz1(width: float = 1.0) -> ModelSpec:
    """Shallow CNN: 9 conv (3x3, stride 1), 2 maxpool (2x2, stride 2), 1 dense.

    ``width`` scales every channel count; 1.0 is the reference plan.
    """
    return _cnn("spritz1", SPRITZ1_CHANNELS, SPRITZ1_POOL_AFTER, 2, width)


def build_spritz2(width: float = 1.0, pool_stride: int = 2) -> ModelSpec:
    """Deep CNN: 15 conv, 2 maxpool, 1 dense, same settings as SPRITZ1."""
    return _cnn("spritz2", SPRITZ2_CHANNELS, SPRITZ2_POOL_AFTER, pool_stride, width)


def build_lstm(hidden_dim: int = 128) -> ModelSpec:
    """Reads a 64x64 patch as 64 steps of 64-dim rows; one LSTM layer + dense(2)."""
    return ModelSpec("lstm", (lstm_layer(hidden_dim), dense(NUM_CLASSES)))


BUILDERS = {"spritz1": build_spritz1, "spritz2": build_spritz2, "lstm": build_lstm}


def build(arch: str, **kwargs) -> ModelSpec:
    try:
        builder = BUILDERS[arch]
    except KeyError:
        raise ValueError(f"unknown architecture {arch!r}; choose from {sorted(BUILDERS)}") from None
    return builder(**kwargs)
