"""Layer specifications, parameter initialisation, batched forward pass and checkpoints."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..errors import NonFiniteValue, ShapeMismatch
from .tensor import ACTIVATIONS, Tensor, as_tensor, conv1d


@dataclass(frozen=True)
class Dense:
    in_features: int
    out_features: int
    activation: str = "identity"
    kind = "dense"


@dataclass(frozen=True)
class Conv1D:
    in_channels: int
    out_channels: int
    kernel_length: int
    activation: str = "identity"
    kind = "conv1d"


@dataclass(frozen=True)
class Reshape:
    shape: tuple
    kind = "reshape"


@dataclass(frozen=True)
class Flatten:
    kind = "flatten"


_LAYERS = {cls.kind: cls for cls in (Dense, Conv1D, Reshape, Flatten)}


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple
    input_width: int

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        shape = (self.input_width,)
        for i, layer in enumerate(self.layers):
            shape = _out_shape(layer, shape, i)
            act = getattr(layer, "activation", "identity")
            if act not in ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        if len(shape) != 1:
            raise ShapeMismatch(f"network output must be flat, got per-sample shape {shape}")
        object.__setattr__(self, "_output_width", shape[0])

    @property
    def output_width(self) -> int:
        return self._output_width

    @property
    def final_activation(self) -> str:
        for layer in reversed(self.layers):
            if hasattr(layer, "activation"):
                return layer.activation
        return "identity"

    def to_dict(self) -> dict:
        layers = []
        for layer in self.layers:
            d = {"kind": layer.kind, **asdict(layer)}
            if "shape" in d:
                d["shape"] = list(d["shape"])
            layers.append(d)
        return {"input_width": self.input_width, "layers": layers}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        layers = []
        for item in d["layers"]:
            item = dict(item)
            kind = item.pop("kind")
            if kind == "reshape":
                item["shape"] = tuple(item["shape"])
            layers.append(_LAYERS[kind](**item))
        return cls(tuple(layers), int(d["input_width"]))


def _out_shape(layer, shape, i):
    if isinstance(layer, Dense):
        if shape != (layer.in_features,):
            raise ShapeMismatch(f"layer {i}: dense expects ({layer.in_features},), got {shape}")
        return (layer.out_features,)
    if isinstance(layer, Conv1D):
        if len(shape) != 2 or shape[0] != layer.in_channels or shape[1] < layer.kernel_length:
            raise ShapeMismatch(f"layer {i}: conv1d expects ({layer.in_channels}, >= {layer.kernel_length}), got {shape}")
        return (layer.out_channels, shape[1] - layer.kernel_length + 1)
    if isinstance(layer, Reshape):
        if math.prod(layer.shape) != math.prod(shape):
            raise ShapeMismatch(f"layer {i}: cannot reshape {shape} to {layer.shape}")
        return tuple(layer.shape)
    if isinstance(layer, Flatten):
        return (math.prod(shape),)
    raise TypeError(f"unknown layer {layer!r}")


def mlp(input_width: int, hidden: int, depth: int, outputs: int) -> NetworkSpec:
    """selu hidden layers and a softplus head."""
    layers = [Dense(input_width, hidden, "selu")]
    layers += [Dense(hidden, hidden, "selu") for _ in range(depth - 1)]
    layers.append(Dense(hidden, outputs, "softplus"))
    return NetworkSpec(tuple(layers), input_width)


def conv_net(input_width: int = 3, expand: int = 96, rows: int = 3, channels: int = 10, kernel: int = 4,
             hidden: int = 32, outputs: int = 4) -> NetworkSpec:
    """Dense expansion, reshape to rows, 1-D convolution, flatten, two dense layers, softplus head."""
    cols = expand // rows
    return NetworkSpec((
        Dense(input_width, expand, "selu"),
        Reshape((rows, cols)),
        Conv1D(rows, channels, kernel, "selu"),
        Flatten(),
        Dense(channels * (cols - kernel + 1), hidden, "selu"),
        Dense(hidden, hidden, "selu"),
        Dense(hidden, outputs, "softplus"),
    ), input_width)


def param_shapes(spec: NetworkSpec) -> dict:
    shapes = {}
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            shapes[f"{i}.weight"] = (layer.in_features, layer.out_features)
            shapes[f"{i}.bias"] = (layer.out_features,)
        elif isinstance(layer, Conv1D):
            shapes[f"{i}.weight"] = (layer.out_channels, layer.in_channels, layer.kernel_length)
            shapes[f"{i}.bias"] = (layer.out_channels,)
    return shapes


def parameter_count(spec: NetworkSpec) -> int:
    return sum(math.prod(s) for s in param_shapes(spec).values())


def summary(spec: NetworkSpec) -> str:
    """Per-layer parameter counts, one line per layer, total last."""
    shapes = param_shapes(spec)
    lines = []
    for i, layer in enumerate(spec.layers):
        n = sum(math.prod(s) for k, s in shapes.items() if k.startswith(f"{i}."))
        desc = ", ".join(f"{k}={v}" for k, v in asdict(layer).items())
        lines.append(f"{i:>3} {layer.kind:<8} {desc:<60} {n:>8}")
    lines.append(f"total parameters: {parameter_count(spec)}")
    return "\n".join(lines)


def init_params(spec: NetworkSpec, rng) -> dict:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); zero biases."""
    params = {}
    for name, shape in param_shapes(spec).items():
        if name.endswith(".bias"):
            params[name] = np.zeros(shape)
        else:
            fan_in = shape[0] if len(shape) == 2 else shape[1] * shape[2]
            bound = 1.0 / math.sqrt(fan_in)
            params[name] = rng.uniform(-bound, bound, size=shape)
    return params


def forward(spec: NetworkSpec, params: dict, batch) -> Tensor:
    """Evaluate the network on a ``(B, input_width)`` batch.

    ``params`` values may be arrays or :class:`Tensor` leaves; gradients flow
    to the latter.
    """
    h = as_tensor(batch)
    if h.ndim != 2 or h.shape[1] != spec.input_width:
        raise ShapeMismatch(f"batch of shape {h.shape} for input width {spec.input_width}")
    nb = h.shape[0]
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Dense):
            h = h @ as_tensor(params[f"{i}.weight"]) + as_tensor(params[f"{i}.bias"])
        elif isinstance(layer, Conv1D):
            h = conv1d(h, as_tensor(params[f"{i}.weight"]), as_tensor(params[f"{i}.bias"]))
        elif isinstance(layer, Reshape):
            h = h.reshape(nb, *layer.shape)
            continue
        elif isinstance(layer, Flatten):
            h = h.reshape(nb, -1)
            continue
        h = ACTIVATIONS[layer.activation](h)
    if not np.all(np.isfinite(h.data)):
        raise NonFiniteValue("non-finite value in network output")
    return h


def save_params(path, params: dict, header: dict | None = None) -> None:
    """JSON checkpoint of named tensors with shapes."""
    doc = {
        "format": "nctmc-params/1",
        "header": header or {},
        "tensors": [
            {"name": k, "shape": list(np.shape(v)), "data": np.asarray(v, dtype=np.float64).ravel().tolist()}
            for k, v in params.items()
        ],
    }
    Path(path).write_text(json.dumps(doc) + "\n")


def load_params(path) -> tuple:
    """Returns ``(params, header)``."""
    doc = json.loads(Path(path).read_text())
    params = {t["name"]: np.array(t["data"], dtype=np.float64).reshape(t["shape"]) for t in doc["tensors"]}
    return params, doc.get("header", {})
