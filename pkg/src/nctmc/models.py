"""Propensity models: anything callable as ``model(X) -> (n, r')`` non-negative rates.

``X`` rows are full inputs ``[S, C]``. Trainable models keep their parameters
in a dict of arrays and can rebuild their output as an autodiff graph so the
likelihood code can differentiate through them.
"""
from __future__ import annotations

import math

import numpy as np

from . import nn
from .nn.tensor import Tensor, as_tensor


class InputTransform:
    """Column selection followed by a fixed affine standardisation."""

    def __init__(self, columns, shift, scale):
        self.columns = np.asarray(columns, dtype=np.int64)
        self.shift = np.asarray(shift, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, X, columns=None, mode="standardize"):
        """``mode="standardize"``: zero mean, unit variance per column.
        ``mode="scale"``: divide by the mean absolute value, no centring, so
        columns that barely vary stay nearly constant. ``mode="none"``: raw.
        """
        X = np.asarray(X, dtype=np.float64)
        columns = np.arange(X.shape[1]) if columns is None else np.asarray(columns, dtype=np.int64)
        sub = X[:, columns]
        if len(sub) == 0 or mode == "none":
            return cls(columns, np.zeros(len(columns)), np.ones(len(columns)))
        if mode == "standardize":
            shift, scale = sub.mean(axis=0), sub.std(axis=0)
        elif mode == "scale":
            shift, scale = np.zeros(len(columns)), np.abs(sub).mean(axis=0)
        else:
            raise ValueError(f"unknown input scaling {mode!r}")
        scale = np.where(scale > 0, scale, 1.0)
        return cls(columns, shift, scale)

    @classmethod
    def identity(cls, width):
        return cls(np.arange(width), np.zeros(width), np.ones(width))

    def __call__(self, X):
        X = np.asarray(X, dtype=np.float64)
        return (X[:, self.columns] - self.shift) / self.scale

    def to_dict(self):
        return {"columns": self.columns.tolist(), "shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["columns"], d["shift"], d["scale"])


class ParametricPropensity:
    """Base for trainable models.

    Output for a row is ``(head(transform(x)) * output_scale) @ membership``,
    where ``membership`` sums per-reaction head outputs into class rates (the
    identity when the head already has one output per class).
    """

    kind = "parametric"

    def __init__(self, params, transform, output_scale, membership=None):
        self.params = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        self.transform = transform
        self.output_scale = np.asarray(output_scale, dtype=np.float64)
        self.membership = None if membership is None else np.asarray(membership, dtype=np.float64)

    @property
    def n_classes(self) -> int:
        return len(self.output_scale) if self.membership is None else self.membership.shape[1]

    def head(self, Z, params) -> Tensor:
        raise NotImplementedError

    def rates_graph(self, X, params=None) -> Tensor:
        out = self.head(self.transform(X), self.params if params is None else params)
        out = out * self.output_scale
        if self.membership is not None:
            out = out @ as_tensor(self.membership)
        return out

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return self.rates_graph(X).data

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "transform": self.transform.to_dict(),
            "output_scale": self.output_scale.tolist(),
            "membership": None if self.membership is None else self.membership.tolist(),
        }

    def save(self, path, extra: dict | None = None) -> None:
        nn.save_params(path, self.params, {**(extra or {}), **self.header()})


class NeuralPropensity(ParametricPropensity):
    kind = "neural"

    def __init__(self, spec: nn.NetworkSpec, params, transform, output_scale, membership=None):
        if spec.final_activation != "softplus":
            raise ValueError("a propensity head must end in softplus")
        super().__init__(params, transform, output_scale, membership)
        self.spec = spec

    def head(self, Z, params):
        return nn.forward(self.spec, params, Z)

    def header(self):
        return {**super().header(), "network": self.spec.to_dict()}


def load_model(path):
    """Inverse of :meth:`ParametricPropensity.save` for neural and GLM models."""
    params, header = nn.load_params(path)
    transform = InputTransform.from_dict(header["transform"])
    if header["kind"] == "neural":
        return NeuralPropensity(nn.NetworkSpec.from_dict(header["network"]), params, transform,
                                header["output_scale"], header.get("membership")), header
    if header["kind"] == "glm":
        from .estimators import GLMModel

        return GLMModel(params, transform, header["output_scale"], header.get("link", "softplus")), header
    raise ValueError(f"unknown model kind {header['kind']!r}")


def initial_output_scale(dataset, head_width: int, class_members=None) -> np.ndarray:
    """Per-output scale so that a zero pre-activation gives the constant-rate MLE.

    Class ``k`` gets rate ``L^k / W`` (events over total exposure); classes
    without events get half an event's worth. With a per-reaction head, each
    member of a class of size ``m`` gets ``1/m`` of the class rate.
    """
    counts = np.array([len(t) for t in dataset.sojourns], dtype=np.float64)
    exposure = dataset.total_exposure
    if exposure <= 0:
        exposure = 1.0
    rates = np.where(counts > 0, counts, 0.5) / exposure
    link0 = math.log(2.0)
    if class_members is None:
        return rates / link0
    scale = np.empty(head_width)
    for k, members in enumerate(class_members):
        for j in members:
            scale[j] = rates[k] / (len(members) * link0)
    return scale


def build_neural(spec: nn.NetworkSpec, dataset, seed: int, input_columns=None, per_reaction: bool = False,
                 input_scaling: str = "standardize"):
    """Initialise a :class:`NeuralPropensity` fitted to ``dataset``'s input and rate scales."""
    classes = dataset.network.classes
    rng = np.random.default_rng(seed)
    transform = InputTransform.fit(dataset.event_inputs(), input_columns, input_scaling)
    if spec.input_width != len(transform.columns):
        raise ValueError(f"network input width {spec.input_width} != {len(transform.columns)} selected columns")
    if per_reaction:
        if spec.output_width != dataset.network.reaction_count:
            raise ValueError("per-reaction head needs one output per reaction")
        scale = initial_output_scale(dataset, spec.output_width, classes.classes)
        membership = classes.membership
    else:
        if spec.output_width != classes.class_count:
            raise ValueError("class-level head needs one output per equivalence class")
        scale = initial_output_scale(dataset, spec.output_width)
        membership = None
    return NeuralPropensity(spec, nn.init_params(spec, rng), transform, scale, membership)


class FunctionModel:
    """Wrap a plain ``X -> rates`` function as a propensity model."""

    def __init__(self, fn, n_classes, name="function"):
        self.fn = fn
        self.n_classes = n_classes
        self.name = name

    def __call__(self, X):
        return np.asarray(self.fn(np.atleast_2d(np.asarray(X, dtype=np.float64))), dtype=np.float64)


class ReactantGuard:
    """Zero the rate of any class whose reactants are not all present.

    Needed when simulating a fitted model, which has no notion of species
    availability and could otherwise drive counts negative.
    """

    def __init__(self, model, network):
        self.model = model
        self.network = network
        reps = [g[0] for g in network.classes.classes]
        self._need = network.reactants[reps].astype(np.float64)
        self.n_classes = network.classes.class_count

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s = self.network.species_count
        ok = (X[:, None, :s] >= self._need[None, :, :]).all(axis=2)
        return np.where(ok, self.model(X), 0.0)


class CachedModel:
    """Memoise a deterministic model on the subset of input columns it reads."""

    def __init__(self, model, columns):
        self.model = model
        self.columns = np.asarray(columns, dtype=np.int64)
        self.n_classes = model.n_classes
        self._cache: dict = {}

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if len(X) != 1:
            return self.model(X)
        key = X[0, self.columns].tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = self._cache[key] = self.model(X)
        return hit
