"""Baselines: the binned counting MLE and the GLM propensity model."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import UnbinnableCovariate
from .likelihood import GroupedDataset, TrainingConfig, group_transitions, train
from .models import InputTransform, ParametricPropensity, initial_output_scale
from .nn.tensor import Tensor, as_tensor, softplus


@dataclass(frozen=True)
class Bins:
    """Covariate binning.

    ``kind="exact"`` puts every distinct covariate vector in its own bin,
    optionally restricted to ``values``. ``kind="equal_width"`` uses
    ``edges`` (one ascending edge list per covariate column); values outside
    the outer edges are unbinnable.
    """

    kind: str = "exact"
    values: tuple | None = None
    edges: tuple | None = None

    def key(self, cov) -> tuple:
        cov = tuple(float(v) for v in cov)
        if self.kind == "exact":
            if self.values is not None and cov not in self.values:
                raise UnbinnableCovariate(f"covariate {cov} is not one of the declared values")
            return cov
        if self.kind == "equal_width":
            out = []
            for v, e in zip(cov, self.edges):
                if not e[0] <= v <= e[-1]:
                    raise UnbinnableCovariate(f"covariate {v} outside [{e[0]}, {e[-1]}]")
                out.append(int(min(np.searchsorted(e, v, side="right") - 1, len(e) - 2)))
            return tuple(out)
        raise ValueError(f"unknown bin kind {self.kind!r}")

    @classmethod
    def equal_width(cls, lows, highs, count):
        return cls("equal_width", edges=tuple(tuple(np.linspace(lo, hi, count + 1)) for lo, hi in zip(lows, highs)))

    def to_dict(self):
        return {"kind": self.kind, "values": None if self.values is None else [list(v) for v in self.values],
                "edges": None if self.edges is None else [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d):
        if not d:
            return cls()
        return cls(d.get("kind", "exact"),
                   None if d.get("values") is None else tuple(tuple(float(x) for x in v) for v in d["values"]),
                   None if d.get("edges") is None else tuple(tuple(float(x) for x in e) for e in d["edges"]))


@dataclass
class CountingMLE:
    """Occupation times ``W[(bin, state)]`` and class counts ``N[(bin, state)]``.

    ``state_columns`` selects which species define a state; an empty tuple
    pools all states within a covariate bin (rates that depend on the
    covariate only).
    """

    species_count: int
    class_count: int
    bins: Bins
    state_columns: tuple
    W: dict = field(default_factory=dict)
    N: dict = field(default_factory=dict)

    @property
    def n_classes(self):
        return self.class_count

    def _key(self, row):
        s = self.species_count
        state = tuple(int(row[i]) for i in self.state_columns)
        return self.bins.key(row[s:]), state

    def _add(self, X, T, k=None):
        for row, t in zip(X.tolist(), T.tolist()):
            key = self._key(row)
            self.W[key] = self.W.get(key, 0.0) + t
            n = self.N.get(key)
            if n is None:
                n = self.N[key] = [0] * self.class_count
            if k is not None:
                n[k] += 1

    def rate(self, key):
        w = self.W.get(key, 0.0)
        if w <= 0:
            return None
        return np.array(self.N[key], dtype=np.float64) / w

    def __call__(self, X):
        """Per-class rate estimates; rows whose cell was never observed are NaN (Missing)."""
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        out = np.full((len(X), self.class_count), np.nan)
        for i, row in enumerate(X.tolist()):
            try:
                key = self._key(row)
            except UnbinnableCovariate:
                continue
            r = self.rate(key)
            if r is not None:
                out[i] = r
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["bin", "state", "class", "N", "W", "rate"])
            for key in sorted(self.W):
                b, st = key
                for k in range(self.class_count):
                    n = self.N[key][k]
                    w.writerow([";".join(repr(v) for v in b), ";".join(str(v) for v in st), k + 1, n,
                                repr(self.W[key]), repr(n / self.W[key]) if self.W[key] > 0 else ""])


def fit_counting_mle(data, network, bins: Bins | None = None, state_columns=None) -> CountingMLE:
    """Accumulate ``W`` and ``N`` per (bin, state); estimates are ``N / W``."""
    ds = data if isinstance(data, GroupedDataset) else group_transitions(list(data), network)
    if ds.transition_count == 0 and len(ds.censored_sojourns) == 0:
        raise ValueError("counting MLE needs non-empty data")
    cols = tuple(range(network.species_count)) if state_columns is None else tuple(state_columns)
    est = CountingMLE(network.species_count, network.classes.class_count, bins or Bins(), cols)
    for k, (X, T) in enumerate(zip(ds.inputs, ds.sojourns)):
        est._add(X, T, k)
    est._add(ds.censored_inputs, ds.censored_sojourns)
    return est


def evaluate_counting_mle(estimator: CountingMLE, state, covariates):
    """Rate vector for one (state, covariates) query, or ``None`` when Missing."""
    row = np.concatenate([np.asarray(state, dtype=np.float64), np.asarray(covariates, dtype=np.float64)])
    out = estimator(row[None, :])[0]
    return None if np.isnan(out).any() else out


class GLMModel(ParametricPropensity):
    """``link(x W^T + b)`` per class, on standardised inputs, times a fixed output scale."""

    kind = "glm"

    def __init__(self, params, transform, output_scale, link="softplus"):
        if link not in ("softplus", "exp"):
            raise ValueError("link must be 'softplus' or 'exp'")
        super().__init__(params, transform, output_scale)
        self.link = link

    @property
    def weight(self):
        return self.params["weight"]

    @property
    def bias(self):
        return self.params["bias"]

    def head(self, Z, params) -> Tensor:
        z = as_tensor(Z) @ _transpose(params["weight"]) + as_tensor(params["bias"])
        return softplus(z) if self.link == "softplus" else z.exp()

    def header(self):
        return {**super().header(), "link": self.link}


def _transpose(w):
    if isinstance(w, Tensor):
        return w._make(w.data.T, (w,), "transpose", lambda g: (g.T,))
    return np.asarray(w).T


def build_glm(dataset: GroupedDataset, link="softplus", input_columns=None) -> GLMModel:
    """Zero-initialised GLM with the same input/output scaling as the neural models."""
    transform = InputTransform.fit(dataset.event_inputs(), input_columns)
    k = dataset.class_count
    d = len(transform.columns)
    scale = initial_output_scale(dataset, k)
    if link == "exp":
        scale = scale * np.log(2.0)
    return GLMModel({"weight": np.zeros((k, d)), "bias": np.zeros(k)}, transform, scale, link)


def fit_glm(trajectories, network, config: TrainingConfig | None = None, link="softplus", input_columns=None):
    """Fit a GLM by minimising the same grouped NLL as the neural model."""
    trajectories = list(trajectories)
    ds = group_transitions(trajectories, network)
    model = build_glm(ds, link, input_columns)
    return train(model, ds, config or TrainingConfig(), trajectories=trajectories)
