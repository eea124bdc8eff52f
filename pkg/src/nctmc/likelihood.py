"""Grouped CTMC negative log-likelihood and the gradient-descent training loop."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .core import ReactionNetwork, Trajectory
from .errors import NoMatchingReaction, NonFiniteLoss, NonPositivePropensity
from .nn import make_optimizer
from .nn.tensor import Tensor


@dataclass
class GroupedDataset:
    """Per-class design matrices ``X[k]`` (L_k x (s+c)) and sojourn vectors ``T[k]``.

    ``censored_inputs`` / ``censored_sojourns`` hold sojourns that ended
    without a reaction (covariate breakpoint or time horizon). They add
    exposure but no event term to the likelihood.
    """

    network: ReactionNetwork
    inputs: list
    sojourns: list
    censored_inputs: np.ndarray
    censored_sojourns: np.ndarray

    @property
    def class_count(self) -> int:
        return len(self.inputs)

    @property
    def width(self) -> int:
        return self.censored_inputs.shape[1]

    @property
    def counts(self) -> list:
        return [len(t) for t in self.sojourns]

    @property
    def transition_count(self) -> int:
        return sum(self.counts)

    @property
    def total_exposure(self) -> float:
        return float(sum(t.sum() for t in self.sojourns) + self.censored_sojourns.sum())

    def event_inputs(self) -> np.ndarray:
        """All pre-transition rows stacked in class order."""
        return np.vstack(self.inputs) if self.inputs else np.zeros((0, self.width))

    def compressed(self, key_columns=None) -> "CompressedData":
        return CompressedData.from_grouped(self, key_columns)

    def split(self, fraction=0.5):
        """Two datasets splitting every class (and the censored rows) at ``fraction``."""
        def cut(a):
            return int(round(len(a) * fraction))

        a = GroupedDataset(self.network, [x[:cut(x)] for x in self.inputs], [t[:cut(t)] for t in self.sojourns],
                           self.censored_inputs[:cut(self.censored_sojourns)],
                           self.censored_sojourns[:cut(self.censored_sojourns)])
        b = GroupedDataset(self.network, [x[cut(x):] for x in self.inputs], [t[cut(t):] for t in self.sojourns],
                           self.censored_inputs[cut(self.censored_sojourns):],
                           self.censored_sojourns[cut(self.censored_sojourns):])
        return a, b


def group_transitions(trajectories: Sequence[Trajectory], network: ReactionNetwork) -> GroupedDataset:
    """Collect rows ``x_i`` and sojourns ``T_i`` by the class of the reaction that ended them.

    Classes are identified from the observed state change; a sojourn with an
    unchanged state (and no recorded reaction) is censored.
    """
    if isinstance(trajectories, Trajectory):
        trajectories = [trajectories]
    classes = network.classes
    k_count = classes.class_count
    xs: list = [[] for _ in range(k_count)]
    ts: list = [[] for _ in range(k_count)]
    cx, ct = [], []
    width = None
    for traj in trajectories:
        X = traj.inputs
        width = X.shape[1]
        if len(traj) < 2:
            continue
        T = np.diff(traj.times)
        deltas = np.diff(traj.states, axis=0)
        moved = deltas.any(axis=1)
        if (~moved & (traj.reactions[:-1] >= 0)).any():
            i = int(np.flatnonzero(~moved & (traj.reactions[:-1] >= 0))[0])
            raise NoMatchingReaction(f"reaction recorded without a state change at index {i}")
        idx = np.flatnonzero(moved)
        ks = np.array([classes.class_for_change(d) for d in deltas[idx]], dtype=np.int64)
        for k in range(k_count):
            sel = idx[ks == k]
            if len(sel):
                xs[k].append(X[sel])
                ts[k].append(T[sel])
        cen = np.flatnonzero(~moved)
        if len(cen):
            cx.append(X[cen])
            ct.append(T[cen])
    if width is None:
        width = network.species_count
    def cat(parts, w=None):
        if parts:
            return np.concatenate(parts)
        return np.zeros((0, w)) if w is not None else np.zeros(0)

    return GroupedDataset(
        network=network,
        inputs=[cat(p, width) for p in xs],
        sojourns=[cat(p) for p in ts],
        censored_inputs=cat(cx, width),
        censored_sojourns=cat(ct),
    )


@dataclass
class CompressedData:
    """Unique input rows with total exposure ``W`` and per-class event counts ``N``.

    The grouped likelihood equals ``sum_i W_i sum_j a_ij - sum_ij N_ij log a_ij``,
    which needs one forward pass over unique rows only.
    """

    X: np.ndarray
    W: np.ndarray
    N: np.ndarray

    @classmethod
    def from_grouped(cls, ds: GroupedDataset, key_columns=None) -> "CompressedData":
        """Merge rows equal on ``key_columns`` (all columns by default).

        Only valid for models that read nothing but ``key_columns``; each
        merged row keeps the first full input seen.
        """
        k = ds.class_count
        parts_x = list(ds.inputs) + [ds.censored_inputs]
        parts_t = list(ds.sojourns) + [ds.censored_sojourns]
        labels = np.concatenate([np.full(len(t), j) for j, t in enumerate(parts_t)]) if parts_t else np.zeros(0)
        X = np.vstack(parts_x) if parts_x else np.zeros((0, ds.width))
        T = np.concatenate(parts_t) if parts_t else np.zeros(0)
        if len(X) == 0:
            return cls(np.zeros((0, ds.width)), np.zeros(0), np.zeros((0, k)))
        keys = X if key_columns is None else X[:, list(key_columns)]
        _, first, inv = np.unique(keys, axis=0, return_index=True, return_inverse=True)
        U = X[first]
        inv = inv.reshape(-1)
        W = np.bincount(inv, weights=T, minlength=len(U))
        N = np.zeros((len(U), k + 1))
        np.add.at(N, (inv, labels.astype(np.int64)), 1.0)
        return cls(U, W, N[:, :k])

    def __len__(self):
        return len(self.X)

    def loss_graph(self, model, params) -> Tensor:
        alpha = model.rates_graph(self.X, params)
        rows, cols = np.nonzero(self.N)
        surv = (alpha.sum(axis=1) * self.W).sum()
        picked = alpha[rows, cols]
        if np.any(picked.data <= 0):
            raise NonPositivePropensity("model rate is not positive where an event was observed")
        return surv - (picked.log() * self.N[rows, cols]).sum()


def nll(model, dataset: GroupedDataset) -> float:
    """Negative log-likelihood, one vectorised evaluation per reaction class.

    ``sum_k sum_l T_kl * sum_j a(X_kl)_j - log a(X_kl)_k`` plus the exposure
    of censored sojourns.
    """
    total = 0.0
    for k, (X, T) in enumerate(zip(dataset.inputs, dataset.sojourns)):
        if len(T) == 0:
            continue
        alpha = np.asarray(model(X), dtype=np.float64)
        own = alpha[:, k]
        if np.any(own <= 0):
            raise NonPositivePropensity(f"non-positive rate for class {k}")
        total += float(T @ alpha.sum(axis=1)) - float(np.log(own).sum())
    if len(dataset.censored_sojourns):
        alpha = np.asarray(model(dataset.censored_inputs), dtype=np.float64)
        total += float(dataset.censored_sojourns @ alpha.sum(axis=1))
    return total


def likelihood_sequential(model, trajectory: Trajectory) -> float:
    """Transition-by-transition negative log-likelihood of one trajectory."""
    net = trajectory.network
    total = 0.0
    X = trajectory.inputs
    for i in range(len(trajectory) - 1):
        alpha = np.asarray(model(X[i:i + 1]), dtype=np.float64)[0]
        total += (trajectory.times[i + 1] - trajectory.times[i]) * alpha.sum()
        delta = trajectory.states[i + 1] - trajectory.states[i]
        if delta.any():
            a = alpha[net.classes.class_for_change(delta)]
            if a <= 0:
                raise NonPositivePropensity(f"non-positive rate at transition {i}")
            total -= math.log(a)
    return float(total)


# -- training ------------------------------------------------------------

@dataclass(frozen=True)
class DeltaLoss:
    threshold: float
    kind = "delta_loss"


@dataclass(frozen=True)
class GradNorm:
    threshold: float
    kind = "grad_norm"


@dataclass(frozen=True)
class Plateau:
    window: int
    kind = "plateau"


def stop_rule_from_dict(d):
    if d is None:
        return None
    kind = d["kind"]
    if kind == "delta_loss":
        return DeltaLoss(float(d["threshold"]))
    if kind == "grad_norm":
        return GradNorm(float(d["threshold"]))
    if kind == "plateau":
        return Plateau(int(d["window"]))
    raise ValueError(f"unknown stopping rule {kind!r}")


@dataclass(frozen=True)
class TrainingConfig:
    max_epochs: int = 1000
    stop: object = None
    batching: str = "full"
    optimizer: dict = field(default_factory=lambda: {"name": "adam", "lr": 1e-3})
    seed: int = 0
    validation_fraction: float = 0.0

    def __post_init__(self):
        if self.batching not in ("full", "per_trajectory"):
            raise ValueError("batching must be 'full' or 'per_trajectory'")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must be in [0, 1)")
        for attr in ("threshold", "window"):
            if self.stop is not None and getattr(self.stop, attr, 1) <= 0:
                raise ValueError("stopping thresholds must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        d = dict(d)
        return cls(
            max_epochs=int(d.get("max_epochs", 1000)),
            stop=stop_rule_from_dict(d.get("stop")),
            batching=d.get("batching", "full"),
            optimizer=dict(d.get("optimizer", {"name": "adam", "lr": 1e-3})),
            seed=int(d.get("seed", 0)),
            validation_fraction=float(d.get("validation_fraction", 0.0)),
        )

    def to_dict(self) -> dict:
        stop = None if self.stop is None else {"kind": self.stop.kind, **asdict(self.stop)}
        return {"max_epochs": self.max_epochs, "stop": stop, "batching": self.batching,
                "optimizer": dict(self.optimizer), "seed": self.seed,
                "validation_fraction": self.validation_fraction}


@dataclass
class History:
    epoch: list = field(default_factory=list)
    nll: list = field(default_factory=list)
    validation_nll: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    wall_time: list = field(default_factory=list)
    stopped_by: str = "max_epochs"
    best_epoch: int = -1

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            header = ["epoch", "nll", "grad_norm", "wall_time"]
            if self.validation_nll:
                header.append("validation_nll")
            w.writerow(header)
            for i, row in enumerate(zip(self.epoch, self.nll, self.grad_norm, self.wall_time)):
                line = [row[0], repr(row[1]), repr(row[2]), f"{row[3]:.3f}"]
                if self.validation_nll:
                    line.append(repr(self.validation_nll[i]))
                w.writerow(line)


def _value_and_grad(model, data: CompressedData, params):
    leaves = {k: Tensor(v, requires_grad=True) for k, v in params.items()}
    loss = data.loss_graph(model, leaves)
    loss.backward()
    grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.data)) for k, t in leaves.items()}
    return float(loss.data), grads


def train(model, data, config: TrainingConfig, trajectories: Sequence[Trajectory] | None = None,
          callback=None):
    """Minimise the grouped NLL of ``data`` by gradient descent.

    ``data`` is a :class:`GroupedDataset` or a list of trajectories. With
    ``batching="per_trajectory"`` the parameters are updated once per
    trajectory per epoch (order shuffled by the seed). The stopping statistic
    is the NLL of the fitting data at the start of each epoch, or, when
    ``validation_fraction > 0``, the NLL of that fraction of trajectories held
    out from fitting. The returned model holds the parameters with the lowest
    value of that statistic.
    """
    if not isinstance(data, GroupedDataset):
        trajectories = list(data)
        data = group_transitions(trajectories, trajectories[0].network)
    if data.transition_count == 0:
        raise ValueError("cannot train on a dataset without transitions")
    rng = np.random.default_rng(config.seed)
    # parametric models read only their transform's columns
    keys = getattr(getattr(model, "transform", None), "columns", None)
    holdout = None
    if config.validation_fraction > 0:
        if trajectories is None or len(trajectories) < 2:
            raise ValueError("a validation split needs at least two trajectories")
        order = rng.permutation(len(trajectories))
        n_val = min(max(1, int(round(config.validation_fraction * len(trajectories)))), len(trajectories) - 1)
        val_idx = set(order[:n_val].tolist())
        fit_trajs = [t for i, t in enumerate(trajectories) if i not in val_idx]
        holdout = group_transitions([trajectories[i] for i in sorted(val_idx)], data.network).compressed(keys)
        trajectories = fit_trajs
        data = group_transitions(fit_trajs, data.network)
    full = data.compressed(keys)
    batches = None
    if config.batching == "per_trajectory":
        if trajectories is None:
            raise ValueError("per-trajectory batching needs the trajectories")
        batches = [group_transitions([t], data.network).compressed(keys) for t in trajectories]
        batches = [b for b in batches if len(b)]
    opt = make_optimizer(**config.optimizer)
    params = {k: v.copy() for k, v in model.params.items()}
    hist = History()
    best = (math.inf, None)
    t0 = time.perf_counter()
    stop = config.stop
    window_best = math.inf
    window_epoch = 0
    for epoch in range(config.max_epochs):
        try:
            loss, grads = _value_and_grad(model, full, params)
            monitor = loss
            if holdout is not None:
                monitor = float(holdout.loss_graph(model, params).data)
        except NonPositivePropensity:
            raise NonFiniteLoss(epoch, math.inf) from None
        if not (math.isfinite(loss) and math.isfinite(monitor)):
            raise NonFiniteLoss(epoch, loss)
        gnorm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
        hist.epoch.append(epoch)
        hist.nll.append(loss)
        hist.grad_norm.append(gnorm)
        hist.wall_time.append(time.perf_counter() - t0)
        if holdout is not None:
            hist.validation_nll.append(monitor)
        if monitor < best[0]:
            best = (monitor, {k: v.copy() for k, v in params.items()})
            hist.best_epoch = epoch
        if callback is not None:
            callback(epoch, loss, gnorm, params)
        if isinstance(stop, DeltaLoss) and epoch > 0 and abs(hist.nll[-2] - loss) < stop.threshold:
            hist.stopped_by = "delta_loss"
            break
        if isinstance(stop, GradNorm) and gnorm < stop.threshold:
            hist.stopped_by = "grad_norm"
            break
        if isinstance(stop, Plateau):
            if monitor < window_best:
                window_best, window_epoch = monitor, epoch
            elif epoch - window_epoch >= stop.window:
                hist.stopped_by = "plateau"
                break
        if batches is None:
            opt.step(params, grads)
        else:
            for b in rng.permutation(len(batches)):
                try:
                    _, g = _value_and_grad(model, batches[b], params)
                except NonPositivePropensity:
                    raise NonFiniteLoss(epoch, math.inf) from None
                opt.step(params, g)
    model.params = best[1]
    return model, hist
