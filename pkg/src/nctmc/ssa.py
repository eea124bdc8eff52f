"""Exact stochastic simulation (Gillespie direct method) with covariate schedules.

Propensity models are callables mapping an ``(n, s + c)`` input array to an
``(n, r')`` array of non-negative class-level rates, where ``r'`` is the
number of reaction equivalence classes of the network.

Random numbers come from ``numpy.random.default_rng(seed)``, i.e. the PCG64
bit generator; each event consumes two uniforms.
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from . import kernels
from .core import ReactionNetwork, Trajectory, write_trajectory
from .errors import AbsorbedState, NegativePropensity

RNG_FAMILY = "numpy.random.PCG64 (default_rng(seed)), two uniforms per event"


class Segment:
    __slots__ = ("start", "end", "value")

    def __init__(self, start, end, value):
        self.start = start
        self.end = end
        self.value = value


class NoCovariates:
    kind = "none"
    covariate_count = 0
    period_segments = 1

    def segments(self, t0: float) -> Iterator[Segment]:
        yield Segment(t0, math.inf, np.zeros(0))

    def to_dict(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class ConstantCovariates:
    values: tuple
    kind = "constant"
    period_segments = 1

    @property
    def covariate_count(self) -> int:
        return len(self.values)

    def segments(self, t0: float) -> Iterator[Segment]:
        yield Segment(t0, math.inf, np.asarray(self.values, dtype=np.float64))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "values": list(self.values)}


@dataclass(frozen=True)
class PeriodicDiscretized:
    """``s(t) = round((t / period) mod 1, resolution)``, piecewise constant.

    With ``resolution = 0.1`` the emitted values are 0.0, 0.1, ..., 1.0; the
    value 1.0 covers the last half-bin of each period before wrapping to 0.0.
    Segment boundaries are generated from integer (cycle, bin) counters so
    they never drift.
    """

    period: float
    resolution: float = 0.1
    kind = "periodic"

    def __post_init__(self):
        n = round(1.0 / self.resolution)
        if self.period <= 0 or n < 1 or abs(n * self.resolution - 1.0) > 1e-9:
            raise ValueError("resolution must divide 1 and period must be positive")

    covariate_count = 1

    @property
    def bins(self) -> int:
        return round(1.0 / self.resolution)

    @property
    def period_segments(self) -> int:
        return self.bins + 1

    def value_at(self, t: float) -> float:
        n = self.bins
        frac = (t / self.period) % 1.0
        return math.floor(frac * n + 0.5) / n

    def segments(self, t0: float) -> Iterator[Segment]:
        n = self.bins
        cycle = math.floor(t0 / self.period)
        j = math.floor(((t0 / self.period) - cycle) * n + 0.5)
        start = t0
        while True:
            edge = (j + 0.5) / n if j < n else 1.0
            end = self.period * (cycle + edge)
            if end > start:
                yield Segment(start, end, np.array([j / n]))
                start = end
            j += 1
            if j > n:
                j, cycle = 0, cycle + 1

    def to_dict(self) -> dict:
        return {"kind": self.kind, "period": self.period, "resolution": self.resolution}


def schedule_from_dict(d: dict | None):
    if not d or d.get("kind", "none") == "none":
        return NoCovariates()
    if d["kind"] == "constant":
        return ConstantCovariates(tuple(float(v) for v in d["values"]))
    if d["kind"] == "periodic":
        return PeriodicDiscretized(float(d["period"]), float(d.get("resolution", 0.1)))
    raise ValueError(f"unknown covariate schedule kind {d['kind']!r}")


@dataclass(frozen=True)
class SimulationConfig:
    initial_state: tuple
    seed: int
    t_max: float | None = None
    max_transitions: int | None = None
    schedule: object = field(default_factory=NoCovariates)
    t0: float = 0.0

    def __post_init__(self):
        if not ((self.t_max is not None and self.t_max > self.t0)
                or (self.max_transitions is not None and self.max_transitions >= 1)):
            raise ValueError("set t_max > t0 or max_transitions >= 1")
        if any(v < 0 for v in self.initial_state):
            raise ValueError("initial state must be non-negative")

    def to_dict(self) -> dict:
        return {
            "initial_state": [int(v) for v in self.initial_state],
            "seed": int(self.seed),
            "t_max": self.t_max,
            "max_transitions": self.max_transitions,
            "schedule": self.schedule.to_dict(),
            "t0": self.t0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        return cls(
            initial_state=tuple(int(v) for v in d["initial_state"]),
            seed=int(d["seed"]),
            t_max=d.get("t_max"),
            max_transitions=d.get("max_transitions"),
            schedule=schedule_from_dict(d.get("schedule")),
            t0=float(d.get("t0", 0.0)),
        )


def _draw(rng) -> tuple:
    u = rng.random(2)
    return 1.0 - float(u[0]), float(u[1])


def next_event(state, covariates, model, rng) -> tuple:
    """Sample ``(tau, class_index)`` for the next event from the current input."""
    x = np.concatenate([np.asarray(state, dtype=np.float64), np.asarray(covariates, dtype=np.float64)])
    alpha = np.ascontiguousarray(np.asarray(model(x[None, :]), dtype=np.float64)[0])
    v1, v2 = _draw(rng)
    tau, k = kernels.select_event(alpha, v1, v2)
    if k == kernels.NEGATIVE:
        raise NegativePropensity(f"negative propensity {alpha.tolist()} at input {x.tolist()}")
    if k == kernels.ABSORBED:
        raise AbsorbedState(f"all propensities vanish at input {x.tolist()}")
    return tau, k


def simulate(network: ReactionNetwork, model, config: SimulationConfig) -> Trajectory:
    """Run one exact SSA trajectory.

    When a sampled waiting time crosses a covariate breakpoint the clock moves
    to the breakpoint, a censored record (no reaction) is written, and the
    waiting time is redrawn under the new covariate; by memorylessness this is
    exact for piecewise-constant rates. A state with zero total propensity
    ends the run with ``absorbed=True`` unless a later covariate segment can
    revive it within one schedule period.
    """
    classes = network.classes
    changes = classes.changes
    reps = [classes.representative(k) for k in range(classes.class_count)]
    rng = np.random.default_rng(config.seed)
    sched = config.schedule
    segs = sched.segments(config.t0)
    seg = next(segs)
    t_max = math.inf if config.t_max is None else float(config.t_max)
    n_max = config.max_transitions if config.max_transitions is not None else math.inf

    state = np.array(config.initial_state, dtype=np.int64)
    if len(state) != network.species_count:
        raise ValueError("initial state has wrong length")
    times = [config.t0]
    states = [state.copy()]
    covs = [seg.value]
    rxs = [-1]
    t = config.t0
    n = 0
    absorbed = False
    idle_segments = 0
    while n < n_max:
        x = np.concatenate([state.astype(np.float64), seg.value])
        alpha = np.ascontiguousarray(np.asarray(model(x[None, :]), dtype=np.float64)[0])
        v1, v2 = _draw(rng)
        tau, k = kernels.select_event(alpha, v1, v2)
        if k == kernels.NEGATIVE:
            raise NegativePropensity(f"negative propensity {alpha.tolist()} at input {x.tolist()}")
        if k == kernels.ABSORBED:
            if seg.end == math.inf or idle_segments >= sched.period_segments:
                absorbed = True
                break
            idle_segments += 1
        else:
            idle_segments = 0
        t_next = t + tau
        if t_next >= seg.end or t_next >= t_max:
            if seg.end >= t_max:
                t = t_max
                times.append(t)
                states.append(state.copy())
                covs.append(seg.value)
                rxs.append(-1)
                break
            seg = next(segs)
            t = seg.start
            times.append(t)
            states.append(state.copy())
            covs.append(seg.value)
            rxs.append(-1)
            continue
        t = t_next
        state = state + changes[k]
        rxs[-1] = reps[k]
        times.append(t)
        states.append(state)
        covs.append(seg.value)
        rxs.append(-1)
        n += 1
    return Trajectory(
        network=network,
        times=times,
        states=np.array(states, dtype=np.int64),
        covariates=np.array(covs, dtype=np.float64).reshape(len(times), sched.covariate_count),
        reactions=rxs,
        absorbed=absorbed,
        meta={"seed": int(config.seed)},
    )


@dataclass
class BatchResult:
    """Trajectories in input order; ``None`` where that run failed (see ``errors``)."""

    trajectories: list
    errors: dict

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, i):
        return self.trajectories[i]


def _simulate_one(args):
    network, model, config = args
    try:
        return simulate(network, model, config)
    except Exception as exc:
        return exc


def simulate_batch(network: ReactionNetwork, model, configs: Sequence[SimulationConfig],
                   workers: int = 1) -> BatchResult:
    """Simulate each config independently; results do not depend on ``workers``."""
    jobs = [(network, model, c) for c in configs]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            out = list(pool.map(_simulate_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        out = [_simulate_one(j) for j in jobs]
    errors = {i: r for i, r in enumerate(out) if isinstance(r, Exception)}
    return BatchResult([None if i in errors else r for i, r in enumerate(out)], errors)


def write_batch(directory, network: ReactionNetwork, configs: Sequence[SimulationConfig], batch: BatchResult,
                model_id: dict, name: str = "traj") -> dict:
    """Write one JSONL file per trajectory plus ``manifest.json``; returns the manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (cfg, traj) in enumerate(zip(configs, batch.trajectories)):
        entry = {"index": i, "config": cfg.to_dict()}
        if traj is None:
            entry["error"] = f"{type(batch.errors[i]).__name__}: {batch.errors[i]}"
        else:
            fname = f"{name}_{i:05d}.jsonl"
            header = {
                "format": "nctmc-trajectory/1",
                "rng": RNG_FAMILY,
                "seed": int(cfg.seed),
                "absorbed": bool(traj.absorbed),
                "transitions": traj.transition_count,
            }
            write_trajectory(directory / fname, traj, header)
            entry["file"] = fname
            entry["absorbed"] = bool(traj.absorbed)
        entries.append(entry)
    manifest = {
        "format": "nctmc-manifest/1",
        "rng": RNG_FAMILY,
        "model": model_id,
        "network": network.to_dict(),
        "trajectories": entries,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
