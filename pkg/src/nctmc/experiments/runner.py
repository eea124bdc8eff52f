"""Experiment specs and the verbs that run them.

A spec is a JSON or TOML document::

    name          run name, default output directory is runs/<name>
    system        birth_death | predator_prey | temperature_crn | custom
    seed          root seed; every other seed is derived from it
    sizes         training-set sizes (transitions for birth_death,
                  trajectories for predator_prey, trajectories per
                  temperature for temperature_crn and custom)
    truth         system parameters (see ``make_system``)
    simulation    initial_state, max_transitions, t_max, workers
    model         N-CTMC head: kind mlp | conv | layers, plus hidden, depth,
                  per_reaction, input_columns, input_scaling
    training      TrainingConfig fields
    glm           optional GLM baseline: link, input_columns, training
    counting_mle  optional counting MLE: bins, state_columns
    inventory     key_columns for the evaluation inventory
    control       control-demo settings

Outputs go under ``out``: ``data/size_N`` (trajectories and manifest),
``models/size_N`` (checkpoints, loss histories, error reports),
``reports`` (summaries and scatter exports) and ``control``.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import nn
from ..core import (ReactionNetwork, Trajectory, load_network, read_trajectory, validate_trajectory,
                    write_trajectory)
from ..errors import NCTMCError
from ..estimators import Bins, fit_counting_mle, fit_glm
from ..likelihood import TrainingConfig, group_transitions, train
from ..metrics import build_inventory, compare, export_scatter, write_scatter_csv
from ..models import CachedModel, ReactantGuard, build_neural, load_model
from ..ssa import (ConstantCovariates, NoCovariates, PeriodicDiscretized, SimulationConfig, simulate,
                   simulate_batch, write_batch)
from . import truth as tm

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

SYSTEMS = ("birth_death", "predator_prey", "temperature_crn", "custom")


class SpecError(NCTMCError, ValueError):
    """Invalid experiment spec."""


@dataclass
class ExperimentSpec:
    name: str
    system: str
    seed: int = 0
    sizes: tuple = ()
    truth: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    training: dict = field(default_factory=dict)
    glm: dict | None = None
    counting_mle: dict | None = None
    inventory: dict = field(default_factory=dict)
    control: dict | None = None
    base_dir: str = "."

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise SpecError(f"unknown system {self.system!r}; expected one of {SYSTEMS}")
        self.sizes = tuple(int(n) for n in self.sizes)
        if any(n <= 0 for n in self.sizes):
            raise SpecError("sizes must be positive")
        if self.system == "custom":
            path = self.truth.get("network_file")
            if path is None or not self.resolve(path).is_file():
                raise SpecError(f"custom system needs an existing truth.network_file, got {path!r}")
        TrainingConfig.from_dict(self.training)

    def resolve(self, path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentSpec":
        known = {f for f in cls.__dataclass_fields__ if f != "base_dir"}
        extra = set(d) - known
        if extra:
            raise SpecError(f"unknown spec fields: {sorted(extra)}")
        if "name" not in d or "system" not in d:
            raise SpecError("spec needs 'name' and 'system'")
        return cls(**d, base_dir=str(base_dir))

    def to_dict(self) -> dict:
        return {f: getattr(self, f) if f != "sizes" else list(self.sizes)
                for f in self.__dataclass_fields__ if f != "base_dir"}


def load_spec(path, seed: int | None = None) -> ExperimentSpec:
    """Read a JSON or TOML spec; ``seed`` overrides the spec's root seed."""
    path = Path(path)
    text = path.read_text()
    try:
        d = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise SpecError(f"cannot parse {path}: {exc}") from exc
    if seed is not None:
        d["seed"] = int(seed)
    return ExperimentSpec.from_dict(d, base_dir=path.parent)


def derive_seed(root: int, *path: int) -> int:
    """Independent 63-bit seed for a position in the experiment tree."""
    state = np.random.SeedSequence([int(root), *[int(p) for p in path]]).generate_state(2, np.uint32)
    return int(state[0]) << 31 | int(state[1]) >> 1


# -- systems ---------------------------------------------------------------

@dataclass
class System:
    network: ReactionNetwork
    truth: object

    def identity(self) -> dict:
        return self.truth.identity()


def make_system(spec: ExperimentSpec) -> System:
    t = spec.truth
    if spec.system == "birth_death":
        return System(tm.birth_death_network(),
                      tm.BirthDeathTruth(t.get("variant", "abs"), t.get("birth_amplitude", 2.1),
                                         t.get("death_amplitude", 2.0)))
    if spec.system == "predator_prey":
        truth = tm.PredatorPreyTruth(t.get("k", tm.PREDATOR_PREY_K), t.get("system_size", 1e5),
                                     t.get("predation", "scaled"))
        return System(truth.network, truth)
    if spec.system == "temperature_crn":
        return System(tm.temperature_crn_network(),
                      tm.TemperatureCRNTruth(t.get("frequency", tm.CRN_FREQUENCY),
                                             t.get("activation", tm.CRN_ACTIVATION),
                                             t.get("gas_constant", tm.GAS_CONSTANT)))
    network = load_network(spec.resolve(t["network_file"]))
    return System(network, tm.MassActionTruth(network, t["k"]))


def simulation_configs(spec: ExperimentSpec, size: int) -> list:
    """Configs for one training set. Seeds depend on position only, so smaller
    sets are subsets (or prefixes, for birth-death) of larger ones."""
    sim = spec.simulation
    seed = spec.seed
    if spec.system == "birth_death":
        period = float(spec.truth.get("period", tm.DAYS_PER_YEAR))
        sched = PeriodicDiscretized(period, float(spec.truth.get("resolution", 0.1)))
        init = tuple(sim.get("initial_state", (50000,)))
        return [SimulationConfig(init, derive_seed(seed, 0), t_max=sim.get("t_max"), max_transitions=size,
                                 schedule=sched)]
    length = int(sim.get("max_transitions", 150))
    if spec.system == "predator_prey":
        init = tuple(sim.get("initial_state", (100000, 10, 10)))
        return [SimulationConfig(init, derive_seed(seed, i), t_max=sim.get("t_max"), max_transitions=length)
                for i in range(size)]
    if spec.system == "temperature_crn":
        temps = spec.truth.get("temperatures", tm.CRN_TEMPERATURES)
        low, high = sim.get("initial_range", (0, 4))
        species = 2
    else:
        temps = spec.truth.get("covariates")
        species = make_system(spec).network.species_count
        low, high = sim.get("initial_range", (0, 4))
    configs = []
    for j, T in enumerate(temps or [None]):
        sched = NoCovariates() if T is None else ConstantCovariates(tuple(np.atleast_1d(T).tolist()))
        for i in range(size):
            if "initial_state" in sim:
                init = tuple(sim["initial_state"])
            else:
                init = tuple(int(v) for v in np.random.default_rng(derive_seed(seed, 1, j, i))
                             .integers(low, high + 1, species))
            configs.append(SimulationConfig(init, derive_seed(seed, 0, j, i), t_max=sim.get("t_max"),
                                            max_transitions=length, schedule=sched))
    return configs


def _size_dir(out, kind, size) -> Path:
    return Path(out) / kind / f"size_{size}"


def _write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# -- verbs -------------------------------------------------------------------

def run_generate(spec: ExperimentSpec, out) -> dict:
    """Simulate every training set; returns ``{size: manifest}``."""
    system = make_system(spec)
    workers = int(spec.simulation.get("workers", 1))
    manifests = {}
    for size in spec.sizes:
        configs = simulation_configs(spec, size)
        batch = simulate_batch(system.network, system.truth, configs, workers=workers)
        for i, err in batch.errors.items():
            log.warning("size %d trajectory %d failed: %s", size, i, err)
        for i, traj in enumerate(batch.trajectories):
            if traj is not None and traj.absorbed:
                log.info("size %d trajectory %d absorbed at t=%g", size, i, traj.times[-1])
        manifests[size] = write_batch(_size_dir(out, "data", size), system.network, configs, batch,
                                      {"system": spec.system, **system.identity()})
    _write_json(Path(out) / "data" / "spec.json", spec.to_dict())
    return manifests


def load_data(out, size: int) -> tuple:
    """``(network, trajectories)`` from a generated training set."""
    directory = _size_dir(out, "data", size)
    path = directory / "manifest.json"
    if not path.is_file():
        raise FileNotFoundError(f"no data for size {size} under {out}; run the simulate verb first")
    manifest = json.loads(path.read_text())
    network = ReactionNetwork.from_dict(manifest["network"])
    trajs = [read_trajectory(directory / e["file"], network) for e in manifest["trajectories"] if "file" in e]
    return network, trajs


def make_head(spec: ExperimentSpec, network: ReactionNetwork, width: int) -> tuple:
    """``(NetworkSpec, per_reaction)`` for the configured N-CTMC head."""
    m = spec.model
    per_reaction = bool(m.get("per_reaction", False))
    outputs = network.reaction_count if per_reaction else network.classes.class_count
    kind = m.get("kind", "mlp")
    if kind == "mlp":
        return nn.mlp(width, int(m.get("hidden", 128)), int(m.get("depth", 5)), outputs), per_reaction
    if kind == "conv":
        head = nn.conv_net()
        if head.input_width != width or head.output_width != outputs:
            raise SpecError(f"conv head maps {head.input_width}->{head.output_width}, data needs {width}->{outputs}")
        return head, per_reaction
    if kind == "layers":
        return nn.NetworkSpec.from_dict(m["network"]), per_reaction
    raise SpecError(f"unknown model kind {kind!r}")


def _input_columns(cfg: dict, dataset) -> list:
    cols = cfg.get("input_columns")
    return list(range(dataset.width)) if cols is None else [int(c) for c in cols]


def _training_config(d: dict, seed: int) -> TrainingConfig:
    d = dict(d)
    d.setdefault("seed", seed)
    return TrainingConfig.from_dict(d)


def _model_header(spec, system, dataset) -> dict:
    return {"system": spec.system, "reaction_network": system.network.to_dict(),
            "classes": [list(c) for c in system.network.classes.classes],
            "covariates": dataset.width - system.network.species_count}


def fit_neural(spec: ExperimentSpec, trajectories, network, dataset=None):
    """Build and train the configured N-CTMC; returns ``(model, history, head)``."""
    ds = dataset or group_transitions(trajectories, network)
    cols = _input_columns(spec.model, ds)
    head, per_reaction = make_head(spec, network, len(cols))
    model = build_neural(head, ds, seed=derive_seed(spec.seed, 101), input_columns=cols,
                         per_reaction=per_reaction, input_scaling=spec.model.get("input_scaling", "standardize"))
    cfg = _training_config(spec.training, derive_seed(spec.seed, 102))
    model, hist = train(model, ds, cfg, trajectories=trajectories)
    return model, hist, head


def _mle_for(spec, network, ds):
    c = spec.counting_mle
    cols = c.get("state_columns")
    return fit_counting_mle(ds, network, Bins.from_dict(c.get("bins")), None if cols is None else tuple(cols))


def _inventory(spec, ds):
    return build_inventory(ds, spec.inventory.get("key_columns"))


def run_train(spec: ExperimentSpec, out) -> dict:
    """Fit the N-CTMC (and configured baselines) on every size; returns the summary."""
    system = make_system(spec)
    summary = {}
    for size in spec.sizes:
        network, trajs = load_data(out, size)
        ds = group_transitions(trajs, network)
        inv = _inventory(spec, ds)
        mdir = _size_dir(out, "models", size)
        mdir.mkdir(parents=True, exist_ok=True)
        header = _model_header(spec, system, ds)
        model, hist, head = fit_neural(spec, trajs, network, ds)
        model.save(mdir / "nctmc_model.json", header)
        hist.write_csv(mdir / "nctmc_loss.csv")
        (mdir / "nctmc_summary.txt").write_text(nn.summary(head) + "\n")
        row = {"transitions": ds.transition_count, "trajectories": len(trajs), "unique_states": len(inv),
               "nctmc": compare(model, system.truth, inv).to_dict(),
               "nctmc_training": {"best_epoch": hist.best_epoch, "epochs": len(hist.epoch),
                                  "stopped_by": hist.stopped_by}}
        _write_json(mdir / "nctmc_report.json", row["nctmc"])
        if spec.glm is not None:
            g = spec.glm
            cfg = _training_config(g.get("training", spec.training), derive_seed(spec.seed, 103))
            glm, ghist = fit_glm(trajs, network, cfg, g.get("link", "softplus"), _input_columns(g, ds))
            glm.save(mdir / "glm_model.json", header)
            ghist.write_csv(mdir / "glm_loss.csv")
            row["glm"] = compare(glm, system.truth, inv).to_dict()
            row["glm_training"] = {"best_epoch": ghist.best_epoch, "epochs": len(ghist.epoch),
                                   "stopped_by": ghist.stopped_by}
            _write_json(mdir / "glm_report.json", row["glm"])
        if spec.counting_mle is not None:
            mle = _mle_for(spec, network, ds)
            mle.write_csv(mdir / "mle_table.csv")
            row["counting_mle"] = compare(mle, system.truth, inv).to_dict()
            _write_json(mdir / "mle_report.json", row["counting_mle"])
        summary[str(size)] = row
    _write_json(Path(out) / "reports" / "train_summary.json", summary)
    _write_table(Path(out) / "reports" / "table.csv", summary)
    return summary


def run_mle(spec: ExperimentSpec, out) -> dict:
    """Counting MLE only (exact covariate bins unless configured otherwise)."""
    system = make_system(spec)
    if spec.counting_mle is None:
        spec.counting_mle = {}
    reports = {}
    for size in spec.sizes:
        network, trajs = load_data(out, size)
        ds = group_transitions(trajs, network)
        mle = _mle_for(spec, network, ds)
        mdir = _size_dir(out, "models", size)
        mdir.mkdir(parents=True, exist_ok=True)
        mle.write_csv(mdir / "mle_table.csv")
        reports[str(size)] = compare(mle, system.truth, _inventory(spec, ds)).to_dict()
        _write_json(mdir / "mle_report.json", reports[str(size)])
    _write_json(Path(out) / "reports" / "mle_summary.json", reports)
    return reports


def _trained(out, size):
    mdir = _size_dir(out, "models", size)
    found = {}
    for name in ("nctmc", "glm"):
        path = mdir / f"{name}_model.json"
        if path.is_file():
            found[name] = load_model(path)[0]
    return found


def run_evaluate(spec: ExperimentSpec, out) -> dict:
    """Re-score saved checkpoints against the truth model on each training inventory."""
    system = make_system(spec)
    reports = {}
    for size in spec.sizes:
        network, trajs = load_data(out, size)
        ds = group_transitions(trajs, network)
        inv = _inventory(spec, ds)
        models = _trained(out, size)
        if spec.counting_mle is not None:
            models["counting_mle"] = _mle_for(spec, network, ds)
        if not models:
            raise FileNotFoundError(f"no trained models for size {size} under {out}; run the train verb first")
        reports[str(size)] = {k: compare(m, system.truth, inv).to_dict() for k, m in models.items()}
    _write_json(Path(out) / "reports" / "evaluation.json", reports)
    return reports


def run_export_scatter(spec: ExperimentSpec, out) -> list:
    """Write ``reports/scatter/size_N_<model>.csv`` for each saved model; returns the paths."""
    system = make_system(spec)
    paths = []
    sdir = Path(out) / "reports" / "scatter"
    sdir.mkdir(parents=True, exist_ok=True)
    for size in spec.sizes:
        network, trajs = load_data(out, size)
        ds = group_transitions(trajs, network)
        inv = _inventory(spec, ds)
        models = _trained(out, size)
        if spec.counting_mle is not None:
            models["counting_mle"] = _mle_for(spec, network, ds)
        for name, model in models.items():
            path = sdir / f"size_{size}_{name}.csv"
            write_scatter_csv(path, export_scatter(model, system.truth, inv))
            paths.append(path)
    return paths


def _write_table(path, summary) -> None:
    """One row per size with MAE/W-MAE/MSE/W-MSE for each fitted estimator."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["size", "estimator", "mae", "wmae", "mse", "wmse", "coverage"])
        for size, row in summary.items():
            for name in ("nctmc", "glm", "counting_mle"):
                if name in row:
                    r = row[name]
                    w.writerow([size, name, repr(r["mae"]), repr(r["wmae"]), repr(r["mse"]), repr(r["wmse"]),
                                repr(r["coverage"])])


# -- control demo ------------------------------------------------------------

def flip_births(trajectory: Trajectory, fraction: float, rng, birth=0, death=1, max_tries=100) -> tuple:
    """Relabel a uniformly random ``fraction`` of birth events as deaths and
    replay the state changes. Redraws if the replay would go negative.

    Returns ``(adjusted trajectory, flipped record indices)``.
    """
    net = trajectory.network
    classes = net.classes
    rx = trajectory.reactions.copy()
    moves = np.zeros(len(rx), dtype=bool)
    moves[:-1] = (trajectory.states[1:] != trajectory.states[:-1]).any(axis=1)
    rx_class = np.full(len(rx), -1)
    rx_class[moves] = classes.class_of[rx[moves]]
    births = np.flatnonzero(rx_class == birth)
    count = int(round(fraction * len(births)))
    for _ in range(max_tries):
        pick = np.sort(rng.choice(births, size=count, replace=False)) if count else np.zeros(0, dtype=np.int64)
        new_class = rx_class.copy()
        new_class[pick] = death
        deltas = np.zeros_like(trajectory.states)
        deltas[1:] = np.where(moves[:-1, None], classes.changes[np.maximum(new_class[:-1], 0)], 0)
        states = trajectory.states[0] + np.cumsum(deltas, axis=0)
        if (states >= 0).all():
            new_rx = rx.copy()
            new_rx[pick] = classes.representative(death)
            adjusted = Trajectory(net, trajectory.times, states, trajectory.covariates, new_rx,
                                  meta={**trajectory.meta, "flipped": int(count)})
            return adjusted, pick
    raise NCTMCError(f"no flip set of size {count} keeps the population non-negative")


def step_values(trajectory: Trajectory, grid, species=0) -> np.ndarray:
    """Count of ``species`` at each grid time (right-continuous step function)."""
    idx = np.searchsorted(trajectory.times, grid, side="right") - 1
    return trajectory.states[np.clip(idx, 0, None), species].astype(np.float64)


def run_control_demo(spec: ExperimentSpec, out) -> dict:
    """Edit a birth-death event log, refit, and check the fit reproduces the edit."""
    if spec.system != "birth_death":
        raise SpecError("the control demo runs on the birth_death system")
    c = spec.control or {}
    system = make_system(spec)
    net = system.network
    init = tuple(c.get("initial_state", (100,)))
    horizon = float(c.get("horizon", 5 * tm.DAYS_PER_YEAR))
    fraction = float(c.get("flip_fraction", 0.015))
    replicates = int(c.get("replicates", 50))
    if replicates < 1:
        raise SpecError("replicates must be positive")
    sched = PeriodicDiscretized(float(spec.truth.get("period", tm.DAYS_PER_YEAR)),
                                float(spec.truth.get("resolution", 0.1)))
    cdir = Path(out) / "control"
    cdir.mkdir(parents=True, exist_ok=True)

    base_cfg = SimulationConfig(init, derive_seed(spec.seed, 0), t_max=horizon, schedule=sched)
    baseline = simulate(net, system.truth, base_cfg)
    adjusted, flipped = flip_births(baseline, fraction, np.random.default_rng(derive_seed(spec.seed, 2)))
    if validate_trajectory(adjusted):
        raise NCTMCError("adjusted trajectory is not a valid sample path")
    write_trajectory(cdir / "baseline.jsonl", baseline, {"seed": base_cfg.seed})
    write_trajectory(cdir / "adjusted.jsonl", adjusted, {"flip_fraction": fraction, "flipped": int(len(flipped))})

    ds = group_transitions([adjusted], net)
    model, hist, _ = fit_neural(spec, [adjusted], net, ds)
    model.save(cdir / "model.json", _model_header(spec, system, ds))
    hist.write_csv(cdir / "loss.csv")

    cols = [int(v) for v in model.transform.columns]
    fitted = ReactantGuard(CachedModel(model, cols), net) if c.get("guard", True) else model
    configs = [SimulationConfig(init, derive_seed(spec.seed, 3, i), t_max=horizon, schedule=sched)
               for i in range(replicates)]
    batch = simulate_batch(net, fitted, configs)
    if batch.errors:
        raise NCTMCError(f"{len(batch.errors)} fitted-model replicates failed: {next(iter(batch.errors.values()))}")

    step = float(c.get("grid_step", 1.0))
    grid = np.arange(0.0, horizon + 0.5 * step, step)
    grid[-1] = min(grid[-1], horizon)
    reps = np.array([step_values(t, grid) for t in batch.trajectories])
    with open(cdir / "series.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "baseline", "adjusted", "fitted_mean", "fitted_sd"])
        for i, t in enumerate(grid):
            w.writerow([repr(float(t)), int(step_values(baseline, [t])[0]), int(step_values(adjusted, [t])[0]),
                        repr(float(reps[:, i].mean())), repr(float(reps[:, i].std(ddof=1)) if replicates > 1 else 0.0)])

    ends = np.array([t.states[-1, 0] for t in batch.trajectories], dtype=np.float64)
    mean = float(ends.mean())
    se = float(ends.std(ddof=1) / math.sqrt(replicates)) if replicates > 1 else float("nan")
    adj_end = float(adjusted.states[-1, 0])
    report = {
        "horizon": horizon,
        "flip_fraction": fraction,
        "births": int((adjusted.reactions == 0).sum() + len(flipped)),
        "flipped": int(len(flipped)),
        "replicates": replicates,
        "baseline_endpoint": float(baseline.states[-1, 0]),
        "adjusted_endpoint": adj_end,
        "fitted_mean_endpoint": mean,
        "fitted_endpoint_se": se,
        "relative_error": abs(mean - adj_end) / adj_end if adj_end else float("inf"),
        "z_score": (mean - adj_end) / se if se and se > 0 else float("nan"),
        "nctmc_best_epoch": hist.best_epoch,
    }
    _write_json(cdir / "report.json", report)
    return report


VERBS = {
    "simulate": run_generate,
    "train": run_train,
    "mle": run_mle,
    "evaluate": run_evaluate,
    "export-scatter": run_export_scatter,
    "control-demo": run_control_demo,
}
