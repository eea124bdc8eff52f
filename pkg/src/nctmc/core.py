"""Reaction networks, trajectories and reaction identification.

Reaction indices are 0-based everywhere in the Python API. The JSON file
formats use 1-based reaction indices, and the conversion happens only in the
read/write helpers at the bottom of this module.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import NoMatchingReaction

TRAJECTORY_FORMAT = "nctmc-trajectory/1"


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ReactionNetwork:
    """Stoichiometry of ``r`` reactions over ``s`` species.

    ``reactants`` and ``products`` are ``(r, s)`` integer arrays, one row per
    reaction (the transpose of the usual column-per-reaction layout).
    """

    reactants: np.ndarray
    products: np.ndarray
    species_names: tuple = ()
    reaction_labels: tuple = ()

    def __post_init__(self):
        phi = _frozen(self.reactants, np.int64)
        psi = _frozen(self.products, np.int64)
        if phi.ndim != 2 or phi.shape != psi.shape:
            raise ValueError("reactants and products must be (r, s) arrays of equal shape")
        r, s = phi.shape
        if r < 1 or s < 1:
            raise ValueError("a network needs at least one species and one reaction")
        if (phi < 0).any() or (psi < 0).any():
            raise ValueError("stoichiometric coefficients must be non-negative")
        object.__setattr__(self, "reactants", phi)
        object.__setattr__(self, "products", psi)
        names = tuple(self.species_names) or tuple(f"S{i + 1}" for i in range(s))
        labels = tuple(self.reaction_labels) or tuple(_default_label(phi[j], psi[j], names) for j in range(r))
        if len(names) != s or len(labels) != r:
            raise ValueError("species_names / reaction_labels length mismatch")
        object.__setattr__(self, "species_names", names)
        object.__setattr__(self, "reaction_labels", labels)

    @property
    def species_count(self) -> int:
        return self.reactants.shape[1]

    @property
    def reaction_count(self) -> int:
        return self.reactants.shape[0]

    @cached_property
    def state_changes(self) -> np.ndarray:
        return _frozen(self.products - self.reactants, np.int64)

    @cached_property
    def classes(self) -> "ReactionEquivalenceClasses":
        return build_equivalence_classes(self)

    def to_dict(self) -> dict:
        return {
            "species": list(self.species_names),
            "reactions": [
                {"label": lab, "phi": self.reactants[j].tolist(), "psi": self.products[j].tolist()}
                for j, lab in enumerate(self.reaction_labels)
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReactionNetwork":
        rx = d["reactions"]
        return cls(
            reactants=[x["phi"] for x in rx],
            products=[x["psi"] for x in rx],
            species_names=tuple(d.get("species", ())),
            reaction_labels=tuple(x.get("label", "") or f"R{j + 1}" for j, x in enumerate(rx)),
        )


def _default_label(phi, psi, names):
    def side(v):
        terms = [(f"{c}{n}" if c > 1 else n) for c, n in zip(v, names) if c > 0]
        return " + ".join(terms) or "0"

    return f"{side(phi)} -> {side(psi)}"


@dataclass(frozen=True, eq=False)
class ReactionEquivalenceClasses:
    """Partition of reactions into groups with identical state change."""

    classes: tuple
    class_of: np.ndarray
    changes: np.ndarray

    @property
    def class_count(self) -> int:
        return len(self.classes)

    @cached_property
    def membership(self) -> np.ndarray:
        """``(r, r')`` 0/1 matrix; ``rates @ membership`` sums reactions into classes."""
        m = np.zeros((len(self.class_of), self.class_count))
        m[np.arange(len(self.class_of)), self.class_of] = 1.0
        m.setflags(write=False)
        return m

    @cached_property
    def _lookup(self) -> dict:
        return {tuple(c): k for k, c in enumerate(self.changes.tolist())}

    def representative(self, k: int) -> int:
        """Smallest reaction index in class ``k``."""
        return self.classes[k][0]

    def class_for_change(self, delta) -> int:
        try:
            return self._lookup[tuple(int(v) for v in delta)]
        except KeyError:
            raise NoMatchingReaction(f"state change {tuple(int(v) for v in delta)} matches no reaction") from None


def build_equivalence_classes(network: ReactionNetwork) -> ReactionEquivalenceClasses:
    """Group reactions sharing the same state change vector.

    Classes are labelled in order of their smallest member reaction.
    """
    index: dict = {}
    groups: list = []
    class_of = np.empty(network.reaction_count, dtype=np.int64)
    for j, delta in enumerate(network.state_changes.tolist()):
        key = tuple(delta)
        if key not in index:
            index[key] = len(groups)
            groups.append([])
        class_of[j] = index[key]
        groups[index[key]].append(j)
    changes = network.state_changes[[g[0] for g in groups]]
    return ReactionEquivalenceClasses(
        classes=tuple(tuple(g) for g in groups),
        class_of=_frozen(class_of, np.int64),
        changes=_frozen(changes, np.int64),
    )


def identify_reaction(network: ReactionNetwork, from_state, to_state) -> int:
    """Return the equivalence class whose state change equals ``to_state - from_state``."""
    delta = np.asarray(to_state, dtype=np.int64) - np.asarray(from_state, dtype=np.int64)
    return network.classes.class_for_change(delta)


class Observation(NamedTuple):
    state: np.ndarray
    covariates: np.ndarray
    time: float
    reaction: int | None


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A fully observed sample path.

    Stored column-wise: ``times`` (n,), ``states`` (n, s) int64,
    ``covariates`` (n, c) float64 and ``reactions`` (n,) int64 where -1 marks
    a record not followed by a reaction. Such a record is either the terminal
    one or a censored sojourn that ended at a covariate breakpoint (or at the
    time horizon) with the state unchanged.
    """

    network: ReactionNetwork
    times: np.ndarray
    states: np.ndarray
    covariates: np.ndarray
    reactions: np.ndarray
    absorbed: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        times = _frozen(self.times, np.float64).reshape(-1)
        n = len(times)
        states = _frozen(np.asarray(self.states, dtype=np.int64).reshape(n, -1), np.int64)
        covs = np.asarray(self.covariates, dtype=np.float64)
        covs = _frozen(covs.reshape(n, -1) if covs.size else np.zeros((n, 0)), np.float64)
        rx = _frozen(self.reactions, np.int64).reshape(-1)
        if states.shape[1] != self.network.species_count or len(rx) != n:
            raise ValueError("trajectory arrays have inconsistent shapes")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "covariates", covs)
        object.__setattr__(self, "reactions", rx)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def covariate_count(self) -> int:
        return self.covariates.shape[1]

    @property
    def transition_count(self) -> int:
        """Number of reaction events, N."""
        return int((self.reactions[:-1] >= 0).sum()) if len(self) else 0

    @property
    def inputs(self) -> np.ndarray:
        """Rows ``x_i = [S(t_i), C_i]`` as float64."""
        return np.hstack([self.states.astype(np.float64), self.covariates])

    @property
    def sojourns(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def observations(self) -> Iterator[Observation]:
        for i in range(len(self)):
            rho = int(self.reactions[i])
            yield Observation(self.states[i], self.covariates[i], float(self.times[i]), rho if rho >= 0 else None)

    @classmethod
    def from_observations(cls, network: ReactionNetwork, observations: Sequence, **kw) -> "Trajectory":
        obs = list(observations)
        c = len(obs[0].covariates) if obs else 0
        return cls(
            network=network,
            times=[o.time for o in obs],
            states=np.array([o.state for o in obs], dtype=np.int64).reshape(len(obs), network.species_count),
            covariates=np.array([o.covariates for o in obs], dtype=np.float64).reshape(len(obs), c),
            reactions=[-1 if o.reaction is None else o.reaction for o in obs],
            **kw,
        )


class Violation(NamedTuple):
    index: int
    message: str


def validate_trajectory(trajectory: Trajectory) -> list:
    """Check trajectory invariants; returns one :class:`Violation` per failed check."""
    net = trajectory.network
    out = []
    t, S, rx = trajectory.times, trajectory.states, trajectory.reactions
    if (S < 0).any():
        for i in np.flatnonzero((S < 0).any(axis=1)):
            out.append(Violation(int(i), f"negative species count at index {i}"))
    for i in np.flatnonzero(np.diff(t) <= 0) + 1:
        out.append(Violation(int(i), f"non-increasing time at index {i}"))
    if not np.isfinite(t).all():
        out.append(Violation(int(np.flatnonzero(~np.isfinite(t))[0]), "non-finite time"))
    if not np.isfinite(trajectory.covariates).all():
        out.append(Violation(int(np.flatnonzero(~np.isfinite(trajectory.covariates).all(axis=1))[0]), "non-finite covariate"))
    if len(t) and rx[-1] >= 0:
        out.append(Violation(len(t) - 1, "terminal record carries a reaction"))
    deltas = np.diff(S, axis=0)
    classes = net.classes
    for i in range(len(deltas)):
        rho = int(rx[i])
        delta = deltas[i]
        if rho < 0:
            if delta.any():
                out.append(Violation(i + 1, f"state changed without a recorded reaction at index {i + 1}"))
            continue
        if rho >= net.reaction_count:
            out.append(Violation(i, f"reaction index {rho} out of range at index {i}"))
            continue
        try:
            k = classes.class_for_change(delta)
        except NoMatchingReaction:
            out.append(Violation(i + 1, f"unidentifiable transition at index {i + 1}"))
            continue
        if classes.class_of[rho] != k:
            out.append(Violation(i + 1, f"recorded reaction {rho} disagrees with state change at index {i + 1}"))
    return out


# -- file formats ------------------------------------------------------------

def save_network(path, network: ReactionNetwork) -> None:
    Path(path).write_text(json.dumps(network.to_dict(), indent=2) + "\n")


def load_network(path) -> ReactionNetwork:
    return ReactionNetwork.from_dict(json.loads(Path(path).read_text()))


def trajectory_lines(trajectory: Trajectory, header: dict | None = None) -> Iterator[str]:
    if header is not None:
        yield json.dumps({"header": header}, sort_keys=True)
    for i in range(len(trajectory)):
        rho = int(trajectory.reactions[i])
        yield json.dumps({
            "t": float(trajectory.times[i]),
            "state": trajectory.states[i].tolist(),
            "cov": trajectory.covariates[i].tolist(),
            "rho": rho + 1 if rho >= 0 else None,
        })


def write_trajectory(path, trajectory: Trajectory, header: dict | None = None) -> None:
    """Write JSON Lines, one observation per line, with an optional header line first."""
    with open(path, "w") as fh:
        for line in trajectory_lines(trajectory, header):
            fh.write(line + "\n")


def read_trajectory(path, network: ReactionNetwork) -> Trajectory:
    header: dict = {}
    t, S, C, rx = [], [], [], []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            if "header" in rec:
                header = rec["header"]
                continue
            t.append(rec["t"])
            S.append(rec["state"])
            C.append(rec.get("cov") or [])
            rx.append(-1 if rec.get("rho") is None else int(rec["rho"]) - 1)
    c = len(C[0]) if C else 0
    return Trajectory(
        network=network,
        times=t,
        states=np.array(S, dtype=np.int64).reshape(len(t), network.species_count),
        covariates=np.array(C, dtype=np.float64).reshape(len(t), c),
        reactions=rx,
        absorbed=bool(header.get("absorbed", False)),
        meta=header,
    )
