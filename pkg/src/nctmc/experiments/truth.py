"""Ground-truth networks and propensity functions for the three benchmark systems."""
from __future__ import annotations

import numpy as np

from ..core import ReactionNetwork

GAS_CONSTANT = 8.314

PREDATOR_PREY_K = (0.5, 1.7, 3.9, 4.6, 2.7, 1.9, 6.1, 2.4, 1.5)
CRN_FREQUENCY = (630000.0, 770000.0, 5380000.0, 2240000.0)
CRN_ACTIVATION = (39000.0, 36000.0, 40000.0, 40000.0)
CRN_TEMPERATURES = (271.0, 272.0, 273.0, 274.0, 275.0)
DAYS_PER_YEAR = 365.24


def arrhenius_rate(frequency, activation, temperature, gas_constant=GAS_CONSTANT):
    """``k = A exp(-E / (R T))``."""
    if np.any(np.asarray(temperature) <= 0):
        raise ValueError("temperature must be positive")
    return frequency * np.exp(-np.asarray(activation) / (gas_constant * np.asarray(temperature)))


def birth_death_network() -> ReactionNetwork:
    return ReactionNetwork([[0], [1]], [[1], [0]], ("A",), ("0 -> A", "A -> 0"))


def predator_prey_network() -> ReactionNetwork:
    #            A  B  C
    phi = [[0, 1, 0], [0, 0, 0], [1, 0, 0], [0, 0, 0], [0, 0, 1],
           [0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 1]]
    psi = [[0, 0, 0], [0, 1, 0], [0, 0, 0], [1, 0, 0], [0, 0, 0],
           [0, 0, 1], [2, 0, 0], [0, 2, 0], [0, 0, 2]]
    labels = ("B -> 0", "0 -> B", "A -> 0", "0 -> A", "C -> 0", "0 -> C", "A -> 2A", "A + B -> 2B", "B + C -> 2C")
    return ReactionNetwork(phi, psi, ("A", "B", "C"), labels)


def temperature_crn_network() -> ReactionNetwork:
    phi = [[2, 0], [1, 1], [0, 0], [0, 0]]
    psi = [[0, 0], [0, 0], [1, 0], [0, 1]]
    return ReactionNetwork(phi, psi, ("A", "B"), ("A + A -> 0", "A + B -> 0", "0 -> A", "0 -> B"))


class BirthDeathTruth:
    """Covariate-driven birth and death rates, ``x = [A, s]``.

    The nominal rates ``2.1 cos(2 pi s)`` and ``2 sin(2 pi s)`` go negative on
    part of the year, so a ``variant`` turns them into rates: ``"abs"`` takes
    absolute values (default), ``"clip"`` takes the positive part. Death is
    multiplied by ``[A >= 1]``.
    """

    n_classes = 2

    def __init__(self, variant="abs", birth_amplitude=2.1, death_amplitude=2.0):
        if variant not in ("abs", "clip"):
            raise ValueError(f"unknown birth-death variant {variant!r}")
        self.variant = variant
        self.birth_amplitude = birth_amplitude
        self.death_amplitude = death_amplitude

    def _pos(self, v):
        return np.abs(v) if self.variant == "abs" else np.maximum(v, 0.0)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        s = X[:, 1]
        birth = self.birth_amplitude * self._pos(np.cos(2 * np.pi * s))
        death = self.death_amplitude * self._pos(np.sin(2 * np.pi * s)) * (X[:, 0] >= 1)
        return np.column_stack([birth, death])

    def identity(self):
        return {"system": "birth_death", "variant": self.variant,
                "birth_amplitude": self.birth_amplitude, "death_amplitude": self.death_amplitude}


class PredatorPreyTruth:
    """Nine-reaction predator-prey kinetics at class level (reactions 4 and 7 merged).

    ``predation="scaled"`` (default) uses ``A sqrt(B) k8 / N`` for the
    ``A + B -> 2B`` rate; ``"literal"`` drops the ``1/N``.
    """

    def __init__(self, k=PREDATOR_PREY_K, system_size=1e5, predation="scaled"):
        if predation not in ("scaled", "literal"):
            raise ValueError(f"unknown predation form {predation!r}")
        self.k = tuple(float(v) for v in k)
        self.system_size = float(system_size)
        self.predation = predation
        self.network = predator_prey_network()
        self.n_classes = self.network.classes.class_count

    def reaction_rates(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A, B, C = X[:, 0], X[:, 1], X[:, 2]
        k, n = self.k, self.system_size
        hunt = A * np.sqrt(B) * k[7]
        if self.predation == "scaled":
            hunt = hunt / n
        one = np.ones_like(A)
        return np.column_stack([
            B * k[0], one * k[1], A * k[2] / n, one * k[3], C * k[4], one * k[5], A * k[6] / n,
            hunt, np.log(B * C + 1.0) * k[8],
        ])

    def __call__(self, X):
        return self.reaction_rates(X) @ self.network.classes.membership

    def identity(self):
        return {"system": "predator_prey", "k": list(self.k), "system_size": self.system_size,
                "predation": self.predation}


class TemperatureCRNTruth:
    """Mass-action rates with Arrhenius constants, ``x = [A, B, T]``."""

    n_classes = 4

    def __init__(self, frequency=CRN_FREQUENCY, activation=CRN_ACTIVATION, gas_constant=GAS_CONSTANT):
        self.frequency = np.asarray(frequency, dtype=np.float64)
        self.activation = np.asarray(activation, dtype=np.float64)
        self.gas_constant = float(gas_constant)

    def constants(self, temperature):
        T = np.asarray(temperature, dtype=np.float64).reshape(-1, 1)
        return arrhenius_rate(self.frequency[None, :], self.activation[None, :], T, self.gas_constant)

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        A, B = X[:, 0], X[:, 1]
        k = self.constants(X[:, 2])
        return np.column_stack([A * (A - 1) * k[:, 0], A * B * k[:, 1], k[:, 2], k[:, 3]])

    def identity(self):
        return {"system": "temperature_crn", "frequency": self.frequency.tolist(),
                "activation": self.activation.tolist(), "gas_constant": self.gas_constant}


class MassActionTruth:
    """``k_j * prod_i S_i (S_i - 1) ... (S_i - phi_ij + 1)``, summed into classes."""

    def __init__(self, network: ReactionNetwork, k):
        self.network = network
        self.k = np.asarray(k, dtype=np.float64)
        if len(self.k) != network.reaction_count:
            raise ValueError("one rate constant per reaction")
        self.n_classes = network.classes.class_count

    def __call__(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        S = X[:, :self.network.species_count]
        out = np.tile(self.k, (len(X), 1))
        for j, phi in enumerate(self.network.reactants):
            for i, p in enumerate(phi):
                for m in range(p):
                    out[:, j] *= np.maximum(S[:, i] - m, 0.0)
        return out @ self.network.classes.membership

    def identity(self):
        return {"system": "mass_action", "k": self.k.tolist()}

