"""Neural continuous-time Markov chains for covariate-dependent reaction networks."""
from .core import (Observation, ReactionEquivalenceClasses, ReactionNetwork, Trajectory, build_equivalence_classes,
                   identify_reaction, read_trajectory, validate_trajectory, write_trajectory)
from .kernels import BACKEND
from .likelihood import GroupedDataset, TrainingConfig, group_transitions, likelihood_sequential, nll, train
from .ssa import SimulationConfig, next_event, simulate, simulate_batch

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "GroupedDataset", "Observation", "ReactionEquivalenceClasses", "ReactionNetwork",
    "SimulationConfig", "TrainingConfig", "Trajectory", "build_equivalence_classes", "group_transitions",
    "identify_reaction", "likelihood_sequential", "next_event", "nll", "read_trajectory", "simulate",
    "simulate_batch", "train", "validate_trajectory", "write_trajectory",
]
