"""Ternary hard-sphere particle dynamics, the ternary kinetic equation and their comparison."""

__version__ = "0.1.0"

from .collision import CollisionClass, ImpactPair, classify, collide, cross_section
from .dynamics import PeriodicBox, FreeSpace, SimulationState, advance, next_collision, sample_initial
from .geometry import Configuration, in_phase_space, transition_map
from .kinetic import VelocityEnsemble, dsmc_step, entropy, q3_apply_mc

__all__ = [
    "CollisionClass",
    "Configuration",
    "FreeSpace",
    "ImpactPair",
    "PeriodicBox",
    "SimulationState",
    "VelocityEnsemble",
    "advance",
    "classify",
    "collide",
    "cross_section",
    "dsmc_step",
    "entropy",
    "in_phase_space",
    "next_collision",
    "q3_apply_mc",
    "sample_initial",
    "transition_map",
]
