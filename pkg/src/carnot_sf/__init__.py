"""Extremals, blowdowns and geodesy checks for sub-Finsler step-2 Carnot groups."""

from .algebra import GroupPoint, StepTwoAlgebra, heisenberg, free_step_two, load_group
from .control import ControlSignal, Trajectory, develop
from .norms import load_norm
from .pmp import integrate_extremal

__version__ = "0.1.0"

__all__ = [
    "GroupPoint",
    "StepTwoAlgebra",
    "heisenberg",
    "free_step_two",
    "load_group",
    "ControlSignal",
    "Trajectory",
    "develop",
    "load_norm",
    "integrate_extremal",
    "__version__",
]
