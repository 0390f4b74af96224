"""Simulation of continuous-time quantum search on a spin-3/2 quadrupolar nucleus."""

from .config import ExperimentConfig
from .experiment import run_pipeline
from .hamiltonians import StaticField, fenner_hamiltonian, fenner_time

__all__ = ["ExperimentConfig", "StaticField", "fenner_hamiltonian", "fenner_time", "run_pipeline"]
__version__ = "0.1.0"
