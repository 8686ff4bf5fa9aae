"""Signed interacting particles on the line with an annihilation rule,
their invariants, and the discrete-to-continuum comparison toolkit."""

__version__ = "0.1.0"

from .kernels import KernelPair, KernelSpec, eval_kernel, eval_prime, parse_kernel
from .dynamics import (AnnihilationEvent, EventLog, ParticleState, SimConfig,
                       Trajectory, energy, moments, run, step, velocity)
from .measures import (BlockStructure, EmpiricalPair, SignedAtoms, WeightedAtoms,
                       block_structure, coupling_bound, from_state,
                       pair_distance_upper, supports_separated, wasserstein2)
from .continuum import Grid, GridDensityPair, force_field, run_continuum, step_fv, to_measure
from .analysis import CheckReport, ConvergenceTable, convergence_study
from .scenario import Scenario, load_scenario

__all__ = [
    "KernelPair", "KernelSpec", "eval_kernel", "eval_prime", "parse_kernel",
    "AnnihilationEvent", "EventLog", "ParticleState", "SimConfig", "Trajectory",
    "energy", "moments", "run", "step", "velocity",
    "BlockStructure", "EmpiricalPair", "SignedAtoms", "WeightedAtoms",
    "block_structure", "coupling_bound", "from_state", "pair_distance_upper",
    "supports_separated", "wasserstein2",
    "Grid", "GridDensityPair", "force_field", "run_continuum", "step_fv", "to_measure",
    "CheckReport", "ConvergenceTable", "convergence_study",
    "Scenario", "load_scenario",
]
