"""Adversarial patrolling on graphs: deterministic patrol-cycle search and
mixed Markovian patrolling equilibria against a best-responding intruder."""

from patroleq.bilinear_solver import SolverConfig
from patroleq.det_search import (
    PatrolCycle,
    SearchConfig,
    SearchResult,
    check_cycle,
    find_deterministic_strategy,
)
from patroleq.dominance import (
    Disconnected,
    ReducedInstance,
    fill_intruder_sets,
    remove_dominated_patroller_actions,
)
from patroleq.equilibrium import (
    EquilibriumResult,
    NoEquilibriumFound,
    PipelineConfig,
    solve,
    solve_with_target_dropping,
)
from patroleq.genbench import GenSpec, generate_instance
from patroleq.markov import (
    IntruderAction,
    MarkovStrategy,
    best_response,
    capture_probability,
    simulate,
)
from patroleq.model import PatrolInstance, TargetSpec, load_instance, save_instance
from patroleq.reduction import ReducedGraph, lift_cycle, load_reduced, reduce

__version__ = "0.1.0"

__all__ = [
    "Disconnected",
    "EquilibriumResult",
    "GenSpec",
    "IntruderAction",
    "MarkovStrategy",
    "NoEquilibriumFound",
    "PatrolCycle",
    "PatrolInstance",
    "PipelineConfig",
    "ReducedGraph",
    "ReducedInstance",
    "SearchConfig",
    "SearchResult",
    "SolverConfig",
    "TargetSpec",
    "best_response",
    "capture_probability",
    "check_cycle",
    "fill_intruder_sets",
    "find_deterministic_strategy",
    "generate_instance",
    "lift_cycle",
    "load_instance",
    "load_reduced",
    "reduce",
    "remove_dominated_patroller_actions",
    "save_instance",
    "simulate",
    "solve",
    "solve_with_target_dropping",
]
