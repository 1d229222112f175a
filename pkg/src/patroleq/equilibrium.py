"""Full solution pipeline for patrolling games.

Runs the deterministic cycle search first; when no cycle exists, falls
back to randomized strategies: a stay-out feasibility program, then
either one strictly-competitive min-max program or a leader-follower
enumeration over candidate intruder best responses. Results carry the
recomputed best response, expected utilities, per-action slacks and a
coverage flag; targets can optionally be dropped in increasing order of
patroller value until the remainder is solvable.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

from .bilinear_solver import (
    AffineExpr,
    AlphaProblem,
    Constraint,
    Feasible,
    NotFound,
    Solution,
    SolverConfig,
    SurvivalTerm,
    maximize,
    solve_feasibility,
)
from .det_search import PatrolCycle, SearchConfig, find_deterministic_strategy
from .dominance import (
    Disconnected,
    ReducedInstance,
    fill_intruder_sets,
    remove_dominated_patroller_actions,
)
from .markov import (
    IntruderAction,
    MarkovStrategy,
    action_utilities,
    best_response,
    capture_probability,
)
from .model import InstanceError, PatrolInstance, TargetSpec, validate
from .reduction import all_pairs_shortest_paths, lift_cycle, reduce

COVERAGE_TOL = 1e-9   # capture mass below this counts as an uncovered pair
ROUTE_AGREE_TOL = 1e-3  # shortcut vs enumeration patroller EU discrepancy


@dataclass
class EquilibriumResult:
    """A solved instance: strategy, declared best response and audit data."""

    strategy: PatrolCycle | MarkovStrategy
    intruder_response: IntruderAction
    patroller_eu: float
    intruder_eu: float
    covers_all_targets: bool
    slacks: dict[str, float]  # per entry action: response EU minus its EU

    @property
    def deterministic(self) -> bool:
        return isinstance(self.strategy, PatrolCycle)


@dataclass(frozen=True)
class NoEquilibriumFound:
    """Every randomized subproblem came back NotFound (heuristic verdict)."""

    best_violation: float


@dataclass
class PipelineConfig:
    det: SearchConfig = field(default_factory=SearchConfig)
    nlp: SolverConfig = field(default_factory=SolverConfig)
    allow_strictly_competitive_shortcut: bool = True
    drop_targets_if_uncovered: bool = False


def is_strictly_competitive(instance: PatrolInstance) -> bool:
    """True iff both players rank every target pair the same way."""
    specs = instance.targets
    return all((a.v_p >= b.v_p) == (a.v_i >= b.v_i)
               for a in specs for b in specs)


def _deter_constraints(reduced: ReducedInstance, *, u_coeff: float = 0.0,
                       reference: tuple[str, str] | None = None) -> list[Constraint]:
    """Entry-beats-nothing constraints, one per non-dominated action.

    Without a reference the right-hand side is the stay-out utility
    (zero); with reference (s, q) it is the utility of entering s at q.
    ``u_coeff`` attaches the free min-max variable instead. Every row is
    divided by v_i(t) + eps so violations read in survival units and the
    solver sees the same scale regardless of target values.
    """
    eps = reduced.base.epsilon
    cons = []
    for t in sorted(reduced.V_t):
        scale = reduced.base.target(t).v_i + eps
        for z in sorted(reduced.V_t[t]):
            if (t, z) == reference:
                continue
            terms = [SurvivalTerm(1.0, t, z)]
            const = -eps / scale
            if reference:
                s, q = reference
                terms.append(SurvivalTerm(-(reduced.base.target(s).v_i + eps) / scale,
                                          s, q))
                const = 0.0  # the -eps on both sides cancels
            cons.append(Constraint(IntruderAction.enter_when(t, z),
                                   AffineExpr(const=const, terms=tuple(terms),
                                              u_coeff=u_coeff / scale)))
    return cons


def solve_stayout_feasibility(reduced: ReducedInstance,
                              nlp: SolverConfig) -> Feasible | NotFound:
    """Look for a strategy that makes every entry action unprofitable."""
    problem = AlphaProblem(instance=reduced,
                           constraints=_deter_constraints(reduced))
    return solve_feasibility(problem, nlp)


def _coverage(strategy: MarkovStrategy,
              reduced: ReducedInstance) -> tuple[bool, list[str]]:
    """Whether every non-dominated entry is met with positive capture mass."""
    uncovered = [t for t in sorted(reduced.V_t)
                 if any(capture_probability(strategy, t, z) <= COVERAGE_TOL
                        for z in reduced.V_t[t])]
    return not uncovered, uncovered


def _finish(strategy: MarkovStrategy, reduced: ReducedInstance) -> EquilibriumResult:
    """Audit a solved strategy: recompute the response, EUs and slacks."""
    response = best_response(strategy, reduced, reduced.V_t)
    eu_i, eu_p = action_utilities(strategy, response, reduced)
    slacks = {}
    for t in sorted(reduced.V_t):
        for z in sorted(reduced.V_t[t]):
            action = IntruderAction.enter_when(t, z)
            slacks[str(action)] = eu_i - action_utilities(strategy, action,
                                                          reduced)[0]
    covered, _ = _coverage(strategy, reduced)
    return EquilibriumResult(strategy=strategy, intruder_response=response,
                             patroller_eu=eu_p, intruder_eu=eu_i,
                             covers_all_targets=covered, slacks=slacks)


def solve_leader_follower(reduced: ReducedInstance,
                          nlp: SolverConfig) -> EquilibriumResult | NoEquilibriumFound:
    """Enumerate candidate best responses and keep the patroller's best.

    One maximization per pair (s, q) with s a target and q in V_s,
    constrained so entering s at q stays the intruder's best entry.
    Subproblems run in descending v_p(s), then lexicographic q; a
    subproblem is skipped when even certain capture of s cannot beat the
    incumbent value, which never changes the final verdict.
    """
    base = reduced.base
    total_vp = sum(t.v_p for t in base.targets)
    hops = all_pairs_shortest_paths(base)
    best_value = float("-inf")
    best_solution: Solution | None = None
    least_violation = float("inf")
    order = sorted(reduced.V_t, key=lambda t: (-base.target(t).v_p, t))
    for s in order:
        spec = base.target(s)
        for q in sorted(reduced.V_t[s]):
            reachable = hops.distance(q, s) <= spec.d
            upper = total_vp if reachable else total_vp - spec.v_p
            if upper <= best_value:
                continue
            objective = AffineExpr(const=total_vp,
                                   terms=(SurvivalTerm(-spec.v_p, s, q),))
            problem = AlphaProblem(
                instance=reduced,
                constraints=_deter_constraints(reduced, reference=(s, q)),
                objective=objective)
            res = maximize(problem, nlp)
            if isinstance(res, NotFound):
                least_violation = min(least_violation, res.best_violation)
                continue
            if res.value > best_value:
                best_value = res.value
                best_solution = res
    if best_solution is None:
        return NoEquilibriumFound(best_violation=least_violation)
    return _finish(best_solution.strategy, reduced)


def solve_strictly_competitive(reduced: ReducedInstance,
                               nlp: SolverConfig) -> EquilibriumResult | NoEquilibriumFound:
    """Single min-max program capping every entry's intruder utility."""
    if not is_strictly_competitive(reduced.base):
        raise InstanceError("the players rank targets differently; "
                            "the single-program shortcut does not apply")
    problem = AlphaProblem(instance=reduced,
                           constraints=_deter_constraints(reduced, u_coeff=-1.0),
                           objective=AffineExpr(u_coeff=1.0), sense="minimize")
    res = maximize(problem, nlp)
    if isinstance(res, NotFound):
        return NoEquilibriumFound(best_violation=res.best_violation)
    return _finish(res.strategy, reduced)


def _deterministic_result(instance: PatrolInstance, reduced_graph,
                          cycle: PatrolCycle) -> EquilibriumResult:
    """Package a feasible cycle: certain capture deters every entry."""
    walk = lift_cycle(reduced_graph, cycle.sequence)
    lifted = PatrolCycle(sequence=walk, temporal_length=cycle.temporal_length)
    total_vp = sum(t.v_p for t in instance.targets)
    slacks: dict[str, float] = {}
    dom = remove_dominated_patroller_actions(instance,
                                             all_pairs_shortest_paths(instance))
    if isinstance(dom, ReducedInstance):
        fill_intruder_sets(dom)
        # every timely revisit gap is covered, so any entry is caught
        # surely and pays -eps against stay-out's zero
        for t in sorted(dom.V_t):
            for z in sorted(dom.V_t[t]):
                slacks[str(IntruderAction.enter_when(t, z))] = instance.epsilon
    return EquilibriumResult(strategy=lifted,
                             intruder_response=IntruderAction.stay_out(),
                             patroller_eu=total_vp, intruder_eu=0.0,
                             covers_all_targets=True, slacks=slacks)


def solve(instance: PatrolInstance,
          config: PipelineConfig | None = None
          ) -> EquilibriumResult | Disconnected | NoEquilibriumFound:
    """Run the full pipeline on one instance.

    Deterministic search first; when it fails, vertex dominance, then a
    stay-out feasibility program, then either the strictly-competitive
    shortcut (when preferences align and the config allows it) or the
    leader-follower enumeration.
    """
    config = config or PipelineConfig()
    validate(instance)
    reduced_graph = reduce(instance)
    det = find_deterministic_strategy(reduced_graph, config.det)
    if det.verdict == "Feasible":
        return _deterministic_result(instance, reduced_graph, det.cycle)
    dom = remove_dominated_patroller_actions(instance,
                                             all_pairs_shortest_paths(instance))
    if isinstance(dom, Disconnected):
        return dom
    fill_intruder_sets(dom)
    stay = solve_stayout_feasibility(dom, config.nlp)
    if isinstance(stay, Feasible):
        return _finish(stay.strategy, dom)
    if config.allow_strictly_competitive_shortcut and is_strictly_competitive(instance):
        return solve_strictly_competitive(dom, config.nlp)
    return solve_leader_follower(dom, config.nlp)


def solve_both_routes(reduced: ReducedInstance, nlp: SolverConfig
                      ) -> tuple[EquilibriumResult | NoEquilibriumFound,
                                 EquilibriumResult | NoEquilibriumFound]:
    """Run the shortcut and the enumeration side by side (diagnostics).

    Returns (shortcut result, enumeration result) and warns when their
    patroller EUs disagree beyond tolerance, which points at solver
    quality rather than modeling.
    """
    shortcut = solve_strictly_competitive(reduced, nlp)
    enumerated = solve_leader_follower(reduced, nlp)
    if (isinstance(shortcut, EquilibriumResult)
            and isinstance(enumerated, EquilibriumResult)):
        gap = abs(shortcut.patroller_eu - enumerated.patroller_eu)
        if gap > ROUTE_AGREE_TOL:
            warnings.warn(f"solution routes disagree by {gap:.6f} "
                          "in patroller EU; consider more solver starts",
                          RuntimeWarning, stacklevel=2)
    return shortcut, enumerated


def _without_targets(instance: PatrolInstance, dropped: set[str]) -> PatrolInstance:
    """Same graph, with the dropped targets demoted to plain vertices."""
    keep = [t for t in instance.targets if t.id not in dropped]
    if not keep:
        raise InstanceError("every target was dropped; nothing left to patrol")
    return PatrolInstance(vertices=list(instance.vertices),
                          arcs=list(instance.arcs), targets=keep,
                          epsilon=instance.epsilon)


def _lowest_value_target(specs: list[TargetSpec]) -> str:
    return min(specs, key=lambda t: (t.v_p, t.id)).id


def solve_with_target_dropping(
        instance: PatrolInstance, config: PipelineConfig | None = None,
        mode: str = "mixed"
) -> tuple[EquilibriumResult | Disconnected | NoEquilibriumFound, list[str]]:
    """Drop targets in increasing patroller value until solvable.

    Deterministic mode drops the cheapest remaining target (ties to the
    lexicographically smaller id) until the cycle search succeeds. Mixed
    mode runs the full pipeline and, whenever the strategy leaves some
    target uncovered, drops the cheapest uncovered one and re-solves.
    Returns the final result and the dropped targets in order.
    """
    if mode not in ("deterministic", "mixed"):
        raise InstanceError(f"unknown dropping mode {mode!r}")
    config = config or PipelineConfig()
    validate(instance)
    dropped: list[str] = []
    current = instance
    while True:
        if mode == "deterministic":
            reduced_graph = reduce(current)
            det = find_deterministic_strategy(reduced_graph, config.det)
            if det.verdict == "Feasible":
                return (_deterministic_result(current, reduced_graph, det.cycle),
                        dropped)
            victim = _lowest_value_target(current.targets)
        else:
            result = solve(current, config)
            if not isinstance(result, EquilibriumResult):
                return result, dropped
            if result.covers_all_targets or result.deterministic:
                return result, dropped
            dom = remove_dominated_patroller_actions(
                current, all_pairs_shortest_paths(current))
            fill_intruder_sets(dom)
            _, uncovered = _coverage(result.strategy, dom)
            victim = _lowest_value_target(
                [current.target(t) for t in uncovered])
        dropped.append(victim)
        current = _without_targets(instance, set(dropped))
