"""Backtracking search for deterministic patrol cycles on the target graph.

A patrol cycle is a target sequence sigma(1..s) with sigma(1) = sigma(s)
that can be repeated forever. It is feasible when

1. it closes (first element equals last),
2. every target occurs at least once,
3. consecutive elements are joined by arcs of the target graph,
4. the travel time between consecutive visits of any target i is at most
   its penetration time d(i), and
5. the wrap-around gap of i (suffix after its last visit plus prefix
   before its first) is at most d(i).

The search assigns one position per tree level and prunes with a
forward-checking relaxation: a candidate assignment is kept only if every
target could still be revisited in time, estimating unvisited stretches
with shortest-path distances. Any feasible instance admits a solution
whose temporal length is at most max_t d(t) (repeating a shorter loop
never hurts), which gives an optional global pruning bound, and because
rotations of a feasible cycle stay feasible, an empty forward-check
domain at any start target proves infeasibility.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass

from .model import InstanceError
from .reduction import ReducedGraph, ShortestPathTable

HEURISTICS = ("lex", "random", "max_arcs", "min_arcs", "min_visits", "max_d", "min_d")


@dataclass
class SearchConfig:
    heuristic: str = "lex"     # domain ordering rule, one of HEURISTICS
    rtb: bool = False          # break heuristic ties uniformly at random
    lsc: bool = False          # prune prefixes that cannot close within max_t d(t)
    ifc: bool = False          # forward-check every start target before searching
    time_budget: float = 60.0  # wall-clock seconds before verdict Timeout
    rng_seed: int = 0          # seed for random ordering and tie-breaking

    def __post_init__(self) -> None:
        if self.heuristic not in HEURISTICS:
            raise InstanceError(f"unknown heuristic {self.heuristic!r}; pick one of {HEURISTICS}")
        if self.time_budget <= 0:
            raise InstanceError("time budget must be positive")


@dataclass
class PatrolCycle:
    sequence: list[str]   # visited targets, first element repeated at the end
    temporal_length: int  # total travel time around the cycle


@dataclass
class SearchResult:
    verdict: str                     # "Feasible" | "Infeasible" | "Timeout"
    cycle: PatrolCycle | None        # present iff verdict == "Feasible"
    nodes_expanded: int
    elapsed_ms: float


class _Timeout(Exception):
    pass


class _SearchState:
    """Prefix bookkeeping: cumulative times and per-target visit positions."""

    def __init__(self, reduced: ReducedGraph, table: ShortestPathTable):
        self.g = reduced
        self.table = table
        self.sigma: list[str] = []
        self.csum: list[int] = []          # csum[k] = travel time of sigma[0..k]
        self.occ: dict[str, list[int]] = {t: [] for t in reduced.targets}

    def push(self, vertex: str) -> None:
        if self.sigma:
            self.csum.append(self.csum[-1] + self.g.weight(self.sigma[-1], vertex))
        else:
            self.csum.append(0)
        self.sigma.append(vertex)
        self.occ[vertex].append(len(self.sigma))

    def pop(self) -> None:
        vertex = self.sigma.pop()
        self.csum.pop()
        self.occ[vertex].pop()

    def time_at(self, position: int) -> int:
        """Travel time accumulated at a 1-based sequence position."""
        return self.csum[position - 1]

    def visits(self, target: str) -> int:
        return len(self.occ[target])

    def closed_with_full_coverage(self) -> bool:
        return (len(self.sigma) >= 2 and self.sigma[-1] == self.sigma[0]
                and all(self.occ[t] for t in self.g.targets))

    def wrap_and_gap_ok(self) -> bool:
        """Exact revisit-gap and wrap-around checks on the closed prefix."""
        s = len(self.sigma)
        total = self.time_at(s)
        for t in self.g.targets:
            positions = self.occ[t]
            dt = self.g.d[t]
            for p, q in zip(positions, positions[1:]):
                if self.time_at(q) - self.time_at(p) > dt:
                    return False
            if self.time_at(positions[0]) + (total - self.time_at(positions[-1])) > dt:
                return False
        return True


def forward_check(state: _SearchState, lsc: bool) -> list[str]:
    """Candidate next targets that keep every deadline satisfiable.

    Works on the current prefix sigma(1..s). A successor i (over an arc
    from sigma(s)) survives when, for every target k, the time already
    elapsed since k's last visit (or since the start, if unvisited, plus
    the eventual return to sigma(1)) extended by the move to i and a
    shortest-path completion stays within d(k). The candidate's own
    deadline is checked exactly at s = 1; at deeper levels the previous
    level's look-ahead already bounds it because arc weights equal
    shortest-path distances on this graph.

    Returns
    -------
    list of str
        Surviving candidates in arc insertion order (unordered otherwise).
    """
    g, table = state.g, state.table
    sigma = state.sigma
    s = len(sigma)
    start = sigma[0]
    last = sigma[-1]
    elapsed = state.time_at(s)
    max_d = max(g.d.values())
    out: list[str] = []
    for i, w_move in g.out_neighbors(last):
        arrival = elapsed + w_move
        if lsc and arrival + table.distance(i, start) > max_d:
            continue
        if s == 1:
            if state.visits(i) == 0:
                if arrival + table.distance(i, start) > g.d[i]:
                    continue
            else:
                if arrival - state.time_at(state.occ[i][-1]) > g.d[i]:
                    continue
        ok = True
        for k in g.targets:
            if k == i:
                continue
            dk = g.d[k]
            if state.visits(k) == 0:
                need = arrival + table.distance(i, k) + table.distance(k, start)
            else:
                need = (elapsed - state.time_at(state.occ[k][-1])
                        + w_move + table.distance(i, k))
            if need > dk:
                ok = False
                break
        if ok:
            out.append(i)
    return out


def _degree(g: ReducedGraph, t: str) -> int:
    """Incident arcs of t in the target graph, self-arcs excluded."""
    deg = sum(1 for v, _ in g.out_neighbors(t) if v != t)
    deg += sum(1 for u in g.targets if u != t and g.has_arc(u, t))
    return deg


def _order(candidates: list[str], state: _SearchState, config: SearchConfig,
           rng: random.Random) -> list[str]:
    """Sort a candidate domain according to the configured heuristic."""
    g = state.g
    if config.heuristic == "random":
        out = list(candidates)
        rng.shuffle(out)
        return out
    if config.heuristic == "lex":
        key = lambda t: (t,)
    elif config.heuristic == "max_arcs":
        key = lambda t: (-_degree(g, t),)
    elif config.heuristic == "min_arcs":
        key = lambda t: (_degree(g, t),)
    elif config.heuristic == "min_visits":
        key = lambda t: (state.visits(t),)
    elif config.heuristic == "max_d":
        key = lambda t: (-g.d[t],)
    else:  # min_d
        key = lambda t: (g.d[t],)
    if config.rtb:
        return sorted(candidates, key=lambda t: key(t) + (rng.random(),))
    return sorted(candidates, key=lambda t: key(t) + (t,))


def find_deterministic_strategy(reduced: ReducedGraph, config: SearchConfig | None = None,
                                trace: list | None = None) -> SearchResult:
    """Search the target graph for a feasible patrol cycle.

    Parameters
    ----------
    reduced : ReducedGraph
        Target graph with travel times and penetration times.
    config : SearchConfig
        Ordering heuristic, pruning switches, time budget and seed.
    trace : list, optional
        When given, receives one ``{"prefix": ..., "domain": ...}`` event
        per expanded node (test instrumentation).

    Returns
    -------
    SearchResult
        Feasible with a cycle, Infeasible after exhausting the tree (or
        proving an empty start domain), or Timeout past the budget.
    """
    config = config or SearchConfig()
    rng = random.Random(config.rng_seed)
    table = reduced.shortest_path_table()
    t0 = time.monotonic()
    deadline = t0 + config.time_budget
    nodes = 0

    def elapsed_ms() -> float:
        return (time.monotonic() - t0) * 1000.0

    def result(verdict: str, cycle: PatrolCycle | None = None) -> SearchResult:
        return SearchResult(verdict=verdict, cycle=cycle,
                            nodes_expanded=nodes, elapsed_ms=elapsed_ms())

    if config.ifc:
        for root in reduced.targets:
            probe = _SearchState(reduced, table)
            probe.push(root)
            if not forward_check(probe, config.lsc):
                return result("Infeasible")

    start = _order(list(reduced.targets), _SearchState(reduced, table), config, rng)[0]
    state = _SearchState(reduced, table)
    state.push(start)
    nodes += 1
    domain = _order(forward_check(state, config.lsc), state, config, rng)
    if trace is not None:
        trace.append({"prefix": tuple(state.sigma), "domain": tuple(domain)})
    stack: list = [iter(domain)]

    try:
        while stack:
            if time.monotonic() > deadline:
                raise _Timeout
            candidate = next(stack[-1], None)
            if candidate is None:
                stack.pop()
                state.pop()
                continue
            state.push(candidate)
            nodes += 1
            if state.closed_with_full_coverage():
                if state.wrap_and_gap_ok():
                    cycle = PatrolCycle(sequence=list(state.sigma),
                                        temporal_length=state.time_at(len(state.sigma)))
                    if trace is not None:
                        trace.append({"prefix": tuple(state.sigma), "domain": ()})
                    return result("Feasible", cycle)
                if trace is not None:
                    trace.append({"prefix": tuple(state.sigma), "domain": ()})
                state.pop()
                continue
            domain = _order(forward_check(state, config.lsc), state, config, rng)
            if trace is not None:
                trace.append({"prefix": tuple(state.sigma), "domain": tuple(domain)})
            stack.append(iter(domain))
    except _Timeout:
        return result("Timeout")
    return result("Infeasible")


def check_cycle(reduced: ReducedGraph, sequence: list[str]) -> list[str]:
    """Validate a patrol cycle against all five feasibility conditions.

    Returns a list of human-readable violations; an empty list means the
    cycle is feasible on ``reduced``.
    """
    problems: list[str] = []
    if len(sequence) < 2:
        return ["cycle must contain at least two positions"]
    if sequence[0] != sequence[-1]:
        problems.append("cycle does not end at its start")
    csum = [0]
    for frm, to in zip(sequence, sequence[1:]):
        if frm not in reduced.index or to not in reduced.index:
            return problems + [f"unknown target in sequence: {frm!r} or {to!r}"]
        if not reduced.has_arc(frm, to):
            problems.append(f"missing arc ({frm}, {to})")
            csum.append(csum[-1])
        else:
            csum.append(csum[-1] + reduced.weight(frm, to))
    total = csum[-1]
    s = len(sequence)
    for t in reduced.targets:
        positions = [p for p in range(1, s + 1) if sequence[p - 1] == t]
        core = [p for p in positions if p < s]
        if not core:
            problems.append(f"target {t} is never visited")
            continue
        dt = reduced.d[t]
        for p, q in zip(positions, positions[1:]):
            gap = csum[q - 1] - csum[p - 1]
            if gap > dt:
                problems.append(f"target {t}: revisit gap {gap} exceeds d={dt}")
        wrap = csum[positions[0] - 1] + (total - csum[positions[-1] - 1])
        if wrap > dt:
            problems.append(f"target {t}: wrap-around gap {wrap} exceeds d={dt}")
    return problems


def linear_feasibility(reduced: ReducedGraph) -> SearchResult:
    """Decide feasibility when the target graph is a bidirectional path.

    On a path t_1 - t_2 - ... - t_k the only cycle shape worth trying is
    the sweep <t_1, ..., t_k, ..., t_1>; it is optimal among all cycles,
    so checking it decides feasibility in linear time. Raises if the
    graph is not a path.
    """
    t0 = time.monotonic()
    g = reduced
    if g.n == 1:
        t = g.targets[0]
        seq = [t, t]
        problems = check_cycle(g, seq)
        cycle = PatrolCycle(sequence=seq, temporal_length=1)
        return SearchResult(verdict="Feasible" if not problems else "Infeasible",
                            cycle=cycle if not problems else None,
                            nodes_expanded=0,
                            elapsed_ms=(time.monotonic() - t0) * 1000.0)
    neigh: dict[str, set[str]] = {t: set() for t in g.targets}
    for frm, to in g.arcs:
        if frm == to:
            raise InstanceError("linear feasibility: unexpected self-arc")
        if not g.has_arc(to, frm):
            raise InstanceError("linear feasibility: graph is not bidirectional")
        neigh[frm].add(to)
    ends = [t for t in g.targets if len(neigh[t]) == 1]
    if (len(ends) != 2 or any(len(neigh[t]) > 2 for t in g.targets)
            or len(g.arcs) != 2 * (g.n - 1)):
        raise InstanceError("linear feasibility: graph is not a path")
    order = [min(ends)]
    while len(order) < g.n:
        prev = order[-2] if len(order) > 1 else None
        nxt = [v for v in sorted(neigh[order[-1]]) if v != prev]
        if len(nxt) != 1:
            raise InstanceError("linear feasibility: graph is not a path")
        order.append(nxt[0])
    seq = order + order[-2::-1]
    problems = check_cycle(g, seq)
    temporal = sum(g.weight(a, b) for a, b in zip(seq, seq[1:]))
    return SearchResult(verdict="Feasible" if not problems else "Infeasible",
                        cycle=PatrolCycle(sequence=seq, temporal_length=temporal) if not problems else None,
                        nodes_expanded=0,
                        elapsed_ms=(time.monotonic() - t0) * 1000.0)
