"""Random target-graph generation and desk-scale benchmark harnesses.

The generator grows a random bidirectional spanning tree (guaranteeing
strong connectivity), then sprinkles extra arcs up to the requested
budget; penetration times are drawn uniformly from the interval spanned
by the smallest round trip and twice n squared times the largest
pairwise distance. The harnesses aggregate deterministic-search
termination statistics and mixed-pipeline subproblem counts.

Desk-scale defaults run 100 trials under a 60 second budget; the
reference experiments this mirrors used 1000 trials and 600 seconds.
"""

from __future__ import annotations

import time
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat

import numpy as np

from .bilinear_solver import Feasible, SolverConfig
from .det_search import SearchConfig, check_cycle, find_deterministic_strategy
from .dominance import (
    Disconnected,
    fill_intruder_sets,
    remove_dominated_patroller_actions,
)
from .equilibrium import solve_stayout_feasibility
from .model import InstanceError, PatrolInstance
from .reduction import ReducedGraph, all_pairs_shortest_paths

DEFAULT_TRIALS = 100   # desk scale; reference runs used 1000
DEFAULT_BUDGET = 60.0  # seconds per search; reference runs allowed 600


@dataclass(frozen=True)
class GenSpec:
    n: int         # vertex count, every vertex a target
    m: int         # arc budget
    rng_seed: int

    def __post_init__(self) -> None:
        if self.n < 2:
            raise InstanceError("generated graphs need at least two vertices")
        if not self.n <= self.m <= (self.n - 1) * self.n:
            raise InstanceError(
                f"arc budget m={self.m} outside [n, (n-1)n] = "
                f"[{self.n}, {(self.n - 1) * self.n}]")


def _hop_distances(labels: list[str], arcs: set[tuple[str, str]]) -> dict[tuple[str, str], int]:
    out: dict[str, list[str]] = {v: [] for v in labels}
    for frm, to in arcs:
        out[frm].append(to)
    dist: dict[tuple[str, str], int] = {}
    for src in labels:
        seen = {src: 0}
        queue = deque([src])
        while queue:
            cur = queue.popleft()
            for nxt in out[cur]:
                if nxt not in seen:
                    seen[nxt] = seen[cur] + 1
                    queue.append(nxt)
        for dst in labels:
            if dst != src:
                dist[(src, dst)] = seen[dst]
    return dist


def generate_instance(spec: GenSpec) -> ReducedGraph:
    """Draw a random strongly connected unit-weight target graph.

    A random spanning tree laid over a shuffled vertex order is kept in
    both directions, then up to m - n further distinct arcs are added.
    Penetration times are integers drawn uniformly from
    [min round trip, 2 n^2 max pairwise distance].
    """
    rng = np.random.default_rng(spec.rng_seed)
    n = spec.n
    labels = [f"{k + 1:02d}" for k in range(n)]
    order = [labels[i] for i in rng.permutation(n)]
    arcs: set[tuple[str, str]] = set()
    for k in range(1, n):
        parent = order[int(rng.integers(0, k))]
        arcs.add((parent, order[k]))
        arcs.add((order[k], parent))
    pool = sorted((u, v) for u in labels for v in labels
                  if u != v and (u, v) not in arcs)
    extra = min(spec.m - n, len(pool))
    if extra > 0:
        for i in rng.choice(len(pool), size=extra, replace=False):
            arcs.add(pool[int(i)])
    dist = _hop_distances(labels, arcs)
    low = min(dist[(u, v)] + dist[(v, u)]
              for u in labels for v in labels if u != v)
    high = 2 * n * n * max(dist.values())
    d = {t: int(rng.integers(low, high + 1)) for t in labels}
    arc_list = sorted(arcs)
    return ReducedGraph(targets=labels, arcs=arc_list,
                        weights=[1] * len(arc_list), d=d,
                        values={t: (1.0, 1.0) for t in labels}, epsilon=1.0)


def config_label(config: SearchConfig) -> str:
    parts = [config.heuristic]
    parts += [flag for flag in ("rtb", "lsc", "ifc") if getattr(config, flag)]
    return "+".join(parts)


@dataclass
class DetRow:
    config: str
    n: int
    trials: int
    termination_pct: float
    mean_ms: float  # statistics over terminated runs only
    std_ms: float
    max_ms: float
    min_ms: float
    verdicts: dict[str, int]


@dataclass
class MixedRow:
    name: str
    targets: int
    vertices: int
    complete: int     # all enter-when pairs: |T| x |V|
    reduced_p: int    # after patroller pruning: |T| x |V_r|
    reduced_pi: int   # after both prunings: sum of |V_t|
    stayout_verdict: str
    stayout_ms: float


@dataclass
class BenchReport:
    trials: int
    budget_s: float
    det_rows: list[DetRow] = field(default_factory=list)
    mixed_rows: list[MixedRow] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "desk_scale": {"trials": self.trials, "budget_s": self.budget_s,
                           "reference": {"trials": 1000, "budget_s": 600.0}},
            "det": [vars(r).copy() for r in self.det_rows],
            "mixed": [vars(r).copy() for r in self.mixed_rows],
        }

    def text_table(self) -> str:
        lines = []
        if self.det_rows:
            header = ["config", "n", "%", "time", "dev", "max", "min", "verdicts"]
            rows = [[r.config, str(r.n), f"{r.termination_pct:.1f}",
                     f"{r.mean_ms:.1f}", f"{r.std_ms:.1f}", f"{r.max_ms:.1f}",
                     f"{r.min_ms:.1f}",
                     " ".join(f"{k}:{v}" for k, v in sorted(r.verdicts.items()))]
                    for r in self.det_rows]
            lines += _align([header] + rows)
        if self.mixed_rows:
            if lines:
                lines.append("")
            header = ["instance", "|T|", "|V|", "complete", "reduced-p",
                      "reduced-p+i", "stay-out", "ms"]
            rows = [[r.name, str(r.targets), str(r.vertices), str(r.complete),
                     str(r.reduced_p), str(r.reduced_pi), r.stayout_verdict,
                     f"{r.stayout_ms:.0f}"]
                    for r in self.mixed_rows]
            lines += _align([header] + rows)
        return "\n".join(lines)


def _align(rows: list[list[str]]) -> list[str]:
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    return ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip()
            for row in rows]


def _trial_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(parts).generate_state(1)[0])


def _det_trial(config: SearchConfig, n: int, budget: float,
               ts: int) -> tuple[str, float, list[str]]:
    rng = np.random.default_rng(ts)
    m = int(rng.integers(n, (n - 1) * n + 1))
    g = generate_instance(GenSpec(n=n, m=m, rng_seed=ts))
    run_cfg = replace(config, time_budget=budget, rng_seed=ts)
    res = find_deterministic_strategy(g, run_cfg)
    problems = (check_cycle(g, res.cycle.sequence)
                if res.verdict == "Feasible" else [])
    return res.verdict, res.elapsed_ms, problems


def run_det_benchmark(configs: list[SearchConfig], sizes: list[int],
                      trials: int = DEFAULT_TRIALS,
                      budget: float = DEFAULT_BUDGET,
                      seed: int = 0, jobs: int = 1) -> BenchReport:
    """Termination statistics for the cycle search across configurations.

    Each trial draws the arc budget uniformly from [n, (n-1)n] and a
    fresh instance; the per-trial seed depends only on (seed, n, trial),
    so every configuration faces identical instances and results do not
    depend on ``jobs``. Feasible verdicts are re-verified before being
    counted.
    """
    if trials < 1:
        raise InstanceError("benchmarks need at least one trial")
    if jobs < 1:
        raise InstanceError("jobs must be at least 1")
    report = BenchReport(trials=trials, budget_s=budget)
    for config in configs:
        for n in sizes:
            times = []
            verdicts: dict[str, int] = {}
            seeds = [_trial_seed(seed, n, k) for k in range(trials)]
            if jobs == 1:
                outcomes = [_det_trial(config, n, budget, ts) for ts in seeds]
            else:
                with ProcessPoolExecutor(max_workers=jobs) as pool:
                    outcomes = list(pool.map(_det_trial, repeat(config),
                                             repeat(n), repeat(budget), seeds))
            for ts, (verdict, elapsed, problems) in zip(seeds, outcomes):
                if problems:
                    raise RuntimeError(
                        f"unsound Feasible on seed {ts}: {problems}")
                verdicts[verdict] = verdicts.get(verdict, 0) + 1
                if verdict != "Timeout":
                    times.append(elapsed)
            row = DetRow(
                config=config_label(config), n=n, trials=trials,
                termination_pct=100.0 * len(times) / trials,
                mean_ms=float(np.mean(times)) if times else 0.0,
                std_ms=float(np.std(times)) if times else 0.0,
                max_ms=float(np.max(times)) if times else 0.0,
                min_ms=float(np.min(times)) if times else 0.0,
                verdicts=verdicts)
            report.det_rows.append(row)
    return report


def run_mixed_benchmark(instances: list[PatrolInstance],
                        nlp: SolverConfig,
                        names: list[str] | None = None) -> BenchReport:
    """Subproblem counts for the randomized pipeline, per instance.

    Counts candidate best-response problems under three enumerations:
    every (target, vertex) pair, pairs surviving patroller pruning, and
    pairs surviving both prunings (sum of |V_t|). The stay-out
    feasibility program runs once per instance as the representative
    solver cost.
    """
    report = BenchReport(trials=len(instances), budget_s=0.0)
    for k, inst in enumerate(instances):
        name = names[k] if names else f"#{k + 1}"
        n_targets = len(inst.targets)
        complete = n_targets * inst.n
        dom = remove_dominated_patroller_actions(
            inst, all_pairs_shortest_paths(inst))
        if isinstance(dom, Disconnected):
            report.mixed_rows.append(MixedRow(
                name=name, targets=n_targets, vertices=inst.n,
                complete=complete, reduced_p=0, reduced_pi=0,
                stayout_verdict="Disconnected", stayout_ms=0.0))
            continue
        fill_intruder_sets(dom)
        t0 = time.monotonic()
        stay = solve_stayout_feasibility(dom, nlp)
        elapsed = (time.monotonic() - t0) * 1000.0
        verdict = "Feasible" if isinstance(stay, Feasible) else "NotFound"
        report.mixed_rows.append(MixedRow(
            name=name, targets=n_targets, vertices=inst.n,
            complete=complete, reduced_p=n_targets * dom.base.n,
            reduced_pi=dom.subproblem_count(),
            stayout_verdict=verdict, stayout_ms=elapsed))
    return report
