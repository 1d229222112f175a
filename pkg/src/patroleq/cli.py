"""Command-line front end for the patrolling pipeline.

Subcommands cover every stage: instance reduction, deterministic cycle
search, dominance analysis, full equilibrium solving, strategy
verification, random instance generation, and the benchmark harnesses.
Output is machine-readable JSON on stdout with sorted keys, so a fixed
seed reproduces a run byte for byte apart from the timestamp and wall
clock measurements; --pretty indents the JSON and renders benchmark
tables on stderr. Exit codes: 0 for any computed answer (infeasible,
not-found, and disconnected verdicts are answers), 1 for input errors,
2 when a time budget expires before an answer. Set PATROL_EQ_LOG=path
to capture solver iteration traces as JSON lines.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from .bilinear_solver import SolverConfig
from .det_search import PatrolCycle, SearchConfig, find_deterministic_strategy
from .dominance import (
    Disconnected,
    ReducedInstance,
    fill_intruder_sets,
    remove_dominated_patroller_actions,
)
from .equilibrium import (
    EquilibriumResult,
    NoEquilibriumFound,
    PipelineConfig,
    solve,
    solve_strictly_competitive,
    solve_with_target_dropping,
)
from .genbench import (
    DEFAULT_BUDGET,
    DEFAULT_TRIALS,
    GenSpec,
    generate_instance,
    run_det_benchmark,
    run_mixed_benchmark,
)
from .markov import (
    IntruderAction,
    MarkovStrategy,
    action_utilities,
    capture_probability,
    simulate,
)
from .model import InstanceError, PatrolInstance, instance_from_dict, load_instance
from .reduction import all_pairs_shortest_paths, load_reduced, reduce

EU_AGREEMENT_TOL = 1e-8


class _Parser(argparse.ArgumentParser):
    """Argument errors are input errors and must exit 1, not argparse's 2."""

    def error(self, message):
        self.exit(1, f"{self.prog}: error: {message}\n")


def _fresh_seed() -> int:
    return int(np.random.SeedSequence().generate_state(1)[0])


def _emit(payload: dict, args) -> None:
    data = {"schema_version": 1,
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())}
    data.update(payload)
    text = json.dumps(data, indent=2 if args.pretty else None, sort_keys=True)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    print(text)


def _walk_capture(walk: list[str], t: str, z: str, d: int) -> float | None:
    """Capture chance of enter-when(t,z) against a closed unit-step walk.

    Deterministic patrols are all-or-nothing: the intruder knows the
    phase, so capture is 1 only when every sighting of z is followed by
    a visit to t within d steps. None when z is never visited (the entry
    is never triggered).
    """
    core = walk[:-1]
    cycle_len = len(core)
    hits = [i for i, v in enumerate(core) if v == z]
    if not hits:
        return None
    for i in hits:
        if not any(core[(i + k) % cycle_len] == t for k in range(1, d + 1)):
            return 0.0
    return 1.0


def _det_action_eus(inst: PatrolInstance, walk: list[str],
                    action: IntruderAction) -> tuple[float, float, float | None]:
    total_vp = sum(t.v_p for t in inst.targets)
    if action.kind == "stay_out":
        return 0.0, total_vp, None
    spec = inst.target(action.t)
    cap = _walk_capture(walk, action.t, action.z, spec.d)
    if cap is None:
        return 0.0, total_vp, None
    eu_i = cap * (-inst.epsilon) + (1.0 - cap) * spec.v_i
    eu_p = total_vp - (1.0 - cap) * spec.v_p
    return eu_i, eu_p, cap


def _strategy_dict(strategy) -> dict:
    if isinstance(strategy, PatrolCycle):
        return {"kind": "cycle", "sequence": list(strategy.sequence),
                "temporal_length": int(strategy.temporal_length)}
    return {"kind": "markov", "vertices": strategy.vertices(),
            "alpha": [[float(x) for x in row] for row in strategy.alpha]}


def _equilibrium_payload(result: EquilibriumResult, inst: PatrolInstance,
                         dropped: list[str], seed: int) -> dict:
    payload = {
        "verdict": "equilibrium",
        "deterministic": result.deterministic,
        "patroller_eu": result.patroller_eu,
        "intruder_eu": result.intruder_eu,
        "intruder_response": str(result.intruder_response),
        "covers_all_targets": result.covers_all_targets,
        "slacks": dict(sorted(result.slacks.items())),
        "dropped_targets": dropped,
        "strategy": _strategy_dict(result.strategy),
        "instance": inst.to_json_dict(),
        "seed": seed,
    }
    table = []
    if result.deterministic:
        walk = list(result.strategy.sequence)
        actions = [IntruderAction.stay_out()]
        actions += [IntruderAction.parse(key) for key in sorted(result.slacks)]
        for action in actions:
            eu_i, eu_p, cap = _det_action_eus(inst, walk, action)
            table.append({"action": str(action), "intruder_eu": eu_i,
                          "patroller_eu": eu_p, "capture_probability": cap})
    else:
        red = result.strategy.reduced
        payload["reduced_instance"] = {
            "instance": red.base.to_json_dict(),
            "removed_vertices": list(red.removed_vertices),
            "V_t": {t: list(v) for t, v in sorted(red.V_t.items())},
        }
        actions = [IntruderAction.stay_out()]
        actions += [IntruderAction.enter_when(t, z)
                    for t in sorted(red.V_t) for z in red.V_t[t]]
        for action in actions:
            eu_i, eu_p = action_utilities(result.strategy, action, red)
            cap = (capture_probability(result.strategy, action.t, action.z)
                   if action.kind == "enter_when" else None)
            table.append({"action": str(action), "intruder_eu": eu_i,
                          "patroller_eu": eu_p, "capture_probability": cap})
    payload["action_eus"] = table
    return payload


def cmd_reduce(args) -> int:
    inst = load_instance(args.instance)
    _emit(reduce(inst).to_json_dict(), args)
    return 0


def cmd_solve_det(args) -> int:
    graph = load_reduced(args.graph)
    seed = args.seed if args.seed is not None else _fresh_seed()
    config = SearchConfig(heuristic=args.heuristic, rtb=args.rtb,
                          lsc=args.lsc, ifc=args.ifc,
                          time_budget=args.budget, rng_seed=seed)
    res = find_deterministic_strategy(graph, config)
    payload = {
        "verdict": res.verdict.lower(),
        "cycle": list(res.cycle.sequence) if res.cycle else None,
        "temporal_length": int(res.cycle.temporal_length) if res.cycle else None,
        "nodes_expanded": res.nodes_expanded,
        "elapsed_ms": res.elapsed_ms,
        "seed": seed,
    }
    _emit(payload, args)
    return 2 if res.verdict == "Timeout" else 0


def cmd_dominance(args) -> int:
    inst = load_instance(args.instance)
    dom = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    if isinstance(dom, Disconnected):
        _emit({"verdict": "disconnected", "reason": dom.reason}, args)
        return 0
    fill_intruder_sets(dom)
    _emit({"verdict": "reduced",
           "removed_vertices": list(dom.removed_vertices),
           "kept_vertices": list(dom.kept_vertices),
           "V_t": {t: list(v) for t, v in sorted(dom.V_t.items())}}, args)
    return 0


def cmd_solve(args) -> int:
    inst = load_instance(args.instance)
    seed = args.seed if args.seed is not None else _fresh_seed()
    config = PipelineConfig(
        det=SearchConfig(heuristic="min_visits", rtb=True, lsc=True, ifc=True,
                         time_budget=args.det_budget, rng_seed=seed),
        nlp=SolverConfig(starts=args.starts, max_iters=args.max_iters,
                         outer_rounds=args.outer_rounds, rng_seed=seed),
        allow_strictly_competitive_shortcut=args.strictly_competitive != "off",
        drop_targets_if_uncovered=args.drop_targets)
    dropped: list[str] = []
    if args.drop_targets:
        result, dropped = solve_with_target_dropping(inst, config, mode="mixed")
    elif args.strictly_competitive == "on":
        dom = remove_dominated_patroller_actions(
            inst, all_pairs_shortest_paths(inst))
        if isinstance(dom, Disconnected):
            _emit({"verdict": "disconnected", "reason": dom.reason}, args)
            return 0
        result = solve_strictly_competitive(fill_intruder_sets(dom), config.nlp)
    else:
        result = solve(inst, config)
    if isinstance(result, Disconnected):
        _emit({"verdict": "disconnected", "reason": result.reason}, args)
        return 0
    if isinstance(result, NoEquilibriumFound):
        _emit({"verdict": "no-equilibrium-found",
               "best_violation": result.best_violation, "seed": seed}, args)
        return 0
    solved = inst
    if dropped:
        solved = PatrolInstance(
            vertices=inst.vertices, arcs=inst.arcs,
            targets=[t for t in inst.targets if t.id not in set(dropped)],
            epsilon=inst.epsilon)
    _emit(_equilibrium_payload(result, solved, dropped, seed), args)
    return 0


def _load_markov(data: dict) -> MarkovStrategy:
    try:
        embedded = data["reduced_instance"]
        base = instance_from_dict(embedded["instance"])
        red = ReducedInstance(
            base=base,
            removed_vertices=[str(v) for v in embedded["removed_vertices"]],
            V_t={str(t): [str(z) for z in zs]
                 for t, zs in embedded["V_t"].items()})
        alpha = np.asarray(data["strategy"]["alpha"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise InstanceError(f"malformed strategy JSON: {exc!r}") from exc
    return MarkovStrategy(reduced=red, alpha=alpha)


def cmd_verify(args) -> int:
    with open(args.strategy, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or "strategy" not in data:
        raise InstanceError(
            f"{args.strategy}: not a solve output with a strategy "
            f"(verdict: {data.get('verdict', 'missing') if isinstance(data, dict) else '?'})")
    action = IntruderAction.parse(args.action or data["intruder_response"])
    kind = data["strategy"].get("kind")
    payload: dict = {"action": str(action)}
    if kind == "markov":
        strategy = _load_markov(data)
        eu_i, eu_p = action_utilities(strategy, action, strategy.reduced)
        payload["capture_probability"] = (
            capture_probability(strategy, action.t, action.z)
            if action.kind == "enter_when" else None)
        if args.simulate:
            seed = args.seed if args.seed is not None else _fresh_seed()
            payload["empirical_capture"] = simulate(strategy, action,
                                                    args.simulate, seed)
            payload["simulate_trials"] = args.simulate
            payload["seed"] = seed
    elif kind == "cycle":
        if args.simulate:
            raise InstanceError(
                "deterministic strategies are verified exactly; drop --simulate")
        inst = instance_from_dict(data["instance"])
        walk = [str(v) for v in data["strategy"]["sequence"]]
        eu_i, eu_p, cap = _det_action_eus(inst, walk, action)
        payload["capture_probability"] = cap
    else:
        raise InstanceError(f"unknown strategy kind {kind!r}")
    payload["intruder_eu"] = eu_i
    payload["patroller_eu"] = eu_p
    if str(action) == data.get("intruder_response"):
        gap = max(abs(eu_i - float(data["intruder_eu"])),
                  abs(eu_p - float(data["patroller_eu"])))
        payload["declared_intruder_eu"] = data["intruder_eu"]
        payload["declared_patroller_eu"] = data["patroller_eu"]
        payload["eu_agreement"] = gap
        payload["matches_declared"] = bool(gap <= EU_AGREEMENT_TOL)
    _emit(payload, args)
    return 0


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else _fresh_seed()
    g = generate_instance(GenSpec(n=args.n, m=args.m, rng_seed=seed))
    payload = g.to_json_dict()
    payload["seed"] = seed
    _emit(payload, args)
    return 0


def _parse_config_token(token: str) -> SearchConfig:
    parts = token.split("+")
    heuristic, flags = parts[0], parts[1:]
    if heuristic not in ("lex", "min_visits"):
        raise InstanceError(f"unknown heuristic {heuristic!r} in --config")
    if any(f not in ("rtb", "lsc", "ifc") for f in flags):
        raise InstanceError(f"unknown refinement in --config {token!r}")
    return SearchConfig(heuristic=heuristic, rtb="rtb" in flags,
                        lsc="lsc" in flags, ifc="ifc" in flags)


def cmd_bench_det(args) -> int:
    configs = [_parse_config_token(tok) for tok in args.config]
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    except ValueError as exc:
        raise InstanceError(f"--sizes must be comma-separated integers: {exc}")
    if not sizes:
        raise InstanceError("--sizes named no graph sizes")
    seed = args.seed if args.seed is not None else _fresh_seed()
    report = run_det_benchmark(configs, sizes, trials=args.trials,
                               budget=args.budget, seed=seed, jobs=args.jobs)
    payload = report.to_json_dict()
    payload["seed"] = seed
    _emit(payload, args)
    if args.pretty:
        print(report.text_table(), file=sys.stderr)
    return 0


def cmd_bench_mixed(args) -> int:
    root = Path(args.fixtures)
    if not root.is_dir():
        raise InstanceError(f"{args.fixtures}: not a directory")
    instances, names = [], []
    for path in sorted(root.glob("*.json")) + sorted(root.glob("*.grid")):
        if path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as fh:
                try:
                    raw = json.load(fh)
                except json.JSONDecodeError as exc:
                    raise InstanceError(f"{path}: not valid JSON: {exc}")
            if not isinstance(raw, dict) or raw.get("kind", "instance") != "instance":
                continue
        instances.append(load_instance(str(path)))
        names.append(path.stem)
    if not instances:
        raise InstanceError(f"no instance fixtures found in {args.fixtures}")
    seed = args.seed if args.seed is not None else _fresh_seed()
    nlp = SolverConfig(starts=args.starts, max_iters=args.max_iters,
                       outer_rounds=args.outer_rounds, rng_seed=seed)
    report = run_mixed_benchmark(instances, nlp, names=names)
    payload = report.to_json_dict()
    payload["seed"] = seed
    _emit(payload, args)
    if args.pretty:
        print(report.text_table(), file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="patroleq",
        description="Equilibrium patrolling strategies on directed graphs.",
        epilog="Set PATROL_EQ_LOG=path to write solver iteration traces.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--pretty", action="store_true",
                       help="indent JSON; render benchmark tables on stderr")
        p.add_argument("--out", help="also write the JSON to this file")

    p = sub.add_parser("reduce", help="emit the reduced target graph")
    p.add_argument("--instance", required=True)
    common(p)
    p.set_defaults(func=cmd_reduce)

    p = sub.add_parser("solve-det", help="search for a feasible patrol cycle")
    p.add_argument("--graph", required=True, help="reduced target-graph JSON")
    p.add_argument("--heuristic", choices=["lex", "min_visits"], default="lex")
    p.add_argument("--rtb", action="store_true")
    p.add_argument("--lsc", action="store_true")
    p.add_argument("--ifc", action="store_true")
    p.add_argument("--budget", type=float, default=60.0)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_solve_det)

    p = sub.add_parser("dominance", help="remove dominated actions")
    p.add_argument("--instance", required=True)
    common(p)
    p.set_defaults(func=cmd_dominance)

    p = sub.add_parser("solve", help="compute an equilibrium strategy")
    p.add_argument("--instance", required=True)
    p.add_argument("--strictly-competitive", choices=["auto", "on", "off"],
                   default="auto")
    p.add_argument("--drop-targets", action="store_true",
                   help="drop lowest-value uncovered targets and re-solve")
    p.add_argument("--seed", type=int)
    p.add_argument("--det-budget", type=float, default=60.0)
    p.add_argument("--starts", type=int, default=32)
    p.add_argument("--max-iters", type=int, default=200)
    p.add_argument("--outer-rounds", type=int, default=12)
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="recompute utilities for a strategy")
    p.add_argument("--strategy", required=True, help="solve output JSON")
    p.add_argument("--action", help='e.g. "enter-when(t,z)" or "stay-out"; '
                                    "defaults to the declared response")
    p.add_argument("--simulate", type=int)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("generate", help="draw a random target graph")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int)
    common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("bench-det", help="cycle-search termination benchmark")
    p.add_argument("--config", action="append",
                   default=None,
                   help="heuristic plus refinements, e.g. min_visits+rtb+lsc+ifc;"
                        " repeatable")
    p.add_argument("--sizes", default="3,4,5")
    p.add_argument("--trials", type=int, default=DEFAULT_TRIALS)
    p.add_argument("--budget", type=float, default=DEFAULT_BUDGET)
    p.add_argument("--seed", type=int)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    common(p)
    p.set_defaults(func=cmd_bench_det)

    p = sub.add_parser("bench-mixed", help="subproblem-count benchmark")
    p.add_argument("--fixtures", required=True,
                   help="directory of instance JSON/grid files")
    p.add_argument("--seed", type=int)
    p.add_argument("--starts", type=int, default=4)
    p.add_argument("--max-iters", type=int, default=60)
    p.add_argument("--outer-rounds", type=int, default=6)
    common(p)
    p.set_defaults(func=cmd_bench_mixed)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "bench-det" and args.config is None:
        args.config = ["min_visits+rtb+lsc+ifc"]
    try:
        return args.func(args)
    except (InstanceError, OSError, json.JSONDecodeError) as exc:
        print(json.dumps({"schema_version": 1, "error": str(exc)},
                         sort_keys=True))
        return 1


if __name__ == "__main__":
    sys.exit(main())
