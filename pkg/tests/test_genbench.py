"""Random-graph generator and benchmark harness checks."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patroleq.bilinear_solver import SolverConfig
from patroleq.det_search import SearchConfig
from patroleq.genbench import (
    DEFAULT_BUDGET,
    DEFAULT_TRIALS,
    GenSpec,
    config_label,
    generate_instance,
    run_det_benchmark,
    run_mixed_benchmark,
)
from patroleq.model import InstanceError, PatrolInstance, TargetSpec, load_instance

FIXTURES = "src/patroleq/fixtures"
FAST = SearchConfig(heuristic="min_visits", rtb=True, lsc=True, ifc=True)
NLP = SolverConfig(starts=2, max_iters=40, outer_rounds=4)


def test_genspec_rejects_out_of_range_budgets():
    GenSpec(n=2, m=2, rng_seed=0)
    with pytest.raises(InstanceError):
        GenSpec(n=1, m=1, rng_seed=0)
    with pytest.raises(InstanceError):
        GenSpec(n=4, m=3, rng_seed=0)
    with pytest.raises(InstanceError):
        GenSpec(n=3, m=7, rng_seed=0)


def test_full_budget_yields_complete_graph_and_documented_d_interval():
    for seed in range(20):
        g = generate_instance(GenSpec(n=3, m=6, rng_seed=seed))
        assert sorted(g.arcs) == [(u, v) for u in g.targets for v in g.targets
                                  if u != v]
        assert all(2 <= g.d[t] <= 18 for t in g.targets)


def test_two_vertices_give_the_bidirectional_pair():
    for seed in range(20):
        g = generate_instance(GenSpec(n=2, m=2, rng_seed=seed))
        assert sorted(g.arcs) == [("01", "02"), ("02", "01")]
        assert all(2 <= g.d[t] <= 8 for t in g.targets)


def test_same_seed_reproduces_the_instance():
    a = generate_instance(GenSpec(n=6, m=14, rng_seed=42))
    b = generate_instance(GenSpec(n=6, m=14, rng_seed=42))
    assert a.arcs == b.arcs and a.d == b.d and a.weights == b.weights
    c = generate_instance(GenSpec(n=6, m=14, rng_seed=43))
    assert c.arcs != a.arcs or c.d != a.d


@settings(max_examples=60, deadline=None)
@given(data=st.data())
def test_generated_graphs_are_simple_strongly_connected_with_d_in_range(data):
    n = data.draw(st.integers(2, 7), label="n")
    m = data.draw(st.integers(n, (n - 1) * n), label="m")
    seed = data.draw(st.integers(0, 2**32 - 1), label="seed")
    g = generate_instance(GenSpec(n=n, m=m, rng_seed=seed))
    assert len(set(g.arcs)) == len(g.arcs)
    assert all(u != v for u, v in g.arcs)
    table = g.shortest_path_table()
    dists = [table.distance(u, v) for u in g.targets for v in g.targets if u != v]
    assert all(d != float("inf") for d in dists)
    low = min(table.distance(u, v) + table.distance(v, u)
              for u in g.targets for v in g.targets if u != v)
    high = 2 * n * n * max(dists)
    assert all(low <= g.d[t] <= high for t in g.targets)


def test_desk_scale_defaults():
    assert DEFAULT_TRIALS == 100
    assert DEFAULT_BUDGET == 60.0


def test_config_label_lists_active_refinements():
    assert config_label(SearchConfig()) == "lex"
    assert config_label(FAST) == "min_visits+rtb+lsc+ifc"


def test_det_benchmark_single_trial_has_zero_deviation():
    rep = run_det_benchmark([FAST], sizes=[3], trials=1, budget=10.0, seed=0)
    (row,) = rep.det_rows
    assert row.std_ms == 0.0
    assert sum(row.verdicts.values()) == 1
    assert 0.0 <= row.termination_pct <= 100.0


def test_det_benchmark_counts_sum_to_trials():
    rep = run_det_benchmark([FAST, SearchConfig()], sizes=[3, 4],
                            trials=6, budget=10.0, seed=3)
    assert len(rep.det_rows) == 4
    for row in rep.det_rows:
        assert sum(row.verdicts.values()) == rep.trials == 6
        assert 0.0 <= row.termination_pct <= 100.0
        assert row.min_ms <= row.mean_ms <= row.max_ms


def test_det_benchmark_rejects_zero_trials():
    with pytest.raises(InstanceError):
        run_det_benchmark([FAST], sizes=[3], trials=0)


def test_every_feasible_verdict_is_reverified(monkeypatch):
    import patroleq.genbench as gb

    monkeypatch.setattr(gb, "check_cycle", lambda g, seq: ["injected flaw"])
    with pytest.raises(RuntimeError, match="injected flaw"):
        run_det_benchmark([FAST], sizes=[3], trials=6, budget=10.0, seed=0)


def test_mixed_benchmark_counts_on_circuit_fixtures():
    corridor = load_instance(f"{FIXTURES}/corridor_10.json")
    ring = load_instance(f"{FIXTURES}/ring_15.json")
    rep = run_mixed_benchmark([corridor, ring], NLP,
                              names=["corridor_10", "ring_15"])
    by_name = {r.name: r for r in rep.mixed_rows}
    assert by_name["corridor_10"].complete == 90
    assert by_name["corridor_10"].reduced_pi == 18
    assert by_name["ring_15"].complete == 225
    assert by_name["ring_15"].reduced_pi == 30
    for row in by_name.values():
        assert 5 * row.reduced_pi <= row.complete


def test_mixed_benchmark_single_vertex_counts_are_one():
    lone = PatrolInstance(vertices=["t"], arcs=[],
                          targets=[TargetSpec("t", 1, 1.0, 1.0)], epsilon=1.0)
    rep = run_mixed_benchmark([lone], NLP)
    (row,) = rep.mixed_rows
    assert row.complete == 1 and row.reduced_p == 1 and row.reduced_pi == 1
    assert row.stayout_verdict == "Feasible"


def test_mixed_benchmark_records_uncoverable_instances():
    apart = PatrolInstance(vertices=["a", "b"], arcs=[],
                           targets=[TargetSpec("a", 1, 1.0, 1.0),
                                    TargetSpec("b", 1, 1.0, 1.0)],
                           epsilon=1.0)
    rep = run_mixed_benchmark([apart], NLP)
    (row,) = rep.mixed_rows
    assert row.stayout_verdict == "Disconnected"
    assert row.reduced_pi == 0


def test_report_serializes_and_tabulates():
    rep = run_det_benchmark([FAST], sizes=[3], trials=2, budget=10.0, seed=1)
    corridor = load_instance(f"{FIXTURES}/corridor_10.json")
    rep.mixed_rows = run_mixed_benchmark([corridor], NLP,
                                         names=["corridor_10"]).mixed_rows
    data = rep.to_json_dict()
    assert data["desk_scale"]["reference"] == {"trials": 1000, "budget_s": 600.0}
    json.dumps(data)
    table = rep.text_table()
    lines = table.splitlines()
    assert lines[0].startswith("config")
    assert any(line.startswith("instance") for line in lines)
    assert any("corridor_10" in line for line in lines)
