"""Tests for patroller- and intruder-side action pruning."""

import math

import pytest
from hypothesis import given, settings, strategies as st

from oracles import all_pairs_hop_distances, entry_set
from patroleq.dominance import (
    Disconnected,
    ReducedInstance,
    compute_nondominated_intruder_vertices,
    fill_intruder_sets,
    remove_dominated_patroller_actions,
)
from patroleq.model import PatrolInstance, TargetSpec, load_instance
from patroleq.reduction import all_pairs_shortest_paths

FIXTURES = "src/patroleq/fixtures"

MUSEUM_REMOVED = ["04", "05", "09", "10", "15", "16", "17", "20",
                  "25", "26", "27", "28", "29"]

MUSEUM_V_T = {
    "06": ["06", "12", "14", "19", "24"],
    "08": ["08", "12", "14", "18", "21", "22"],
    "12": ["12", "03", "07", "08", "14", "19", "23", "24"],
    "14": ["14", "01", "06", "12", "18", "21"],
    "18": ["18", "07", "08", "12", "14"],
}


@pytest.fixture(scope="module")
def museum():
    return load_instance(f"{FIXTURES}/museum.grid")


@pytest.fixture(scope="module")
def museum_reduced(museum):
    red = remove_dominated_patroller_actions(
        museum, all_pairs_shortest_paths(museum))
    assert isinstance(red, ReducedInstance)
    return fill_intruder_sets(red)


def path_instance(labels, targets, epsilon=1.0):
    arcs = []
    for a, b in zip(labels, labels[1:]):
        arcs += [(a, b), (b, a)]
    return PatrolInstance(vertices=list(labels), arcs=arcs,
                          targets=targets, epsilon=epsilon)


def test_museum_removed_vertices(museum_reduced):
    assert museum_reduced.removed_vertices == MUSEUM_REMOVED
    assert len(museum_reduced.kept_vertices) == 16
    for t in museum_reduced.base.target_ids:
        assert t in museum_reduced.kept_vertices


def test_museum_kept_graph_is_induced(museum, museum_reduced):
    kept = set(museum_reduced.kept_vertices)
    expected = [(u, v) for u, v in museum.arcs if u in kept and v in kept]
    assert museum_reduced.base.arcs == expected
    order = [v for v in museum.vertices if v in kept]
    assert museum_reduced.kept_vertices == order
    assert museum_reduced.base.targets == museum.targets
    assert museum_reduced.base.epsilon == museum.epsilon


def test_museum_intruder_sets(museum_reduced):
    assert museum_reduced.V_t == MUSEUM_V_T
    assert museum_reduced.subproblem_count() == 30


def test_museum_far_observations_pruned(museum_reduced):
    # watching right outside a ward is pointless when every timely patrol
    # route into it passes the watch point anyway
    assert "13" not in museum_reduced.V_t["06"]
    assert "02" not in museum_reduced.V_t["08"]


def test_museum_entry_sets_well_formed(museum_reduced):
    kept = set(museum_reduced.kept_vertices)
    for t, vs in museum_reduced.V_t.items():
        assert vs[0] == t
        assert vs[1:] == sorted(vs[1:])
        assert set(vs) <= kept


def test_complete_graph_keeps_everything():
    verts = ["a", "b", "c", "d"]
    arcs = [(u, v) for u in verts for v in verts if u != v]
    targets = [TargetSpec(v, 4, 1.0, 1.0) for v in verts]
    inst = PatrolInstance(vertices=verts, arcs=arcs, targets=targets,
                          epsilon=1.0)
    red = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(red, ReducedInstance)
    assert red.removed_vertices == []
    fill_intruder_sets(red)
    # removing any single vertex leaves every other one within reach, so
    # no observation point dominates another
    for t in verts:
        assert red.V_t[t] == [t] + sorted(v for v in verts if v != t)


def test_single_vertex_instance():
    inst = PatrolInstance(vertices=["t"], arcs=[],
                          targets=[TargetSpec("t", 1, 1.0, 1.0)], epsilon=1.0)
    red = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(red, ReducedInstance)
    assert red.kept_vertices == ["t"]
    assert compute_nondominated_intruder_vertices(red, "t") == ["t"]


def test_single_target_collapses_to_the_target():
    # with one target the only useful patroller vertex is the target itself
    inst = path_instance(["a", "b", "c", "t"],
                         [TargetSpec("t", 3, 1.0, 1.0)])
    red = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(red, ReducedInstance)
    assert red.kept_vertices == ["t"]
    assert red.removed_vertices == ["a", "b", "c"]


def test_directed_geodesic_membership():
    # one-way cycle a -> b -> c -> a: b lies on the only a-to-c route, so it
    # must survive; w sits on no shortest route between targets and goes
    inst = PatrolInstance(
        vertices=["a", "b", "c", "w"],
        arcs=[("a", "b"), ("b", "c"), ("c", "a"), ("a", "w"), ("w", "a")],
        targets=[TargetSpec("a", 3, 1.0, 1.0), TargetSpec("c", 3, 1.0, 1.0)],
        epsilon=1.0,
    )
    red = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(red, ReducedInstance)
    assert red.kept_vertices == ["a", "b", "c"]
    assert red.removed_vertices == ["w"]


def test_disconnected_when_target_misses_deadline():
    inst = path_instance(["a", "b", "c"],
                         [TargetSpec("a", 9, 1.0, 1.0),
                          TargetSpec("c", 1, 1.0, 1.0)])
    res = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(res, Disconnected)
    assert "target a" in res.reason


def test_disconnected_when_residue_splits():
    # y reaches t quickly but nothing comes back, so no patrol can use it
    # and the one-way strand breaks strong connectivity
    inst = PatrolInstance(
        vertices=["t", "x", "y"],
        arcs=[("t", "x"), ("x", "t"), ("y", "t")],
        targets=[TargetSpec("t", 5, 1.0, 1.0)],
        epsilon=1.0,
    )
    res = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(res, Disconnected)
    assert "cut off" in res.reason


def test_adjacent_observation_dominated_on_a_path():
    # targets at both ends of a - b - c: every timely patrol from c toward
    # a is forced through b first, so watching b adds nothing over c
    inst = path_instance(["a", "b", "c"],
                         [TargetSpec("a", 2, 1.0, 1.0),
                          TargetSpec("c", 2, 1.0, 1.0)])
    red = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    assert isinstance(red, ReducedInstance)
    fill_intruder_sets(red)
    assert red.V_t == {"a": ["a", "c"], "c": ["c", "a"]}
    assert red.V_t["a"] == entry_set(red.base, "a")
    assert red.V_t["c"] == entry_set(red.base, "c")


def oracle_keep(inst):
    """Expected kept vertices, recomputed from Floyd-Warshall distances.

    Returns None when no single patroller can cover every target.
    """
    arcs = [(u, v) for u, v in inst.arcs if u != v]
    dist = all_pairs_hop_distances(inst.vertices, arcs)
    deadlines = {t.id: t.d for t in inst.targets}
    step1 = [v for v in inst.vertices
             if all(dist[(v, t)] <= dt for t, dt in deadlines.items())]
    if any(t not in step1 for t in deadlines):
        return None
    sub_arcs = [(u, v) for u, v in arcs if u in step1 and v in step1]
    d2 = all_pairs_hop_distances(step1, sub_arcs)
    if any(d2[(u, v)] == math.inf for u in step1 for v in step1):
        return None
    keep = set(deadlines)
    for t1 in deadlines:
        for t2 in deadlines:
            if t1 == t2:
                continue
            for v in step1:
                if d2[(t1, v)] + d2[(v, t2)] == d2[(t1, t2)]:
                    keep.add(v)
    return [v for v in inst.vertices if v in keep]


labels = st.integers(0, 9).map(lambda i: f"v{i}")


@st.composite
def small_instances(draw):
    verts = sorted(draw(st.sets(labels, min_size=2, max_size=5)))
    arcs = set()
    for a, b in zip(verts, verts[1:]):  # path backbone keeps the graph connected
        arcs.add((a, b))
        arcs.add((b, a))
    extra = draw(st.lists(st.tuples(st.sampled_from(verts), st.sampled_from(verts)),
                          max_size=6))
    arcs |= {(a, b) for a, b in extra if a != b}
    tids = sorted(draw(st.sets(st.sampled_from(verts), min_size=1, max_size=3)))
    targets = [TargetSpec(t, draw(st.integers(1, 4)), 1.0, 1.0) for t in tids]
    return PatrolInstance(vertices=verts, arcs=sorted(arcs), targets=targets,
                          epsilon=1.0)


@settings(max_examples=60, deadline=None)
@given(small_instances())
def test_patroller_pruning_matches_independent_distances(inst):
    res = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    expected = oracle_keep(inst)
    if expected is None:
        assert isinstance(res, Disconnected)
    else:
        assert isinstance(res, ReducedInstance)
        assert res.kept_vertices == expected
        assert res.removed_vertices == sorted(set(inst.vertices) - set(expected))


@settings(max_examples=40, deadline=None)
@given(small_instances())
def test_intruder_sets_match_walk_enumeration(inst):
    res = remove_dominated_patroller_actions(inst, all_pairs_shortest_paths(inst))
    if isinstance(res, Disconnected):
        return
    kept = set(res.kept_vertices)
    for t in res.base.target_ids:
        got = compute_nondominated_intruder_vertices(res, t)
        assert got == entry_set(res.base, t)
        assert got[0] == t
        assert got[1:] == sorted(got[1:])
        assert set(got) <= kept
