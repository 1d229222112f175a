"""Tests for exact strategy evaluation and the simulation cross-check."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumerated_capture_probability
from patroleq.dominance import ReducedInstance
from patroleq.markov import (
    IntruderAction,
    MarkovStrategy,
    action_utilities,
    best_response,
    capture_probability,
    compute_gamma,
    simulate,
)
from patroleq.model import InstanceError, PatrolInstance, TargetSpec


def make_reduced(verts, arcs, targets, epsilon=1.0):
    base = PatrolInstance(vertices=list(verts), arcs=list(arcs),
                          targets=targets, epsilon=epsilon)
    return ReducedInstance(base=base, removed_vertices=[])


def complete_arcs(verts):
    return [(u, v) for u in verts for v in verts if u != v]


def path_arcs(verts):
    arcs = []
    for a, b in zip(verts, verts[1:]):
        arcs += [(a, b), (b, a)]
    return arcs


@pytest.fixture
def clique3():
    verts = ["v1", "v2", "v3"]
    return make_reduced(verts, complete_arcs(verts),
                        [TargetSpec("v3", 2, 1.0, 1.0)])


def test_stay_put_never_reaches_other_targets():
    verts = ["a", "b", "c"]
    red = make_reduced(verts, complete_arcs(verts),
                       [TargetSpec("c", 3, 1.0, 1.0)])
    stay = MarkovStrategy(red, np.eye(3))
    table = compute_gamma(stay, "c", red)
    for w in range(3):
        for i, v in enumerate(verts):
            for j in range(3):
                expected = 1.0 if (i == j and v != "c") else 0.0
                assert table.gamma[w, i, j] == expected
    assert capture_probability(stay, "c", "a") == 0.0
    assert capture_probability(stay, "c", "b") == 0.0
    # the patroller parked on the target itself catches any entry there
    assert capture_probability(stay, "c", "c") == 1.0


def test_ping_pong_first_step_is_certain_capture():
    red = make_reduced(["a", "b"], [("a", "b"), ("b", "a")],
                       [TargetSpec("b", 1, 1.0, 1.0)])
    pingpong = MarkovStrategy(red, np.array([[0.0, 1.0], [1.0, 0.0]]))
    table = compute_gamma(pingpong, "b", red)
    assert table.gamma[0, 0, 0] == 0.0
    assert table.survival()[0, 0] == 0.0
    assert capture_probability(pingpong, "b", "a") == 1.0


def test_uniform_clique_two_step_recursion(clique3):
    uniform = MarkovStrategy(clique3, np.full((3, 3), 1.0 / 3.0))
    table = compute_gamma(uniform, "v3", clique3)
    # two moves v1 -> v1 avoiding v3: via v1 or via v2, (1/3)(1/3) each
    assert table.gamma[1, 0, 0] == pytest.approx(2.0 / 9.0, abs=1e-12)
    surv = table.survival()
    assert surv[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-12)
    assert surv[1, 0] == pytest.approx(4.0 / 9.0, abs=1e-12)


def test_stay_out_and_certain_capture_utilities():
    red = make_reduced(["a", "b"], [("a", "b"), ("b", "a")],
                       [TargetSpec("b", 1, 7.0, 3.0)], epsilon=2.0)
    pingpong = MarkovStrategy(red, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert action_utilities(pingpong, IntruderAction.stay_out(), red) == (0.0, 7.0)
    caught = IntruderAction.enter_when("b", "a")
    assert action_utilities(pingpong, caught, red) == (-2.0, 7.0)


def test_even_odds_utility_arithmetic():
    verts = ["a", "b"]
    red = make_reduced(verts, complete_arcs(verts),
                       [TargetSpec("b", 1, 6.0, 10.0)], epsilon=2.0)
    coin = MarkovStrategy(red, np.full((2, 2), 0.5))
    eu_i, eu_p = action_utilities(coin, IntruderAction.enter_when("b", "a"), red)
    assert eu_i == pytest.approx(4.0, abs=1e-12)
    assert eu_p == pytest.approx(6.0 - 0.5 * 6.0, abs=1e-12)


def test_best_response_stays_out_when_always_caught():
    red = make_reduced(["a", "b"], [("a", "b"), ("b", "a")],
                       [TargetSpec("a", 2, 1.0, 1.0), TargetSpec("b", 2, 1.0, 1.0)])
    pingpong = MarkovStrategy(red, np.array([[0.0, 1.0], [1.0, 0.0]]))
    V_t = {"a": ["a", "b"], "b": ["b", "a"]}
    assert best_response(pingpong, red, V_t) == IntruderAction.stay_out()


def test_best_response_breaks_ties_toward_patroller():
    # enter-when(a,c) and enter-when(c,b) both pay the intruder exactly 4,
    # at different capture odds; the patroller prefers the risky one
    verts = ["a", "b", "c"]
    red = make_reduced(verts, path_arcs(verts),
                       [TargetSpec("a", 1, 3.0, 4.0), TargetSpec("c", 1, 4.0, 10.0)],
                       epsilon=2.0)
    alpha = np.array([[1.0, 0.0, 0.0],
                      [0.25, 0.25, 0.5],
                      [0.0, 0.0, 1.0]])
    strategy = MarkovStrategy(red, alpha)
    V_t = {"a": ["a", "c"], "c": ["c", "b"]}
    i_near, _ = action_utilities(strategy, IntruderAction.enter_when("a", "c"), red)
    i_far, p_far = action_utilities(strategy, IntruderAction.enter_when("c", "b"), red)
    assert i_near == i_far == pytest.approx(4.0, abs=1e-12)
    assert p_far > 4.0
    assert best_response(strategy, red, V_t) == IntruderAction.enter_when("c", "b")


def test_best_response_full_tie_takes_lexicographic_first():
    verts = ["a", "b"]
    red = make_reduced(verts, complete_arcs(verts),
                       [TargetSpec("a", 1, 5.0, 5.0), TargetSpec("b", 1, 5.0, 5.0)])
    coin = MarkovStrategy(red, np.full((2, 2), 0.5))
    V_t = {"a": ["a", "b"], "b": ["b", "a"]}
    # every entry is caught half the time, so all four actions tie
    assert best_response(coin, red, V_t) == IntruderAction.enter_when("a", "a")


def test_gamma_is_cached_per_strategy_content(clique3):
    uniform = MarkovStrategy(clique3, np.full((3, 3), 1.0 / 3.0))
    assert compute_gamma(uniform, "v3", clique3) is compute_gamma(uniform, "v3", clique3)
    other = MarkovStrategy(clique3, np.eye(3))
    assert compute_gamma(other, "v3", clique3) is not compute_gamma(uniform, "v3", clique3)


def test_cache_distinguishes_vertex_orders():
    # same matrix bytes, same labels, opposite index order: both must say
    # the forced move a <- b is a certain capture
    alpha = np.array([[0.0, 1.0], [1.0, 0.0]])
    one = make_reduced(["a", "b"], [("a", "b"), ("b", "a")],
                       [TargetSpec("a", 1, 1.0, 1.0)])
    two = make_reduced(["b", "a"], [("a", "b"), ("b", "a")],
                       [TargetSpec("a", 1, 1.0, 1.0)])
    assert capture_probability(MarkovStrategy(one, alpha), "a", "b") == 1.0
    assert capture_probability(MarkovStrategy(two, alpha), "a", "b") == 1.0


def test_strategy_validation_rejects_bad_matrices():
    verts = ["a", "b", "c"]
    red = make_reduced(verts, path_arcs(verts), [TargetSpec("a", 1, 1.0, 1.0)])
    with pytest.raises(InstanceError, match="shape"):
        MarkovStrategy(red, np.eye(2))
    bad = np.eye(3)
    bad[0, 0] = -0.5
    bad[0, 1] = 1.5
    with pytest.raises(InstanceError, match="lie in"):
        MarkovStrategy(red, bad)
    short = np.eye(3) * 0.9
    with pytest.raises(InstanceError, match="sums to"):
        MarkovStrategy(red, short)
    hop = np.eye(3)
    hop[0, 0] = 0.0
    hop[0, 2] = 1.0  # a -> c skips the missing arc
    with pytest.raises(InstanceError, match="without an arc"):
        MarkovStrategy(red, hop)


def test_simulate_deterministic_chain_and_unreachable_target():
    red = make_reduced(["a", "b"], [("a", "b"), ("b", "a")],
                       [TargetSpec("b", 1, 1.0, 1.0)])
    pingpong = MarkovStrategy(red, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert simulate(pingpong, IntruderAction.enter_when("b", "a"), 1000, seed=0) == 1.0
    verts = ["a", "b", "c"]
    red3 = make_reduced(verts, complete_arcs(verts), [TargetSpec("c", 3, 1.0, 1.0)])
    stay = MarkovStrategy(red3, np.eye(3))
    assert simulate(stay, IntruderAction.enter_when("c", "a"), 1000, seed=1) == 0.0


def test_simulate_matches_exact_value_within_three_sigma(clique3):
    uniform = MarkovStrategy(clique3, np.full((3, 3), 1.0 / 3.0))
    exact = capture_probability(uniform, "v3", "v1")
    assert exact == pytest.approx(5.0 / 9.0, abs=1e-12)
    trials = 10**5
    rate = simulate(uniform, IntruderAction.enter_when("v3", "v1"), trials, seed=7)
    sigma = (exact * (1 - exact) / trials) ** 0.5
    assert abs(rate - exact) <= 3 * sigma


def test_simulate_error_shrinks_with_more_trials(clique3):
    uniform = MarkovStrategy(clique3, np.full((3, 3), 1.0 / 3.0))
    exact = capture_probability(uniform, "v3", "v1")
    action = IntruderAction.enter_when("v3", "v1")
    coarse = [abs(simulate(uniform, action, 10**3, seed=s) - exact) for s in range(8)]
    fine = [abs(simulate(uniform, action, 10**5, seed=s) - exact) for s in range(8)]
    assert sum(fine) < sum(coarse)


def test_simulate_rejects_bad_inputs(clique3):
    uniform = MarkovStrategy(clique3, np.full((3, 3), 1.0 / 3.0))
    with pytest.raises(InstanceError, match="enter-when"):
        simulate(uniform, IntruderAction.stay_out(), 100, seed=0)
    with pytest.raises(InstanceError, match="trials"):
        simulate(uniform, IntruderAction.enter_when("v3", "v1"), 0, seed=0)
    with pytest.raises(InstanceError, match="not a target"):
        simulate(uniform, IntruderAction.enter_when("v1", "v2"), 10, seed=0)


def test_action_text_round_trip():
    assert IntruderAction.parse("stay-out") == IntruderAction.stay_out()
    act = IntruderAction.parse("enter-when(08,12)")
    assert act == IntruderAction.enter_when("08", "12")
    assert str(act) == "enter-when(08,12)"
    assert IntruderAction.parse(str(IntruderAction.stay_out())).kind == "stay_out"
    for bad in ("lurk", "enter-when(08)", "enter-when(,12)", "enter-when 08 12"):
        with pytest.raises(InstanceError):
            IntruderAction.parse(bad)
    with pytest.raises(InstanceError):
        IntruderAction("stay_out", t="a")
    with pytest.raises(InstanceError):
        IntruderAction("enter_when", t="a")


labels = st.integers(0, 5).map(lambda i: f"n{i}")


@st.composite
def evaluation_cases(draw):
    verts = sorted(draw(st.sets(labels, min_size=2, max_size=4)))
    arcs = set(path_arcs(verts))
    extra = draw(st.lists(st.tuples(st.sampled_from(verts), st.sampled_from(verts)),
                          max_size=5))
    arcs |= {(a, b) for a, b in extra if a != b}
    tids = sorted(draw(st.sets(st.sampled_from(verts), min_size=1, max_size=2)))
    targets = [TargetSpec(t, draw(st.integers(1, 4)), 1.0, 1.0) for t in tids]
    red = make_reduced(verts, sorted(arcs), targets)
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    mask = red.base.adjacency()
    alpha = rng.random(mask.shape) * mask
    alpha += np.eye(len(verts)) * 1e-3  # waiting keeps every row positive
    alpha /= alpha.sum(axis=1, keepdims=True)
    return MarkovStrategy(red, alpha)


@settings(max_examples=60, deadline=None)
@given(evaluation_cases())
def test_capture_matches_exhaustive_path_enumeration(strategy):
    red = strategy.reduced
    rows = strategy.alpha.tolist()
    for spec in red.base.targets:
        ti = red.base.index[spec.id]
        for z in red.base.vertices:
            got = capture_probability(strategy, spec.id, z)
            want = enumerated_capture_probability(rows, red.base.index[z],
                                                  ti, spec.d)
            assert got == pytest.approx(want, abs=1e-10)


@settings(max_examples=60, deadline=None)
@given(evaluation_cases())
def test_survival_is_a_monotone_probability(strategy):
    red = strategy.reduced
    for spec in red.base.targets:
        table = compute_gamma(strategy, spec.id, red)
        ti = red.base.index[spec.id]
        assert np.all(table.gamma >= 0.0)
        assert np.all(table.gamma <= 1.0 + 1e-12)
        assert np.all(table.gamma[:, :, ti] == 0.0)
        surv = table.survival()
        assert np.all(surv <= 1.0 + 1e-12)
        assert np.all(surv[1:] <= surv[:-1] + 1e-12)
