"""Exact evaluation of memoryless mixed patrol strategies.

A mixed strategy is a Markov chain over the kept vertices: each turn the
patroller moves along an arc, or waits, with the probabilities in one row
of a stochastic matrix. The intruder watches the patroller and may commit
to an attack the moment the patroller stands on some observation vertex;
the attack succeeds if the patroller then stays away from the attacked
target for its full penetration time.

Everything here reduces to taboo probabilities of that chain: reach j
from i in w moves while never standing on the attacked target. Zeroing
the target's column of the transition matrix and taking matrix powers
yields those probabilities exactly, one (move, from, to) tensor per
target. Capture probabilities, expected utilities, the intruder's exact
best response, and a Monte-Carlo cross-check all derive from the tensor.

All evaluations are pure functions of (strategy, instance); the tensor
cache is keyed on the strategy content so repeated queries against one
strategy pay for the matrix powers once.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .dominance import ReducedInstance
from .model import InstanceError

ROW_SUM_TOL = 1e-9  # stochasticity slack per strategy row
EU_TOL = 1e-6       # indifference threshold between expected utilities


@dataclass(eq=False)
class MarkovStrategy:
    """Row-stochastic movement policy over the kept vertices.

    ``alpha[i, j]`` is the probability of moving from ``vertices()[i]``
    to ``vertices()[j]`` on any turn. The support must respect the arcs
    of the reduced instance; waiting in place is always allowed.
    """

    reduced: ReducedInstance  # game the strategy plays on; fixes the index order
    alpha: np.ndarray         # shape (n, n), entries in [0, 1], rows sum to 1

    def __post_init__(self) -> None:
        self.alpha = np.asarray(self.alpha, dtype=float)
        validate_strategy(self)

    def vertices(self) -> list[str]:
        return self.reduced.base.vertices

    def content_key(self) -> bytes:
        return self.alpha.tobytes()


def validate_strategy(strategy: MarkovStrategy) -> None:
    """Check shape, stochasticity, and arc support; raise InstanceError."""
    a = strategy.alpha
    n = strategy.reduced.base.n
    if a.shape != (n, n):
        raise InstanceError(f"strategy matrix has shape {a.shape}, expected {(n, n)}")
    if np.any(a < -ROW_SUM_TOL) or np.any(a > 1.0 + ROW_SUM_TOL):
        raise InstanceError("strategy entries must lie in [0, 1]")
    sums = a.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
    if bad.size:
        v = strategy.vertices()[bad[0]]
        raise InstanceError(f"strategy row for {v} sums to {sums[bad[0]]}, not 1")
    allowed = strategy.reduced.base.adjacency()
    off = ~allowed & (a > ROW_SUM_TOL)
    if np.any(off):
        i, j = (int(k) for k in np.argwhere(off)[0])
        vs = strategy.vertices()
        raise InstanceError(f"strategy moves {vs[i]} -> {vs[j]} without an arc")


@dataclass(eq=False)
class GammaTable:
    """Taboo walk probabilities for one attacked target.

    ``gamma[w - 1, i, j]`` is the probability that the patroller walks
    from vertex i to vertex j in exactly w moves without ever standing on
    the target; the target's own column is identically zero.
    """

    target: str
    gamma: np.ndarray  # shape (d, n, n)

    def survival(self) -> np.ndarray:
        """``survival()[w - 1, i]``: probability of avoiding the target for w moves from i."""
        return self.gamma.sum(axis=2)


_CACHE_LIMIT = 128
_gamma_cache: dict[tuple, GammaTable] = {}


def compute_gamma(strategy: MarkovStrategy, t: str,
                  reduced: ReducedInstance) -> GammaTable:
    """Taboo probability tensor for attacks on target ``t``.

    Parameters
    ----------
    strategy : MarkovStrategy
        The patroller's movement policy.
    t : str
        The attacked target.
    reduced : ReducedInstance
        Supplies the vertex order and the penetration time d(t).

    Returns
    -------
    GammaTable
        One slice per move count w = 1..d(t). Cached on the strategy
        content, so enumerating many actions against one strategy pays
        for the matrix powers once.
    """
    d = reduced.base.target(t).d
    key = (strategy.content_key(), tuple(reduced.base.vertices), t, d)
    hit = _gamma_cache.get(key)
    if hit is not None:
        return hit
    step = strategy.alpha.copy()
    step[:, reduced.base.index[t]] = 0.0  # walks may start at t, never return
    slices = np.empty((d, *step.shape))
    slices[0] = step
    for w in range(1, d):
        slices[w] = slices[w - 1] @ step
    table = GammaTable(target=t, gamma=slices)
    if len(_gamma_cache) >= _CACHE_LIMIT:
        _gamma_cache.pop(next(iter(_gamma_cache)))
    _gamma_cache[key] = table
    return table


def capture_probability(strategy: MarkovStrategy, t: str, z: str) -> float:
    """Probability that an attack on ``t`` begun at observation ``z`` fails.

    The observation turn is move zero: the patroller's next d(t) moves
    decide the outcome, so entering while the patroller stands on the
    target itself is not an automatic capture.

    Parameters
    ----------
    strategy : MarkovStrategy
        The patroller's movement policy.
    t : str
        The attacked target.
    z : str
        The patroller vertex that triggers the entry.

    Returns
    -------
    float
        1 minus the probability of avoiding ``t`` for d(t) moves from ``z``.
    """
    base = strategy.reduced.base
    if z not in base.index:
        raise InstanceError(f"unknown observation vertex {z!r}")
    if t not in base.target_ids:
        raise InstanceError(f"{t!r} is not a target")
    survival = compute_gamma(strategy, t, strategy.reduced).survival()
    return float(1.0 - survival[-1, base.index[z]])


@dataclass(frozen=True)
class IntruderAction:
    """Stay out of the game, or enter target ``t`` on seeing the patroller at ``z``."""

    kind: str             # "stay_out" or "enter_when"
    t: str | None = None  # attacked target, enter_when only
    z: str | None = None  # patroller vertex triggering the entry, enter_when only

    def __post_init__(self) -> None:
        if self.kind == "stay_out":
            if self.t is not None or self.z is not None:
                raise InstanceError("stay-out carries no target or vertex")
        elif self.kind == "enter_when":
            if self.t is None or self.z is None:
                raise InstanceError("enter-when needs a target and a vertex")
        else:
            raise InstanceError(f"unknown intruder action kind {self.kind!r}")

    @classmethod
    def stay_out(cls) -> "IntruderAction":
        return cls("stay_out")

    @classmethod
    def enter_when(cls, t: str, z: str) -> "IntruderAction":
        return cls("enter_when", t, z)

    @classmethod
    def parse(cls, text: str) -> "IntruderAction":
        """Read back the textual forms "stay-out" and "enter-when(t,z)"."""
        s = text.strip()
        if s in ("stay-out", "stay_out"):
            return cls.stay_out()
        m = re.fullmatch(r"enter[-_]when\(\s*([^,()\s]+)\s*,\s*([^,()\s]+)\s*\)", s)
        if not m:
            raise InstanceError(f"cannot parse intruder action {text!r}")
        return cls.enter_when(m.group(1), m.group(2))

    def __str__(self) -> str:
        if self.kind == "stay_out":
            return "stay-out"
        return f"enter-when({self.t},{self.z})"


def action_utilities(strategy: MarkovStrategy, action: IntruderAction,
                     instance: ReducedInstance) -> tuple[float, float]:
    """Expected utilities (intruder, patroller) of one intruder action.

    Staying out yields 0 for the intruder and the full value sum for the
    patroller. Entering target t at observation z, with capture
    probability p, yields p(-epsilon) + (1-p) v_i(t) for the intruder;
    the patroller keeps every other target's value for sure and target
    t's value only on capture.
    """
    base = instance.base
    total = sum(spec.v_p for spec in base.targets)
    if action.kind == "stay_out":
        return 0.0, total
    if action.t not in base.target_ids:
        raise InstanceError(f"{action.t!r} is not a target")
    spec = base.target(action.t)
    p = capture_probability(strategy, action.t, action.z)
    eu_intruder = p * (-base.epsilon) + (1.0 - p) * spec.v_i
    eu_patroller = total - (1.0 - p) * spec.v_p
    return eu_intruder, eu_patroller


def best_response(strategy: MarkovStrategy, instance: ReducedInstance,
                  V_t: dict[str, list[str]]) -> IntruderAction:
    """The intruder's utility-maximizing action against a known strategy.

    Scans stay-out plus enter-when(t, z) over every observation vertex
    the pruning kept. Indifference within EU_TOL is broken toward the
    action with the larger patroller utility, then toward the
    lexicographically smallest (t, z). The window is wide enough to
    recognize the utility ties that optimal strategies create on
    purpose, even when the strategy is only numerically converged.
    """
    best = IntruderAction.stay_out()
    best_eu = action_utilities(strategy, best, instance)
    for t in sorted(V_t):
        for z in sorted(V_t[t]):
            act = IntruderAction.enter_when(t, z)
            eu = action_utilities(strategy, act, instance)
            better = eu[0] > best_eu[0] + EU_TOL
            tied = abs(eu[0] - best_eu[0]) <= EU_TOL
            if better or (tied and eu[1] > best_eu[1] + EU_TOL):
                best, best_eu = act, eu
    return best


def simulate(strategy: MarkovStrategy, action: IntruderAction,
             trials: int, seed: int) -> float:
    """Monte-Carlo capture frequency for one enter-when action.

    Runs the patroller chain for d(t) moves from the observed vertex over
    all trials at once; a trial counts as a capture when any of those
    moves lands on the target. Reproducible for a fixed seed.
    """
    if action.kind != "enter_when":
        raise InstanceError("only enter-when actions can be simulated")
    if trials < 1:
        raise InstanceError("trials must be at least 1")
    base = strategy.reduced.base
    if action.z not in base.index:
        raise InstanceError(f"unknown observation vertex {action.z!r}")
    if action.t not in base.target_ids:
        raise InstanceError(f"{action.t!r} is not a target")
    d = base.target(action.t).d
    ti, zi = base.index[action.t], base.index[action.z]
    # exact renormalization keeps cumulative rows ending at 1 so every
    # uniform draw lands in a valid bucket
    rows = strategy.alpha / strategy.alpha.sum(axis=1, keepdims=True)
    cum = np.cumsum(rows, axis=1)
    cum[:, -1] = 1.0
    rng = np.random.default_rng(seed)
    pos = np.full(trials, zi)
    captured = np.zeros(trials, dtype=bool)
    for _ in range(d):
        draws = rng.random(trials)
        pos = (cum[pos] > draws[:, None]).argmax(axis=1)
        captured |= pos == ti
    return float(captured.mean())
