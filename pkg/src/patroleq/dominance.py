"""Dominated-action removal for both players before mixed-strategy solving.

Patroller side: standing at a vertex from which some target cannot be
reached within its penetration time gives the intruder a free attack, so
such vertices are dropped; of the rest, only vertices lying on at least
one shortest path between a pair of targets are worth standing on (any
other vertex only delays every return).

Intruder side: the intruder picks the observed patroller position at
which entering is safest. Entering at position i is pointless when some
position i' exists such that every patrol walk from i' that reaches the
target in time crosses i first: the capture probability seen from i' can
then never exceed the one seen from i, whatever the patrol strategy.
Since waiting and immediately backtracking never speed up a walk, that
forcing condition is equivalent to a shortest-path test with vertex i
deleted, which is what this module computes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .model import PatrolInstance
from .reduction import ShortestPathTable


@dataclass
class Disconnected:
    """No single patroller can cover every target; returned, not raised."""

    reason: str


@dataclass
class ReducedInstance:
    """Instance restricted to useful patroller vertices plus intruder data.

    ``base`` is the induced sub-instance on the kept vertices, with the
    original targets and values. ``V_t`` maps each target to its
    non-dominated observation vertices once they have been computed.
    """

    base: PatrolInstance
    removed_vertices: list[str]
    V_t: dict[str, list[str]] = field(default_factory=dict)

    @property
    def kept_vertices(self) -> list[str]:
        return self.base.vertices

    def subproblem_count(self) -> int:
        """Number of per-observation solver problems, sum of |V_t|."""
        return sum(len(v) for v in self.V_t.values())


def _out_adjacency(instance: PatrolInstance) -> dict[str, list[str]]:
    """Label-keyed out-neighbor lists, self-loops excluded."""
    out: dict[str, list[str]] = {v: [] for v in instance.vertices}
    for frm, to in instance.arcs:
        if frm != to:
            out[frm].append(to)
    return out


def _bfs_from(out: dict[str, list[str]], source: str,
              skip: str | None = None) -> dict[str, float]:
    """Hop distances from ``source``, optionally with one vertex deleted."""
    dist = {source: 0.0}
    frontier = [source]
    while frontier:
        nxt: list[str] = []
        for u in frontier:
            for v in out[u]:
                if v != skip and v not in dist:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def remove_dominated_patroller_actions(
        instance: PatrolInstance,
        table: ShortestPathTable) -> ReducedInstance | Disconnected:
    """Drop patroller vertices that no sensible strategy stands on.

    Parameters
    ----------
    instance : PatrolInstance
        The full game instance.
    table : ShortestPathTable
        All-pairs distances on the full graph.

    Returns
    -------
    ReducedInstance or Disconnected
        The induced sub-instance with ``V_t`` left empty, or Disconnected
        when some target is unprotectable (a target fails the distance
        rule itself, or the residue splits).
    """
    targets = instance.target_ids
    d = {t.id: t.d for t in instance.targets}

    # step 1: every kept vertex must reach every target within its deadline
    kept: list[str] = []
    removed: list[str] = []
    for v in instance.vertices:
        late = [t for t in targets if table.distance(v, t) > d[t]]
        if not late:
            kept.append(v)
        elif v in d:
            return Disconnected(
                reason=f"target {v} cannot reach target {late[0]} within "
                       f"d({late[0]})={d[late[0]]}; no covering strategy exists")
        else:
            removed.append(v)

    sub = {v for v in kept}
    out = {v: [w for w in instance.neighbors_out(v) if w in sub] for v in kept}

    # the residue must be strongly connected or patrolling cannot continue
    fwd = _bfs_from(out, kept[0])
    rev_out: dict[str, list[str]] = {v: [] for v in kept}
    for u in kept:
        for v in out[u]:
            rev_out[v].append(u)
    bwd = _bfs_from(rev_out, kept[0])
    if len(fwd) != len(kept) or len(bwd) != len(kept):
        stranded = sorted(sub - set(fwd) | (sub - set(bwd)))
        return Disconnected(
            reason=f"vertices {stranded} are cut off from the rest after the "
                   f"distance rule; no covering strategy exists")

    # step 2: keep vertices on at least one shortest path between targets,
    # with distances taken in the residue; ties all retained
    dist_from = {t: _bfs_from(out, t) for t in targets}
    dist_to = {t: _bfs_from(rev_out, t) for t in targets}
    on_path: set[str] = set(targets)
    for t1 in targets:
        for t2 in targets:
            if t1 == t2:
                continue
            between = dist_from[t1].get(t2, math.inf)
            for v in kept:
                a = dist_from[t1].get(v, math.inf)  # t1 -> v
                b = dist_to[t2].get(v, math.inf)    # v -> t2
                if a + b == between:
                    on_path.add(v)
    removed.extend(v for v in kept if v not in on_path)
    final = [v for v in instance.vertices if v in on_path]

    base = PatrolInstance(
        vertices=final,
        arcs=[(u, v) for u, v in instance.arcs if u in on_path and v in on_path],
        targets=list(instance.targets),
        epsilon=instance.epsilon,
    )
    return ReducedInstance(base=base, removed_vertices=sorted(removed))


def compute_nondominated_intruder_vertices(reduced: ReducedInstance,
                                           t: str) -> list[str]:
    """Observation vertices worth entering at, for attacks on target ``t``.

    Parameters
    ----------
    reduced : ReducedInstance
        Output of the patroller-side removal.
    t : str
        The attacked target.

    Returns
    -------
    list of str
        The non-dominated observation vertices, ``t`` first and the rest
        sorted. Position i is dominated by i' when the shortest i' -> t
        path with i deleted is longer than d(t); of two mutually
        dominating positions the lexicographically smaller stays.
    """
    inst = reduced.base
    dt = inst.target(t).d
    out = _out_adjacency(inst)
    rev_out: dict[str, list[str]] = {v: [] for v in inst.vertices}
    for u in inst.vertices:
        for v in out[u]:
            rev_out[v].append(u)

    others = [z for z in inst.vertices if z != t]
    # dominated[z][z'] : every timely walk z' -> t is forced through z
    dominated: dict[str, set[str]] = {}
    for z in others:
        to_t = _bfs_from(rev_out, t, skip=z)
        dominated[z] = {zp for zp in inst.vertices
                        if zp != z and to_t.get(zp, math.inf) > dt}

    keep: list[str] = []
    for z in others:
        # z goes when some z' dominates it strictly, or mutually but is smaller
        drop = any(z not in dominated[zp] or zp < z for zp in dominated[z])
        if not drop:
            keep.append(z)
    return [t] + sorted(keep)


def fill_intruder_sets(reduced: ReducedInstance) -> ReducedInstance:
    """Compute V_t for every target, in place, and return the instance."""
    for t in reduced.base.target_ids:
        reduced.V_t[t] = compute_nondominated_intruder_vertices(reduced, t)
    return reduced
