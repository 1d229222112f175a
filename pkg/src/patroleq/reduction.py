"""Reduction of a patrolling instance to its graph of targets.

Deterministic patrol cycles only ever pause at targets, so the search for
them runs on a smaller weighted digraph whose vertices are the targets.
An arc (i, j) exists iff some shortest i-to-j path in the full graph
contains no intermediate target, and its weight w(i, j) is the full-graph
distance. Cycles found on the reduced graph lift back to full-graph walks
along stored witness paths.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .model import InstanceError, PatrolInstance, TargetSpec


@dataclass
class ShortestPathTable:
    """All-pairs shortest-path distances over a labeled vertex set.

    Attributes
    ----------
    labels : list of str
        Vertex labels; row/column order of ``dist``.
    dist : ndarray of float, shape (n, n)
        Hop-count (or weighted) distances; ``inf`` marks unreachable pairs
        and the diagonal is 0.
    """

    labels: list[str]
    dist: np.ndarray
    index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {v: k for k, v in enumerate(self.labels)}

    def distance(self, frm: str, to: str) -> float:
        return float(self.dist[self.index[frm], self.index[to]])


def _bfs_dists(adj_out: list[list[int]], source: int, blocked: frozenset[int] = frozenset()) -> list[float]:
    """Hop distances from ``source`` avoiding ``blocked`` vertices entirely."""
    n = len(adj_out)
    dist = [math.inf] * n
    if source in blocked:
        return dist
    dist[source] = 0.0
    queue = [source]
    while queue:
        nxt: list[int] = []
        for u in queue:
            for v in adj_out[u]:
                if v not in blocked and dist[v] == math.inf:
                    dist[v] = dist[u] + 1
                    nxt.append(v)
        queue = nxt
    return dist


def _out_lists(instance: PatrolInstance) -> list[list[int]]:
    adj = instance.adjacency()
    np.fill_diagonal(adj, False)  # self-loops never shorten paths
    return [list(np.flatnonzero(adj[i])) for i in range(instance.n)]


def all_pairs_shortest_paths(instance: PatrolInstance) -> ShortestPathTable:
    """Hop-count distances between all vertex pairs of the instance graph."""
    out = _out_lists(instance)
    n = instance.n
    dist = np.full((n, n), math.inf)
    for s in range(n):
        dist[s, :] = _bfs_dists(out, s)
    return ShortestPathTable(labels=list(instance.vertices), dist=dist)


@dataclass
class ReducedGraph:
    """Weighted digraph over the targets, with lifting data.

    ``targets`` hold the vertex labels (every vertex of this graph is a
    target); ``arcs[k]`` has travel time ``weights[k]``. ``d`` maps each
    target to its penetration time. ``back_paths``, when present, maps an
    arc to the full-graph vertex path that realizes it. ``values`` and
    ``epsilon`` carry the game data through for convenience and may be
    None for graphs that exist only as search inputs.
    """

    targets: list[str]
    arcs: list[tuple[str, str]]
    weights: list[int]
    d: dict[str, int]
    back_paths: dict[tuple[str, str], list[str]] | None = None
    values: dict[str, tuple[float, float]] | None = None  # id -> (v_p, v_i)
    epsilon: float | None = None
    index: dict[str, int] = field(init=False, repr=False)
    _out: dict[str, list[tuple[str, int]]] = field(init=False, repr=False)
    _w: dict[tuple[str, str], int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.arcs) != len(self.weights):
            raise InstanceError("reduced graph: arcs and weights differ in length")
        self.index = {v: k for k, v in enumerate(self.targets)}
        self._w = {}
        self._out = {t: [] for t in self.targets}
        for (frm, to), w in zip(self.arcs, self.weights):
            if frm not in self.index or to not in self.index:
                raise InstanceError(f"reduced graph arc ({frm!r}, {to!r}) references an unknown target")
            if w < 1:
                raise InstanceError(f"reduced graph arc ({frm!r}, {to!r}) has weight {w} < 1")
            self._w[(frm, to)] = int(w)
            self._out[frm].append((to, int(w)))
        for t, dt in self.d.items():
            if t not in self.index:
                raise InstanceError(f"penetration time for unknown target {t!r}")
            if dt < 1:
                raise InstanceError(f"target {t!r}: penetration time {dt} < 1")
        missing = [t for t in self.targets if t not in self.d]
        if missing:
            raise InstanceError(f"targets without penetration time: {missing}")

    @property
    def n(self) -> int:
        return len(self.targets)

    def out_neighbors(self, frm: str) -> list[tuple[str, int]]:
        """Arcs leaving ``frm`` as (target, weight), in insertion order."""
        return self._out[frm]

    def weight(self, frm: str, to: str) -> int:
        return self._w[(frm, to)]

    def has_arc(self, frm: str, to: str) -> bool:
        return (frm, to) in self._w

    def rows_without_arcs(self) -> list[str]:
        """Targets with no outgoing arc (unreachable from themselves)."""
        return [t for t in self.targets if not self._out[t]]

    def shortest_path_table(self) -> ShortestPathTable:
        """Weighted all-pairs distances on this graph (Dijkstra per source)."""
        n = self.n
        dist = np.full((n, n), math.inf)
        for s, lbl in enumerate(self.targets):
            dist[s, s] = 0.0
            heap = [(0, lbl)]
            done: set[str] = set()
            while heap:
                du, u = heapq.heappop(heap)
                if u in done:
                    continue
                done.add(u)
                for v, w in self._out[u]:
                    nd = du + w
                    if nd < dist[s, self.index[v]]:
                        dist[s, self.index[v]] = nd
                        heapq.heappush(heap, (nd, v))
            # a self-arc (single-target graph) does not shorten the 0 diagonal
        return ShortestPathTable(labels=list(self.targets), dist=dist)

    def to_json_dict(self) -> dict:
        data = {
            "kind": "reduced",
            "vertices": list(self.targets),
            "arcs": [list(a) for a in self.arcs],
            "weights": [int(w) for w in self.weights],
            "targets": [],
            "epsilon": self.epsilon,
        }
        for t in self.targets:
            entry: dict = {"id": t, "d": int(self.d[t])}
            if self.values is not None and t in self.values:
                entry["v_p"], entry["v_i"] = self.values[t]
            data["targets"].append(entry)
        if self.back_paths is not None:
            data["back_paths"] = {f"{i}>{j}": p for (i, j), p in sorted(self.back_paths.items())}
        return data


def reduced_from_dict(data: dict) -> ReducedGraph:
    """Build a reduced graph from a parsed JSON dict."""
    if not isinstance(data, dict) or data.get("kind") != "reduced":
        raise InstanceError("expected a reduced-graph file with kind='reduced'")
    try:
        targets = [str(v) for v in data["vertices"]]
        arcs = [(str(a[0]), str(a[1])) for a in data["arcs"]]
        weights = [int(w) for w in data["weights"]]
        d = {str(t["id"]): int(t["d"]) for t in data["targets"]}
        values = {
            str(t["id"]): (float(t["v_p"]), float(t["v_i"]))
            for t in data["targets"]
            if "v_p" in t and "v_i" in t
        } or None
        epsilon = float(data["epsilon"]) if data.get("epsilon") is not None else None
    except (KeyError, TypeError, IndexError) as exc:
        raise InstanceError(f"malformed reduced-graph JSON: {exc!r}") from exc
    back = None
    if "back_paths" in data:
        back = {}
        for key, path in data["back_paths"].items():
            i, j = key.split(">")
            back[(i, j)] = [str(v) for v in path]
    return ReducedGraph(targets=targets, arcs=arcs, weights=weights, d=d,
                        back_paths=back, values=values, epsilon=epsilon)


def load_reduced(path: str) -> ReducedGraph:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return reduced_from_dict(data)


def save_reduced(reduced: ReducedGraph, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(reduced.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def reduce(instance: PatrolInstance) -> ReducedGraph:
    """Build the reduced target graph of an instance.

    For each ordered target pair (i, j), the arc (i, j) exists iff the
    distance from i to j measured while forbidding all other targets
    equals the unrestricted distance (i.e. some geodesic is target-free);
    its weight is that distance. The witness path stored for lifting is
    the lexicographically smallest target-free geodesic. A single-target
    instance gets the waiting self-arc (t, t) of weight 1.
    """
    out = _out_lists(instance)
    # reversed adjacency for distances *to* a vertex on directed graphs
    rev: list[list[int]] = [[] for _ in range(instance.n)]
    for u, vs in enumerate(out):
        for v in vs:
            rev[v].append(u)
    labels = instance.vertices
    tgt_ids = instance.target_ids
    tgt_idx = [instance.index[t] for t in tgt_ids]
    d = {t.id: t.d for t in instance.targets}
    values = {t.id: (t.v_p, t.v_i) for t in instance.targets}

    if len(tgt_ids) == 1:
        t = tgt_ids[0]
        return ReducedGraph(targets=tgt_ids, arcs=[(t, t)], weights=[1], d=d,
                            back_paths={(t, t): [t, t]}, values=values,
                            epsilon=instance.epsilon)

    base = {i: _bfs_dists(out, i) for i in tgt_idx}
    arcs: list[tuple[str, str]] = []
    weights: list[int] = []
    back_paths: dict[tuple[str, str], list[str]] = {}
    for i in tgt_idx:
        for j in tgt_idx:
            if i == j:
                continue
            dij = base[i][j]
            if dij == math.inf:
                continue
            blocked = frozenset(k for k in tgt_idx if k not in (i, j))
            free_to_j = _bfs_dists(rev, j, blocked)  # distance to j inside the target-free graph
            if free_to_j[i] != dij:
                continue  # every geodesic crosses another target
            arcs.append((labels[i], labels[j]))
            weights.append(int(dij))
            # greedy lexicographic descent over the shortest-path DAG
            path = [i]
            cur = i
            while cur != j:
                step = min(
                    (v for v in out[cur]
                     if v not in blocked and free_to_j[v] == free_to_j[cur] - 1),
                    key=lambda v: labels[v],
                )
                path.append(step)
                cur = step
            back_paths[(labels[i], labels[j])] = [labels[v] for v in path]
    return ReducedGraph(targets=tgt_ids, arcs=arcs, weights=weights, d=d,
                        back_paths=back_paths, values=values, epsilon=instance.epsilon)


def lift_cycle(reduced: ReducedGraph, sequence: list[str]) -> list[str]:
    """Expand a reduced-graph cycle into the full-graph closed walk.

    ``sequence`` is a target sequence whose first and last elements agree;
    consecutive targets are joined by the stored witness paths. The result
    is the full vertex walk, endpoints included once.
    """
    if reduced.back_paths is None:
        raise InstanceError("reduced graph carries no witness paths to lift along")
    if len(sequence) < 2 or sequence[0] != sequence[-1]:
        raise InstanceError("a patrol cycle must end where it starts")
    walk: list[str] = [sequence[0]]
    for frm, to in zip(sequence, sequence[1:]):
        seg = reduced.back_paths.get((frm, to))
        if seg is None:
            raise InstanceError(f"no witness path for arc ({frm!r}, {to!r})")
        walk.extend(seg[1:])
    return walk
