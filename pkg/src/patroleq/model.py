"""Patrolling-game instances: graphs with deadlines, values, and file formats.

An instance is a directed graph whose vertices are labeled by strings. A
subset of vertices are targets; each target t carries a penetration time
d(t) (how many patroller moves an intrusion takes), a value v_p(t) for the
patroller and a value v_i(t) for the intruder. Every vertex implicitly has
a self-loop: staying put is always a legal patroller move. epsilon > 0 is
the penalty the intruder pays when captured.

Two file formats are supported:

* JSON: ``{"vertices": [...], "arcs": [[from, to], ...],
  "targets": [{"id":..., "d":..., "v_p":..., "v_i":...}, ...],
  "epsilon": ...}``. Self-loops may be listed but are implied.
* grid text: rows of whitespace-separated tokens, one per cell, where
  ``.`` is free, ``#`` is an obstacle and ``T<k>`` is a free target cell,
  followed by a ``targets:`` line, one ``<k> <d> <v_p> <v_i>`` line per
  target, and an optional ``epsilon: <x>`` line. Free cells are numbered
  row-major with zero-padded decimal labels ("01", "02", ...) and are
  4-connected.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

VertexId = str
Arc = tuple[str, str]


class InstanceError(ValueError):
    """Raised when an instance file or object violates the format."""


@dataclass(frozen=True)
class TargetSpec:
    id: VertexId  # vertex label of the target
    d: int        # penetration time in patroller moves, >= 1
    v_p: float    # patroller's value for keeping the target safe, > 0
    v_i: float    # intruder's value for penetrating the target, > 0


@dataclass
class PatrolInstance:
    vertices: list[VertexId]       # labels; list order defines the dense index
    arcs: list[Arc]                # directed arcs, self-loops implied
    targets: list[TargetSpec]      # attackable vertices
    epsilon: float                 # capture penalty paid by the intruder, > 0
    index: dict[VertexId, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.index = {v: k for k, v in enumerate(self.vertices)}
        validate(self)

    @property
    def n(self) -> int:
        return len(self.vertices)

    @property
    def target_ids(self) -> list[VertexId]:
        return [t.id for t in self.targets]

    def target(self, vertex: VertexId) -> TargetSpec:
        for t in self.targets:
            if t.id == vertex:
                return t
        raise KeyError(vertex)

    def adjacency(self) -> np.ndarray:
        """Dense boolean adjacency matrix including the forced self-loops.

        Returns
        -------
        ndarray of bool, shape (n, n)
            ``adj[i, j]`` is True iff the patroller may move from
            ``vertices[i]`` to ``vertices[j]`` in one turn.
        """
        adj = np.zeros((self.n, self.n), dtype=bool)
        np.fill_diagonal(adj, True)
        for frm, to in self.arcs:
            adj[self.index[frm], self.index[to]] = True
        return adj

    def neighbors_out(self, vertex: VertexId) -> list[VertexId]:
        """Out-neighbors of ``vertex`` excluding the vertex itself."""
        i = self.index[vertex]
        adj = self.adjacency()
        return [self.vertices[j] for j in np.flatnonzero(adj[i]) if j != i]

    def to_json_dict(self) -> dict:
        return {
            "kind": "instance",
            "vertices": list(self.vertices),
            "arcs": [list(a) for a in self.arcs],
            "targets": [
                {"id": t.id, "d": t.d, "v_p": t.v_p, "v_i": t.v_i}
                for t in self.targets
            ],
            "epsilon": self.epsilon,
        }


def validate(instance: PatrolInstance) -> None:
    """Check structural sanity of an instance; raise InstanceError if broken."""
    seen: set[str] = set()
    for v in instance.vertices:
        if not isinstance(v, str) or not v:
            raise InstanceError(f"vertex labels must be non-empty strings, got {v!r}")
        if v in seen:
            raise InstanceError(f"duplicate vertex label {v!r}")
        seen.add(v)
    if not instance.vertices:
        raise InstanceError("instance has no vertices")
    for frm, to in instance.arcs:
        if frm not in instance.index or to not in instance.index:
            raise InstanceError(f"arc ({frm!r}, {to!r}) references an unknown vertex")
    if not instance.targets:
        raise InstanceError("instance has no targets")
    tseen: set[str] = set()
    for t in instance.targets:
        if t.id not in instance.index:
            raise InstanceError(f"target {t.id!r} is not a vertex")
        if t.id in tseen:
            raise InstanceError(f"duplicate target {t.id!r}")
        tseen.add(t.id)
        if not isinstance(t.d, int) or t.d < 1:
            raise InstanceError(f"target {t.id!r}: penetration time must be an integer >= 1, got {t.d!r}")
        if not t.v_p > 0 or not t.v_i > 0:
            raise InstanceError(f"target {t.id!r}: values must be positive")
    if not instance.epsilon > 0:
        raise InstanceError(f"epsilon must be positive, got {instance.epsilon!r}")


@dataclass
class GridMap:
    cells: list[list[str]]                            # row-major tokens: '.', '#', or 'T<k>'
    target_table: dict[int, tuple[int, float, float]]  # k -> (d, v_p, v_i)
    epsilon: float = 1.0

    def __post_init__(self) -> None:
        if not self.cells or not self.cells[0]:
            raise InstanceError("grid has no cells")
        width = len(self.cells[0])
        for row in self.cells:
            if len(row) != width:
                raise InstanceError("grid rows have unequal lengths")


def parse_grid(text: str) -> GridMap:
    """Parse the grid text format into a GridMap."""
    grid_lines: list[list[str]] = []
    table: dict[int, tuple[int, float, float]] = {}
    epsilon = 1.0
    in_table = False
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line == "targets:":
            in_table = True
            continue
        if line.startswith("epsilon:"):
            epsilon = float(line.split(":", 1)[1])
            continue
        tokens = line.split()
        if in_table:
            if len(tokens) != 4:
                raise InstanceError(f"target table line needs 4 fields: {line!r}")
            k = int(tokens[0])
            if k in table:
                raise InstanceError(f"duplicate target table entry {k}")
            table[k] = (int(tokens[1]), float(tokens[2]), float(tokens[3]))
        else:
            for tok in tokens:
                if tok not in (".", "#") and not (tok.startswith("T") and tok[1:].isdigit()):
                    raise InstanceError(f"unknown grid token {tok!r}")
            grid_lines.append(tokens)
    if not grid_lines:
        raise InstanceError("grid text contains no grid rows")
    return GridMap(cells=grid_lines, target_table=table, epsilon=epsilon)


def grid_to_graph(grid: GridMap) -> PatrolInstance:
    """Turn a grid map into a patrolling instance.

    Free cells become vertices labeled with zero-padded row-major numbers
    ("01", "02", ...), orthogonally adjacent free cells are connected in
    both directions, and ``T<k>`` cells become targets with the deadline
    and values of table entry k.
    """
    rows, cols = len(grid.cells), len(grid.cells[0])
    cell_label: dict[tuple[int, int], str] = {}
    free: list[tuple[int, int]] = []
    for r in range(rows):
        for c in range(cols):
            if grid.cells[r][c] != "#":
                free.append((r, c))
    if not free:
        raise InstanceError("grid has no free cells")
    width = len(str(len(free)))
    for num, (r, c) in enumerate(free, start=1):
        cell_label[(r, c)] = str(num).zfill(width)

    arcs: list[Arc] = []
    for r, c in free:
        for dr, dc in ((0, 1), (1, 0)):
            rr, cc = r + dr, c + dc
            if (rr, cc) in cell_label:
                arcs.append((cell_label[(r, c)], cell_label[(rr, cc)]))
                arcs.append((cell_label[(rr, cc)], cell_label[(r, c)]))

    targets: list[TargetSpec] = []
    used: set[int] = set()
    for r, c in free:
        tok = grid.cells[r][c]
        if tok.startswith("T"):
            k = int(tok[1:])
            if k not in grid.target_table:
                raise InstanceError(f"grid target T{k} has no table entry")
            if k in used:
                raise InstanceError(f"grid target T{k} appears in more than one cell")
            used.add(k)
            d, v_p, v_i = grid.target_table[k]
            targets.append(TargetSpec(id=cell_label[(r, c)], d=d, v_p=v_p, v_i=v_i))
    missing = set(grid.target_table) - used
    if missing:
        raise InstanceError(f"target table entries without a grid cell: {sorted(missing)}")

    vertices = [cell_label[(r, c)] for r, c in free]
    return PatrolInstance(vertices=vertices, arcs=arcs, targets=targets, epsilon=grid.epsilon)


def instance_from_dict(data: dict) -> PatrolInstance:
    """Build an instance from a parsed JSON dict, validating the schema."""
    if not isinstance(data, dict):
        raise InstanceError("instance JSON must be an object")
    kind = data.get("kind", "instance")
    if kind != "instance":
        raise InstanceError(f"expected an instance file, got kind={kind!r}")
    try:
        vertices = [str(v) for v in data["vertices"]]
        arcs = [(str(a[0]), str(a[1])) for a in data["arcs"]]
        targets = [
            TargetSpec(id=str(t["id"]), d=int(t["d"]),
                       v_p=float(t["v_p"]), v_i=float(t["v_i"]))
            for t in data["targets"]
        ]
        epsilon = float(data["epsilon"])
    except (KeyError, TypeError, IndexError) as exc:
        raise InstanceError(f"malformed instance JSON: {exc!r}") from exc
    return PatrolInstance(vertices=vertices, arcs=arcs, targets=targets, epsilon=epsilon)


def load_instance(path: str) -> PatrolInstance:
    """Load an instance from a ``.json`` or ``.grid`` file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    if path.endswith(".grid"):
        return grid_to_graph(parse_grid(text))
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: not valid JSON: {exc}") from exc
    return instance_from_dict(data)


def save_instance(instance: PatrolInstance, path: str) -> None:
    """Write an instance as JSON."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(instance.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
