# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Budgeted repositioning routes over the subgraph family.

The greedy builder follows the next-edge marginal gain. Paths are simple:
a visited cell is never re-entered.
"""
import logging
from dataclasses import dataclass
from typing import AbstractSet, Iterable, List, Sequence, Tuple

from dispatch_emulator.errors import DataError
from dispatch_emulator.netgraph import CellId, Edge, GraphFamily, UnknownVertexError

logger = logging.getLogger(__name__)

MAX_ORACLE_CELLS = 16

GainStep = Tuple[Edge, float]


class InvalidPathError(DataError):
    pass


class InstanceTooLargeError(DataError):
    pass


@dataclass(frozen=True)
class Path:
    vertices: Tuple[CellId, ...]
    cumulative_distance_km: float
    objective_value: float

    @property
    def end(self) -> CellId:
        return self.vertices[-1]

    @property
    def edges(self) -> List[Edge]:
        return list(zip(self.vertices, self.vertices[1:]))


@dataclass(frozen=True)
class RouteRequest:
    start: CellId
    max_distance_km: float = 5.0
    strict: bool = False

    def __post_init__(self):
        if not self.max_distance_km > 0:
            raise DataError(f"Relocation budget must be positive, got {self.max_distance_km}")

    def within(self, distance_km: float) -> bool:
        if self.strict:
            return distance_km < self.max_distance_km
        return distance_km <= self.max_distance_km


def _check_start(family: GraphFamily, start: CellId):
    if start not in family.distance.graph:
        raise UnknownVertexError(f"Start cell {start!r} is not a grid vertex")


def path_length(family: GraphFamily, vertices: Sequence[CellId]) -> float:
    total = 0.0
    for i, j in zip(vertices, vertices[1:]):
        if not family.distance.graph.has_edge(i, j):
            raise InvalidPathError(f"Cells {i} and {j} are not joined in the distance subgraph")
        total += family.distance.weight(i, j)
    return total


def objective_value(family: GraphFamily, p: Sequence[CellId]) -> float:
    """Predicted orders from each path vertex to the vertices after it."""
    if not p:
        raise InvalidPathError("Path is empty")
    if len(set(p)) != len(p):
        raise InvalidPathError(f"Path {list(p)} revisits a cell")
    for cell in p:
        _check_start(family, cell)
    path_length(family, p)
    total = 0.0
    for position, origin in enumerate(p):
        for dest in p[position + 1:]:
            total += family.orders.weight(origin, dest)
    return total


def feasible_edges(
    family: GraphFamily,
    current: CellId,
    spent_km: float,
    budget_km: float,
    visited: AbstractSet[CellId],
    strict: bool = False,
) -> List[Edge]:
    edges = []
    for j, w in family.distance.out_edges(current):
        if j in visited:
            continue
        total = spent_km + w
        if total < budget_km or (not strict and total == budget_km):
            edges.append((current, j))
    return edges


def marginal_gain_trace(family: GraphFamily, req: RouteRequest) -> List[GainStep]:
    _check_start(family, req.start)
    trace = []
    current, spent = req.start, 0.0
    visited = {req.start}
    while spent < req.max_distance_km:
        candidates = feasible_edges(
            family, current, spent, req.max_distance_km, visited, req.strict
        )
        if not candidates:
            break
        # Highest gain, then lowest destination cell
        edge = max(candidates, key=lambda e: (family.orders.weight(*e), -e[1]))
        trace.append((edge, family.orders.weight(*edge)))
        spent += family.distance.weight(*edge)
        current = edge[1]
        visited.add(current)
    return trace


def greedy_route(family: GraphFamily, req: RouteRequest) -> Path:
    trace = marginal_gain_trace(family, req)
    vertices = (req.start,) + tuple(edge[1] for edge, _ in trace)
    return Path(
        vertices,
        path_length(family, vertices),
        objective_value(family, vertices),
    )


def brute_force_route(family: GraphFamily, req: RouteRequest) -> Path:
    _check_start(family, req.start)
    n_cells = family.distance.graph.number_of_nodes()
    if n_cells > MAX_ORACLE_CELLS:
        raise InstanceTooLargeError(
            f"Exhaustive routing is limited to {MAX_ORACLE_CELLS} cells, got {n_cells}"
        )
    best = None

    def key(path: Path):
        return (-path.objective_value, path.cumulative_distance_km, path.vertices)

    def explore(vertices: List[CellId], spent: float):
        nonlocal best
        candidate = Path(tuple(vertices), spent, objective_value(family, vertices))
        if best is None or key(candidate) < key(best):
            best = candidate
        current = vertices[-1]
        for j, w in family.distance.out_edges(current):
            if j in vertices or not req.within(spent + w):
                continue
            vertices.append(j)
            explore(vertices, spent + w)
            vertices.pop()

    explore([req.start], 0.0)
    return best


def trim_route(family: GraphFamily, path: Path) -> Path:
    """Shortest prefix of ``path`` that keeps its objective value."""
    for size in range(1, len(path.vertices) + 1):
        prefix = path.vertices[:size]
        value = objective_value(family, prefix)
        if value >= path.objective_value:
            return Path(prefix, path_length(family, prefix), value)
    return path


def edge_set_value(family: GraphFamily, edges: Iterable[Edge]) -> float:
    return float(sum(family.orders.weight(i, j) for i, j in set(edges)))


def edge_gain(family: GraphFamily, edge: Edge, base: Iterable[Edge]) -> float:
    base = set(base)
    return edge_set_value(family, base | {edge}) - edge_set_value(family, base)
