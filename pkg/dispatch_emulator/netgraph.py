# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Grid world and the subgraph family used by repositioning and allocation.

Cells are addressed by their row-major index. The distance subgraph joins
lateral neighbours only; distances between arbitrary cells are shortest
paths over it.
"""
import math
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Mapping, Optional, Tuple, Union

import networkx as nx
import numpy as np
import pandas as pd

from dispatch_emulator.errors import DataError

logger = logging.getLogger(__name__)

CellId = int
Edge = Tuple[CellId, CellId]

# Returned by shortest_distance for disconnected pairs.
UNREACHABLE = math.inf

GRAPH_FIXTURE_COLUMNS = ["src_cell", "dst_cell", "distance_km"]


class GridError(DataError):
    pass


class UnknownVertexError(DataError):
    pass


class GraphFixtureError(DataError):
    pass


@dataclass(frozen=True)
class Grid:
    rows: int
    cols: int
    cell_size_km: float = 2.0

    def __post_init__(self):
        if int(self.rows) != self.rows or self.rows < 1:
            raise GridError(f"Grid rows must be a positive integer, got {self.rows!r}")
        if int(self.cols) != self.cols or self.cols < 1:
            raise GridError(f"Grid cols must be a positive integer, got {self.cols!r}")
        if not self.cell_size_km > 0:
            raise GridError(f"Cell size must be positive, got {self.cell_size_km!r}")

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def contains(self, cell: CellId) -> bool:
        return isinstance(cell, (int, np.integer)) and 0 <= cell < self.n_cells

    def check(self, cell: CellId) -> CellId:
        if not self.contains(cell):
            raise UnknownVertexError(
                f"Cell {cell!r} is outside the {self.rows}x{self.cols} grid"
            )
        return int(cell)

    def coords(self, cell: CellId) -> Tuple[int, int]:
        return divmod(self.check(cell), self.cols)

    def cell_at(self, row: int, col: int) -> CellId:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise UnknownVertexError(f"Coordinates ({row}, {col}) are outside the grid")
        return row * self.cols + col

    def neighbors(self, cell: CellId) -> Iterator[CellId]:
        row, col = self.coords(cell)
        for d_row, d_col in ((-1, 0), (0, -1), (0, 1), (1, 0)):
            r, c = row + d_row, col + d_col
            if 0 <= r < self.rows and 0 <= c < self.cols:
                yield r * self.cols + c

    def are_adjacent(self, a: CellId, b: CellId) -> bool:
        (ra, ca), (rb, cb) = self.coords(a), self.coords(b)
        return abs(ra - rb) + abs(ca - cb) == 1


@dataclass(frozen=True, eq=False)
class DistanceSubgraph:
    """
    Physical distances between adjacent cell centres. Immutable once
    built; shortest-path rows are computed lazily and memoised.
    """

    grid: Grid
    graph: nx.DiGraph
    _rows: Dict[CellId, np.ndarray] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for i, j, w in self.graph.edges(data="weight"):
            if w is None or not w > 0:
                raise GridError(f"Edge ({i}, {j}) must have a positive weight, got {w!r}")
            if not self.graph.has_edge(j, i) or self.graph[j][i]["weight"] != w:
                raise GridError(f"Edge ({i}, {j}) has no symmetric counterpart")

    @classmethod
    def from_edges(
        cls, grid: Grid, weights: Mapping[Edge, float]
    ) -> "DistanceSubgraph":
        graph = nx.DiGraph()
        graph.add_nodes_from(range(grid.n_cells))
        for (i, j), w in sorted(weights.items()):
            grid.check(i)
            grid.check(j)
            if not grid.are_adjacent(i, j):
                raise GridError(f"Cells {i} and {j} are not lateral neighbours")
            graph.add_edge(i, j, weight=float(w))
        return cls(grid, graph)

    @property
    def vertices(self) -> List[CellId]:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> List[Edge]:
        return sorted(self.graph.edges)

    def weight(self, i: CellId, j: CellId) -> float:
        return self.graph[i][j]["weight"]

    def out_edges(self, cell: CellId) -> List[Tuple[CellId, float]]:
        self._check(cell)
        return sorted((j, data["weight"]) for j, data in self.graph[cell].items())

    def _check(self, cell: CellId) -> CellId:
        if cell not in self.graph:
            raise UnknownVertexError(f"Cell {cell!r} is not a vertex of the distance subgraph")
        return cell

    def distances_from(self, source: CellId) -> np.ndarray:
        self._check(source)
        row = self._rows.get(source)
        if row is None:
            row = np.full(self.grid.n_cells, UNREACHABLE)
            lengths = nx.single_source_dijkstra_path_length(self.graph, source, weight="weight")
            for cell, length in lengths.items():
                row[cell] = length
            row.setflags(write=False)
            self._rows[source] = row
        return row

    def shortest_distance(self, a: CellId, b: CellId) -> float:
        self._check(b)
        if a == b:
            self._check(a)
            return 0.0
        return float(self.distances_from(a)[b])


@dataclass(frozen=True, eq=False)
class OrderSubgraph:
    """Predicted order counts from restaurant cell to customer cell."""

    graph: nx.DiGraph

    @property
    def vertices(self) -> List[CellId]:
        return sorted(self.graph.nodes)

    @property
    def edges(self) -> List[Edge]:
        return sorted(self.graph.edges)

    def weight(self, i: CellId, j: CellId) -> float:
        data = self.graph.get_edge_data(i, j)
        return 0.0 if data is None else data["weight"]

    def outgoing(self, cell: CellId) -> float:
        return float(sum(w for _, _, w in self.graph.out_edges(cell, data="weight")))

    def total(self) -> float:
        return float(sum(w for _, _, w in self.graph.edges(data="weight")))

    def to_matrix(self) -> np.ndarray:
        n = self.graph.number_of_nodes()
        matrix = np.zeros((n, n))
        for i, j, w in self.graph.edges(data="weight"):
            matrix[i, j] = w
        return matrix


@dataclass(frozen=True, eq=False)
class GraphFamily:
    distance: DistanceSubgraph
    orders: OrderSubgraph
    grid: Grid

    def __post_init__(self):
        if set(self.distance.graph.nodes) != set(self.orders.graph.nodes):
            raise GridError("Distance and order subgraphs must share one vertex set")


def build_grid(
    rows: int,
    cols: int,
    cell_size_km: float = 2.0,
    overrides: Optional[Mapping[Edge, float]] = None,
) -> Tuple[Grid, DistanceSubgraph]:
    grid = Grid(rows, cols, cell_size_km)
    weights = {}
    for cell in range(grid.n_cells):
        for other in grid.neighbors(cell):
            weights[(cell, other)] = float(cell_size_km)
    for (i, j), w in (overrides or {}).items():
        if (i, j) not in weights:
            raise GraphFixtureError(f"Edge ({i}, {j}) does not join lateral neighbours")
        weights[(i, j)] = weights[(j, i)] = float(w)
    distance = DistanceSubgraph.from_edges(grid, weights)
    logger.debug(
        "Built %dx%d grid with %d directed edges", rows, cols, distance.graph.number_of_edges()
    )
    return grid, distance


def shortest_distance(g: DistanceSubgraph, a: CellId, b: CellId) -> float:
    return g.shortest_distance(a, b)


def order_subgraph_from_matrix(m) -> OrderSubgraph:
    counts = np.asarray(m.counts, dtype=float)
    if (counts < 0).any():
        i, j = map(int, np.argwhere(counts < 0)[0])
        raise DataError(f"Demand entry ({i}, {j}) is negative: {counts[i, j]}")
    graph = nx.DiGraph()
    graph.add_nodes_from(range(counts.shape[0]))
    for i, j in zip(*np.nonzero(counts > 0)):
        graph.add_edge(int(i), int(j), weight=float(counts[i, j]))
    return OrderSubgraph(graph)


def build_family(distance: DistanceSubgraph, m) -> GraphFamily:
    return GraphFamily(distance, order_subgraph_from_matrix(m), distance.grid)


def load_graph_fixture(path: Union[str, Path], grid: Grid) -> DistanceSubgraph:
    """
    Read per-edge distance overrides. Each record applies to both directions
    of a lateral edge; unlisted edges keep the uniform cell size.
    """
    path = Path(path)
    if not path.exists():
        raise GraphFixtureError(f"Graph fixture not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.ParserError as error:
        raise GraphFixtureError(f"{path}: {error}") from error
    except pd.errors.EmptyDataError as error:
        raise GraphFixtureError(f"{path}: missing header row") from error
    if list(frame.columns) != GRAPH_FIXTURE_COLUMNS:
        raise GraphFixtureError(
            f"{path}:1: expected header {','.join(GRAPH_FIXTURE_COLUMNS)}"
        )
    overrides = {}
    for offset, record in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        try:
            src, dst = int(record.src_cell), int(record.dst_cell)
            distance_km = float(record.distance_km)
        except ValueError as error:
            raise GraphFixtureError(f"{path}:{line}: {error}") from error
        if not distance_km > 0:
            raise GraphFixtureError(f"{path}:{line}: distance must be positive")
        if not (grid.contains(src) and grid.contains(dst)):
            raise GraphFixtureError(f"{path}:{line}: cell outside the grid")
        overrides[(src, dst)] = distance_km
    _, distance = build_grid(grid.rows, grid.cols, grid.cell_size_km, overrides)
    return distance
