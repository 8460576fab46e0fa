# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dispatch_emulator.demand import DemandMatrix, TimeInterval
from dispatch_emulator.errors import DataError
from dispatch_emulator.netgraph import (
    UNREACHABLE,
    DistanceSubgraph,
    Grid,
    GraphFixtureError,
    GridError,
    UnknownVertexError,
    build_family,
    build_grid,
    load_graph_fixture,
    order_subgraph_from_matrix,
    shortest_distance,
)


def test_build_grid_uniform_lateral_edges():
    grid, distance = build_grid(10, 10, 2.0)
    assert grid.n_cells == 100
    # 2 * (rows * (cols - 1) + cols * (rows - 1)) directed edges
    assert len(distance.edges) == 2 * (10 * 9 + 10 * 9)
    assert all(distance.weight(i, j) == 2.0 for i, j in distance.edges)
    assert distance.out_edges(0) == [(1, 2.0), (10, 2.0)]


def test_single_cell_grid_has_no_edges():
    grid, distance = build_grid(1, 1)
    assert distance.vertices == [0]
    assert distance.edges == []
    assert shortest_distance(distance, 0, 0) == 0.0


@pytest.mark.parametrize(
    "rows,cols,size",
    [(0, 3, 1.0), (3, 0, 1.0), (2, 2, 0.0), (2, 2, -1.0)],
)
def test_invalid_grid_rejected(rows, cols, size):
    with pytest.raises(GridError):
        build_grid(rows, cols, size)


def test_shortest_distance_is_manhattan_on_uniform_grid():
    _, distance = build_grid(4, 5, 2.0)
    grid = distance.grid
    for a in range(grid.n_cells):
        for b in range(grid.n_cells):
            (ra, ca), (rb, cb) = grid.coords(a), grid.coords(b)
            assert shortest_distance(distance, a, b) == 2.0 * (abs(ra - rb) + abs(ca - cb))


def test_shortest_distance_symmetric_with_overrides():
    _, distance = build_grid(3, 3, 1.0, overrides={(0, 1): 5.0, (4, 5): 0.5})
    assert distance.weight(1, 0) == 5.0
    assert shortest_distance(distance, 0, 1) == 3.0
    for a in range(9):
        for b in range(9):
            assert shortest_distance(distance, a, b) == shortest_distance(distance, b, a)


def test_unreachable_cells_report_sentinel():
    grid = Grid(1, 3)
    distance = DistanceSubgraph.from_edges(grid, {(0, 1): 1.0, (1, 0): 1.0})
    assert shortest_distance(distance, 0, 2) == UNREACHABLE
    assert math.isinf(shortest_distance(distance, 2, 0))


def test_unknown_vertex_rejected():
    _, distance = build_grid(2, 2)
    with pytest.raises(UnknownVertexError):
        shortest_distance(distance, 0, 4)
    with pytest.raises(UnknownVertexError):
        distance.out_edges(-1)


def test_asymmetric_edges_rejected():
    grid = Grid(1, 2)
    with pytest.raises(GridError):
        DistanceSubgraph.from_edges(grid, {(0, 1): 1.0})


def test_non_adjacent_override_rejected():
    with pytest.raises(GraphFixtureError):
        build_grid(2, 2, 1.0, overrides={(0, 3): 1.0})


def test_order_subgraph_from_matrix():
    counts = np.zeros((4, 4))
    counts[0, 3] = 2
    counts[1, 2] = 1.5
    orders = order_subgraph_from_matrix(DemandMatrix(TimeInterval(0), counts))
    assert orders.vertices == [0, 1, 2, 3]
    assert orders.weight(0, 3) == 2
    assert orders.weight(3, 0) == 0.0
    assert orders.outgoing(1) == 1.5
    assert orders.total() == 3.5
    np.testing.assert_array_equal(orders.to_matrix(), counts)


def test_build_family_requires_matching_vertices():
    _, distance = build_grid(2, 2)
    with pytest.raises(DataError):
        build_family(distance, DemandMatrix.zeros(TimeInterval(0), 5))


def test_load_graph_fixture(tmp_path):
    fixture = tmp_path / "graph.csv"
    fixture.write_text("src_cell,dst_cell,distance_km\n0,1,3.5\n")
    distance = load_graph_fixture(fixture, Grid(2, 2, 1.0))
    assert distance.weight(0, 1) == 3.5
    assert distance.weight(1, 0) == 3.5
    assert distance.weight(0, 2) == 1.0


@pytest.mark.parametrize(
    "body,needle",
    [
        ("src,dst,km\n0,1,1\n", ":1:"),
        ("src_cell,dst_cell,distance_km\n0,1,abc\n", ":2:"),
        ("src_cell,dst_cell,distance_km\n0,1,1\n0,9,1\n", ":3:"),
        ("src_cell,dst_cell,distance_km\n0,1,-2\n", ":2:"),
    ],
)
def test_load_graph_fixture_errors_name_line(tmp_path, body, needle):
    fixture = tmp_path / "graph.csv"
    fixture.write_text(body)
    with pytest.raises(GraphFixtureError, match=needle):
        load_graph_fixture(fixture, Grid(2, 2, 1.0))


def test_load_graph_fixture_missing_file(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(GraphFixtureError, match="nope.csv"):
        load_graph_fixture(missing, Grid(2, 2))


@st.composite
def weighted_grids(draw, min_side=1, max_side=5):
    rows = draw(st.integers(min_side, max_side))
    cols = draw(st.integers(min_side, max_side))
    grid = Grid(rows, cols)
    pairs = [(a, b) for a in range(grid.n_cells) for b in grid.neighbors(a) if a < b]
    weights = draw(st.lists(st.integers(1, 9), min_size=len(pairs), max_size=len(pairs)))
    return build_grid(rows, cols, 1.0, overrides=dict(zip(pairs, map(float, weights))))[1]


@settings(max_examples=60, deadline=None)
@given(weighted_grids())
def test_triangle_inequality(distance):
    n = distance.grid.n_cells
    d = np.array([[shortest_distance(distance, a, b) for b in range(n)] for a in range(n)])
    # d[a, c] <= d[a, b] + d[b, c] for every b
    assert (d[:, None, :] <= d[:, :, None] + d[None, :, :]).all()


def cheapest_simple_path(distance, source, target):
    best = UNREACHABLE
    stack = [(source, 0.0, {source})]
    while stack:
        cell, length, seen = stack.pop()
        if length >= best:
            continue
        if cell == target:
            best = min(best, length)
            continue
        for other, w in distance.out_edges(cell):
            if other not in seen:
                stack.append((other, length + w, seen | {other}))
    return best


@settings(max_examples=40, deadline=None)
@given(
    weighted_grids(min_side=4, max_side=4),
    st.integers(0, 15),
    st.integers(0, 15),
)
def test_matches_exhaustive_paths_on_perturbed_grid(distance, source, target):
    assert shortest_distance(distance, source, target) == cheapest_simple_path(
        distance, source, target
    )
