# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import numpy as np
import pytest

from dispatch_emulator.allocation import AllocationParams, Courier, Order, Restaurant
from dispatch_emulator.demand import DemandMatrix, TimeInterval
from dispatch_emulator.netgraph import build_family, build_grid


@pytest.fixture
def line_distance():
    """Seven cells in a row, 1 km apart."""
    return build_grid(1, 7, 1.0)[1]


@pytest.fixture
def route_family():
    """
    Three rows by two columns, 2 km cells. Predicted orders: 4->2 once,
    4->3 three times, 2->3 twice. The path 4, 2, 3 collects all six.
    """
    _, distance = build_grid(3, 2, 2.0)
    counts = np.zeros((6, 6))
    counts[4, 2] = 1
    counts[4, 3] = 3
    counts[2, 3] = 2
    return build_family(distance, DemandMatrix(TimeInterval(0), counts))


@pytest.fixture
def flow_instance():
    """
    Four by four grid, 1 km cells. Courier d1 (capacity 2) at cell 0,
    restaurant r1 three cells east, r2 three cells south with six orders
    to the neighbouring cell at fee 60.
    """
    _, distance = build_grid(4, 4, 1.0)
    couriers = [Courier("d1", 0, 2)]
    restaurants = [Restaurant("r1", 3), Restaurant("r2", 12)]
    orders = [Order(f"o{k}", "r2", 13, 60.0, TimeInterval(0)) for k in range(6)]
    params = AllocationParams(pickup_threshold_km=3.0, delivery_radius_km=6.0, cost_scalar=1.0)
    return distance, couriers, restaurants, orders, params
