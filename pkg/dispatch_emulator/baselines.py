# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Comparison dispatchers. Neither repositions couriers; both respect the
pickup threshold and delivery radius, so their plans are feasible flows of
the allocation network.
"""
import logging
from typing import List, Optional, Sequence

from dispatch_emulator.allocation import (
    AllocationContext,
    AllocationPlan,
    Assignment,
    Courier,
    Order,
    make_assignment,
)

logger = logging.getLogger(__name__)


def arrival_order(state, realized: Sequence[Order]) -> List[Order]:
    """Pending orders then new ones, stable by the interval they were placed in."""
    return sorted(list(state.pending) + list(realized), key=lambda o: o.placed_at)


def allocation_context(state, realized: Sequence[Order], config) -> AllocationContext:
    return AllocationContext(
        state.distance,
        tuple(state.idle_couriers()),
        state.restaurants,
        tuple(arrival_order(state, realized)),
        config.allocation_params(),
    )


class CourierLoads:
    """
    Idle couriers with their remaining capacity. Trips handed to the same
    courier are chained: each one starts at the previous trip's last
    drop-off, with ``offset_km`` covering the trips before it.
    """

    def __init__(self, state):
        self.distance = state.distance
        self.couriers = list(state.idle_couriers())
        self.remaining = {c.id: c.capacity for c in self.couriers}
        self._position = {c.id: c.location for c in self.couriers}
        self._offset = {c.id: 0.0 for c in self.couriers}

    def nearest(self, cell: int, threshold: float, load: int = 1) -> Optional[Courier]:
        """Nearest courier, by its location at the start of the interval, with room for ``load``."""
        best = None
        for courier in self.couriers:
            if self.remaining[courier.id] < load:
                continue
            d = self.distance.shortest_distance(courier.location, cell)
            if d > threshold:
                continue
            if best is None or (d, courier.id) < best[0]:
                best = ((d, courier.id), courier)
        return None if best is None else best[1]

    def assign(self, courier: Courier, restaurant, sequence: Sequence[Order]) -> Assignment:
        assignment = make_assignment(
            self.distance,
            courier.id,
            restaurant,
            sequence,
            self._position[courier.id],
            self._offset[courier.id],
        )
        self.remaining[courier.id] -= len(sequence)
        self._offset[courier.id] += assignment.distance_km
        self._position[courier.id] = sequence[-1].dropoff
        return assignment


def _reachable(state, order: Order, config) -> bool:
    restaurant = state.restaurants[order.restaurant_id]
    return (
        state.distance.shortest_distance(restaurant.cell, order.dropoff)
        <= config.delivery_radius_km
    )


def baseline_greedy(state, realized: Sequence[Order], config) -> AllocationPlan:
    """
    Each order, in arrival sequence, goes as a single trip to the nearest
    idle courier with remaining capacity.
    """
    loads = CourierLoads(state)
    plan = AllocationPlan()
    for order in arrival_order(state, realized):
        restaurant = state.restaurants[order.restaurant_id]
        courier = None
        if _reachable(state, order, config):
            courier = loads.nearest(restaurant.cell, config.pickup_threshold_km)
        if courier is None:
            plan.unassigned_orders.append(order.id)
            continue
        plan.assignments.append(loads.assign(courier, restaurant, [order]))
    logger.debug(
        "Greedy baseline assigned %d orders, %d left",
        len(plan.assignments), len(plan.unassigned_orders),
    )
    return plan


def _nearest_neighbour_chain(state, restaurant, orders: Sequence[Order]) -> List[Order]:
    chain, current, remaining = [], restaurant.cell, list(orders)
    while remaining:
        nearest = min(
            remaining,
            key=lambda o: (state.distance.shortest_distance(current, o.dropoff), o.id),
        )
        chain.append(nearest)
        remaining.remove(nearest)
        current = nearest.dropoff
    return chain


def baseline_bundling(state, realized: Sequence[Order], config) -> AllocationPlan:
    """
    Same-restaurant orders are cut into bundles of at most the courier
    capacity, without any detour check, and each bundle goes to the nearest
    idle courier with room for it. Bundles are served in the arrival order
    of their first order, so with capacity 1 this is exactly the greedy
    baseline.
    """
    orders = arrival_order(state, realized)
    position = {order.id: index for index, order in enumerate(orders)}
    by_restaurant = {}
    unreachable = []
    for order in orders:
        if _reachable(state, order, config):
            by_restaurant.setdefault(order.restaurant_id, []).append(order)
        else:
            unreachable.append(order.id)

    bundles = []
    for restaurant_id, group in by_restaurant.items():
        for start in range(0, len(group), config.courier_capacity):
            bundles.append((restaurant_id, group[start:start + config.courier_capacity]))
    bundles.sort(key=lambda bundle: position[bundle[1][0].id])

    loads = CourierLoads(state)
    plan = AllocationPlan()
    unassigned = set(unreachable)
    for restaurant_id, bundle in bundles:
        restaurant = state.restaurants[restaurant_id]
        courier = loads.nearest(restaurant.cell, config.pickup_threshold_km, len(bundle))
        if courier is None:
            unassigned.update(order.id for order in bundle)
            continue
        sequence = _nearest_neighbour_chain(state, restaurant, bundle)
        plan.assignments.append(loads.assign(courier, restaurant, sequence))
    plan.unassigned_orders = [order.id for order in orders if order.id in unassigned]
    return plan


def baseline_branch_and_bound(state, realized: Sequence[Order], config) -> AllocationPlan:
    raise NotImplementedError(
        "Branch-and-bound dispatch is not available; compare against greedy and bundling"
    )
