# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Three-layer allocation graph: couriers, pickups (restaurants) and drop-off
cells between a super source and a super sink.

Costs share one axis: courier-to-restaurant arcs cost ``cost_scalar`` per
km, restaurant-to-drop-off arcs cost the negated delivery fee. One solve
over the whole graph optimizes both layers; ``two_phase`` solves the
courier layer first and then the drop-off layer on top of it.
"""
import enum
import itertools
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from dispatch_emulator.demand import DemandMatrix, TimeInterval
from dispatch_emulator.errors import DataError, InvariantViolation
from dispatch_emulator.flow import (
    EPSILON,
    FlowNetwork,
    FlowResult,
    min_cost_max_flow,
)
from dispatch_emulator.netgraph import UNREACHABLE, CellId, DistanceSubgraph

logger = logging.getLogger(__name__)

# Batches up to this size are sequenced by exhaustive enumeration.
MAX_ENUMERATED_BATCH = 4

SOURCE_LABEL = "S"
SINK_LABEL = "T"


class PlanInvariantError(InvariantViolation):
    pass


class CourierStatus(str, enum.Enum):
    IDLE = "idle"
    REPOSITIONING = "repositioning"
    DELIVERING = "delivering"


@dataclass
class Courier:
    id: str
    location: CellId
    capacity: int = 3
    status: CourierStatus = CourierStatus.IDLE
    busy_until_minute: float = 0.0

    def __post_init__(self):
        if int(self.capacity) != self.capacity or self.capacity < 1:
            raise DataError(f"Courier {self.id} capacity must be a positive integer")


@dataclass(frozen=True)
class Restaurant:
    id: str
    cell: CellId

    @classmethod
    def at_cell(cls, cell: CellId) -> "Restaurant":
        return cls(f"r{cell}", cell)


@dataclass(frozen=True)
class Order:
    id: str
    restaurant_id: str
    dropoff: CellId
    fee: float
    placed_at: TimeInterval
    delivered_at: Optional[TimeInterval] = None

    def __post_init__(self):
        if not self.fee > 0:
            raise DataError(f"Order {self.id} fee must be positive, got {self.fee}")
        if self.delivered_at is not None and self.delivered_at < self.placed_at:
            raise DataError(f"Order {self.id} delivered before it was placed")


@dataclass(frozen=True)
class Batch:
    restaurant_id: str
    orders: Tuple[str, ...]
    max_detour_ratio: float = 1.0

    def __len__(self):
        return len(self.orders)


@dataclass(frozen=True)
class Assignment:
    courier_id: str
    batch: Batch
    pickup_distance_km: float
    route_distance_km: float
    total_fee: float
    # Distance the courier covers on earlier trips of the same interval.
    offset_km: float = 0.0
    legs_km: Tuple[float, ...] = ()

    @property
    def distance_km(self) -> float:
        return self.pickup_distance_km + self.route_distance_km


@dataclass
class AllocationPlan:
    assignments: List[Assignment] = field(default_factory=list)
    unassigned_orders: List[str] = field(default_factory=list)

    @property
    def assigned_orders(self) -> List[str]:
        return [oid for a in self.assignments for oid in a.batch.orders]

    def courier_load(self) -> Dict[str, int]:
        load: Dict[str, int] = defaultdict(int)
        for assignment in self.assignments:
            load[assignment.courier_id] += len(assignment.batch)
        return dict(load)

    def total_fee(self) -> float:
        return sum(a.total_fee for a in self.assignments)


@dataclass(frozen=True)
class AllocationParams:
    pickup_threshold_km: float = 8.0
    delivery_radius_km: float = 8.0
    detour_threshold: float = 1.5
    cost_scalar: float = 1.0
    two_phase: bool = False
    sla_minutes: Optional[float] = None
    speed_km_per_min: float = 0.5
    default_fee: float = 10.0

    def __post_init__(self):
        for name in ("pickup_threshold_km", "delivery_radius_km", "speed_km_per_min"):
            if not getattr(self, name) > 0:
                raise DataError(f"{name} must be positive, got {getattr(self, name)}")
        if self.detour_threshold < 1:
            raise DataError(f"Detour threshold must be at least 1, got {self.detour_threshold}")
        if self.cost_scalar < 0:
            raise DataError(f"Cost scalar must be non-negative, got {self.cost_scalar}")

    def within_sla(self, distance_km: float) -> bool:
        if self.sla_minutes is None:
            return True
        return distance_km / self.speed_km_per_min <= self.sla_minutes


@dataclass(frozen=True, eq=False)
class AllocationContext:
    distance: DistanceSubgraph
    couriers: Tuple[Courier, ...]
    restaurants: Mapping[str, Restaurant]
    orders: Tuple[Order, ...]
    params: AllocationParams

    def courier(self, courier_id: str) -> Courier:
        for courier in self.couriers:
            if courier.id == courier_id:
                return courier
        raise KeyError(courier_id)

    def order_index(self) -> Dict[str, Order]:
        return {order.id: order for order in self.orders}


@dataclass
class AllocationNetwork(FlowNetwork):
    courier_nodes: Dict[str, int] = field(default_factory=dict)
    restaurant_nodes: Dict[str, int] = field(default_factory=dict)
    dropoff_nodes: Dict[CellId, int] = field(default_factory=dict)
    # arc index -> (courier id, restaurant id)
    pickup_arcs: Dict[int, Tuple[str, str]] = field(default_factory=dict)
    # arc index -> (restaurant id, drop-off cell, fee)
    delivery_arcs: Dict[int, Tuple[str, CellId, float]] = field(default_factory=dict)
    context: Optional[AllocationContext] = None


def _cell(item: Union[Order, CellId]) -> CellId:
    return item.dropoff if isinstance(item, Order) else item


def detour_ratio(
    dist: DistanceSubgraph,
    r: Restaurant,
    sequence: Sequence[Union[Order, CellId]],
    i: int,
) -> float:
    """
    Ratio of the batched distance to the ``i``-th drop-off (1-based) over the
    direct restaurant-to-drop-off distance. A drop-off in the restaurant's
    own cell has ratio 1; an unreachable cell is infinitely detoured.
    """
    if not 2 <= i <= len(sequence):
        raise DataError(f"Detour ratio needs 2 <= i <= {len(sequence)}, got {i}")
    cells = [_cell(item) for item in sequence[:i]]
    direct = dist.shortest_distance(r.cell, cells[-1])
    travelled = dist.shortest_distance(r.cell, cells[0])
    for a, b in zip(cells, cells[1:]):
        travelled += dist.shortest_distance(a, b)
    if direct == UNREACHABLE or travelled == UNREACHABLE:
        return UNREACHABLE
    if direct == 0:
        return 1.0
    return travelled / direct


def max_detour_ratio(dist: DistanceSubgraph, r: Restaurant, sequence: Sequence) -> float:
    return max(
        (detour_ratio(dist, r, sequence, i) for i in range(2, len(sequence) + 1)),
        default=1.0,
    )


def route_legs(dist: DistanceSubgraph, r: Restaurant, sequence: Sequence) -> List[float]:
    cells = [r.cell] + [_cell(item) for item in sequence]
    return [dist.shortest_distance(a, b) for a, b in zip(cells, cells[1:])]


def _sequence_batch(
    dist: DistanceSubgraph, r: Restaurant, orders: Sequence[Order], threshold: float
) -> Optional[Tuple[Tuple[Order, ...], float]]:
    """Shortest drop-off ordering that keeps every detour ratio within threshold."""
    if len(orders) <= MAX_ENUMERATED_BATCH:
        best = None
        for perm in itertools.permutations(sorted(orders, key=lambda o: o.id)):
            ratio = max_detour_ratio(dist, r, perm)
            if ratio > threshold + EPSILON:
                continue
            key = (sum(route_legs(dist, r, perm)), tuple(o.id for o in perm))
            if best is None or key < best[0]:
                best = (key, perm, ratio)
        return None if best is None else (best[1], best[2])
    chain, current = [], r.cell
    remaining = list(orders)
    while remaining:
        nearest = min(
            remaining, key=lambda o: (dist.shortest_distance(current, o.dropoff), o.id)
        )
        chain.append(nearest)
        remaining.remove(nearest)
        current = nearest.dropoff
    ratio = max_detour_ratio(dist, r, chain)
    if ratio > threshold + EPSILON:
        return None
    return tuple(chain), ratio


def build_batches(
    dist: DistanceSubgraph,
    r: Restaurant,
    pending: Sequence[Order],
    capacity: int,
    threshold: float,
) -> List[Batch]:
    if threshold < 1:
        raise DataError(f"Detour threshold must be at least 1, got {threshold}")
    if capacity < 1:
        raise DataError(f"Batch capacity must be at least 1, got {capacity}")
    remaining = sorted(
        pending, key=lambda o: (dist.shortest_distance(r.cell, o.dropoff), o.id)
    )
    batches = []
    while remaining:
        seed = remaining.pop(0)
        members, ratio = (seed,), 1.0
        while len(members) < capacity and remaining:
            last = members[-1].dropoff
            candidates = sorted(
                remaining,
                key=lambda o: (
                    dist.shortest_distance(last, o.dropoff),
                    dist.shortest_distance(r.cell, o.dropoff),
                    o.id,
                ),
            )
            for candidate in candidates:
                sequenced = _sequence_batch(dist, r, members + (candidate,), threshold)
                if sequenced is not None:
                    members, ratio = sequenced
                    remaining.remove(candidate)
                    break
            else:
                break
        batches.append(Batch(r.id, tuple(o.id for o in members), ratio))
    return batches


def make_assignment(
    dist: DistanceSubgraph,
    courier_id: str,
    restaurant: Restaurant,
    sequence: Sequence[Order],
    position: CellId,
    offset_km: float = 0.0,
    ratio: Optional[float] = None,
) -> Assignment:
    """One trip from ``position`` to the restaurant and along ``sequence``."""
    legs = tuple(route_legs(dist, restaurant, sequence))
    if ratio is None:
        ratio = max_detour_ratio(dist, restaurant, sequence)
    return Assignment(
        courier_id,
        Batch(restaurant.id, tuple(o.id for o in sequence), ratio),
        dist.shortest_distance(position, restaurant.cell),
        sum(legs),
        sum(o.fee for o in sequence),
        offset_km,
        legs,
    )


def _restaurant_index(restaurants) -> Dict[str, Restaurant]:
    if isinstance(restaurants, Mapping):
        return dict(restaurants)
    return {restaurant.id: restaurant for restaurant in restaurants}


def build_allocation_network(
    distance: DistanceSubgraph,
    couriers: Sequence[Courier],
    restaurants: Union[Sequence[Restaurant], Mapping[str, Restaurant]],
    demand: Union[Sequence[Order], DemandMatrix],
    params: AllocationParams = AllocationParams(),
) -> AllocationNetwork:
    """
    Build the allocation graph from pending orders, or from a demand matrix
    for a predictive (fractional) network that is solved but not decomposed.
    """
    grid = distance.grid
    restaurants = _restaurant_index(restaurants)
    for courier in couriers:
        grid.check(courier.location)
    for restaurant in restaurants.values():
        grid.check(restaurant.cell)

    # (restaurant id, cell, fee) -> units
    od_units: Dict[Tuple[str, CellId, float], float] = defaultdict(float)
    cell_demand: Dict[CellId, float] = defaultdict(float)
    context = None
    if isinstance(demand, DemandMatrix):
        if demand.n_cells != grid.n_cells:
            raise DataError(f"Demand covers {demand.n_cells} cells, grid has {grid.n_cells}")
        by_cell: Dict[CellId, List[Restaurant]] = defaultdict(list)
        for restaurant in restaurants.values():
            by_cell[restaurant.cell].append(restaurant)
        for origin, dest in zip(*demand.counts.nonzero()):
            origin, dest = int(origin), int(dest)
            count = float(demand.counts[origin, dest])
            cell_demand[dest] += count
            for restaurant in by_cell.get(origin, []):
                od_units[(restaurant.id, dest, params.default_fee)] += count / len(by_cell[origin])
    else:
        orders = tuple(demand)
        seen = set()
        for order in orders:
            if order.id in seen:
                raise DataError(f"Duplicate order id {order.id!r}")
            seen.add(order.id)
            if order.restaurant_id not in restaurants:
                raise DataError(f"Order {order.id} names unknown restaurant {order.restaurant_id!r}")
            grid.check(order.dropoff)
            cell_demand[order.dropoff] += 1
            od_units[(order.restaurant_id, order.dropoff, order.fee)] += 1
        context = AllocationContext(distance, tuple(couriers), restaurants, orders, params)

    net = AllocationNetwork(context=context)
    net.source = net.add_node(SOURCE_LABEL)
    for courier in sorted(couriers, key=lambda c: c.id):
        net.courier_nodes[courier.id] = net.add_node(f"courier:{courier.id}")
    for restaurant_id in sorted(restaurants):
        net.restaurant_nodes[restaurant_id] = net.add_node(f"restaurant:{restaurant_id}")
    for cell in sorted(cell_demand):
        net.dropoff_nodes[cell] = net.add_node(f"dropoff:{cell}")
    net.sink = net.add_node(SINK_LABEL)

    # Nearest feasible drop-off per restaurant, for the SLA gate on pickups.
    nearest_dropoff: Dict[str, float] = defaultdict(lambda: UNREACHABLE)
    delivery = []
    for (restaurant_id, cell, fee), units in sorted(od_units.items()):
        d = distance.shortest_distance(restaurants[restaurant_id].cell, cell)
        if d > params.delivery_radius_km or not params.within_sla(d):
            continue
        delivery.append((restaurant_id, cell, fee, units))
        nearest_dropoff[restaurant_id] = min(nearest_dropoff[restaurant_id], d)

    for courier in sorted(couriers, key=lambda c: c.id):
        node = net.courier_nodes[courier.id]
        net.add_arc(net.source, node, courier.capacity, 0.0)
        for restaurant_id in sorted(restaurants):
            d = distance.shortest_distance(courier.location, restaurants[restaurant_id].cell)
            if d > params.pickup_threshold_km:
                continue
            if params.sla_minutes is not None and not params.within_sla(
                d + nearest_dropoff[restaurant_id]
            ):
                continue
            arc = net.add_arc(
                node, net.restaurant_nodes[restaurant_id], courier.capacity, params.cost_scalar * d
            )
            net.pickup_arcs[arc] = (courier.id, restaurant_id)

    for restaurant_id, cell, fee, units in delivery:
        arc = net.add_arc(
            net.restaurant_nodes[restaurant_id], net.dropoff_nodes[cell], units, -fee
        )
        net.delivery_arcs[arc] = (restaurant_id, cell, fee)

    for cell in sorted(cell_demand):
        net.add_arc(net.dropoff_nodes[cell], net.sink, cell_demand[cell], 0.0)

    logger.debug(
        "Allocation network: %d couriers, %d restaurants, %d drop-off cells, %d arcs",
        len(net.courier_nodes), len(net.restaurant_nodes), len(net.dropoff_nodes), len(net.arcs),
    )
    return net


def two_phase_solve(net: AllocationNetwork) -> FlowResult:
    """
    Solve courier-to-restaurant first, with each restaurant drained by its
    feasible drop-off capacity, then re-solve the full graph with pickup
    arcs capped at the phase-one flow.
    """
    phase_one = FlowNetwork()
    phase_one.source = phase_one.add_node(SOURCE_LABEL)
    mapping = {net.source: phase_one.source}
    for node in list(net.courier_nodes.values()) + list(net.restaurant_nodes.values()):
        mapping[node] = phase_one.add_node(net.nodes[node].label)
    phase_one.sink = phase_one.add_node(SINK_LABEL)

    arc_map = {}
    for index, arc in enumerate(net.arcs):
        if arc.src == net.source or index in net.pickup_arcs:
            arc_map[index] = phase_one.add_arc(
                mapping[arc.src], mapping[arc.dst], arc.capacity, arc.unit_cost
            )
    drain: Dict[int, float] = defaultdict(float)
    for index in net.delivery_arcs:
        drain[net.arcs[index].src] += net.arcs[index].capacity
    for node in net.restaurant_nodes.values():
        phase_one.add_arc(mapping[node], phase_one.sink, drain[node], 0.0)

    min_cost_max_flow(phase_one)
    for index in net.pickup_arcs:
        net.arcs[index].capacity = phase_one.arcs[arc_map[index]].flow
    return min_cost_max_flow(net)


def solve(net: AllocationNetwork, two_phase: Optional[bool] = None) -> FlowResult:
    if two_phase is None:
        two_phase = net.context is not None and net.context.params.two_phase
    return two_phase_solve(net) if two_phase else min_cost_max_flow(net)


def allocate(net: AllocationNetwork, context: Optional[AllocationContext] = None) -> AllocationPlan:
    context = context or net.context
    if context is None:
        raise DataError("Only networks built from orders can be decomposed into a plan")
    solve(net, context.params.two_phase)
    dist, params = context.distance, context.params

    pending: Dict[Tuple[str, CellId, float], List[Order]] = defaultdict(list)
    for order in sorted(context.orders, key=lambda o: (o.placed_at, o.id)):
        pending[(order.restaurant_id, order.dropoff, order.fee)].append(order)

    # Units leaving each restaurant, in arc order.
    served: Dict[str, List[Order]] = defaultdict(list)
    for index, key in sorted(net.delivery_arcs.items()):
        units = int(round(net.arcs[index].flow))
        served[key[0]].extend(pending[key][:units])

    # Restaurant units handed to couriers, in arc order.
    by_courier: Dict[str, Dict[str, List[Order]]] = defaultdict(dict)
    cursor: Dict[str, int] = defaultdict(int)
    for index, (courier_id, restaurant_id) in sorted(net.pickup_arcs.items()):
        units = int(round(net.arcs[index].flow))
        if units == 0:
            continue
        start = cursor[restaurant_id]
        cursor[restaurant_id] += units
        by_courier[courier_id][restaurant_id] = served[restaurant_id][start:start + units]
    for restaurant_id, orders in served.items():
        if cursor[restaurant_id] != len(orders):
            raise PlanInvariantError(
                f"Restaurant {restaurant_id} ships {len(orders)} orders but receives "
                f"{cursor[restaurant_id]} courier units"
            )

    plan = AllocationPlan()
    for courier_id in sorted(by_courier):
        courier = context.courier(courier_id)
        position, offset = courier.location, 0.0
        for restaurant_id, orders in by_courier[courier_id].items():
            restaurant = context.restaurants[restaurant_id]
            index = {o.id: o for o in orders}
            for batch in build_batches(
                dist, restaurant, orders, courier.capacity, params.detour_threshold
            ):
                sequence = [index[oid] for oid in batch.orders]
                assignment = make_assignment(
                    dist, courier_id, restaurant, sequence, position, offset, batch.max_detour_ratio
                )
                plan.assignments.append(assignment)
                offset += assignment.distance_km
                position = sequence[-1].dropoff

    assigned = set(plan.assigned_orders)
    plan.unassigned_orders = [o.id for o in context.orders if o.id not in assigned]
    logger.debug(
        "Allocated %d of %d orders to %d couriers",
        len(assigned), len(context.orders), len(by_courier),
    )
    return plan


def check_plan(plan: AllocationPlan, context: AllocationContext, detour: bool = True):
    dist, params = context.distance, context.params
    orders = context.order_index()
    assigned = plan.assigned_orders
    every = assigned + list(plan.unassigned_orders)
    if len(every) != len(set(every)):
        raise PlanInvariantError("An order appears more than once in the plan")
    if set(every) != set(orders):
        raise PlanInvariantError("Assigned and unassigned orders do not cover the pending set")

    for courier_id, load in plan.courier_load().items():
        try:
            courier = context.courier(courier_id)
        except KeyError:
            raise PlanInvariantError(f"Plan names unknown courier {courier_id!r}") from None
        if load > courier.capacity:
            raise PlanInvariantError(
                f"Courier {courier_id} carries {load} orders, capacity {courier.capacity}"
            )

    for assignment in plan.assignments:
        batch = assignment.batch
        restaurant = context.restaurants[batch.restaurant_id]
        courier = context.courier(assignment.courier_id)
        pickup = dist.shortest_distance(courier.location, restaurant.cell)
        if pickup > params.pickup_threshold_km + EPSILON:
            raise PlanInvariantError(
                f"Courier {courier.id} is {pickup} km from {restaurant.id}, "
                f"threshold {params.pickup_threshold_km}"
            )
        sequence = [orders[oid] for oid in batch.orders]
        for order in sequence:
            if order.restaurant_id != batch.restaurant_id:
                raise PlanInvariantError(f"Order {order.id} batched with another restaurant")
            reach = dist.shortest_distance(restaurant.cell, order.dropoff)
            if reach > params.delivery_radius_km + EPSILON:
                raise PlanInvariantError(
                    f"Order {order.id} is {reach} km from its restaurant, "
                    f"radius {params.delivery_radius_km}"
                )
        if detour and len(sequence) > 1:
            ratio = max_detour_ratio(dist, restaurant, sequence)
            if ratio > params.detour_threshold + EPSILON:
                raise PlanInvariantError(
                    f"Batch {batch.orders} has detour ratio {ratio}, "
                    f"threshold {params.detour_threshold}"
                )
