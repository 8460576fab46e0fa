# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Discrete-interval dispatch engine.

Each interval releases finished couriers, predicts demand, repositions idle
couriers toward it, expires stale orders, allocates pending orders with the
selected policy and dispatches the resulting trips. Travel is at constant
speed; fees are credited in the interval the order is delivered.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from dispatch_emulator.allocation import (
    Assignment,
    Courier,
    CourierStatus,
    Order,
    Restaurant,
    check_plan,
)
from dispatch_emulator.config import SimConfig
from dispatch_emulator.demand import (
    DemandMatrix,
    DemandPredictor,
    PredictorKind,
    TimeInterval,
)
from dispatch_emulator.errors import DataError
from dispatch_emulator.flow import dump_network
from dispatch_emulator.netgraph import DistanceSubgraph, build_family, build_grid
from dispatch_emulator.policies import DispatchPolicy, create_policy
from dispatch_emulator.predictors import create_predictor
from dispatch_emulator.routing import greedy_route, trim_route

logger = logging.getLogger(__name__)

SERVICE_TIME = "mean_service_time_minutes"
METRICS = ("vehicle_count", "efficiency", "profit", SERVICE_TIME)
TEMPORAL_HOURS = (7, 9, 12, 16, 20)


@dataclass
class OrderStream:
    """Realized orders per interval; ``intervals[k]`` holds interval ``k``."""

    intervals: List[List[Order]]
    restaurants: Dict[str, Restaurant]

    def __post_init__(self):
        for index, bucket in enumerate(self.intervals):
            for order in bucket:
                if order.placed_at.index != index:
                    raise DataError(
                        f"Order {order.id} placed in interval {order.placed_at.index} "
                        f"but streamed in interval {index}"
                    )
                if order.restaurant_id not in self.restaurants:
                    raise DataError(f"Order {order.id} names unknown restaurant {order.restaurant_id!r}")

    @property
    def total_orders(self) -> int:
        return sum(len(bucket) for bucket in self.intervals)


class Delivery(NamedTuple):
    order_id: str
    courier_id: str
    fee: float
    delivered_minute: float
    delivered_interval: int
    service_minutes: float


class RouteStep(NamedTuple):
    interval: int
    courier_id: str
    step: int
    from_cell: int
    to_cell: int
    gain: float


@dataclass(frozen=True)
class IntervalMetrics:
    interval: int
    vehicle_count: int = 0
    orders_assigned: int = 0
    orders_served: int = 0
    profit: float = 0.0
    mean_service_minutes: Optional[float] = None
    expired: int = 0
    distance_km: float = 0.0


@dataclass
class ScenarioState:
    distance: DistanceSubgraph
    couriers: List[Courier]
    restaurants: Dict[str, Restaurant]
    predictor: Optional[DemandPredictor] = None
    pending: List[Order] = field(default_factory=list)
    clock: int = 0
    history: List[DemandMatrix] = field(default_factory=list)
    in_transit: List[Delivery] = field(default_factory=list)
    delivered: List[Delivery] = field(default_factory=list)
    expired: List[str] = field(default_factory=list)
    dispatch_km: float = 0.0
    reposition_km: float = 0.0
    total_orders: int = 0
    assigned_orders: int = 0
    plan_log: List[Tuple[int, Assignment]] = field(default_factory=list)
    route_log: List[RouteStep] = field(default_factory=list)
    series: List[IntervalMetrics] = field(default_factory=list)

    def idle_couriers(self) -> List[Courier]:
        return sorted(
            (c for c in self.couriers if c.status == CourierStatus.IDLE), key=lambda c: c.id
        )

    def courier(self, courier_id: str) -> Courier:
        for courier in self.couriers:
            if courier.id == courier_id:
                return courier
        raise KeyError(courier_id)


@dataclass(frozen=True)
class MetricsReport:
    mode: str
    vehicle_count: int
    efficiency_delivered: int
    efficiency_assigned: int
    profit: float
    mean_service_time_minutes: Optional[float]
    total_orders: int
    expired: int
    pending_at_end: int
    fees: float
    distance_km: float
    reposition_km: float
    fleet_size: int
    series: Tuple[IntervalMetrics, ...] = ()

    @property
    def efficiency(self) -> int:
        return self.efficiency_delivered

    def metric(self, name: str) -> Optional[float]:
        return getattr(self, name)


def place_fleet(config: SimConfig, n_cells: int) -> List[Courier]:
    rng = np.random.default_rng(config.seed)
    cells = rng.integers(0, n_cells, size=config.fleet_size)
    width = max(3, len(str(config.fleet_size)))
    return [
        Courier(f"d{k:0{width}d}", int(cell), config.courier_capacity)
        for k, cell in enumerate(cells)
    ]


def initial_state(
    config: SimConfig,
    restaurants: Dict[str, Restaurant],
    distance: Optional[DistanceSubgraph] = None,
    couriers: Optional[Sequence[Courier]] = None,
    predictor: Optional[DemandPredictor] = None,
) -> ScenarioState:
    if distance is None:
        _, distance = build_grid(config.rows, config.cols, config.cell_size_km)
    if couriers is None:
        couriers = place_fleet(config, distance.grid.n_cells)
    for courier in couriers:
        distance.grid.check(courier.location)
    for restaurant in restaurants.values():
        distance.grid.check(restaurant.cell)
    return ScenarioState(
        distance,
        list(couriers),
        dict(restaurants),
        predictor or create_predictor(config.predictor),
    )


def realized_matrix(state: ScenarioState, interval: TimeInterval, orders: Sequence[Order]) -> DemandMatrix:
    counts = np.zeros((state.distance.grid.n_cells,) * 2)
    for order in orders:
        counts[state.restaurants[order.restaurant_id].cell, order.dropoff] += 1
    return DemandMatrix(interval, counts)


def materialize(state: ScenarioState, m: DemandMatrix, default_fee: float) -> List[Order]:
    """Turn a realized count matrix into orders with deterministic ids."""
    by_cell: Dict[int, str] = {}
    for restaurant in sorted(state.restaurants.values(), key=lambda r: r.id):
        by_cell.setdefault(restaurant.cell, restaurant.id)
    orders = []
    for origin, dest in zip(*np.nonzero(m.counts)):
        origin, dest = int(origin), int(dest)
        count = m.counts[origin, dest]
        if count != int(count):
            raise DataError(f"Realized demand ({origin}, {dest}) is not integral: {count}")
        if origin not in by_cell:
            restaurant = Restaurant.at_cell(origin)
            state.restaurants[restaurant.id] = restaurant
            by_cell[origin] = restaurant.id
        for k in range(int(count)):
            orders.append(
                Order(f"t{m.interval.index}-{origin}-{dest}-{k}", by_cell[origin], dest,
                      default_fee, m.interval)
            )
    return orders


def _reposition(state, config, interval, prediction) -> float:
    family = build_family(state.distance, prediction)
    start_minute = interval.start_minute
    travelled = 0.0
    for courier in state.idle_couriers():
        if prediction.outgoing(courier.location) >= config.reposition_demand_floor:
            continue
        path = trim_route(family, greedy_route(family, config.route_request(courier.location)))
        if len(path.vertices) < 2:
            continue
        for step, (i, j) in enumerate(path.edges):
            state.route_log.append(
                RouteStep(interval.index, courier.id, step, i, j, family.orders.weight(i, j))
            )
        arrival = max(start_minute, courier.busy_until_minute) + (
            path.cumulative_distance_km / config.speed_km_per_min
        )
        courier.location = path.end
        courier.busy_until_minute = arrival
        if arrival >= interval.end_minute:
            courier.status = CourierStatus.REPOSITIONING
        travelled += path.cumulative_distance_km
    return travelled


def _dispatch(state, config, interval, assignments: Sequence[Assignment]) -> float:
    orders = {order.id: order for order in state.pending}
    travelled = 0.0
    trips: Dict[str, List[Assignment]] = {}
    for assignment in assignments:
        trips.setdefault(assignment.courier_id, []).append(assignment)
    for courier_id, legs in trips.items():
        courier = state.courier(courier_id)
        start = max(interval.start_minute, courier.busy_until_minute)
        for assignment in legs:
            covered = assignment.offset_km + assignment.pickup_distance_km
            for order_id, leg in zip(assignment.batch.orders, assignment.legs_km):
                covered += leg
                order = orders[order_id]
                minute = start + covered / config.speed_km_per_min
                state.in_transit.append(
                    Delivery(
                        order_id,
                        courier_id,
                        order.fee,
                        minute,
                        int(minute // interval.length_minutes),
                        minute - order.placed_at.index * interval.length_minutes,
                    )
                )
            travelled += assignment.distance_km
            state.plan_log.append((interval.index, assignment))
        last = legs[-1]
        total_km = last.offset_km + last.distance_km
        courier.busy_until_minute = start + total_km / config.speed_km_per_min
        courier.location = orders[last.batch.orders[-1]].dropoff
        courier.status = CourierStatus.DELIVERING
    return travelled


def step(
    state: ScenarioState,
    config: SimConfig,
    realized: Union[Sequence[Order], DemandMatrix],
    policy: Union[str, DispatchPolicy, None] = None,
    flow_dump_dir: Optional[Union[str, Path]] = None,
) -> Tuple[ScenarioState, IntervalMetrics]:
    policy = create_policy(policy or "proposed")
    interval = TimeInterval(state.clock, config.interval_minutes)
    n_cells = state.distance.grid.n_cells
    if isinstance(realized, DemandMatrix):
        if realized.interval.index != interval.index:
            raise DataError(
                f"Realized demand is for interval {realized.interval.index}, clock is {interval.index}"
            )
        realized = materialize(state, realized, config.default_fee)
    realized = list(realized)
    state.total_orders += len(realized)

    for courier in state.couriers:
        if courier.status != CourierStatus.IDLE and courier.busy_until_minute <= interval.start_minute:
            courier.status = CourierStatus.IDLE

    matrix = realized_matrix(state, interval, realized)
    reposition_km = 0.0
    if policy.repositions:
        history = list(state.history)
        if config.predictor.kind == PredictorKind.REPLAY_ORACLE.value:
            history.append(matrix)
        prediction = state.predictor.forecast(history, interval, config.horizon, n_cells)
        reposition_km = _reposition(state, config, interval, prediction)
        state.reposition_km += reposition_km
    state.history.append(matrix)

    stale = [
        o for o in state.pending if interval.index - o.placed_at.index >= config.max_wait_intervals
    ]
    if stale:
        state.expired.extend(o.id for o in stale)
        expired = {o.id for o in stale}
        state.pending = [o for o in state.pending if o.id not in expired]

    outcome = policy.allocate(state, realized, config)
    check_plan(outcome.plan, outcome.context, detour=policy.checks_detour)
    if flow_dump_dir is not None and outcome.network is not None:
        Path(flow_dump_dir).mkdir(parents=True, exist_ok=True)
        dump_network(outcome.network, Path(flow_dump_dir) / f"interval_{interval.index:05d}.csv")

    state.pending = list(outcome.context.orders)
    dispatch_km = _dispatch(state, config, interval, outcome.plan.assignments)
    state.dispatch_km += dispatch_km
    assigned = set(outcome.plan.assigned_orders)
    state.assigned_orders += len(assigned)
    state.pending = [o for o in state.pending if o.id not in assigned]

    arrived = [d for d in state.in_transit if d.delivered_interval <= interval.index]
    state.in_transit = [d for d in state.in_transit if d.delivered_interval > interval.index]
    state.delivered.extend(arrived)

    cost_km = dispatch_km + (0.0 if config.exclude_repositioning_cost else reposition_km)
    metrics = IntervalMetrics(
        interval.index,
        vehicle_count=len({a.courier_id for a in outcome.plan.assignments}),
        orders_assigned=len(assigned),
        orders_served=len(arrived),
        profit=sum(d.fee for d in arrived) - config.cost_scalar * cost_km,
        mean_service_minutes=(
            sum(d.service_minutes for d in arrived) / len(arrived) if arrived else None
        ),
        expired=len(stale),
        distance_km=dispatch_km + reposition_km,
    )
    state.series.append(metrics)
    state.clock += 1
    logger.debug(
        "Interval %d: %d new, %d assigned, %d delivered, %d expired, %d pending",
        interval.index, len(realized), len(assigned), len(arrived), len(stale), len(state.pending),
    )
    return state, metrics


def report(state: ScenarioState, config: SimConfig, mode: str) -> MetricsReport:
    fees = sum(d.fee for d in state.delivered)
    cost_km = state.dispatch_km + (0.0 if config.exclude_repositioning_cost else state.reposition_km)
    return MetricsReport(
        mode=mode,
        vehicle_count=len({d.courier_id for d in state.delivered}),
        efficiency_delivered=len(state.delivered),
        efficiency_assigned=state.assigned_orders,
        profit=fees - config.cost_scalar * cost_km,
        mean_service_time_minutes=(
            sum(d.service_minutes for d in state.delivered) / len(state.delivered)
            if state.delivered
            else None
        ),
        total_orders=state.total_orders,
        expired=len(state.expired),
        pending_at_end=len(state.pending) + len(state.in_transit),
        fees=fees,
        distance_km=state.dispatch_km + state.reposition_km,
        reposition_km=state.reposition_km,
        fleet_size=len(state.couriers),
        series=tuple(state.series),
    )


def simulate(
    config: SimConfig,
    order_stream: OrderStream,
    policy: Union[str, DispatchPolicy] = "proposed",
    distance: Optional[DistanceSubgraph] = None,
    couriers: Optional[Sequence[Courier]] = None,
    predictor: Optional[DemandPredictor] = None,
    flow_dump_dir: Optional[Union[str, Path]] = None,
) -> Tuple[MetricsReport, ScenarioState]:
    policy = create_policy(policy)
    state = initial_state(config, order_stream.restaurants, distance, couriers, predictor)
    for bucket in order_stream.intervals:
        step(state, config, bucket, policy, flow_dump_dir)
    if config.drain:
        while state.pending or state.in_transit:
            step(state, config, [], policy, flow_dump_dir)
    result = report(state, config, policy.name)
    logger.info(
        "%s: served %d of %d orders with %d couriers, profit %.2f",
        policy.name, result.efficiency_delivered, result.total_orders,
        result.vehicle_count, result.profit,
    )
    return result, state


def run(
    config: SimConfig,
    order_stream: OrderStream,
    policy: Union[str, DispatchPolicy] = "proposed",
    distance: Optional[DistanceSubgraph] = None,
    **kwargs,
) -> MetricsReport:
    return simulate(config, order_stream, policy, distance, **kwargs)[0]


def improvement(metric_kind: str, baseline_value, proposed_value) -> float:
    """
    Percentage gain of the proposed value over the baseline, positive when
    the proposed pipeline is better. Service time is lower-is-better.
    Undefined (nan) when the proposed value is zero or missing.
    """
    if baseline_value is None or proposed_value is None or proposed_value == 0:
        return math.nan
    if metric_kind == SERVICE_TIME:
        return (baseline_value - proposed_value) / proposed_value * 100.0
    return (proposed_value - baseline_value) / proposed_value * 100.0


def improvement_table(reports: Dict[str, MetricsReport], proposed: str = "proposed") -> List[dict]:
    rows = []
    for mode in sorted(reports):
        if mode == proposed:
            continue
        for metric in METRICS:
            rows.append(
                {
                    "baseline": mode,
                    "metric": metric,
                    "baseline_value": reports[mode].metric(metric),
                    "proposed_value": reports[proposed].metric(metric),
                    "improvement_pct": improvement(
                        metric, reports[mode].metric(metric), reports[proposed].metric(metric)
                    ),
                }
            )
    return rows


def temporal_profile(
    report: MetricsReport,
    hours: Sequence[int] = TEMPORAL_HOURS,
    interval_minutes: int = 15,
) -> List[dict]:
    rows = []
    for hour in hours:
        members = [
            m for m in report.series
            if int(TimeInterval(m.interval, interval_minutes).hour_of_day) == hour
        ]
        served = sum(m.orders_served for m in members)
        weighted = sum(
            m.mean_service_minutes * m.orders_served
            for m in members
            if m.mean_service_minutes is not None
        )
        rows.append(
            {
                "hour": hour,
                "intervals": len(members),
                "vehicle_count": sum(m.vehicle_count for m in members),
                "orders_served": served,
                "profit": sum(m.profit for m in members),
                "mean_service_minutes": weighted / served if served else None,
            }
        )
    return rows
