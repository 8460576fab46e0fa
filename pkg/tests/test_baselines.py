# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import pytest
from hypothesis import given, settings, strategies as st

from dispatch_emulator.allocation import Courier, CourierStatus, Order, Restaurant, check_plan
from dispatch_emulator.baselines import (
    allocation_context,
    arrival_order,
    baseline_branch_and_bound,
    baseline_bundling,
    baseline_greedy,
)
from dispatch_emulator.config import SimConfig
from dispatch_emulator.demand import TimeInterval
from dispatch_emulator.netgraph import build_grid
from dispatch_emulator.policies import (
    BASELINES,
    POLICIES,
    BundlingPolicy,
    GreedyPolicy,
    ProposedPolicy,
    UnknownPolicyError,
    create_policy,
)
from dispatch_emulator.simulator import ScenarioState


def line_state(courier_cells, restaurant_cells, capacity=1, pending=()):
    _, distance = build_grid(1, 7, 1.0)
    couriers = [Courier(f"d{cell}", cell, capacity) for cell in courier_cells]
    restaurants = {f"r{cell}": Restaurant(f"r{cell}", cell) for cell in restaurant_cells}
    return ScenarioState(distance, couriers, restaurants, pending=list(pending))


LINE_CONFIG = SimConfig(
    rows=1, cols=7, cell_size_km=1.0, pickup_threshold_km=3.0, delivery_radius_km=3.0
)


def order(oid, restaurant_id, dropoff, placed=0, fee=10.0):
    return Order(oid, restaurant_id, dropoff, fee, TimeInterval(placed))


def test_greedy_picks_nearest_courier():
    state = line_state([0, 5], [4])
    plan = baseline_greedy(state, [order("a", "r4", 3)], LINE_CONFIG)
    (assignment,) = plan.assignments
    assert assignment.courier_id == "d5"
    assert assignment.pickup_distance_km == 1.0


def test_greedy_breaks_ties_by_courier_id():
    state = line_state([6, 2], [4])
    plan = baseline_greedy(state, [order("a", "r4", 3)], LINE_CONFIG)
    assert plan.assignments[0].courier_id == "d2"


def test_greedy_fills_courier_capacity():
    state = line_state([3], [4], capacity=3)
    realized = [order("a", "r4", 5), order("b", "r4", 3), order("c", "r4", 6)]
    plan = baseline_greedy(state, realized, LINE_CONFIG)
    assert plan.assigned_orders == ["a", "b", "c"]
    assert plan.unassigned_orders == []
    # each trip starts at the previous drop-off
    trips = [(a.pickup_distance_km, a.route_distance_km, a.offset_km) for a in plan.assignments]
    assert trips == [(1.0, 1.0, 0.0), (1.0, 1.0, 2.0), (1.0, 2.0, 4.0)]
    check_plan(plan, allocation_context(state, realized, LINE_CONFIG), detour=False)


def test_greedy_moves_on_when_courier_is_full():
    state = line_state([3, 6], [4], capacity=2)
    realized = [order(oid, "r4", 5) for oid in ("a", "b", "c")]
    plan = baseline_greedy(state, realized, LINE_CONFIG)
    assert [a.courier_id for a in plan.assignments] == ["d3", "d3", "d6"]
    assert plan.courier_load() == {"d3": 2, "d6": 1}


def test_bundling_uses_remaining_capacity():
    config = SimConfig(
        rows=1, cols=7, cell_size_km=1.0, pickup_threshold_km=3.0,
        delivery_radius_km=3.0, courier_capacity=2,
    )
    state = line_state([3], [2, 4], capacity=2)
    plan = baseline_bundling(state, [order("a", "r2", 1), order("b", "r4", 5)], config)
    assert [(a.courier_id, a.batch.orders, a.offset_km) for a in plan.assignments] == [
        ("d3", ("a",), 0.0),
        ("d3", ("b",), 2.0),
    ]


def test_greedy_serves_in_arrival_order():
    waiting = order("old", "r4", 5, placed=0)
    state = line_state([3], [4], pending=[waiting])
    plan = baseline_greedy(state, [order("new", "r4", 3, placed=1)], LINE_CONFIG)
    assert plan.assigned_orders == ["old"]
    assert plan.unassigned_orders == ["new"]


def test_arrival_order_is_stable():
    state = line_state([], [4], pending=[order("p", "r4", 3, placed=1)])
    realized = [order("b", "r4", 3, placed=2), order("a", "r4", 3, placed=2)]
    assert [o.id for o in arrival_order(state, realized)] == ["p", "b", "a"]


def test_greedy_respects_thresholds():
    state = line_state([0], [4])
    plan = baseline_greedy(state, [order("far", "r4", 3)], LINE_CONFIG)
    assert plan.assignments == []
    state = line_state([4], [0])
    plan = baseline_greedy(state, [order("wide", "r0", 6)], LINE_CONFIG)
    assert plan.unassigned_orders == ["wide"]


def test_greedy_skips_busy_couriers():
    state = line_state([3, 4], [4])
    state.couriers[1].status = CourierStatus.DELIVERING
    plan = baseline_greedy(state, [order("a", "r4", 3)], LINE_CONFIG)
    assert plan.assignments[0].courier_id == "d3"


def test_bundling_groups_same_restaurant():
    config = SimConfig(
        rows=1, cols=7, cell_size_km=1.0, pickup_threshold_km=3.0,
        delivery_radius_km=3.0, courier_capacity=2,
    )
    state = line_state([2, 3], [1, 4], capacity=2)
    realized = [
        order("a", "r1", 0),
        order("b", "r4", 5),
        order("c", "r1", 2),
        order("d", "r4", 6),
        order("e", "r1", 0),
    ]
    plan = baseline_bundling(state, realized, config)
    batches = [(a.courier_id, a.batch.restaurant_id, a.batch.orders) for a in plan.assignments]
    assert batches == [("d2", "r1", ("a", "c")), ("d3", "r4", ("b", "d"))]
    assert plan.unassigned_orders == ["e"]
    check_plan(plan, allocation_context(state, realized, config), detour=False)


def test_bundling_ignores_detour():
    config = SimConfig(
        rows=1, cols=7, cell_size_km=1.0, pickup_threshold_km=3.0,
        delivery_radius_km=3.0, courier_capacity=2,
    )
    state = line_state([3], [3], capacity=2)
    plan = baseline_bundling(state, [order("a", "r3", 2), order("b", "r3", 4)], config)
    (assignment,) = plan.assignments
    assert assignment.batch.orders == ("a", "b")
    assert assignment.route_distance_km == 3.0


def test_branch_and_bound_is_unavailable():
    with pytest.raises(NotImplementedError):
        baseline_branch_and_bound(line_state([0], [0]), [], LINE_CONFIG)


def test_policy_registry():
    assert set(POLICIES) == {"proposed", "greedy", "bundling"}
    assert BASELINES == ("greedy", "bundling")
    assert isinstance(create_policy("greedy"), GreedyPolicy)
    policy = BundlingPolicy()
    assert create_policy(policy) is policy
    assert create_policy("proposed").repositions
    with pytest.raises(UnknownPolicyError):
        create_policy("bb")


@st.composite
def dispatch_states(draw):
    cols = draw(st.integers(2, 5))
    capacity = draw(st.integers(1, 3))
    _, distance = build_grid(2, cols, 1.0)
    n = 2 * cols
    couriers = [
        Courier(f"d{k}", draw(st.integers(0, n - 1)), capacity)
        for k in range(draw(st.integers(0, 3)))
    ]
    restaurants = {}
    for k in range(draw(st.integers(1, 3))):
        restaurants[f"r{k}"] = Restaurant(f"r{k}", draw(st.integers(0, n - 1)))
    realized = [
        order(f"o{k}", draw(st.sampled_from(sorted(restaurants))), draw(st.integers(0, n - 1)),
              fee=float(draw(st.integers(1, 20))))
        for k in range(draw(st.integers(0, 6)))
    ]
    config = SimConfig(
        rows=2,
        cols=cols,
        cell_size_km=1.0,
        courier_capacity=capacity,
        pickup_threshold_km=float(draw(st.integers(1, 4))),
        delivery_radius_km=float(draw(st.integers(1, 4))),
    )
    return ScenarioState(distance, couriers, restaurants), realized, config


@settings(max_examples=150, deadline=None)
@given(dispatch_states())
def test_flow_allocation_serves_at_least_the_baselines(instance):
    state, realized, config = instance
    proposed = ProposedPolicy().allocate(state, realized, config).plan
    for policy in (GreedyPolicy(), BundlingPolicy()):
        outcome = policy.allocate(state, realized, config)
        check_plan(outcome.plan, outcome.context, detour=policy.checks_detour)
        assert len(proposed.assigned_orders) >= len(outcome.plan.assigned_orders)


@settings(max_examples=150, deadline=None)
@given(dispatch_states())
def test_bundling_with_unit_capacity_is_greedy(instance):
    state, realized, config = instance
    for courier in state.couriers:
        courier.capacity = 1
    config = SimConfig(
        rows=config.rows,
        cols=config.cols,
        cell_size_km=1.0,
        courier_capacity=1,
        pickup_threshold_km=config.pickup_threshold_km,
        delivery_radius_km=config.delivery_radius_km,
    )
    assert baseline_bundling(state, realized, config) == baseline_greedy(state, realized, config)


@settings(max_examples=150, deadline=None)
@given(dispatch_states())
def test_bundles_never_mix_restaurants(instance):
    state, realized, config = instance
    plan = baseline_bundling(state, realized, config)
    by_id = {o.id: o for o in realized}
    for assignment in plan.assignments:
        assert {by_id[oid].restaurant_id for oid in assignment.batch.orders} == {
            assignment.batch.restaurant_id
        }
        assert len(assignment.batch) <= config.courier_capacity
