# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Type

from dispatch_emulator import allocation, baselines
from dispatch_emulator.allocation import (
    AllocationContext,
    AllocationNetwork,
    AllocationPlan,
    Order,
)
from dispatch_emulator.errors import UsageError


class UnknownPolicyError(UsageError):
    pass


@dataclass
class AllocationOutcome:
    plan: AllocationPlan
    context: AllocationContext
    network: Optional[AllocationNetwork] = None


class DispatchPolicy(ABC):
    name: str = ""
    repositions: bool = False
    checks_detour: bool = True

    @abstractmethod
    def allocate(self, state, realized: Sequence[Order], config) -> AllocationOutcome:
        raise NotImplementedError


class ProposedPolicy(DispatchPolicy):
    """Predictive repositioning plus min-cost max-flow allocation with batching."""

    name = "proposed"
    repositions = True

    def allocate(self, state, realized, config):
        net = allocation.build_allocation_network(
            state.distance,
            state.idle_couriers(),
            state.restaurants,
            baselines.arrival_order(state, realized),
            config.allocation_params(),
        )
        plan = allocation.allocate(net)
        return AllocationOutcome(plan, net.context, net)


class GreedyPolicy(DispatchPolicy):
    name = "greedy"

    def allocate(self, state, realized, config):
        return AllocationOutcome(
            baselines.baseline_greedy(state, realized, config),
            baselines.allocation_context(state, realized, config),
        )


class BundlingPolicy(DispatchPolicy):
    name = "bundling"
    checks_detour = False

    def allocate(self, state, realized, config):
        return AllocationOutcome(
            baselines.baseline_bundling(state, realized, config),
            baselines.allocation_context(state, realized, config),
        )


POLICIES: Mapping[str, Type[DispatchPolicy]] = {
    ProposedPolicy.name: ProposedPolicy,
    GreedyPolicy.name: GreedyPolicy,
    BundlingPolicy.name: BundlingPolicy,
}

BASELINES = (GreedyPolicy.name, BundlingPolicy.name)


def create_policy(name) -> DispatchPolicy:
    if isinstance(name, DispatchPolicy):
        return name
    if name not in POLICIES:
        raise UnknownPolicyError(f"Unknown mode {name!r}, expected one of {sorted(POLICIES)}")
    return POLICIES[name]()
