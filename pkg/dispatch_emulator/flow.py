# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Min-cost max-flow by successive shortest paths.

Shortest paths are found with Bellman-Ford on the residual graph so that
negative unit costs are allowed. Each arc doubles as its own reverse
residual edge: forward steps use ``capacity - flow``, reverse steps use
``flow`` at negated cost.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import pandas as pd

from dispatch_emulator.errors import DataError, InvariantViolation

logger = logging.getLogger(__name__)

EPSILON = 1e-9


class NegativeCycleError(InvariantViolation):
    def __init__(self, cycle: Tuple["ResidualStep", ...], net: "FlowNetwork"):
        self.cycle = cycle
        arcs = ", ".join(
            f"{net.arcs[step.arc].src}->{net.arcs[step.arc].dst}"
            + ("" if step.forward else " (reverse)")
            for step in cycle
        )
        super().__init__(f"Negative-cost cycle in residual graph: {arcs}")


class EmptyPathError(DataError):
    pass


class BottleneckExceededError(DataError):
    pass


class FlowInvariantError(InvariantViolation):
    pass


@dataclass(frozen=True)
class FlowNode:
    id: int
    label: str = ""


@dataclass
class FlowArc:
    src: int
    dst: int
    capacity: float
    unit_cost: float
    flow: float = 0.0

    @property
    def residual(self) -> float:
        return self.capacity - self.flow


class ResidualStep(NamedTuple):
    arc: int
    forward: bool


@dataclass(frozen=True)
class ResidualPath:
    steps: Tuple[ResidualStep, ...]
    cost: float
    negative_cycle: Tuple[ResidualStep, ...] = ()

    @property
    def is_negative_cycle(self) -> bool:
        return bool(self.negative_cycle)


@dataclass(frozen=True)
class FlowResult:
    flow_value: float
    total_cost: float
    per_arc_flow: Dict[int, float]
    iterations: int = 0


@dataclass
class FlowNetwork:
    nodes: List[FlowNode] = field(default_factory=list)
    arcs: List[FlowArc] = field(default_factory=list)
    source: int = -1
    sink: int = -1

    def add_node(self, label: str = "") -> int:
        node = FlowNode(len(self.nodes), label)
        self.nodes.append(node)
        return node.id

    def add_arc(self, src: int, dst: int, capacity: float, unit_cost: float = 0.0) -> int:
        for end in (src, dst):
            if not 0 <= end < len(self.nodes):
                raise DataError(f"Arc endpoint {end} is not a node of the network")
        if capacity < 0:
            raise DataError(f"Arc {src}->{dst} has negative capacity {capacity}")
        self.arcs.append(FlowArc(src, dst, float(capacity), float(unit_cost)))
        return len(self.arcs) - 1

    def validate(self):
        if self.source == self.sink:
            raise DataError("Source and sink must differ")
        for end in (self.source, self.sink):
            if not 0 <= end < len(self.nodes):
                raise DataError(f"Terminal {end} is not a node of the network")
        for arc in self.arcs:
            if arc.dst == self.source or arc.src == self.sink:
                raise DataError(f"Arc {arc.src}->{arc.dst} enters the source or leaves the sink")

    def node_by_label(self, label: str) -> int:
        for node in self.nodes:
            if node.label == label:
                return node.id
        raise KeyError(label)

    def arcs_between(self, src_label: str, dst_label: str) -> List[FlowArc]:
        src, dst = self.node_by_label(src_label), self.node_by_label(dst_label)
        return [arc for arc in self.arcs if arc.src == src and arc.dst == dst]

    def step_ends(self, step: ResidualStep) -> Tuple[int, int]:
        arc = self.arcs[step.arc]
        return (arc.src, arc.dst) if step.forward else (arc.dst, arc.src)

    def step_residual(self, step: ResidualStep) -> float:
        arc = self.arcs[step.arc]
        return arc.residual if step.forward else arc.flow

    def step_cost(self, step: ResidualStep) -> float:
        cost = self.arcs[step.arc].unit_cost
        return cost if step.forward else -cost

    def residual_steps(self) -> List[ResidualStep]:
        """Residual edges in fixed relaxation order: by (tail, head)."""
        steps = [ResidualStep(i, True) for i in range(len(self.arcs))]
        steps += [ResidualStep(i, False) for i in range(len(self.arcs))]
        return sorted(steps, key=lambda s: (self.step_ends(s), s.arc, not s.forward))

    def excess(self) -> Dict[int, float]:
        balance = {node.id: 0.0 for node in self.nodes}
        for arc in self.arcs:
            balance[arc.src] -= arc.flow
            balance[arc.dst] += arc.flow
        return balance

    def flow_value(self) -> float:
        return -self.excess()[self.source]

    def total_cost(self) -> float:
        return sum(arc.flow * arc.unit_cost for arc in self.arcs)


def _trace_cycle(net, parent, start) -> Tuple[ResidualStep, ...]:
    node = start
    for _ in range(len(net.nodes)):
        node = net.step_ends(parent[node])[0]
    cycle, current = [], node
    while True:
        step = parent[current]
        cycle.append(step)
        current = net.step_ends(step)[0]
        if current == node:
            break
    return tuple(reversed(cycle))


def bellman_ford_min_cost_path(net: FlowNetwork) -> Optional[ResidualPath]:
    n = len(net.nodes)
    dist: List[Optional[float]] = [None] * n
    parent: List[Optional[ResidualStep]] = [None] * n
    dist[net.source] = 0.0
    order = [
        (step, *net.step_ends(step), net.step_cost(step)) for step in net.residual_steps()
    ]
    for _ in range(max(n - 1, 0)):
        changed = False
        for step, u, v, cost in order:
            if dist[u] is None or net.step_residual(step) <= EPSILON:
                continue
            candidate = dist[u] + cost
            if dist[v] is None or candidate < dist[v] - EPSILON:
                dist[v] = candidate
                parent[v] = step
                changed = True
        if not changed:
            break
    else:
        for step, u, v, cost in order:
            if dist[u] is None or net.step_residual(step) <= EPSILON:
                continue
            if dist[v] is None or dist[u] + cost < dist[v] - EPSILON:
                parent[v] = step
                cycle = _trace_cycle(net, parent, v)
                return ResidualPath((), float("-inf"), cycle)
    if dist[net.sink] is None:
        return None
    steps, node = [], net.sink
    while node != net.source:
        step = parent[node]
        steps.append(step)
        node = net.step_ends(step)[0]
    return ResidualPath(tuple(reversed(steps)), dist[net.sink])


def bottleneck(net: FlowNetwork, path: ResidualPath) -> float:
    if not path.steps:
        raise EmptyPathError("Bottleneck of an empty path is undefined")
    return min(net.step_residual(step) for step in path.steps)


def augment(net: FlowNetwork, path: ResidualPath, delta: float) -> FlowNetwork:
    if not delta > 0:
        raise BottleneckExceededError(f"Augmentation amount must be positive, got {delta}")
    limit = bottleneck(net, path)
    if delta > limit + EPSILON:
        raise BottleneckExceededError(f"Cannot push {delta} through bottleneck {limit}")
    for step in path.steps:
        arc = net.arcs[step.arc]
        if step.forward:
            arc.flow = min(arc.capacity, arc.flow + delta)
        else:
            arc.flow = max(0.0, arc.flow - delta)
    return net


def reverse_path(net: FlowNetwork, path: ResidualPath) -> ResidualPath:
    steps = tuple(ResidualStep(s.arc, not s.forward) for s in reversed(path.steps))
    return ResidualPath(steps, -path.cost)


def check_flow(net: FlowNetwork):
    for index, arc in enumerate(net.arcs):
        if arc.flow < -EPSILON or arc.flow > arc.capacity + EPSILON:
            raise FlowInvariantError(f"Arc {index} flow {arc.flow} outside [0, {arc.capacity}]")
    for node, balance in net.excess().items():
        if node in (net.source, net.sink):
            continue
        if abs(balance) > EPSILON:
            raise FlowInvariantError(f"Flow not conserved at node {node}: excess {balance}")


def min_cost_max_flow(net: FlowNetwork) -> FlowResult:
    net.validate()
    flow_value, iterations = 0.0, 0
    while True:
        path = bellman_ford_min_cost_path(net)
        if path is None:
            break
        if path.is_negative_cycle:
            raise NegativeCycleError(path.negative_cycle, net)
        delta = bottleneck(net, path)
        augment(net, path, delta)
        flow_value += delta
        iterations += 1
        if __debug__:
            check_flow(net)
    total_cost = net.total_cost()
    logger.debug(
        "Solved network with %d nodes, %d arcs: flow %s, cost %s in %d augmentations",
        len(net.nodes), len(net.arcs), flow_value, total_cost, iterations,
    )
    return FlowResult(
        flow_value,
        total_cost,
        {index: arc.flow for index, arc in enumerate(net.arcs)},
        iterations,
    )


def dump_network(net: FlowNetwork, path: Union[str, Path], result: Optional[FlowResult] = None):
    frame = pd.DataFrame(
        [
            {
                "src": net.nodes[arc.src].label or arc.src,
                "dst": net.nodes[arc.dst].label or arc.dst,
                "capacity": arc.capacity,
                "cost": arc.unit_cost,
                "flow": arc.flow,
            }
            for arc in net.arcs
        ],
        columns=["src", "dst", "capacity", "cost", "flow"],
    )
    flow_value = result.flow_value if result else net.flow_value()
    total_cost = result.total_cost if result else net.total_cost()
    with open(path, "w", newline="") as f:
        frame.to_csv(f, index=False)
        f.write(f"# flow_value={flow_value},total_cost={total_cost}\n")
