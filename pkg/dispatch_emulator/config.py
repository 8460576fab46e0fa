# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Run configuration: a JSON document with one section per module, validated
against CONFIG_SCHEMA and deep-merged over DEFAULTS.
"""
import copy
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import jsonschema

from dispatch_emulator.allocation import AllocationParams
from dispatch_emulator.demand import DailyProfile, PredictorSpec
from dispatch_emulator.errors import DataError
from dispatch_emulator.netgraph import Grid
from dispatch_emulator.routing import RouteRequest

logger = logging.getLogger(__name__)


class ConfigError(DataError):
    pass


DEFAULTS: Dict[str, Any] = {
    "grid": {"rows": 10, "cols": 10, "cell_size_km": 2.0},
    "demand": {
        "predictor": {"kind": "replay_previous", "parameters": {}},
        "horizon": 1,
        "rates_path": None,
        "restaurants": 15,
        "daily_orders": 2000,
        "peaks": {
            "lunch_hour": 12.0,
            "lunch_multiplier": 3.0,
            "dinner_hour": 20.0,
            "dinner_multiplier": 3.5,
            "width_hours": 1.5,
            "base_multiplier": 0.4,
        },
    },
    "routing": {
        "relocation_distance_km": 5.0,
        "strict_budget": False,
        "reposition_demand_floor": 1.0,
    },
    "allocation": {
        "courier_capacity": 3,
        "pickup_threshold_km": 8.0,
        "delivery_radius_km": 8.0,
        "detour_threshold": 1.5,
        "cost_scalar": 1.0,
        "two_phase": False,
        "sla_minutes": None,
        "default_fee": 10.0,
    },
    "simulator": {
        "fleet_size": 40,
        "interval_minutes": 15,
        "speed_km_per_min": 0.5,
        "max_wait_intervals": 4,
        "exclude_repositioning_cost": False,
        "drain": True,
        "seed": 0,
        "fee_range": [5, 15],
    },
}

_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_POSITIVE_INT = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rows": _POSITIVE_INT,
                "cols": _POSITIVE_INT,
                "cell_size_km": _POSITIVE,
            },
        },
        "demand": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "predictor": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kind": {"type": "string", "minLength": 1},
                        "parameters": {"type": "object"},
                    },
                },
                "horizon": _POSITIVE_INT,
                "rates_path": {"type": ["string", "null"]},
                "restaurants": _POSITIVE_INT,
                "daily_orders": {"type": "number", "minimum": 0},
                "peaks": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "lunch_hour": {"type": "number", "minimum": 0, "maximum": 24},
                        "lunch_multiplier": {"type": "number", "minimum": 0},
                        "dinner_hour": {"type": "number", "minimum": 0, "maximum": 24},
                        "dinner_multiplier": {"type": "number", "minimum": 0},
                        "width_hours": _POSITIVE,
                        "base_multiplier": {"type": "number", "minimum": 0},
                    },
                },
            },
        },
        "routing": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "relocation_distance_km": _POSITIVE,
                "strict_budget": {"type": "boolean"},
                "reposition_demand_floor": {"type": "number", "minimum": 0},
            },
        },
        "allocation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "courier_capacity": _POSITIVE_INT,
                "pickup_threshold_km": _POSITIVE,
                "delivery_radius_km": _POSITIVE,
                "detour_threshold": {"type": "number", "minimum": 1},
                "cost_scalar": {"type": "number", "minimum": 0},
                "two_phase": {"type": "boolean"},
                "sla_minutes": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "default_fee": _POSITIVE,
            },
        },
        "simulator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fleet_size": {"type": "integer", "minimum": 0},
                "interval_minutes": _POSITIVE_INT,
                "speed_km_per_min": _POSITIVE,
                "max_wait_intervals": _POSITIVE_INT,
                "exclude_repositioning_cost": {"type": "boolean"},
                "drain": {"type": "boolean"},
                "seed": {"type": "integer", "minimum": 0},
                "fee_range": {
                    "type": "array",
                    "items": _POSITIVE,
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        # Command line inputs echoed by write_manifest; ignored on load.
        "run": {"type": "object"},
    },
}


def deep_merge(base: Mapping[str, Any], override: Mapping[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            # Predictor parameters are opaque and replaced whole.
            if key == "parameters":
                merged[key] = copy.deepcopy(dict(value))
            else:
                merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_document(document: Mapping[str, Any]):
    try:
        jsonschema.validate(document, schema=CONFIG_SCHEMA)
    except jsonschema.ValidationError as error:
        where = ".".join(str(part) for part in error.absolute_path) or "<root>"
        raise ConfigError(f"Invalid configuration at {where}: {error.message}") from error


def apply_overrides(document: Mapping[str, Any], overrides: Mapping[str, Any]) -> Dict[str, Any]:
    """Apply ``section.key`` overrides; ``None`` values are skipped."""
    nested: Dict[str, Any] = {}
    for dotted, value in overrides.items():
        if value is None:
            continue
        *path, leaf = dotted.split(".")
        node = nested
        for part in path:
            node = node.setdefault(part, {})
        node[leaf] = value
    return deep_merge(document, nested)


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    document: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            document = json.loads(path.read_text())
        except json.JSONDecodeError as error:
            raise ConfigError(f"{path}:{error.lineno}: {error.msg}") from error
        validate_document(document)
    resolved = apply_overrides(deep_merge(DEFAULTS, document), overrides or {})
    validate_document(resolved)
    low, high = resolved["simulator"]["fee_range"]
    if low > high:
        raise ConfigError(f"fee_range lower bound {low} exceeds upper bound {high}")
    return resolved


def write_manifest(document: Mapping[str, Any], path: Union[str, Path], **extra):
    payload = dict(document)
    if extra:
        payload["run"] = extra
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


@dataclass(frozen=True)
class SimConfig:
    rows: int = 10
    cols: int = 10
    cell_size_km: float = 2.0
    interval_minutes: int = 15
    relocation_distance_km: float = 5.0
    strict_budget: bool = False
    reposition_demand_floor: float = 1.0
    courier_capacity: int = 3
    fleet_size: int = 40
    pickup_threshold_km: float = 8.0
    delivery_radius_km: float = 8.0
    detour_threshold: float = 1.5
    cost_scalar: float = 1.0
    two_phase: bool = False
    sla_minutes: Optional[float] = None
    default_fee: float = 10.0
    speed_km_per_min: float = 0.5
    max_wait_intervals: int = 4
    exclude_repositioning_cost: bool = False
    drain: bool = True
    seed: int = 0
    fee_range: Tuple[float, float] = (5, 15)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    horizon: int = 1
    rates_path: Optional[str] = None
    restaurants: int = 15
    daily_orders: float = 2000
    peaks: DailyProfile = field(default_factory=DailyProfile)

    def __post_init__(self):
        for name in (
            "cell_size_km",
            "relocation_distance_km",
            "pickup_threshold_km",
            "delivery_radius_km",
            "speed_km_per_min",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.courier_capacity < 1:
            raise ConfigError(f"courier_capacity must be at least 1, got {self.courier_capacity}")
        if self.max_wait_intervals < 1:
            raise ConfigError("max_wait_intervals must be at least 1")

    @classmethod
    def from_document(cls, document: Mapping[str, Any]) -> "SimConfig":
        grid, demand = document["grid"], document["demand"]
        routing, allocation = document["routing"], document["allocation"]
        simulator = document["simulator"]
        return cls(
            rows=grid["rows"],
            cols=grid["cols"],
            cell_size_km=float(grid["cell_size_km"]),
            interval_minutes=simulator["interval_minutes"],
            relocation_distance_km=float(routing["relocation_distance_km"]),
            strict_budget=routing["strict_budget"],
            reposition_demand_floor=float(routing["reposition_demand_floor"]),
            courier_capacity=allocation["courier_capacity"],
            fleet_size=simulator["fleet_size"],
            pickup_threshold_km=float(allocation["pickup_threshold_km"]),
            delivery_radius_km=float(allocation["delivery_radius_km"]),
            detour_threshold=float(allocation["detour_threshold"]),
            cost_scalar=float(allocation["cost_scalar"]),
            two_phase=allocation["two_phase"],
            sla_minutes=allocation["sla_minutes"],
            default_fee=float(allocation["default_fee"]),
            speed_km_per_min=float(simulator["speed_km_per_min"]),
            max_wait_intervals=simulator["max_wait_intervals"],
            exclude_repositioning_cost=simulator["exclude_repositioning_cost"],
            drain=simulator["drain"],
            seed=simulator["seed"],
            fee_range=tuple(simulator["fee_range"]),
            predictor=PredictorSpec(
                demand["predictor"]["kind"], dict(demand["predictor"].get("parameters", {}))
            ),
            horizon=demand["horizon"],
            rates_path=demand["rates_path"],
            restaurants=demand["restaurants"],
            daily_orders=demand["daily_orders"],
            peaks=DailyProfile(**demand["peaks"]),
        )

    @property
    def grid(self) -> Grid:
        return Grid(self.rows, self.cols, self.cell_size_km)

    def allocation_params(self) -> AllocationParams:
        return AllocationParams(
            pickup_threshold_km=self.pickup_threshold_km,
            delivery_radius_km=self.delivery_radius_km,
            detour_threshold=self.detour_threshold,
            cost_scalar=self.cost_scalar,
            two_phase=self.two_phase,
            sla_minutes=self.sla_minutes,
            speed_km_per_min=self.speed_km_per_min,
            default_fee=self.default_fee,
        )

    def route_request(self, start: int) -> RouteRequest:
        return RouteRequest(start, self.relocation_distance_km, self.strict_budget)


def sim_config(path=None, overrides=None) -> SimConfig:
    return SimConfig.from_document(load_config(path, overrides))
