# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""Report files written for every run mode and sweep."""
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import pandas as pd

from dispatch_emulator.simulator import (
    METRICS,
    SERVICE_TIME,
    MetricsReport,
    ScenarioState,
    improvement_table,
    temporal_profile,
)

SERIES_COLUMNS = ["interval", "vehicle_count", "orders_served", "profit", "mean_service_minutes"]
PLAN_COLUMNS = [
    "interval", "courier_id", "restaurant_id", "order_id", "seq_in_batch", "pickup_km", "leg_km", "fee",
]
ROUTE_COLUMNS = ["interval", "courier_id", "step", "from_cell", "to_cell", "gain"]
IMPROVEMENT_COLUMNS = ["baseline", "metric", "baseline_value", "proposed_value", "improvement_pct"]

# Expected trend of each metric as capacity or relocation distance grows.
SWEEP_TRENDS = {
    "vehicle_count": "non-increasing",
    "efficiency": "non-decreasing",
    "profit": "non-decreasing",
}

PathLike = Union[str, Path]


def _write(frame: pd.DataFrame, path: PathLike):
    frame.to_csv(path, index=False, lineterminator="\n")


def _fmt(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def write_report_text(report: MetricsReport, path: PathLike):
    lines = [
        f"mode: {report.mode}",
        f"fleet_size: {report.fleet_size}",
        f"total_orders: {report.total_orders}",
        f"vehicle_count: {report.vehicle_count}",
        f"efficiency_delivered: {report.efficiency_delivered}",
        f"efficiency_assigned: {report.efficiency_assigned}",
        f"expired: {report.expired}",
        f"pending_at_end: {report.pending_at_end}",
        f"fees: {_fmt(report.fees)}",
        f"distance_km: {_fmt(report.distance_km)}",
        f"reposition_km: {_fmt(report.reposition_km)}",
        f"profit: {_fmt(report.profit)}",
        f"{SERVICE_TIME}: {_fmt(report.mean_service_time_minutes)}",
        "baselines: greedy, bundling (branch-and-bound not available)",
        "",
        "interval  vehicles  served  profit  mean_service",
    ]
    for m in report.series:
        lines.append(
            f"{m.interval:>8}  {m.vehicle_count:>8}  {m.orders_served:>6}  "
            f"{_fmt(m.profit):>6}  {_fmt(m.mean_service_minutes)}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def write_series(report: MetricsReport, path: PathLike):
    _write(
        pd.DataFrame(
            [
                [m.interval, m.vehicle_count, m.orders_served, m.profit, m.mean_service_minutes]
                for m in report.series
            ],
            columns=SERIES_COLUMNS,
        ),
        path,
    )


def plan_rows(state: ScenarioState) -> List[list]:
    fees = {d.order_id: d.fee for d in state.delivered + state.in_transit}
    rows = []
    for interval, assignment in state.plan_log:
        for seq, (order_id, leg) in enumerate(zip(assignment.batch.orders, assignment.legs_km)):
            rows.append(
                [
                    interval,
                    assignment.courier_id,
                    assignment.batch.restaurant_id,
                    order_id,
                    seq + 1,
                    assignment.pickup_distance_km if seq == 0 else 0.0,
                    leg,
                    fees[order_id],
                ]
            )
    return rows


def write_plan(state: ScenarioState, path: PathLike):
    _write(pd.DataFrame(plan_rows(state), columns=PLAN_COLUMNS), path)


def write_routes(state: ScenarioState, path: PathLike):
    _write(pd.DataFrame([list(step) for step in state.route_log], columns=ROUTE_COLUMNS), path)


def write_temporal(report: MetricsReport, path: PathLike, interval_minutes: int = 15):
    _write(pd.DataFrame(temporal_profile(report, interval_minutes=interval_minutes)), path)


def write_improvement(reports: Mapping[str, MetricsReport], path: PathLike):
    _write(pd.DataFrame(improvement_table(dict(reports)), columns=IMPROVEMENT_COLUMNS), path)


def trend_verdict(values: Sequence[float], trend: str, allowed: int = 1) -> str:
    """``ok`` when at most ``allowed`` adjacent pairs break the trend."""
    breaks = 0
    for a, b in zip(values, values[1:]):
        if (trend == "non-increasing" and b > a) or (trend == "non-decreasing" and b < a):
            breaks += 1
    return "ok" if breaks <= allowed else "violated"


def sweep_rows(results: Sequence[dict]) -> Tuple[List[dict], List[dict]]:
    """
    ``results`` holds one dict per run with ``mode``, ``relocation_km``,
    ``capacity`` and ``report``. Returns the flat metric rows and a trend
    verdict per metric along the capacity axis (fixed relocation) and the
    relocation axis (fixed capacity).
    """
    rows = []
    for result in results:
        row = {
            "mode": result["mode"],
            "relocation_km": result["relocation_km"],
            "capacity": result["capacity"],
        }
        for metric in METRICS:
            row[metric] = result["report"].metric(metric)
        rows.append(row)

    verdicts = []
    for axis, fixed in (("capacity", "relocation_km"), ("relocation_km", "capacity")):
        groups: Dict[tuple, List[dict]] = {}
        for row in rows:
            groups.setdefault((row["mode"], row[fixed]), []).append(row)
        for (mode, value), members in sorted(groups.items()):
            members = sorted(members, key=lambda r: r[axis])
            if len(members) < 2:
                continue
            for metric, trend in SWEEP_TRENDS.items():
                verdicts.append(
                    {
                        "mode": mode,
                        "axis": axis,
                        fixed: value,
                        "metric": metric,
                        "trend": trend,
                        "verdict": trend_verdict([m[metric] for m in members], trend),
                    }
                )
    return rows, verdicts


def write_sweep(results: Sequence[dict], path: PathLike, verdict_path: Optional[PathLike] = None):
    rows, verdicts = sweep_rows(results)
    columns = ["mode", "relocation_km", "capacity"] + list(METRICS)
    _write(pd.DataFrame(rows, columns=columns), path)
    if verdict_path is not None:
        _write(
            pd.DataFrame(
                verdicts,
                columns=["mode", "axis", "relocation_km", "capacity", "metric", "trend", "verdict"],
            ),
            verdict_path,
        )


def write_rows(rows: Sequence[dict], path: PathLike, columns: Sequence[str]):
    _write(pd.DataFrame(list(rows), columns=list(columns)), path)
