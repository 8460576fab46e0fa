# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Order log ingestion. Logs are CSV with the header ``ORDER_COLUMNS``;
timestamps are epoch seconds or ISO-8601 (naive values are UTC). Interval 0
starts at midnight of the earliest day in the log.
"""
import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd

from dispatch_emulator.allocation import Order, Restaurant
from dispatch_emulator.config import sim_config
from dispatch_emulator.demand import TimeInterval
from dispatch_emulator.errors import DataError
from dispatch_emulator.netgraph import CellId, Grid, UnknownVertexError
from dispatch_emulator.simulator import OrderStream

logger = logging.getLogger(__name__)

ORDER_COLUMNS = ["order_id", "timestamp", "pickup_cell", "dropoff_cell", "fee"]

KM_PER_DEGREE = 111.32


class MalformedRecordError(DataError):
    def __init__(self, path, line: int, message: str):
        self.path = path
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


@dataclass(frozen=True)
class OrderRecord:
    order_id: str
    timestamp: str
    pickup_cell: CellId
    dropoff_cell: CellId
    fee: float


def parse_timestamp(value: str) -> pd.Timestamp:
    try:
        stamp = pd.Timestamp(float(value), unit="s", tz="UTC")
    except ValueError:
        stamp = pd.Timestamp(value)
    if pd.isna(stamp):
        raise ValueError(f"unparseable timestamp {value!r}")
    if stamp.tzinfo is None:
        return stamp.tz_localize("UTC")
    return stamp.tz_convert("UTC")


def read_order_records(
    path: Union[str, Path], grid: Optional[Grid] = None
) -> List[OrderRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"Order log not found: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise MalformedRecordError(path, 1, "missing header row") from None
    except pd.errors.ParserError as error:
        raise MalformedRecordError(path, 1, str(error)) from error
    if list(frame.columns) != ORDER_COLUMNS:
        raise MalformedRecordError(path, 1, f"expected header {','.join(ORDER_COLUMNS)}")

    records, seen = [], set()
    for offset, row in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        try:
            parse_timestamp(row.timestamp)
            pickup, dropoff = int(row.pickup_cell), int(row.dropoff_cell)
            fee = float(row.fee)
        except ValueError as error:
            raise MalformedRecordError(path, line, str(error)) from error
        if not row.order_id:
            raise MalformedRecordError(path, line, "empty order_id")
        if row.order_id in seen:
            raise MalformedRecordError(path, line, f"duplicate order_id {row.order_id!r}")
        if not (fee > 0 and math.isfinite(fee)):
            raise MalformedRecordError(path, line, f"fee must be positive, got {row.fee!r}")
        if grid is not None:
            for cell in (pickup, dropoff):
                if not grid.contains(cell):
                    raise MalformedRecordError(
                        path, line, f"cell {cell} is outside the {grid.rows}x{grid.cols} grid"
                    )
        seen.add(row.order_id)
        records.append(OrderRecord(row.order_id, row.timestamp, pickup, dropoff, fee))
    return records


def bucket_records(
    records: Sequence[OrderRecord], interval_minutes: int = 15
) -> List[List[OrderRecord]]:
    """Records grouped by interval index; every index up to the last is present."""
    if not records:
        return []
    stamps = {r.order_id: parse_timestamp(r.timestamp) for r in records}
    origin = min(stamps.values()).normalize()
    width = pd.Timedelta(minutes=interval_minutes)
    indexed = sorted(
        ((int((stamps[r.order_id] - origin) // width), stamps[r.order_id], r.order_id, r)
         for r in records),
        key=lambda item: item[:3],
    )
    buckets: List[List[OrderRecord]] = [[] for _ in range(indexed[-1][0] + 1)]
    for index, _, _, record in indexed:
        buckets[index].append(record)
    return buckets


def ingest_orders(
    path: Union[str, Path],
    interval_minutes: int = 15,
    grid: Optional[Grid] = None,
) -> List[List[OrderRecord]]:
    buckets = bucket_records(read_order_records(path, grid), interval_minutes)
    logger.info(
        "Ingested %d orders over %d intervals from %s",
        sum(len(b) for b in buckets), len(buckets), path,
    )
    return buckets


def export_orders(records: Iterable, path: Union[str, Path]):
    """Write records, or interval buckets of records, in the ingest format."""
    flat = []
    for item in records:
        flat.extend(item if isinstance(item, list) else [item])
    frame = pd.DataFrame(
        [
            [r.order_id, r.timestamp, r.pickup_cell, r.dropoff_cell, _format_fee(r.fee)]
            for r in flat
        ],
        columns=ORDER_COLUMNS,
    )
    frame.to_csv(path, index=False)


def _format_fee(fee: float):
    return int(fee) if float(fee).is_integer() else fee


def to_order_stream(
    buckets: Sequence[Sequence[OrderRecord]], interval_minutes: int = 15
) -> OrderStream:
    restaurants: Dict[str, Restaurant] = {}
    intervals = []
    for index, bucket in enumerate(buckets):
        placed_at = TimeInterval(index, interval_minutes)
        orders = []
        for record in bucket:
            restaurant = Restaurant.at_cell(record.pickup_cell)
            restaurants.setdefault(restaurant.id, restaurant)
            orders.append(
                Order(record.order_id, restaurant.id, record.dropoff_cell, record.fee, placed_at)
            )
        intervals.append(orders)
    return OrderStream(intervals, restaurants)


def geo_to_cell(
    lat: float, lon: float, origin_lat: float, origin_lon: float, grid: Grid
) -> CellId:
    """
    Map a coordinate to a row-major cell. The origin is the grid's
    south-west corner; rows grow northwards and columns eastwards.
    """
    north_km = (lat - origin_lat) * KM_PER_DEGREE
    east_km = (lon - origin_lon) * KM_PER_DEGREE * math.cos(math.radians(origin_lat))
    row = math.floor(north_km / grid.cell_size_km)
    col = math.floor(east_km / grid.cell_size_km)
    if not (0 <= row < grid.rows and 0 <= col < grid.cols):
        raise UnknownVertexError(f"({lat}, {lon}) falls outside the grid")
    return grid.cell_at(row, col)


def cli(fn):
    parser = fn(description="Convert a latitude/longitude to a grid cell index")
    parser.add_argument("--lat", type=float, required=True)
    parser.add_argument("--lon", type=float, required=True)
    parser.add_argument("--origin-lat", type=float, required=True, help="South-west corner latitude")
    parser.add_argument("--origin-lon", type=float, required=True, help="South-west corner longitude")
    parser.add_argument("--config", type=Path, default=None, help="Grid dimensions are read from here")

    def cmd(args):
        grid = sim_config(args.config).grid
        print(geo_to_cell(args.lat, args.lon, args.origin_lat, args.origin_lon, grid))

    parser.set_defaults(func=cmd)
    return parser
