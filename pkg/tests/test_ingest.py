# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import numpy as np
import pytest

from dispatch_emulator.demand import DailyProfile
from dispatch_emulator.errors import DataError
from dispatch_emulator.ingest import (
    ORDER_COLUMNS,
    MalformedRecordError,
    OrderRecord,
    bucket_records,
    export_orders,
    geo_to_cell,
    ingest_orders,
    read_order_records,
    to_order_stream,
)
from dispatch_emulator.netgraph import Grid, UnknownVertexError, build_grid
from dispatch_emulator.synthetic import generate_order_stream, synthetic_rates

HEADER = ",".join(ORDER_COLUMNS) + "\n"


def write_log(tmp_path, body, name="orders.csv"):
    path = tmp_path / name
    path.write_text(HEADER + body)
    return path


def test_header_only_log_is_empty(tmp_path):
    assert ingest_orders(write_log(tmp_path, "")) == []


def test_orders_ten_minutes_apart_share_a_bucket(tmp_path):
    path = write_log(
        tmp_path,
        "a,2024-05-01T10:00:00,3,4,12\n"
        "b,2024-05-01T10:10:00,3,5,8.5\n",
    )
    buckets = ingest_orders(path, 15, Grid(3, 3))
    assert len(buckets) == 41
    assert [r.order_id for r in buckets[40]] == ["a", "b"]
    assert all(bucket == [] for bucket in buckets[:40])


def test_epoch_and_iso_timestamps_agree(tmp_path):
    path = write_log(
        tmp_path,
        "a,1714557600,0,1,5\n"
        "b,2024-05-01T10:20:00+00:00,0,1,5\n",
    )
    buckets = ingest_orders(path)
    assert [[r.order_id for r in b] for b in buckets[40:]] == [["a"], ["b"]]


def test_buckets_sorted_by_time_then_id(tmp_path):
    path = write_log(
        tmp_path,
        "z,2024-05-01T00:05:00,0,1,5\n"
        "y,2024-05-01T00:01:00,0,1,5\n"
        "x,2024-05-01T00:05:00,0,1,5\n",
    )
    (bucket,) = ingest_orders(path)
    assert [r.order_id for r in bucket] == ["y", "x", "z"]


def test_export_round_trip(tmp_path):
    records = [
        OrderRecord("a", "2024-05-01T10:00:00", 3, 4, 12.0),
        OrderRecord("b", "2024-05-01T11:00:00", 1, 2, 7.25),
    ]
    path = tmp_path / "out.csv"
    export_orders(records, path)
    assert path.read_text().splitlines()[0] == ",".join(ORDER_COLUMNS)
    assert read_order_records(path) == records
    export_orders(bucket_records(records), path)
    assert read_order_records(path) == records


@pytest.mark.parametrize(
    "body,line",
    [
        ("a,2024-05-01T10:00:00,3,4,12\nb,not-a-time,3,4,12\n", 3),
        ("a,2024-05-01T10:00:00,3,x,12\n", 2),
        ("a,2024-05-01T10:00:00,3,4,0\n", 2),
        ("a,2024-05-01T10:00:00,3,4,12\na,2024-05-01T10:00:00,3,4,12\n", 3),
        ("a,2024-05-01T10:00:00,3,40,12\n", 2),
    ],
)
def test_malformed_rows_name_line(tmp_path, body, line):
    path = write_log(tmp_path, body)
    with pytest.raises(MalformedRecordError) as error:
        read_order_records(path, Grid(3, 3))
    assert error.value.line == line
    assert f"{path}:{line}:" in str(error.value)


def test_wrong_header(tmp_path):
    path = tmp_path / "orders.csv"
    path.write_text("id,time\n1,2\n")
    with pytest.raises(MalformedRecordError, match=":1:"):
        read_order_records(path)


def test_missing_log_names_path(tmp_path):
    missing = tmp_path / "absent.csv"
    with pytest.raises(DataError, match="absent.csv"):
        read_order_records(missing)


def test_order_stream_uses_restaurant_per_pickup_cell(tmp_path):
    path = write_log(
        tmp_path,
        "a,2024-05-01T00:00:00,3,4,12\n"
        "b,2024-05-01T00:20:00,3,5,8\n",
    )
    stream = to_order_stream(ingest_orders(path))
    assert set(stream.restaurants) == {"r3"}
    assert [[o.id for o in bucket] for bucket in stream.intervals] == [["a"], ["b"]]
    assert stream.intervals[1][0].placed_at.index == 1
    assert stream.total_orders == 2


def test_geo_to_cell():
    grid = Grid(10, 10, 2.0)
    assert geo_to_cell(0.0, 0.0, 0.0, 0.0, grid) == 0
    # about 5.6 km north and east of the origin
    assert geo_to_cell(0.05, 0.05, 0.0, 0.0, grid) == 22
    with pytest.raises(UnknownVertexError):
        geo_to_cell(-0.01, 0.0, 0.0, 0.0, grid)
    with pytest.raises(UnknownVertexError):
        geo_to_cell(0.0, 1.0, 0.0, 0.0, grid)


def test_synthetic_rates_total_daily_orders():
    _, distance = build_grid(5, 5, 2.0)
    profile = DailyProfile()
    rates, cells = synthetic_rates(distance, 3, 1000, 4.0, seed=2, profile=profile)
    assert len(cells) == 3
    assert set(np.flatnonzero(rates.sum(axis=1))) == set(cells)
    assert (rates * profile.daily_mass(15)).sum() == pytest.approx(1000)
    with pytest.raises(DataError):
        synthetic_rates(distance, 26, 1000, 4.0)


def test_synthetic_stream_is_seeded_and_ingestible(tmp_path):
    _, distance = build_grid(4, 4, 1.0)
    rates, _ = synthetic_rates(distance, 2, 300, 3.0, seed=1)
    first = generate_order_stream(rates, seed=5, fee_range=(5, 15))
    assert first == generate_order_stream(rates, seed=5, fee_range=(5, 15))
    assert all(5 <= r.fee <= 15 for r in first)
    path = tmp_path / "synthetic.csv"
    export_orders(first, path)
    buckets = ingest_orders(path, 15, Grid(4, 4, 1.0))
    assert sum(len(b) for b in buckets) == len(first)
    assert len(buckets) <= 96
