# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""Seeded synthetic city: restaurant placement, base rates and order streams."""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from dispatch_emulator.config import sim_config
from dispatch_emulator.demand import MINUTES_PER_DAY, DailyProfile, TimeInterval, write_rate_table
from dispatch_emulator.errors import DataError
from dispatch_emulator.ingest import OrderRecord, export_orders
from dispatch_emulator.netgraph import DistanceSubgraph, build_grid

logger = logging.getLogger(__name__)


def synthetic_rates(
    distance: DistanceSubgraph,
    restaurants: int,
    daily_orders: float,
    delivery_radius_km: float,
    seed: int = 0,
    profile: DailyProfile = DailyProfile(),
    interval_minutes: int = 15,
) -> Tuple[np.ndarray, List[int]]:
    """
    Per-interval base rates with ``restaurants`` seeded restaurant cells, each
    spreading an equal share over the cells within the delivery radius.
    Scaled so that one day of profile-weighted rates totals ``daily_orders``.
    """
    n_cells = distance.grid.n_cells
    if not 1 <= restaurants <= n_cells:
        raise DataError(f"Restaurant count must be within 1..{n_cells}, got {restaurants}")
    rng = np.random.default_rng(seed)
    cells = sorted(int(c) for c in rng.choice(n_cells, size=restaurants, replace=False))
    rates = np.zeros((n_cells, n_cells))
    for cell in cells:
        reach = np.flatnonzero(distance.distances_from(cell) <= delivery_radius_km)
        rates[cell, reach] = 1.0 / len(reach)
    mass = profile.daily_mass(interval_minutes)
    rates *= daily_orders / (restaurants * mass)
    return rates, cells


def generate_order_stream(
    rates: np.ndarray,
    profile: DailyProfile = DailyProfile(),
    days: int = 1,
    interval_minutes: int = 15,
    seed: int = 0,
    fee_range: Sequence[float] = (5, 15),
) -> List[OrderRecord]:
    """Poisson realizations of the profiled rates, one record per order."""
    rng = np.random.default_rng(seed)
    low, high = int(fee_range[0]), int(fee_range[1])
    records = []
    per_day = MINUTES_PER_DAY // interval_minutes
    for index in range(days * per_day):
        interval = TimeInterval(index, interval_minutes)
        counts = rng.poisson(rates * profile.multiplier(interval.hour_of_day))
        for origin, dest in zip(*np.nonzero(counts)):
            for _ in range(int(counts[origin, dest])):
                second = interval.start_minute * 60 + int(rng.integers(0, interval_minutes * 60))
                records.append(
                    OrderRecord(
                        f"o{len(records):06d}",
                        str(second),
                        int(origin),
                        int(dest),
                        float(rng.integers(low, high + 1)),
                    )
                )
    records.sort(key=lambda r: (int(r.timestamp), r.order_id))
    logger.info("Generated %d synthetic orders over %d day(s)", len(records), days)
    return records


def write_synthetic(
    config_path: Optional[Path],
    out: Path,
    days: int = 1,
    seed: Optional[int] = None,
    rates_out: Optional[Path] = None,
):
    if days < 1:
        raise DataError(f"--days must be at least 1, got {days}")
    config = sim_config(config_path, {"simulator.seed": seed})
    _, distance = build_grid(config.rows, config.cols, config.cell_size_km)
    rates, _ = synthetic_rates(
        distance, config.restaurants, config.daily_orders,
        config.delivery_radius_km, config.seed, config.peaks, config.interval_minutes,
    )
    records = generate_order_stream(
        rates, config.peaks, days, config.interval_minutes, config.seed, config.fee_range
    )
    export_orders(records, out)
    print(f"Synthetic orders written to {out}")
    if rates_out is not None:
        write_rate_table(rates, rates_out)
        print(f"Rate table written to {rates_out}")


def cli(fn):
    parser = fn(description="Generate a seeded synthetic order log")
    parser.add_argument("--config", type=Path, default=None)
    parser.add_argument("--out", type=Path, required=True, help="Order log CSV to write")
    parser.add_argument("--days", type=int, default=1)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--rates-out", type=Path, default=None, help="Also write the base rate table")
    parser.set_defaults(
        func=lambda args: write_synthetic(args.config, args.out, args.days, args.seed, args.rates_out)
    )
    return parser
