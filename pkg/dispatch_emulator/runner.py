# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
"""
Scenario assembly and the ``run``, ``sweep`` and ``validate`` commands.
"""
import argparse
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from dispatch_emulator.config import SimConfig, load_config, write_manifest
from dispatch_emulator.demand import PredictorKind, load_rate_table
from dispatch_emulator.errors import UsageError
from dispatch_emulator.ingest import bucket_records, ingest_orders, to_order_stream
from dispatch_emulator.netgraph import DistanceSubgraph, build_grid, load_graph_fixture
from dispatch_emulator.policies import BASELINES, POLICIES
from dispatch_emulator.predictors import create_predictor
from dispatch_emulator import reports
from dispatch_emulator.simulator import OrderStream, simulate
from dispatch_emulator.synthetic import generate_order_stream, synthetic_rates

logger = logging.getLogger(__name__)

MODES = tuple(POLICIES) + ("all",)


@dataclass(frozen=True)
class RunManifest:
    config_path: Optional[Path] = None
    orders_path: Optional[Path] = None
    graph_path: Optional[Path] = None
    out_dir: Path = Path("out")
    mode: str = "proposed"
    sweep_relocation: Tuple[float, ...] = ()
    sweep_capacity: Tuple[int, ...] = ()
    seed: Optional[int] = None
    dump_flow: bool = False
    exclude_repositioning_cost: bool = False
    jobs: int = 1
    sweep: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"Unknown mode {self.mode!r}, expected one of {list(MODES)}")
        if self.sweep and not (self.sweep_relocation or self.sweep_capacity):
            raise UsageError("A sweep needs a relocation or a capacity list")
        if self.jobs < 1:
            raise UsageError(f"--jobs must be at least 1, got {self.jobs}")

    @property
    def modes(self) -> Tuple[str, ...]:
        return tuple(POLICIES) if self.mode == "all" else (self.mode,)

    def overrides(self) -> Dict[str, object]:
        return {
            "simulator.seed": self.seed,
            "simulator.exclude_repositioning_cost": self.exclude_repositioning_cost or None,
        }


@dataclass
class Scenario:
    config: SimConfig
    distance: DistanceSubgraph
    stream: OrderStream
    document: dict = field(default_factory=dict)
    # Predictor plugins are imported relative to the config file.
    plugin_dir: Optional[Path] = None


def _with_rates(config: SimConfig, distance: DistanceSubgraph) -> SimConfig:
    """Give a synthetic predictor its rates and daily profile when the config leaves them out."""
    if config.predictor.kind != PredictorKind.SYNTHETIC_POISSON.value:
        return config
    parameters = dict(config.predictor.parameters)
    if parameters.get("rates") is None:
        if config.rates_path is not None:
            parameters["rates"] = load_rate_table(config.rates_path, distance.grid.n_cells)
        else:
            parameters["rates"] = synthetic_rates(
                distance, config.restaurants, config.daily_orders,
                config.delivery_radius_km, config.seed, config.peaks, config.interval_minutes,
            )[0]
    parameters.setdefault("peaks", config.peaks)
    parameters.setdefault("seed", config.seed)
    return replace(config, predictor=replace(config.predictor, parameters=parameters))


def load_scenario(manifest: RunManifest, extra: Optional[Dict[str, object]] = None) -> Scenario:
    overrides = manifest.overrides()
    overrides.update(extra or {})
    document = load_config(manifest.config_path, overrides)
    config = SimConfig.from_document(document)
    if manifest.graph_path is not None:
        distance = load_graph_fixture(manifest.graph_path, config.grid)
    else:
        _, distance = build_grid(config.rows, config.cols, config.cell_size_km)
    if manifest.orders_path is not None:
        buckets = ingest_orders(manifest.orders_path, config.interval_minutes, config.grid)
    else:
        rates, _ = synthetic_rates(
            distance, config.restaurants, config.daily_orders,
            config.delivery_radius_km, config.seed, config.peaks, config.interval_minutes,
        )
        records = generate_order_stream(
            rates, config.peaks, 1, config.interval_minutes, config.seed, config.fee_range
        )
        buckets = bucket_records(records, config.interval_minutes)
    stream = to_order_stream(buckets, config.interval_minutes)
    plugin_dir = Path(manifest.config_path).parent if manifest.config_path else None
    return Scenario(_with_rates(config, distance), distance, stream, document, plugin_dir)


def run_scenario(scenario: Scenario, modes: Sequence[str], out_dir: Path, dump_flow: bool = False):
    out_dir.mkdir(parents=True, exist_ok=True)
    predictor = create_predictor(scenario.config.predictor, relative=scenario.plugin_dir)
    results = {}
    for mode in modes:
        mode_dir = out_dir / mode
        mode_dir.mkdir(parents=True, exist_ok=True)
        report, state = simulate(
            scenario.config,
            scenario.stream,
            mode,
            scenario.distance,
            predictor=predictor,
            flow_dump_dir=mode_dir / "flow" if dump_flow else None,
        )
        reports.write_report_text(report, mode_dir / "report.txt")
        reports.write_series(report, mode_dir / "series.csv")
        reports.write_plan(state, mode_dir / "plan.csv")
        reports.write_temporal(report, mode_dir / "temporal.csv", scenario.config.interval_minutes)
        if POLICIES[mode].repositions:
            reports.write_routes(state, mode_dir / "routes.csv")
        results[mode] = report
    if "proposed" in results and any(b in results for b in BASELINES):
        reports.write_improvement(results, out_dir / "improvement.csv")
    return results


def run_cli(manifest: RunManifest) -> int:
    if manifest.sweep:
        return sweep_cli(manifest)
    scenario = load_scenario(manifest)
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(scenario.document, manifest.out_dir / "manifest.json", **_echo(manifest))
    results = run_scenario(scenario, manifest.modes, manifest.out_dir, manifest.dump_flow)
    for mode in results:
        print(f"Metrics report written to {manifest.out_dir / mode / 'report.txt'}")
    return 0


def cell_dir(relocation_km: float, capacity: int) -> str:
    return f"relocation-{relocation_km:g}_capacity-{capacity}"


def _sweep_cell(job) -> List[dict]:
    manifest, relocation_km, capacity = job
    scenario = load_scenario(
        manifest,
        {
            "routing.relocation_distance_km": relocation_km,
            "allocation.courier_capacity": capacity,
        },
    )
    results = run_scenario(
        scenario, manifest.modes, manifest.out_dir / cell_dir(relocation_km, capacity),
        manifest.dump_flow,
    )
    return [
        {"mode": mode, "relocation_km": relocation_km, "capacity": capacity, "report": report}
        for mode, report in results.items()
    ]


def sweep_cli(manifest: RunManifest) -> int:
    manifest.out_dir.mkdir(parents=True, exist_ok=True)
    document = load_config(manifest.config_path, manifest.overrides())
    write_manifest(document, manifest.out_dir / "manifest.json", **_echo(manifest))
    # An axis left out stays at its configured value.
    relocations = manifest.sweep_relocation or (document["routing"]["relocation_distance_km"],)
    capacities = manifest.sweep_capacity or (document["allocation"]["courier_capacity"],)
    jobs = [
        (manifest, relocation_km, capacity)
        for relocation_km in relocations
        for capacity in capacities
    ]
    if manifest.jobs > 1:
        with ProcessPoolExecutor(max_workers=manifest.jobs) as pool:
            cells = list(pool.map(_sweep_cell, jobs))
    else:
        cells = [_sweep_cell(job) for job in jobs]
    results = [row for cell in cells for row in cell]
    reports.write_sweep(results, manifest.out_dir / "sweep.csv", manifest.out_dir / "sweep_verdicts.csv")
    if "proposed" in manifest.modes and len(manifest.modes) > 1:
        rows = []
        for cell in cells:
            by_mode = {row["mode"]: row["report"] for row in cell}
            for row in reports.improvement_table(by_mode):
                rows.append({"relocation_km": cell[0]["relocation_km"], "capacity": cell[0]["capacity"], **row})
        reports.write_rows(rows, manifest.out_dir / "improvement.csv",
                           ["relocation_km", "capacity"] + reports.IMPROVEMENT_COLUMNS)
    print(f"Sweep summary written to {manifest.out_dir / 'sweep.csv'}")
    return 0


def validate_cli(manifest: RunManifest) -> int:
    scenario = load_scenario(manifest)
    create_predictor(scenario.config.predictor, relative=scenario.plugin_dir)
    grid = scenario.distance.grid
    print(
        f"Configuration valid: {grid.rows}x{grid.cols} grid, "
        f"{scenario.stream.total_orders} orders over {len(scenario.stream.intervals)} intervals, "
        f"{len(scenario.stream.restaurants)} restaurants"
    )
    return 0


def _echo(manifest: RunManifest) -> dict:
    return {
        "orders": str(manifest.orders_path) if manifest.orders_path else None,
        "graph": str(manifest.graph_path) if manifest.graph_path else None,
        "config": str(manifest.config_path) if manifest.config_path else None,
        "mode": manifest.mode,
        "sweep_relocation": list(manifest.sweep_relocation),
        "sweep_capacity": list(manifest.sweep_capacity),
        "dump_flow": manifest.dump_flow,
    }


def _number_list(convert):
    def parse(value: str):
        try:
            items = tuple(convert(item) for item in value.split(",") if item.strip())
        except ValueError as error:
            raise argparse.ArgumentTypeError(str(error)) from error
        if not items:
            raise argparse.ArgumentTypeError("expected a comma separated list")
        return items

    return parse


def _add_inputs(parser):
    parser.add_argument("--config", type=Path, default=None, help="JSON configuration file")
    parser.add_argument("--orders", type=Path, default=None, help="Order log CSV (synthetic if omitted)")
    parser.add_argument("--graph", type=Path, default=None, help="Per-edge distance fixture CSV")
    parser.add_argument("--seed", type=int, default=None)


def _add_run_options(parser):
    _add_inputs(parser)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--mode", choices=list(MODES), default="proposed")
    parser.add_argument("--dump-flow", action="store_true", help="Write per-interval flow dumps")
    parser.add_argument("--exclude-repositioning-cost", action="store_true")


def _add_sweep_options(parser):
    parser.add_argument("--sweep-relocation", type=_number_list(float), default=())
    parser.add_argument("--sweep-capacity", type=_number_list(int), default=())
    parser.add_argument("--jobs", type=int, default=1, help="Concurrent scenario runs")


def _sweep_manifest(args, always: bool = False) -> RunManifest:
    return _manifest(
        args,
        sweep_relocation=args.sweep_relocation,
        sweep_capacity=args.sweep_capacity,
        jobs=args.jobs,
        sweep=always or bool(args.sweep_relocation or args.sweep_capacity),
    )


def _manifest(args, **kw) -> RunManifest:
    return RunManifest(
        config_path=args.config,
        orders_path=args.orders,
        graph_path=args.graph,
        out_dir=getattr(args, "out", Path("out")),
        mode=getattr(args, "mode", "proposed"),
        seed=args.seed,
        dump_flow=getattr(args, "dump_flow", False),
        exclude_repositioning_cost=getattr(args, "exclude_repositioning_cost", False),
        **kw,
    )


def cli_run(fn):
    parser = fn(description="Run one scenario, or a sweep when sweep lists are given")
    _add_run_options(parser)
    _add_sweep_options(parser)
    parser.set_defaults(func=lambda args: run_cli(_sweep_manifest(args)))
    return parser


def cli_sweep(fn):
    parser = fn(description="Sweep relocation distance and courier capacity")
    _add_run_options(parser)
    _add_sweep_options(parser)
    parser.set_defaults(func=lambda args: run_cli(_sweep_manifest(args, always=True)))
    return parser


def cli_validate(fn):
    parser = fn(description="Check configuration, order log and graph fixture")
    _add_inputs(parser)
    parser.set_defaults(func=lambda args: validate_cli(_manifest(args)))
    return parser
