# Copyright (c) Dispatch Emulator Authors.
# Licensed under the MIT License.
import json

import pytest

from dispatch_emulator.config import (
    DEFAULTS,
    ConfigError,
    SimConfig,
    apply_overrides,
    deep_merge,
    load_config,
    sim_config,
    write_manifest,
)


def write_config(tmp_path, document):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(document))
    return path


def test_defaults_resolve():
    config = sim_config()
    assert config == SimConfig.from_document(DEFAULTS)
    assert (config.rows, config.cols, config.cell_size_km) == (10, 10, 2.0)
    assert config.interval_minutes == 15
    assert config.relocation_distance_km == 5.0
    assert config.predictor.kind == "replay_previous"


def test_file_values_merge_over_defaults(tmp_path):
    path = write_config(tmp_path, {"grid": {"rows": 4}, "allocation": {"two_phase": True}})
    config = sim_config(path)
    assert (config.rows, config.cols) == (4, 10)
    assert config.two_phase
    assert config.allocation_params().two_phase


def test_overrides_win_and_none_is_skipped(tmp_path):
    path = write_config(tmp_path, {"allocation": {"courier_capacity": 2}})
    config = sim_config(
        path, {"allocation.courier_capacity": 5, "routing.relocation_distance_km": None}
    )
    assert config.courier_capacity == 5
    assert config.relocation_distance_km == 5.0


def test_predictor_parameters_replaced_whole():
    merged = deep_merge(
        {"demand": {"predictor": {"kind": "a", "parameters": {"x": 1, "y": 2}}}},
        {"demand": {"predictor": {"parameters": {"z": 3}}}},
    )
    assert merged["demand"]["predictor"] == {"kind": "a", "parameters": {"z": 3}}


def test_apply_overrides_nests_dotted_keys():
    assert apply_overrides({"a": {"b": 1, "c": 2}}, {"a.b": 5}) == {"a": {"b": 5, "c": 2}}


@pytest.mark.parametrize(
    "document,needle",
    [
        ({"grid": {"rows": 0}}, "grid.rows"),
        ({"grid": {"hexagons": True}}, "grid"),
        ({"allocation": {"detour_threshold": 0.5}}, "allocation.detour_threshold"),
        ({"simulator": {"fee_range": [5]}}, "simulator.fee_range"),
        ({"telemetry": {}}, "<root>"),
    ],
)
def test_schema_errors_name_the_field(tmp_path, document, needle):
    with pytest.raises(ConfigError, match=needle):
        load_config(write_config(tmp_path, document))


def test_fee_range_order(tmp_path):
    with pytest.raises(ConfigError, match="fee_range"):
        load_config(write_config(tmp_path, {"simulator": {"fee_range": [9, 3]}}))


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="nope.json"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  oops\n}")
    with pytest.raises(ConfigError, match="bad.json:2:"):
        load_config(bad)


def test_sim_config_rejects_nonpositive_values():
    with pytest.raises(ConfigError):
        SimConfig(speed_km_per_min=0)
    with pytest.raises(ConfigError):
        SimConfig(courier_capacity=0)


def test_route_request_uses_routing_section():
    config = sim_config(overrides={"routing.strict_budget": True, "routing.relocation_distance_km": 3})
    request = config.route_request(7)
    assert (request.start, request.max_distance_km, request.strict) == (7, 3.0, True)


def test_write_manifest_is_sorted(tmp_path):
    path = tmp_path / "manifest.json"
    write_manifest({"b": 1, "a": {"d": 2, "c": 3}}, path, mode="all")
    text = path.read_text()
    assert text.index('"a"') < text.index('"b"') < text.index('"run"')
    assert text.index('"c"') < text.index('"d"')
    assert json.loads(text)["run"] == {"mode": "all"}
