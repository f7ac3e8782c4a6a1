import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from momentum_mpc import load_config, run_scenario
from momentum_mpc.output import CSV_SCHEMA, PLOTS, csv_columns, emit_plots, read_csv, write_csv, write_summary


@pytest.fixture(scope="module")
def short_log():
    return run_scenario(load_config("side_push_20deg").replace(**{"simulation.duration": 0.3}))


def test_csv_columns():
    cols = csv_columns()
    assert cols[:10] == ["t", "com_x", "com_y", "com_z", "vx", "vy", "vz", "hx", "hy", "hz"]
    assert cols[-4:] == ["k_impact", "trigger", "solve_ms", "solve_iters"]
    assert len(cols) == 10 + 24 + 4
    for kind in ("cmd", "real"):
        for foot in ("fl", "fr"):
            for ax in ("fx", "fy", "fz", "tx", "ty", "tz"):
                assert f"{kind}_{foot}_{ax}" in cols
    assert len(set(cols)) == len(cols)


def test_csv_round_trip(short_log, tmp_path):
    path = write_csv(short_log, tmp_path / "run.csv")
    data = read_csv(path)
    assert path.read_text().splitlines()[0] == ",".join(csv_columns())
    assert np.array_equal(data["t"], short_log.time)
    assert np.array_equal(data["com_y"], short_log.gamma[:, 1])
    assert np.array_equal(data["cmd_fl_fz"], short_log.commanded[:, 2])
    assert np.array_equal(data["real_fr_tz"], short_log.realized[:, 11])
    assert np.array_equal(data["k_impact"], short_log.k_impact)
    assert np.all(np.isnan(data["solve_ms"]))


def test_csv_timing_column_optional(short_log, tmp_path):
    data = read_csv(write_csv(short_log, tmp_path / "run.csv", log_timing=True))
    assert np.all(data["solve_ms"] > 0)


def test_csv_bytes_identical(tmp_path):
    cfg = load_config("side_push_20deg").replace(**{"simulation.duration": 0.8})
    a = write_csv(run_scenario(cfg), tmp_path / "a.csv").read_bytes()
    b = write_csv(run_scenario(cfg), tmp_path / "b.csv").read_bytes()
    assert a == b


def test_summary_json(short_log, tmp_path):
    path = write_summary(short_log, tmp_path / "summary.json", scenario="x", extra={"seed": 4})
    s = json.loads(path.read_text())
    assert s["scenario"] == "x" and s["seed"] == 4
    assert s["csv_schema"] == CSV_SCHEMA
    assert s["ticks"] == len(short_log)
    for key in ("step_taken", "settle_time", "max_transverse_excursion", "fell"):
        assert key in s


def svg_root(path):
    root = ET.parse(path).getroot()
    assert root.tag.endswith("svg")
    return root


def test_all_plots_written(short_log, tmp_path):
    paths = emit_plots(short_log, tmp_path)
    assert sorted(p.name for p in paths) == sorted(f"{n}.svg" for n in PLOTS)
    for p in paths:
        svg_root(p)


def test_single_tick_log(tmp_path):
    log = run_scenario(load_config("no_push_regulation").replace(**{"simulation.duration": 0.01}))
    assert len(log) == 1
    for p in emit_plots(log, tmp_path):
        svg_root(p)


def test_toggles_off(short_log, tmp_path):
    off = {name: False for name in PLOTS}
    assert emit_plots(short_log, tmp_path / "none", off) == []
    assert not list((tmp_path / "none").glob("*.svg"))
    assert [p.name for p in emit_plots(short_log, tmp_path / "one", {**off, "com_z": True})] == ["com_z.svg"]


def test_empty_log_rejected(short_log, tmp_path):
    import dataclasses

    empty = dataclasses.replace(short_log, time=short_log.time[:0])
    with pytest.raises(ValueError):
        emit_plots(empty, tmp_path)


def test_plots_are_stable(short_log, tmp_path):
    a = emit_plots(short_log, tmp_path / "a")
    b = emit_plots(short_log, tmp_path / "b")
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()


def test_right_foot_force_zero_through_swing(run_scenario_cached):
    log = run_scenario_cached("side_push_20deg").log
    swing = np.array([p == "swing" for p in log.phase])
    assert swing.any()
    assert np.all(log.realized[swing, 8] == 0)
    assert np.max(np.abs(log.commanded[swing, 8])) <= 1e-8
