"""Harness checks: determinism, metrics, persistence, config validation, CLI."""

import json
from dataclasses import replace

import numpy as np
import pytest

from toapose.cli import main
from toapose.crlb import fim_mema
from toapose.harness import (
    ConfigError,
    ExperimentConfig,
    RECORD_FIELDS,
    TrialRecord,
    bound_table,
    read_records,
    resolve_scenario,
    run_point,
    run_trial,
    summarize,
    write_records,
)
from toapose.measurement import form_tdoa
from toapose.scenario import (
    build_four_anchor_scene,
    build_port_scene,
    save_scenario,
    synthesize_trial,
)


def _zero_wall(records):
    return [replace(r, wall_time_s=0.0) for r in records]


def _fake_record(trial, epoch, east, north, yaw=0.0, estimator="mema", converged=True):
    return TrialRecord(
        trial=trial,
        epoch=epoch,
        estimator=estimator,
        est_x_m=10.0 + east,
        est_y_m=-5.0 + north,
        est_yaw_rad=0.3 + yaw,
        truth_x_m=10.0,
        truth_y_m=-5.0,
        truth_yaw_rad=0.3,
        error_east_m=east,
        error_north_m=north,
        error_yaw_rad=yaw,
        iterations=4,
        converged=converged,
        init_within_0p3m=True,
        wall_time_s=0.01,
    )


def test_summarize_zero_errors_give_zero_rmse():
    records = [_fake_record(t, 0, 0.0, 0.0) for t in range(5)]
    summary = summarize(records)
    group = summary["groups"][0]
    assert group["rmse_position_m"] == 0.0
    assert group["rmse_yaw_rad"] == 0.0
    assert group["fraction_within_0p3m"] == 1.0


def test_summarize_rmse_of_three_and_four():
    records = [_fake_record(0, 0, 3.0, 0.0), _fake_record(1, 0, 4.0, 0.0)]
    group = summarize(records)["groups"][0]
    assert group["rmse_position_m"] == pytest.approx(3.5355, abs=1e-4)
    assert group["fraction_beyond_1m"] == 1.0


def test_summarize_counts_cover_all_rows():
    scene = build_four_anchor_scene()
    records = []
    for trial in range(3):
        records.extend(run_trial(scene, "sema", 3, seed=9, trial=trial))
    summary = summarize(records)
    assert sum(g["count"] for g in summary["groups"]) == 3 * 3
    assert summary["total_rows"] == 9


def test_errors_recomputable_from_poses():
    scene = build_four_anchor_scene()
    records = run_trial(scene, "mema", 3, seed=2, trial=0)
    for r in records:
        assert r.error_east_m == pytest.approx(r.est_x_m - r.truth_x_m, abs=1e-12)
        assert r.error_north_m == pytest.approx(r.est_y_m - r.truth_y_m, abs=1e-12)


def test_trials_deterministic_per_seed():
    scene = build_four_anchor_scene()
    first = run_trial(scene, "mema", 2, seed=4, trial=1)
    second = run_trial(scene, "mema", 2, seed=4, trial=1)
    assert _zero_wall(first) == _zero_wall(second)


def test_worker_pool_preserves_order_and_content():
    scene = build_four_anchor_scene()
    serial = run_point(ExperimentConfig(scenario=scene, method="sema", epochs=3, trials=4, seed=6))
    pooled = run_point(
        ExperimentConfig(scenario=scene, method="sema", epochs=3, trials=4, seed=6, workers=2)
    )
    assert _zero_wall(serial.records) == _zero_wall(pooled.records)


def test_csv_round_trip(tmp_path):
    scene = build_four_anchor_scene()
    records = run_trial(scene, "sema", 2, seed=8, trial=0)
    path = tmp_path / "rows.csv"
    write_records(path, records)
    header = path.read_text().splitlines()[0]
    assert header == ",".join(RECORD_FIELDS)
    assert read_records(path) == records


def test_rerun_reproduces_csv_bytes_except_walltime(tmp_path):
    scene = build_four_anchor_scene()
    paths = []
    for tag in ("a", "b"):
        records = run_trial(scene, "sema", 2, seed=13, trial=0)
        path = tmp_path / f"{tag}.csv"
        write_records(path, records)
        paths.append(path)
    def strip(path):
        return [",".join(line.split(",")[:-1]) for line in path.read_text().splitlines()]

    assert strip(paths[0]) == strip(paths[1])


def test_config_rejects_bad_values():
    scene = build_four_anchor_scene()
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario=scene, method="bogus")
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario=scene, trials=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario=scene, epochs=0)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario=scene, sigma=-0.1)
    with pytest.raises(ConfigError):
        ExperimentConfig(scenario=scene, windows="spiral")


def test_window_length_one_warns_for_coupled_method():
    scene = build_four_anchor_scene()
    with pytest.warns(UserWarning):
        ExperimentConfig(scenario=scene, method="mema", epochs=1)


def test_resolve_scenario_paths_and_names(tmp_path):
    scene = build_four_anchor_scene()
    assert resolve_scenario("four_anchor").name == "four_anchor"
    path = tmp_path / "scene.json"
    save_scenario(scene, path)
    assert resolve_scenario(path).name == "four_anchor"
    with pytest.raises(ConfigError):
        resolve_scenario(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        resolve_scenario(bad)


def test_bound_table_matches_information_matrix():
    scene = build_four_anchor_scene()
    table = bound_table(scene, 3)
    silent = replace(scene, sigma=0.0, sigma_p=0.0, sigma_psi=0.0)
    measurements, truths = synthesize_trial(silent, 0, 0, range(3))
    bundles = [form_tdoa(m, scene.sigma) for m in measurements]
    info = fim_mema(truths, bundles, scene)
    for k, entry in enumerate(table):
        expected = np.sqrt(info.window_bound[3 * k] + info.window_bound[3 * k + 1])
        assert entry["mema_position_m"] == pytest.approx(expected, rel=1e-12)


def test_sliding_run_emits_one_row_per_epoch():
    port = build_port_scene()
    short = replace(port, trajectory=port.trajectory[:6])
    records = run_trial(short, "mema", 3, seed=11, trial=0, windows="sliding")
    assert [r.epoch for r in records] == list(range(6))
    assert all(r.converged for r in records)
    assert all(np.isfinite(r.error_east_m) for r in records)
    assert max(abs(r.error_east_m) for r in records) < 1.0


def test_cli_validate_and_crlb(tmp_path, capsys):
    assert main(["scenario", "validate", "four_anchor"]) == 0
    out = capsys.readouterr().out
    assert "anchors 4" in out
    assert main(["crlb", "--config", "four_anchor", "--epochs", "2", "--out", str(tmp_path)]) == 0
    table = (tmp_path / "bounds.csv").read_text().splitlines()
    assert table[0].startswith("sigma_toa_m,")
    assert len(table) == 3


def test_cli_run_writes_tables(tmp_path):
    out = tmp_path / "results"
    code = main(
        [
            "run", "--config", "four_anchor", "--method", "sema", "--epochs", "2",
            "--trials", "2", "--seed", "3", "--out", str(out),
        ]
    )
    assert code == 0
    csvs = list(out.glob("trials_*.csv"))
    assert len(csvs) == 1
    assert len(read_records(csvs[0])) == 4
    summary = json.loads((out / "summary.json").read_text())
    assert summary["points"][0]["summary"]["total_rows"] == 4
    assert summary["points"][0]["bounds"][0]["sema_position_m"] > 0


def test_cli_rejects_bad_config(tmp_path, capsys):
    assert main(["run", "--config", str(tmp_path / "absent.json"), "--trials", "1"]) == 2
    assert "error:" in capsys.readouterr().err
