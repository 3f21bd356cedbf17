"""End-to-end statistical gates over the shipped scenarios.

One test per release criterion; each prints its measured numbers beside the
threshold so a verbose run doubles as a benchmark scorecard.  These are
Monte Carlo studies, not unit tests: the module needs roughly twenty minutes
on one core, almost all of it in the 500-trial window runs and the noise
sweeps.  Use ``pytest -m "not acceptance"`` for the quick suites.
"""

import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from toapose.frames import wrap_angle
from toapose.harness import AMBIGUITY_RADIUS, ExperimentConfig, bound_table, run_point
from toapose.measurement import form_tdoa
from toapose.refine import gauss_newton, oracle_grid_mle, sema_solve
from toapose.scenario import load_bundled, synthesize_trial
from toapose.sdp_init import extract_poses, solve_window

pytestmark = pytest.mark.acceptance

SIGMA_SWEEP = (0.05, 0.1, 0.2, 0.3, 0.5)
SIGMA_P_SWEEP = tuple(float(v) for v in np.round(np.linspace(0.05, 0.5, 10), 2))
RATIO_BAND = 0.15

TIMINGS: dict[str, float] = {}


def _group(point, estimator: str, epoch: int) -> dict:
    return next(
        g for g in point.summary["groups"]
        if g["estimator"] == estimator and g["epoch"] == epoch
    )


def _window_data(scenario, seed: int, trial: int, length: int):
    measurements, truths = synthesize_trial(scenario, seed, trial, range(length))
    bundles = [form_tdoa(m, scenario.sigma) for m in measurements]
    inter = [measurements[k].inter_epoch for k in range(1, length)]
    return bundles, inter, truths


@pytest.fixture(scope="module")
def square_window_runs():
    """500-trial window pipeline runs on the square scene, one per length."""
    start = time.perf_counter()
    runs = {
        length: run_point(
            ExperimentConfig(
                scenario="four_anchor", method="mema", epochs=length, trials=500,
                seed=0,
            )
        )
        for length in (2, 3, 4)
    }
    TIMINGS["window runs, 500 trials x K=2,3,4"] = time.perf_counter() - start
    return runs


def test_criterion_1_initialization_quality(square_window_runs):
    """Newest-epoch relaxation inits land within 0.3 m often enough at K>=3."""
    fractions = {
        length: float(
            np.mean([r.init_within_0p3m for r in point.records if r.epoch == length - 1])
        )
        for length, point in square_window_runs.items()
    }
    minutes = TIMINGS["window runs, 500 trials x K=2,3,4"] / 60.0
    print(
        "[criterion 1] newest-epoch init within 0.3 m over 500 trials:"
        f" K=2 {fractions[2]:.3f} (need <= 0.70),"
        f" K=3 {fractions[3]:.3f} (need >= 0.85),"
        f" K=4 {fractions[4]:.3f} (need >= 0.85);"
        f" runtime {minutes:.1f} min (need <= 20)"
    )
    assert fractions[2] <= 0.70
    assert fractions[3] >= 0.85
    assert fractions[4] >= 0.85
    assert minutes <= 20.0


def test_criterion_2_window_estimator_efficiency():
    """Window RMSE tracks its lower bound and never trails the per-epoch method."""
    start = time.perf_counter()
    table = []
    for sigma in SIGMA_SWEEP:
        window = run_point(
            ExperimentConfig(
                scenario="four_anchor", method="mema", epochs=4, trials=200, seed=101
            ),
            sigma=sigma,
        )
        single = run_point(
            ExperimentConfig(
                scenario="four_anchor", method="sema", epochs=4, trials=200, seed=101,
                init="truth",
            ),
            sigma=sigma,
        )
        w = _group(window, "mema", 3)
        s = _group(single, "sema", 3)
        bound = next(e for e in window.bounds if e["epoch"] == 3)
        table.append(
            {
                "sigma": sigma,
                "pos_ratio": w["rmse_position_m"] / bound["mema_position_m"],
                "yaw_ratio": w["rmse_yaw_rad"] / bound["mema_yaw_rad"],
                "window_pos": w["rmse_position_m"],
                "single_pos": s["rmse_position_m"],
                "window_yaw": w["rmse_yaw_rad"],
                "single_yaw": s["rmse_yaw_rad"],
                "converged": w["fraction_converged"],
            }
        )
    TIMINGS["range noise sweep, 200 trials x 5 points x 2 methods"] = (
        time.perf_counter() - start
    )
    for row in table:
        print(
            f"[criterion 2] sigma={row['sigma']:g}: RMSE/bound pos"
            f" {row['pos_ratio']:.3f}, yaw {row['yaw_ratio']:.3f}"
            f" (need within {RATIO_BAND:.2f}); window vs single-epoch"
            f" pos {row['window_pos']:.4f}/{row['single_pos']:.4f} m,"
            f" yaw {row['window_yaw']:.5f}/{row['single_yaw']:.5f} rad;"
            f" converged {row['converged']:.3f}"
        )
    for row in table:
        sigma = row["sigma"]
        assert abs(row["pos_ratio"] - 1.0) <= RATIO_BAND, f"position off bound, sigma={sigma}"
        assert abs(row["yaw_ratio"] - 1.0) <= RATIO_BAND, f"yaw off bound, sigma={sigma}"
        assert row["window_pos"] <= row["single_pos"], f"position ordering, sigma={sigma}"
        assert row["window_yaw"] <= row["single_yaw"], f"yaw ordering, sigma={sigma}"


def test_criterion_3_odometry_noise_sweep():
    """RMSE stays on its bound and grows monotonically with odometry noise.

    Refinement starts from the truth here; a 30-trial probe at the harshest
    point first confirms that relaxation-started and truth-started runs reach
    the same minimum, which keeps the 8000-run sweep under a few minutes.
    """
    start = time.perf_counter()
    base = load_bundled("four_anchor")
    length, trials, seed = 4, 400, 777

    harsh = replace(base, sigma=0.1, sigma_p=0.5, sigma_psi=0.5)
    worst = 0.0
    for t in range(30):
        bundles, inter, truths = _window_data(harsh, seed, t, length)
        init = extract_poses(solve_window(bundles, inter, harsh), length, scenario=harsh)
        cold = gauss_newton(init, bundles, inter, harsh)
        warm = gauss_newton(truths, bundles, inter, harsh)
        worst = max(worst, float(np.abs(cold.theta - warm.theta).max()))
    assert worst < 1e-6, "relaxation-started and truth-started minima differ"

    failures = []
    lines = [f"[criterion 3] init probe: max |theta_cold - theta_warm| {worst:.1e}"]
    for sigma_psi in (0.1, 0.5):
        pos_series, yaw_series, pos_ratios, yaw_ratios = [], [], [], []
        for sigma_p in SIGMA_P_SWEEP:
            scen = replace(base, sigma=0.1, sigma_p=sigma_p, sigma_psi=sigma_psi)
            bound = bound_table(scen, length)[length - 1]
            squares = np.zeros(2)
            for t in range(trials):
                bundles, inter, truths = _window_data(scen, seed, t, length)
                pose = gauss_newton(truths, bundles, inter, scen).pose(length - 1, scen)
                truth = truths[length - 1]
                squares += (
                    (pose.x - truth.x) ** 2 + (pose.y - truth.y) ** 2,
                    float(wrap_angle(pose.yaw - truth.yaw)) ** 2,
                )
            rmse_pos, rmse_yaw = np.sqrt(squares / trials)
            pos_series.append(rmse_pos)
            yaw_series.append(rmse_yaw)
            pos_ratios.append(rmse_pos / bound["mema_position_m"])
            yaw_ratios.append(rmse_yaw / bound["mema_yaw_rad"])
        for label, ratios in (("position", pos_ratios), ("yaw", yaw_ratios)):
            for sigma_p, ratio in zip(SIGMA_P_SWEEP, ratios):
                if abs(ratio - 1.0) > RATIO_BAND:
                    failures.append(
                        f"{label} ratio {ratio:.3f} at sigma_p={sigma_p:g}"
                        f" sigma_psi={sigma_psi:g}"
                    )
        for label, series in (("position", pos_series), ("yaw", yaw_series)):
            drops = [
                (prev - cur) / prev for prev, cur in zip(series, series[1:]) if cur < prev
            ]
            if len(drops) > 1 or any(d > 0.02 for d in drops):
                failures.append(
                    f"{label} series not monotone at sigma_psi={sigma_psi:g}: {drops}"
                )
        lines.append(
            f"[criterion 3] sigma_psi={sigma_psi:g}: RMSE/bound pos"
            f" {min(pos_ratios):.3f}..{max(pos_ratios):.3f}, yaw"
            f" {min(yaw_ratios):.3f}..{max(yaw_ratios):.3f}; position RMSE"
            f" {pos_series[0]:.4f}->{pos_series[-1]:.4f} m over sigma_p"
            f" {SIGMA_P_SWEEP[0]:g}->{SIGMA_P_SWEEP[-1]:g}"
        )
    TIMINGS["odometry noise sweep, 400 trials x 20 points"] = time.perf_counter() - start
    for line in lines:
        print(line)
    assert not failures, "; ".join(failures)


def test_criterion_4_ambiguity_removal(square_window_runs):
    """Single-epoch estimation is bimodal on this scene; the window is not.

    The single-epoch runs share seed 0 with the window fixture, so both
    methods face the same 500 synthetic datasets.
    """
    start = time.perf_counter()
    scene = load_bundled("four_anchor")
    single = run_point(
        ExperimentConfig(
            scenario="four_anchor", method="sema", epochs=3, trials=500, seed=0,
            init="random",
        )
    )
    radius = np.array(
        [np.hypot(r.error_east_m, r.error_north_m) for r in single.records]
    )
    single_far = float(np.mean(~np.isfinite(radius) | (radius > AMBIGUITY_RADIUS)))

    measurements, truths = synthesize_trial(scene, 0, 0, range(1))
    bundle = form_tdoa(measurements[0], scene.sigma)
    minima = oracle_grid_mle(
        bundle,
        [],
        scene,
        bounds=[(5.0, 25.0), (-16.0, 2.0), (-np.pi, np.pi)],
        resolution=(41, 37, 24),
        threshold=1e4,
    )
    separations = []
    for pose in minima:
        polished = sema_solve(pose, bundle, scene).pose(0, scene)
        separations.append(
            float(np.hypot(polished.x - truths[0].x, polished.y - truths[0].y))
        )

    per_trial: dict[int, float] = {}
    for r in square_window_runs[3].records:
        rad = float(np.hypot(r.error_east_m, r.error_north_m))
        per_trial[r.trial] = max(
            per_trial.get(r.trial, 0.0), rad if np.isfinite(rad) else float("inf")
        )
    window_far = sum(v > AMBIGUITY_RADIUS for v in per_trial.values())

    TIMINGS["ambiguity study, 500 single-epoch trials + grid search"] = (
        time.perf_counter() - start
    )
    print(
        f"[criterion 4] single-epoch random-init rows beyond 1 m: {single_far:.3f}"
        f" (need >= 0.02); cost-surface minima {len(minima)} (need >= 2), at"
        f" {', '.join(f'{s:.2f}' for s in separations)} m from truth;"
        f" window trials beyond 1 m: {window_far} of {len(per_trial)} (need 0)"
    )
    assert single_far >= 0.02
    assert len(minima) >= 2
    assert max(separations) > AMBIGUITY_RADIUS
    assert len(per_trial) == 500
    assert window_far == 0


def test_criterion_5_port_trajectory_tracking():
    """Sliding-window tracking holds sub-0.3 m / 0.05 rad across the port run."""
    start = time.perf_counter()
    point = run_point(
        ExperimentConfig(
            scenario="port", method="mema", epochs=3, trials=1, seed=11,
            windows="sliding",
        )
    )
    records = point.records
    inside = float(
        np.mean(
            [
                abs(r.error_east_m) < 0.3
                and abs(r.error_north_m) < 0.3
                and abs(r.error_yaw_rad) < 0.05
                for r in records
            ]
        )
    )
    converged = all(r.converged for r in records)
    TIMINGS["port trajectory, 290 sliding windows"] = time.perf_counter() - start
    print(
        f"[criterion 5] {len(records)} epochs: fraction within thresholds"
        f" {inside:.3f} (need >= 0.99); worst |east|"
        f" {max(abs(r.error_east_m) for r in records):.3f} m, |north|"
        f" {max(abs(r.error_north_m) for r in records):.3f} m, |yaw|"
        f" {max(abs(r.error_yaw_rad) for r in records):.4f} rad;"
        f" all converged {converged}"
    )
    assert len(records) == 290
    assert converged
    assert inside >= 0.99


PROPERTY_NODES = (
    "tests/test_frames.py",
    "tests/test_measurement.py",
    "tests/test_refine.py::test_jacobian_matches_central_differences",
    "tests/test_refine.py::test_clock_bias_invariance",
    "tests/test_refine.py::test_noiseless_end_to_end_recovery",
    "tests/test_sdp_init.py::test_noiseless_window_recovers_trajectory",
    "tests/test_crlb.py::test_coupling_never_hurts",
)


def test_criterion_6_property_suites_stay_fast():
    """The always-on property suites pass inside one minute."""
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider", *PROPERTY_NODES],
        cwd=Path(__file__).resolve().parents[1],
        capture_output=True,
        text=True,
        check=False,
    )
    elapsed = time.perf_counter() - start
    TIMINGS["property suites"] = elapsed
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else ""
    print(f"[criterion 6] {tail}; {elapsed:.1f} s (need < 60)")
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert elapsed < 60.0


def test_criterion_7_wall_clock_recorded_only():
    """Absolute solver timings are hardware-bound: record them, gate nothing."""
    for name, seconds in sorted(TIMINGS.items()):
        assert np.isfinite(seconds)
        print(f"[criterion 7] {name}: {seconds:.1f} s (recorded, not gated)")
