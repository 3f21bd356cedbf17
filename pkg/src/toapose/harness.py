"""Monte Carlo experiment orchestration, metrics, and result persistence.

One experiment is a (scenario, method, window length, noise point) tuple run
for a number of seeded trials; a configuration may fan out over noise sweeps,
in which case each point gets its own trial table and the summary file covers
the whole series.  Records are plain rows, one per estimated epoch, written
in trial order whatever the execution order was, so a re-run with the same
seed reproduces the table byte for byte apart from the timing column.
"""

from __future__ import annotations

import csv
import json
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .crlb import SingularFIM, fim_mema
from .frames import Pose, rotation_matrix, wrap_angle
from .measurement import form_tdoa
from .refine import NotConverged, RefineError, gauss_newton, sema_solve
from .scenario import Scenario, load_bundled, load_scenario, synthesize_trial
from .sdp_init import extract_poses, solve_window

INIT_RADIUS = 0.3
AMBIGUITY_RADIUS = 1.0

_METHODS = ("mema", "sema", "sdp-only")
_WINDOW_MODES = ("first", "sliding")
_INIT_MODES = ("truth", "random")


class ConfigError(ValueError):
    """An experiment configuration that cannot be run."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce one experiment series.

    scenario names a config file, a bundled scene, or a Scenario object.
    epochs is the window length K; with windows="first" only the leading K
    epochs are estimated, with windows="sliding" every trajectory epoch gets
    an estimate from the window ending there.  The noise overrides replace
    the scenario's levels; each sweep list fans the run out over points (the
    grid is the product of the lists, singletons by default).
    """

    scenario: str | Path | Scenario
    method: str = "mema"
    epochs: int = 3
    trials: int = 100
    seed: int = 0
    sigma: float | None = None
    sigma_p: float | None = None
    sigma_psi: float | None = None
    sigma_sweep: tuple[float, ...] = ()
    sigma_p_sweep: tuple[float, ...] = ()
    sigma_psi_sweep: tuple[float, ...] = ()
    windows: str = "first"
    init: str = "truth"
    outdir: str | Path | None = None
    workers: int = 1

    def __post_init__(self) -> None:
        if self.method not in _METHODS:
            raise ConfigError(f"method must be one of {_METHODS}, got {self.method!r}")
        if self.windows not in _WINDOW_MODES:
            raise ConfigError(f"windows must be one of {_WINDOW_MODES}, got {self.windows!r}")
        if self.init not in _INIT_MODES:
            raise ConfigError(f"init must be one of {_INIT_MODES}, got {self.init!r}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.epochs < 1:
            raise ConfigError("epochs (window length) must be at least 1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for name in ("sigma", "sigma_p", "sigma_psi"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ConfigError(f"{name} override cannot be negative")
        for name in ("sigma_sweep", "sigma_p_sweep", "sigma_psi_sweep"):
            values = tuple(float(v) for v in getattr(self, name))
            if any(v < 0 for v in values):
                raise ConfigError(f"{name} values cannot be negative")
            object.__setattr__(self, name, values)
        if self.method == "mema" and self.epochs == 1:
            warnings.warn(
                "window length 1 leaves no inter-epoch terms; the multi-epoch "
                "method degenerates to per-epoch estimation",
                stacklevel=2,
            )


@dataclass(frozen=True)
class TrialRecord:
    """One estimated epoch of one trial; the CSV columns are these fields."""

    trial: int
    epoch: int
    estimator: str
    est_x_m: float
    est_y_m: float
    est_yaw_rad: float
    truth_x_m: float
    truth_y_m: float
    truth_yaw_rad: float
    error_east_m: float
    error_north_m: float
    error_yaw_rad: float
    iterations: int
    converged: bool
    init_within_0p3m: bool
    wall_time_s: float


RECORD_FIELDS = tuple(f.name for f in fields(TrialRecord))


def resolve_scenario(source: str | Path | Scenario) -> Scenario:
    """Accept a Scenario, a config file path, or a bundled scene name."""
    if isinstance(source, Scenario):
        return source
    path = Path(source)
    if path.is_file():
        try:
            return load_scenario(path)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise ConfigError(f"bad scenario file {path}: {exc}") from exc
    try:
        return load_bundled(str(source))
    except (FileNotFoundError, ValueError) as exc:
        raise ConfigError(f"scenario {source!r} is neither a file nor a bundled scene") from exc


def _apply_noise(scenario: Scenario, sigma, sigma_p, sigma_psi) -> Scenario:
    updates = {}
    if sigma is not None:
        updates["sigma"] = float(sigma)
    if sigma_p is not None:
        updates["sigma_p"] = float(sigma_p)
    if sigma_psi is not None:
        updates["sigma_psi"] = float(sigma_psi)
    return replace(scenario, **updates) if updates else scenario


def init_rng(seed: int, trial: int, epoch: int) -> np.random.Generator:
    """Substream for initialization draws, separate from the noise streams."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), int(epoch), 1]))


def _random_pose(scenario: Scenario, rng: np.random.Generator) -> Pose:
    lo = scenario.anchors[:, :2].min(axis=0)
    hi = scenario.anchors[:, :2].max(axis=0)
    x, y = rng.uniform(lo, hi)
    yaw = rng.uniform(-np.pi, np.pi)
    return Pose(float(x), float(y), scenario.attitude(float(yaw)), h=scenario.h)


def _advance_pose(pose: Pose, inter: np.ndarray, scenario: Scenario) -> Pose:
    """Previous estimate pushed forward by the measured odometry step."""
    shift = rotation_matrix(pose.attitude) @ np.array([inter[0], inter[1], 0.0])
    return Pose(
        pose.x + float(shift[0]),
        pose.y + float(shift[1]),
        scenario.attitude(wrap_angle(pose.yaw + float(inter[2]))),
        h=scenario.h,
    )


def _record(
    trial: int,
    epoch: int,
    estimator: str,
    est: Pose | None,
    truth: Pose,
    iterations: int,
    converged: bool,
    init_ok: bool,
    wall: float,
) -> TrialRecord:
    if est is None:
        ex = ey = eyaw = de = dn = dyaw = float("nan")
    else:
        ex, ey, eyaw = est.x, est.y, est.yaw
        de, dn = ex - truth.x, ey - truth.y
        dyaw = wrap_angle(eyaw - truth.yaw)
    return TrialRecord(
        trial=trial,
        epoch=epoch,
        estimator=estimator,
        est_x_m=ex,
        est_y_m=ey,
        est_yaw_rad=eyaw,
        truth_x_m=truth.x,
        truth_y_m=truth.y,
        truth_yaw_rad=truth.yaw,
        error_east_m=de,
        error_north_m=dn,
        error_yaw_rad=dyaw,
        iterations=iterations,
        converged=converged,
        init_within_0p3m=init_ok,
        wall_time_s=wall,
    )


def _init_ok(init: Pose, truth: Pose) -> bool:
    return bool(np.hypot(init.x - truth.x, init.y - truth.y) < INIT_RADIUS)


def _window_inter(measurements, start: int, stop: int) -> list[np.ndarray]:
    return [measurements[k].inter_epoch for k in range(start + 1, stop)]


def _refine_window(
    init: Sequence[Pose], bundles, inter, scenario
) -> tuple[list[Pose], int, bool]:
    try:
        est = gauss_newton(init, bundles, inter, scenario)
        return est.poses(scenario), est.iterations, True
    except NotConverged as exc:
        est = exc.estimate
        return est.poses(scenario), est.iterations, False


def _sdp_window(bundles, inter, scenario, num_epochs: int):
    solution = solve_window(bundles, inter, scenario)
    init = extract_poses(solution, num_epochs, scenario=scenario)
    return init, solution


def _sema_records(
    scenario: Scenario, bundles, truths, seed: int, trial: int, init_mode: str
) -> list[TrialRecord]:
    records = []
    for k, (bundle, truth) in enumerate(zip(bundles, truths)):
        t0 = time.perf_counter()
        if init_mode == "random":
            guess = _random_pose(scenario, init_rng(seed, trial, k))
        else:
            guess = truth
        try:
            est = sema_solve(guess, bundle, scenario)
            pose, its, ok = est.pose(0, scenario), est.iterations, True
        except NotConverged as exc:
            pose, its, ok = exc.estimate.pose(0, scenario), exc.estimate.iterations, False
        except RefineError:
            pose, its, ok = None, 0, False
        records.append(
            _record(trial, k, "sema", pose, truth, its, ok, _init_ok(guess, truth),
                    time.perf_counter() - t0)
        )
    return records


def _first_window_records(
    scenario: Scenario, method: str, K: int, seed: int, trial: int, init_mode: str
) -> list[TrialRecord]:
    measurements, truths = synthesize_trial(scenario, seed, trial, range(K))
    bundles = [form_tdoa(m, scenario.sigma) for m in measurements]
    inter = _window_inter(measurements, 0, K)
    start = time.perf_counter()

    if method == "sema":
        return _sema_records(scenario, bundles, truths, seed, trial, init_mode)

    try:
        init, solution = _sdp_window(bundles, inter, scenario, K)
    except Exception:
        wall = time.perf_counter() - start
        return [
            _record(trial, k, method, None, truths[k], 0, False, False, wall) for k in range(K)
        ]

    if method == "sdp-only":
        wall = time.perf_counter() - start
        ok = solution.status == "optimal"
        return [
            _record(
                trial, k, method, init[k], truths[k], solution.iterations, ok,
                _init_ok(init[k], truths[k]), wall,
            )
            for k in range(K)
        ]

    try:
        poses, its, ok = _refine_window(init, bundles, inter, scenario)
    except RefineError:
        poses, its, ok = [None] * K, 0, False
    wall = time.perf_counter() - start
    return [
        _record(trial, k, method, poses[k], truths[k], its, ok, _init_ok(init[k], truths[k]), wall)
        for k in range(K)
    ]


def _sliding_records(
    scenario: Scenario, method: str, K: int, seed: int, trial: int, init_mode: str
) -> list[TrialRecord]:
    """One record per trajectory epoch from the window ending there.

    The first window is initialized by the relaxation; later windows reuse
    the previous estimate, with the newest epoch seeded by pushing the last
    pose through the measured odometry step.  A window that fails to refine
    falls back to a fresh relaxation before being declared lost.
    """
    measurements, truths = synthesize_trial(scenario, seed, trial)
    bundles = [form_tdoa(m, scenario.sigma) for m in measurements]
    num_epochs = len(truths)

    if method == "sema":
        return _sema_records(scenario, bundles, truths, seed, trial, init_mode)

    records = []
    prev: list[Pose] | None = None
    for k in range(num_epochs):
        t0 = time.perf_counter()
        a = max(0, k - K + 1)
        wb = bundles[a : k + 1]
        wi = _window_inter(measurements, a, k + 1)
        width = k + 1 - a

        if method == "sdp-only":
            try:
                init, solution = _sdp_window(wb, wi, scenario, width)
                ok = solution.status == "optimal"
                records.append(
                    _record(trial, k, method, init[-1], truths[k], solution.iterations, ok,
                            _init_ok(init[-1], truths[k]), time.perf_counter() - t0)
                )
            except Exception:
                records.append(_record(trial, k, method, None, truths[k], 0, False, False,
                                       time.perf_counter() - t0))
            continue

        init = None
        if prev is not None:
            carried = prev[1:] if len(prev) == width else prev[:]
            init = carried + [_advance_pose(prev[-1], measurements[k].inter_epoch, scenario)]
        if init is None:
            try:
                init, _ = _sdp_window(wb, wi, scenario, width)
            except Exception:
                records.append(_record(trial, k, method, None, truths[k], 0, False, False,
                                       time.perf_counter() - t0))
                prev = None
                continue

        init_ok = _init_ok(init[-1], truths[k])
        poses: list[Pose] | None
        try:
            poses, its, ok = _refine_window(init, wb, wi, scenario)
        except RefineError:
            poses, its, ok = None, 0, False
        if poses is None or not ok:
            try:
                fresh, _ = _sdp_window(wb, wi, scenario, width)
                init_ok = _init_ok(fresh[-1], truths[k])
                poses, its, ok = _refine_window(fresh, wb, wi, scenario)
            except Exception:
                pass
        est = poses[-1] if poses is not None else None
        records.append(
            _record(trial, k, method, est, truths[k], its, ok, init_ok,
                    time.perf_counter() - t0)
        )
        prev = poses if poses is not None and ok else None
    return records


def run_trial(
    scenario: Scenario,
    method: str,
    epochs: int,
    seed: int,
    trial: int,
    windows: str = "first",
    init: str = "truth",
) -> list[TrialRecord]:
    """All records of one trial; deterministic given (scenario, seed, trial)."""
    if windows == "sliding":
        return _sliding_records(scenario, method, epochs, seed, trial, init)
    return _first_window_records(scenario, method, epochs, seed, trial, init)


def _trial_batch(args) -> list[TrialRecord]:
    scenario, method, epochs, seed, windows, init, trial_ids = args
    out: list[TrialRecord] = []
    for t in trial_ids:
        out.extend(run_trial(scenario, method, epochs, seed, t, windows, init))
    return out


@dataclass(frozen=True)
class PointResult:
    """Trial records of one noise point plus its summary and bound table."""

    sigma: float
    sigma_p: float
    sigma_psi: float
    records: tuple[TrialRecord, ...]
    summary: dict
    bounds: tuple[dict, ...]
    csv_path: Path | None


@dataclass(frozen=True)
class RunResult:
    points: tuple[PointResult, ...]
    summary_path: Path | None


def run_point(
    config: ExperimentConfig,
    sigma: float | None = None,
    sigma_p: float | None = None,
    sigma_psi: float | None = None,
) -> PointResult:
    """Run all trials of one noise point and persist its table if configured."""
    base = resolve_scenario(config.scenario)
    scenario = _apply_noise(
        base,
        config.sigma if sigma is None else sigma,
        config.sigma_p if sigma_p is None else sigma_p,
        config.sigma_psi if sigma_psi is None else sigma_psi,
    )
    trial_ids = list(range(config.trials))
    if config.workers > 1 and config.trials > 1:
        chunks = np.array_split(np.array(trial_ids), min(config.workers, config.trials))
        tasks = [
            (scenario, config.method, config.epochs, config.seed, config.windows, config.init,
             [int(t) for t in chunk])
            for chunk in chunks
            if chunk.size
        ]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            batches = list(pool.map(_trial_batch, tasks))
        records = [r for batch in batches for r in batch]
    else:
        records = _trial_batch(
            (scenario, config.method, config.epochs, config.seed, config.windows, config.init,
             trial_ids)
        )
    records.sort(key=lambda r: (r.trial, r.epoch))

    bounds = bound_table(scenario, config.epochs, windows=config.windows)
    summary = summarize(records)
    csv_path = None
    if config.outdir is not None:
        outdir = Path(config.outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        tag = f"sigma{scenario.sigma:g}_sigmap{scenario.sigma_p:g}_sigmapsi{scenario.sigma_psi:g}"
        csv_path = outdir / f"trials_{config.method}_K{config.epochs}_{tag}.csv"
        write_records(csv_path, records)
    return PointResult(
        sigma=scenario.sigma,
        sigma_p=scenario.sigma_p,
        sigma_psi=scenario.sigma_psi,
        records=tuple(records),
        summary=summary,
        bounds=tuple(bounds),
        csv_path=csv_path,
    )


def sweep_grid(config: ExperimentConfig) -> list[tuple[float | None, float | None, float | None]]:
    """Noise points of the series: the product of the sweep lists.

    A missing list contributes the single override (or None for the
    scenario's own level).
    """
    sigmas = list(config.sigma_sweep) or [config.sigma]
    sigma_ps = list(config.sigma_p_sweep) or [config.sigma_p]
    sigma_psis = list(config.sigma_psi_sweep) or [config.sigma_psi]
    return [(s, sp, spsi) for spsi in sigma_psis for sp in sigma_ps for s in sigmas]


def run_monte_carlo(config: ExperimentConfig) -> RunResult:
    """Run the whole experiment series and persist tables plus a summary file."""
    points = [run_point(config, s, sp, spsi) for s, sp, spsi in sweep_grid(config)]
    summary_path = None
    if config.outdir is not None:
        summary_path = Path(config.outdir) / "summary.json"
        payload = {
            "config": _config_dict(config),
            "points": [
                {
                    "sigma_toa_m": p.sigma,
                    "sigma_pos_m": p.sigma_p,
                    "sigma_yaw_rad": p.sigma_psi,
                    "csv": None if p.csv_path is None else p.csv_path.name,
                    "summary": p.summary,
                    "bounds": list(p.bounds),
                }
                for p in points
            ],
        }
        summary_path.parent.mkdir(parents=True, exist_ok=True)
        with open(summary_path, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=1)
            f.write("\n")
    return RunResult(points=tuple(points), summary_path=summary_path)


def _config_dict(config: ExperimentConfig) -> dict:
    data = asdict(config)
    scenario = config.scenario
    data["scenario"] = scenario.name if isinstance(scenario, Scenario) else str(scenario)
    data["outdir"] = None if config.outdir is None else str(config.outdir)
    for key in ("sigma_sweep", "sigma_p_sweep", "sigma_psi_sweep"):
        data[key] = list(data[key])
    return data


# ---------------------------------------------------------------------------
# Metrics


def summarize(records: Iterable[TrialRecord]) -> dict:
    """Aggregate records into per-(estimator, epoch) metric groups.

    Error statistics are computed over rows with finite estimates; counts and
    fractions refer to all rows of the group.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot summarize zero records")
    keys = sorted({(r.estimator, r.epoch) for r in records})
    groups = []
    for estimator, epoch in keys:
        rows = [r for r in records if r.estimator == estimator and r.epoch == epoch]
        east = np.array([r.error_east_m for r in rows])
        north = np.array([r.error_north_m for r in rows])
        yaw = np.array([r.error_yaw_rad for r in rows])
        finite = np.isfinite(east) & np.isfinite(north)
        radius = np.hypot(east[finite], north[finite])
        total = len(rows)
        beyond = int(np.sum(radius > AMBIGUITY_RADIUS) + np.sum(~finite))
        groups.append(
            {
                "estimator": estimator,
                "epoch": epoch,
                "count": total,
                "rmse_position_m": float(np.sqrt(np.mean(radius**2))) if finite.any() else float("nan"),
                "rmse_yaw_rad": float(np.sqrt(np.mean(yaw[finite] ** 2))) if finite.any() else float("nan"),
                "radius_p50_m": float(np.percentile(radius, 50)) if finite.any() else float("nan"),
                "radius_p90_m": float(np.percentile(radius, 90)) if finite.any() else float("nan"),
                "fraction_within_0p3m": float(np.sum(radius < INIT_RADIUS) / total),
                "fraction_beyond_1m": float(beyond / total),
                "fraction_converged": float(np.mean([r.converged for r in rows])),
                "fraction_init_within_0p3m": float(np.mean([r.init_within_0p3m for r in rows])),
            }
        )
    return {"total_rows": len(records), "groups": groups}


def bound_table(scenario: Scenario, epochs: int, windows: str = "first") -> list[dict]:
    """Estimation lower bounds matching an experiment's window layout.

    One entry per estimated epoch: the window bound for the multi-epoch
    method and the per-epoch bound for the single-epoch method, as root
    bounds on horizontal radius and yaw.  Epochs whose information is
    singular get NaN entries.
    """

    def entry(epoch: int, window_bound, single_bound, offset: int) -> dict:
        bx, by, byaw = window_bound[3 * offset : 3 * offset + 3]
        sx, sy, syaw = single_bound[3 * offset : 3 * offset + 3]
        return {
            "epoch": epoch,
            "mema_position_m": float(np.sqrt(bx + by)),
            "mema_yaw_rad": float(np.sqrt(byaw)),
            "sema_position_m": float(np.sqrt(sx + sy)),
            "sema_yaw_rad": float(np.sqrt(syaw)),
        }

    silent = replace(scenario, sigma=0.0, sigma_p=0.0, sigma_psi=0.0)
    nan = [float("nan")] * 6

    if windows == "first":
        K = epochs
        measurements, truths = synthesize_trial(silent, 0, 0, range(K))
        bundles = [form_tdoa(m, scenario.sigma) for m in measurements]
        try:
            info = fim_mema(truths, bundles, scenario)
            return [entry(k, info.window_bound, info.single_epoch_bound, k) for k in range(K)]
        except SingularFIM:
            return [entry(k, nan, nan, 0) for k in range(K)]

    measurements, truths = synthesize_trial(silent, 0, 0)
    bundles = [form_tdoa(m, scenario.sigma) for m in measurements]
    out = []
    for k in range(len(truths)):
        a = max(0, k - epochs + 1)
        try:
            info = fim_mema(truths[a : k + 1], bundles[a : k + 1], scenario)
            out.append(entry(k, info.window_bound, info.single_epoch_bound, k - a))
        except SingularFIM:
            out.append(entry(k, nan, nan, 0))
    return out


# ---------------------------------------------------------------------------
# Persistence


def write_records(path: str | Path, records: Iterable[TrialRecord]) -> None:
    """Write records as CSV with exactly the record fields as columns."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RECORD_FIELDS)
        for r in records:
            writer.writerow(
                [
                    r.trial,
                    r.epoch,
                    r.estimator,
                    repr(r.est_x_m),
                    repr(r.est_y_m),
                    repr(r.est_yaw_rad),
                    repr(r.truth_x_m),
                    repr(r.truth_y_m),
                    repr(r.truth_yaw_rad),
                    repr(r.error_east_m),
                    repr(r.error_north_m),
                    repr(r.error_yaw_rad),
                    r.iterations,
                    str(r.converged).lower(),
                    str(r.init_within_0p3m).lower(),
                    repr(r.wall_time_s),
                ]
            )


def read_records(path: str | Path) -> list[TrialRecord]:
    """Read a trial table written by write_records."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != RECORD_FIELDS:
            raise ValueError(f"unexpected trial table columns in {path}")
        for row in reader:
            out.append(
                TrialRecord(
                    trial=int(row[0]),
                    epoch=int(row[1]),
                    estimator=row[2],
                    est_x_m=float(row[3]),
                    est_y_m=float(row[4]),
                    est_yaw_rad=float(row[5]),
                    truth_x_m=float(row[6]),
                    truth_y_m=float(row[7]),
                    truth_yaw_rad=float(row[8]),
                    error_east_m=float(row[9]),
                    error_north_m=float(row[10]),
                    error_yaw_rad=float(row[11]),
                    iterations=int(row[12]),
                    converged=row[13] == "true",
                    init_within_0p3m=row[14] == "true",
                    wall_time_s=float(row[15]),
                )
            )
    return out
