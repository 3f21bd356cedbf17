"""Command line front end for experiments, bound tables, and scene checks."""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .harness import (
    ConfigError,
    ExperimentConfig,
    _apply_noise,
    bound_table,
    resolve_scenario,
    run_monte_carlo,
)
from .scenario import compute_visibility

_BOUND_FIELDS = (
    "sigma_toa_m",
    "sigma_pos_m",
    "sigma_yaw_rad",
    "epoch",
    "mema_position_m",
    "mema_yaw_rad",
    "sema_position_m",
    "sema_yaw_rad",
)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _add_noise_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--sigma", type=float, default=None, help="range noise override, m")
    parser.add_argument("--sigma-p", type=float, default=None, help="odometry position noise override, m")
    parser.add_argument("--sigma-psi", type=float, default=None, help="odometry yaw noise override, rad")
    parser.add_argument("--sweep-sigma", type=_floats, default=(), metavar="V1,V2,...",
                        help="sweep the range noise over these values")
    parser.add_argument("--sweep-sigma-p", type=_floats, default=(), metavar="V1,V2,...",
                        help="sweep the odometry position noise")
    parser.add_argument("--sweep-sigma-psi", type=_floats, default=(), metavar="V1,V2,...",
                        help="sweep the odometry yaw noise")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="toapose",
        description="Monte Carlo pose estimation experiments on anchor ranging scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a seeded experiment series and persist trial tables")
    run.add_argument("--config", required=True,
                     help="scenario config file, or a bundled scene name (four_anchor, port)")
    run.add_argument("--method", choices=("mema", "sema", "sdp-only"), default="mema")
    run.add_argument("--epochs", type=int, default=3, help="window length K")
    run.add_argument("--trials", type=int, default=100)
    run.add_argument("--seed", type=int, default=0)
    _add_noise_args(run)
    run.add_argument("--windows", choices=("first", "sliding"), default="first",
                     help="estimate the leading window only, or slide it over the trajectory")
    run.add_argument("--init", choices=("truth", "random"), default="truth",
                     help="single-epoch initialization policy")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--out", default="toapose_out", help="output directory")

    crlb = sub.add_parser("crlb", help="tabulate estimation lower bounds for a scene")
    crlb.add_argument("--config", required=True,
                      help="scenario config file, or a bundled scene name")
    crlb.add_argument("--epochs", type=int, default=3, help="window length K")
    _add_noise_args(crlb)
    crlb.add_argument("--windows", choices=("first", "sliding"), default="first")
    crlb.add_argument("--out", default=None,
                      help="directory for bounds.csv; omitted prints the table")

    scen = sub.add_parser("scenario", help="scenario file utilities")
    scen_sub = scen.add_subparsers(dest="scenario_command", required=True)
    validate = scen_sub.add_parser("validate", help="load a scenario file and report its shape")
    validate.add_argument("file", help="scenario config file, or a bundled scene name")
    return parser


def _noise_grid(args) -> list[tuple[float | None, float | None, float | None]]:
    sigmas = list(args.sweep_sigma) or [args.sigma]
    sigma_ps = list(args.sweep_sigma_p) or [args.sigma_p]
    sigma_psis = list(args.sweep_sigma_psi) or [args.sigma_psi]
    return [(s, sp, spsi) for spsi in sigma_psis for sp in sigma_ps for s in sigmas]


def _cmd_run(args) -> int:
    config = ExperimentConfig(
        scenario=args.config,
        method=args.method,
        epochs=args.epochs,
        trials=args.trials,
        seed=args.seed,
        sigma=args.sigma,
        sigma_p=args.sigma_p,
        sigma_psi=args.sigma_psi,
        sigma_sweep=args.sweep_sigma,
        sigma_p_sweep=args.sweep_sigma_p,
        sigma_psi_sweep=args.sweep_sigma_psi,
        windows=args.windows,
        init=args.init,
        workers=args.workers,
        outdir=args.out,
    )
    result = run_monte_carlo(config)
    for point in result.points:
        newest = {}
        for group in point.summary["groups"]:
            newest[group["estimator"]] = group
        for estimator, group in sorted(newest.items()):
            print(
                f"sigma={point.sigma:g} sigma_p={point.sigma_p:g} sigma_psi={point.sigma_psi:g} "
                f"{estimator} epoch {group['epoch']}: rmse {group['rmse_position_m']:.4f} m / "
                f"{group['rmse_yaw_rad']:.4f} rad, within 0.3 m {100 * group['fraction_within_0p3m']:.1f}%, "
                f"converged {100 * group['fraction_converged']:.1f}%"
            )
        if point.csv_path is not None:
            print(f"  wrote {point.csv_path}")
    if result.summary_path is not None:
        print(f"wrote {result.summary_path}")
    return 0


def _cmd_crlb(args) -> int:
    base = resolve_scenario(args.config)
    rows = []
    for sigma, sigma_p, sigma_psi in _noise_grid(args):
        scenario = _apply_noise(base, sigma, sigma_p, sigma_psi)
        for entry in bound_table(scenario, args.epochs, windows=args.windows):
            rows.append(
                (
                    repr(scenario.sigma),
                    repr(scenario.sigma_p),
                    repr(scenario.sigma_psi),
                    entry["epoch"],
                    repr(entry["mema_position_m"]),
                    repr(entry["mema_yaw_rad"]),
                    repr(entry["sema_position_m"]),
                    repr(entry["sema_yaw_rad"]),
                )
            )
    if args.out is None:
        writer = csv.writer(sys.stdout)
        writer.writerow(_BOUND_FIELDS)
        writer.writerows(rows)
    else:
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        path = outdir / "bounds.csv"
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(_BOUND_FIELDS)
            writer.writerows(rows)
        print(f"wrote {path}")
    return 0


def _cmd_validate(args) -> int:
    scenario = resolve_scenario(args.file)
    visibility = compute_visibility(scenario)
    pair_counts = [sum(visibility.counts(k)) for k in range(scenario.num_epochs)]
    starved = [k for k, n in enumerate(pair_counts) if n < 3]
    print(f"scenario {scenario.name}: OK")
    print(f"  anchors {scenario.num_anchors}, antennas {scenario.num_antennas}, "
          f"epochs {scenario.num_epochs}")
    print(f"  noise: sigma {scenario.sigma:g} m, sigma_p {scenario.sigma_p:g} m, "
          f"sigma_psi {scenario.sigma_psi:g} rad; clock bias {scenario.clock_bias:g} m")
    print(f"  visible pairs per epoch: min {min(pair_counts)}, max {max(pair_counts)}")
    if starved:
        print(f"  warning: epochs with fewer than 3 visible pairs: {starved}", file=sys.stderr)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "crlb":
            return _cmd_crlb(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
