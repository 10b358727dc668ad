#!/usr/bin/env python3
"""
vortex-rom: POD-Galerkin reduced-order modelling of the 2D vortex merger.
Runs the finite-volume FOM, builds global POD bases and reduced operators,
and compares ROM against FOM for time reconstruction and Re / gamma sweeps.
"""

import argparse
import dataclasses
import logging
import sys

from fom_solver import ConfigError
from study import (
    ParameterPoint,
    StudyConfig,
    StudyKind,
    StudyStageError,
    build_bases,
    load_offline,
    read_training_snapshots,
    run_offline,
    run_online,
    run_study,
    run_training,
    write_training_snapshots,
)


def parse_grid(text):
    """'128' -> (128, 128); '128x64' -> (128, 64)."""
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"Grid must look like NX or NXxNY, got '{text}'") from None
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2 or min(parts) < 1:
        raise argparse.ArgumentTypeError(f"Grid must look like NX or NXxNY, got '{text}'")
    return tuple(parts)


def build_config(args):
    """Config file (or preset), then command-line overrides."""
    if args.config:
        cfg = StudyConfig.from_file(args.config)
    else:
        cfg = StudyConfig.preset(args.kind)

    fom_overrides = {}
    if args.grid:
        fom_overrides["nx"], fom_overrides["ny"] = args.grid
    if args.dt is not None:
        fom_overrides["dt"] = args.dt
    if args.tend is not None:
        fom_overrides["t_end"] = args.tend
    if args.re is not None:
        fom_overrides["re"] = args.re
    if args.gamma is not None:
        fom_overrides["gamma"] = args.gamma
    if fom_overrides:
        cfg.fom = dataclasses.replace(cfg.fom, **fom_overrides)

    # an explicit parameter replaces the parameter sets with that single point
    if args.re is not None or args.gamma is not None:
        point = ParameterPoint(cfg.fom.re, cfg.fom.gamma)
        cfg.tests = [point]
        if args.command in ("fom", "offline", "study"):
            cfg.training = [point]

    if args.threshold is not None:
        cfg.threshold_omega = cfg.threshold_psi = args.threshold
        cfg.modes_omega = cfg.modes_psi = None
    if args.out:
        cfg.output_dir = args.out
    if args.workers is not None:
        cfg.workers = args.workers
    if getattr(args, "field_times", None):
        cfg.field_times = args.field_times
    return cfg


def print_bases(basis_omega, basis_psi):
    print(f"   - omega: {basis_omega.n_modes} modes")
    print(f"   - psi:   {basis_psi.n_modes} modes")


def print_outcomes(outcomes):
    for o in outcomes:
        summary = o.summary()
        line = f"   - {o.point.label} ({o.role}): "
        if o.status != "ok":
            print(line + f"FAILED during {o.stage}: {o.error}")
            continue
        line += f"online {o.online_seconds:.3f} s"
        if o.records:
            line += (
                f", max E_psi {summary['max_e_psi']:.3f}%"
                f", max E_omega {summary['max_e_omega']:.3f}%"
                f", max |E_e| {summary['max_abs_e_enstrophy']:.3f}%"
            )
        if o.speedup is not None:
            line += f", speed-up {o.speedup:.1f}x"
        print(line)


def cmd_fom(cfg):
    print(f"Running FOM at {len(cfg.training)} training point(s)...")
    cfg.validate()
    runs = run_training(cfg)
    omega_set, _ = write_training_snapshots(cfg, runs)
    for point, run in runs.items():
        print(f"   - {point.label}: {len(run.omega)} snapshots in {run.wall_seconds:.2f} s")
    print(f"   - {len(omega_set)} snapshots written to {cfg.out / 'snapshots'}")
    return True


def cmd_pod(cfg):
    print(f"Building POD bases from {cfg.out / 'snapshots'}...")
    omega_set, psi_set = read_training_snapshots(cfg)
    basis_omega, basis_psi = build_bases(cfg, omega_set, psi_set)
    print_bases(basis_omega, basis_psi)
    return True


def cmd_offline(cfg):
    print("Running offline phase (training FOM, POD, projection)...")
    offline = run_offline(cfg)
    print_bases(offline.basis_omega, offline.basis_psi)
    for name, seconds in offline.timings.items():
        print(f"   - {name}: {seconds:.2f}")
    return True


def _online(cfg, compare):
    offline = load_offline(cfg)
    outcomes = run_online(cfg, offline, compare=compare)
    print_outcomes(outcomes)
    return all(o.status == "ok" for o in outcomes)


def cmd_rom(cfg):
    print(f"Running ROM at {len(cfg.tests)} test point(s)...")
    return _online(cfg, compare=False)


def cmd_compare(cfg):
    print(f"Comparing ROM against FOM at {len(cfg.tests)} test point(s)...")
    return _online(cfg, compare=True)


def cmd_study(cfg):
    print(f"Running {cfg.kind.value} study into {cfg.out}...")
    report = run_study(cfg)
    print_bases(report.offline.basis_omega, report.offline.basis_psi)
    print_outcomes(report.outcomes)
    print(f"   - Report: {cfg.out / 'report.xlsx'}")
    return all(o.status == "ok" for o in report.outcomes)


COMMANDS = {
    "fom": (cmd_fom, "Run the full-order model at the training parameters"),
    "pod": (cmd_pod, "Build POD bases from stored snapshots"),
    "offline": (cmd_offline, "Training FOM runs, POD bases and reduced operators"),
    "rom": (cmd_rom, "Run the ROM at the test parameters"),
    "compare": (cmd_compare, "Run ROM and reference FOM and report errors"),
    "study": (cmd_study, "Complete offline + online study with report"),
}


def add_common_arguments(parser):
    parser.add_argument("--config", help="JSON or TOML study configuration")
    parser.add_argument(
        "--kind",
        default=StudyKind.CUSTOM.value,
        choices=[k.value for k in StudyKind],
        help="Benchmark preset used when no --config is given (default: custom)",
    )
    parser.add_argument("--re", type=float, help="Reynolds number (replaces the parameter sets)")
    parser.add_argument("--gamma", type=float, help="Forcing amplitude (replaces the parameter sets)")
    parser.add_argument("--grid", type=parse_grid, help="Cells per direction, NX or NXxNY")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--tend", type=float, help="Final time")
    parser.add_argument("--threshold", type=float, help="POD threshold for both variables")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--workers", type=int, help="Worker processes for training runs (env VORTEX_ROM_WORKERS)")
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")


def create_parser():
    parser = argparse.ArgumentParser(
        prog="vortex-rom",
        description="POD-Galerkin reduced-order model for the 2D vortex merger",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  %(prog)s study --kind time-reconstruction --grid 64 --tend 10
  %(prog)s study --kind re-sweep --workers 4 --out re_sweep
  %(prog)s offline --config gamma_sweep.toml
  %(prog)s compare --config gamma_sweep.toml --gamma 0.075
        """,
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub = subparsers.add_parser(name, help=help_text)
        add_common_arguments(sub)
        if name in ("compare", "study"):
            sub.add_argument(
                "--field-times", type=float, nargs="+", help="Snapshot times to export FOM/ROM/difference fields"
            )
    return parser


def main(argv=None):
    parser = create_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s: %(message)s",
    )

    handler, _ = COMMANDS[args.command]
    try:
        cfg = build_config(args)
        ok = handler(cfg)
    except StudyStageError as e:
        print(f"\n❌ Error: {e.stage}: {e.cause}")
        sys.exit(1)
    except ConfigError as e:
        print(f"\n❌ Error: configuration: {str(e)}")
        sys.exit(1)
    except OSError as e:
        print(f"\n❌ Error: file access: {str(e)}")
        sys.exit(1)
    except Exception as e:
        print(f"\n❌ Error: {str(e)}")
        sys.exit(1)

    if not ok:
        print("\n❌ Error: one or more test points failed (see above)")
        sys.exit(1)
    print(f"\n✅ Success! Output is in {cfg.out}")


if __name__ == "__main__":
    main()
