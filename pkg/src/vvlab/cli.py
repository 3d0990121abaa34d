"""Command line interface.

Subcommands: ``check``, ``layer solve``, ``ns solve``, ``study rates``,
``euler residual``.  Exit codes: 0 on success, 1 on check or study failure,
2 on configuration errors (including unknown subcommands, which argparse
reports with usage text).
"""

from __future__ import annotations

import argparse
import os
import sys

from . import geometry as geo
from .checks import run_all
from .errors import ConfigError, VvlabError
from .euler import euler_residual
from .layer import write_profile_snapshots
from .ns import solve_ns_channel, solve_ns_swirl
from .study import (
    PRESETS,
    export_report,
    get_preset,
    parse_config_file,
    run_convergence_study,
    solve_study_layer,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vvlab",
        description="Boundary-layer corrected low-viscosity studies in reduced geometries",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="path to a study config file")
        p.add_argument("--preset", choices=sorted(PRESETS),
                       help="built-in study preset")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel viscosity rows (deterministic output)")

    common(sub.add_parser("check", help="run the invariant suite"))

    layer_p = sub.add_parser("layer", help="layer solver commands")
    layer_sub = layer_p.add_subparsers(dest="subcommand", required=True)
    common(layer_sub.add_parser("solve", help="solve the layer profile"))

    ns_p = sub.add_parser("ns", help="viscous solver commands")
    ns_sub = ns_p.add_subparsers(dest="subcommand", required=True)
    common(ns_sub.add_parser("solve", help="solve the viscous reference flow"))

    study_p = sub.add_parser("study", help="convergence study commands")
    study_sub = study_p.add_subparsers(dest="subcommand", required=True)
    common(study_sub.add_parser("rates", help="run the viscosity sweep and fit rates"))

    euler_p = sub.add_parser("euler", help="base flow commands")
    euler_sub = euler_p.add_subparsers(dest="subcommand", required=True)
    common(euler_sub.add_parser("residual", help="evaluate the base-flow residual"))

    return parser


def _load_config(args):
    if args.config:
        return parse_config_file(args.config)
    if args.preset:
        return get_preset(args.preset)
    raise ConfigError("provide --config PATH or --preset NAME")


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    try:
        config = _load_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "check":
            results = run_all(config)
            for res in results:
                tag = "PASS" if res.passed else "FAIL"
                print(f"{tag} {res.name}: {res.detail} ({res.seconds:.2f}s)")
            return 0 if all(r.passed for r in results) else 1

        if args.command == "layer":
            profile = solve_study_layer(config)
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "layer_profile.dat")
            write_profile_snapshots(profile, path)
            print(f"wrote {path}")
            return 0

        if args.command == "ns":
            geom = config.geometry
            flow = config.euler.build(geom)
            nu = config.ns.nu or config.nu_list[0]
            u0 = flow.meta.get("profile") or (lambda x: flow.velocity(0.0, x)[
                1 if geom.kind == geo.ANNULUS_GAP else 0])
            if geom.kind == geo.ANNULUS_GAP:
                sol = solve_ns_swirl(geom, u0, nu, nr=config.ns.n,
                                     dt=config.ns.dt, t_end=config.ns.t_end,
                                     store_times=config.t_eval)
            else:
                sol = solve_ns_channel(geom, u0, nu, ny=config.ns.n,
                                       dt=config.ns.dt, t_end=config.ns.t_end,
                                       store_times=config.t_eval)
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "ns_solution.dat")
            lines = ["# t coord u_comp0 u_comp1 u_comp2"]
            for it, t in enumerate(sol.times):
                for j, x in enumerate(sol.coords):
                    comps = " ".join(repr(float(sol.values[it, c, j]))
                                     for c in range(3))
                    lines.append(f"{t!r} {float(x)!r} {comps}")
            with open(path, "w") as fh:
                fh.write("\n".join(lines) + "\n")
            print(f"wrote {path}")
            return 0

        if args.command == "study":
            report = run_convergence_study(config, jobs=args.jobs)
            paths = export_report(report, args.out)
            for p in paths:
                print(f"wrote {p}")
            failed = [label for label, entry in report.norm_results.items()
                      if entry.get("status") == "fail"]
            if failed:
                print(f"rate check failed for: {', '.join(failed)}", file=sys.stderr)
                return 1
            return 0

        if args.command == "euler":
            geom = config.geometry
            flow = config.euler.build(geom)
            grid = geom.volume_grid(4097)
            res = euler_residual(flow, grid)
            print(f"euler residual (analytic evaluators): {res:.3e}")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VvlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
