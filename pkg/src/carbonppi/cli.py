"""Batch command-line front end.

Subcommands orchestrate solve -> filter -> simulate -> analyse pipelines and
write CSV/JSON artifacts (plus rendered PNGs unless --no-render).  Exit codes:
0 success, 2 validation or configuration failure, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import figures, reports
from .analysis import admissibility_report
from .config import bundled_config_path, load_config
from .errors import NumericalError, ValidationError
from .market import PreferenceSpec
from .odes import (
    log_closed_forms,
    solve_filter_variance,
    solve_full_info,
    solve_partial_info,
)


class _Outputs:
    """Track written files so a failing command leaves no partial artifacts."""

    def __init__(self, directory: str):
        self.directory = reports.ensure_dir(directory)
        self.written: list[str] = []

    def path(self, name: str) -> str:
        p = os.path.join(self.directory, name)
        self.written.append(p)
        return p

    def discard(self) -> None:
        for p in self.written:
            try:
                os.remove(p)
            except OSError:
                pass


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None,
                        help="scenario configuration file (default: bundled baseline)")
    parser.add_argument("--seed", type=int, default=None, help="override RNG seed")
    parser.add_argument("--paths", type=int, default=None, help="override path count")
    parser.add_argument("--dt", type=float, default=None, help="override time step")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--mode", choices=["full", "partial"], default=None,
                        help="information mode")
    parser.add_argument("--delta", type=float, default=None, help="risk aversion")
    parser.add_argument("--epsilon", type=float, default=None, help="carbon aversion")
    parser.add_argument("--scenario", default=None, help="scenario name from the config")
    parser.add_argument("--no-render", dest="render", action="store_false",
                        help="skip PNG rendering, write data files only")
    parser.set_defaults(render=True)


def _load(args):
    cfg = load_config(args.config if args.config else bundled_config_path())
    if args.seed is not None:
        cfg.seed = args.seed
    if args.paths is not None:
        cfg.paths = args.paths
    if args.dt is not None:
        cfg.dt = args.dt
        ratio = cfg.horizon / cfg.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("dt must divide the horizon")
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _scenario_model(cfg, args):
    name = args.scenario if args.scenario else next(iter(cfg.scenarios))
    return cfg.scenario_model(name), name


def _num_tag(x: float) -> str:
    return format(x, "g").replace(".", "p").replace("-", "m")


def cmd_solve(args) -> int:
    cfg = _load(args)
    model, _ = _scenario_model(cfg, args)
    delta = args.delta if args.delta is not None else cfg.deltas[0]
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilons[-1]
    mode = args.mode or "partial"
    out = _Outputs(cfg.output_dir)
    pref = PreferenceSpec.from_delta(delta, epsilon)
    T = cfg.horizon
    if pref.is_log:
        coeffs = log_closed_forms(model, pref, T)
        steps = 2000
        t = np.linspace(0.0, T, steps + 1)
        variance = solve_filter_variance(model, T, steps)
        h = coeffs.h(t) if mode == "full" else coeffs.h_tilde(t, variance)
        rows = np.column_stack([t, coeffs.f(t), coeffs.g(t), h])
    else:
        if mode == "full":
            grid = solve_full_info(model, pref, T)
        else:
            grid = solve_partial_info(model, pref, T)
        rows = np.column_stack([grid.t, grid.f, grid.g, grid.h])
    path = out.path(f"coefficients_{mode}_delta{_num_tag(delta)}_eps{_num_tag(epsilon)}.csv")
    reports.write_csv(path, ["t", "f", "g", "h"], rows)
    if args.render:
        figures.render_coefficients(["t", "f", "g", "h"], rows,
                                    path.replace(".csv", ".png"))
    print(f"wrote {path}")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load(args)
    model, scen = _scenario_model(cfg, args)
    delta = args.delta if args.delta is not None else cfg.deltas[0]
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilons[-1]
    mode = args.mode or cfg.modes[0]
    out = _Outputs(cfg.output_dir)
    sim = reports.simulate_cell(model, delta, epsilon, mode, cfg.horizon,
                                cfg.dt, cfg.paths, cfg.seed,
                                v0=cfg.v0, protection_level=cfg.protection_level,
                                n_jobs=cfg.jobs)
    tag = f"{mode}_scen{scen}_delta{_num_tag(delta)}_eps{_num_tag(epsilon)}"
    csv_path = out.path(f"paths_{tag}.csv")
    sim.to_csv(csv_path)
    stats_path = out.path(f"stats_{tag}.json")
    with open(stats_path, "w") as fh:
        json.dump({"meta": sim.meta, "stats": sim.stats_dict()}, fh, indent=2)
    print(f"wrote {csv_path}")
    print(f"wrote {stats_path}")
    return 0


def cmd_filter_demo(args) -> int:
    cfg = _load(args)
    model, _ = _scenario_model(cfg, args)
    out = _Outputs(cfg.output_dir)
    header, rows = reports.filter_demo_data(model, cfg.horizon, cfg.dt, cfg.seed)
    path = out.path("filter_demo.csv")
    reports.write_csv(path, header, rows)
    if args.render:
        figures.render_filter_demo(header, rows, out.path("filter_demo.png"))
    print(f"wrote {path}")
    return 0


def _epsilon_grid(cfg):
    top = max(cfg.epsilons) if cfg.epsilons else 1.0
    top = max(top, 2.0)
    return np.linspace(0.0, top, 21)


def cmd_loss_curve(args) -> int:
    cfg = _load(args)
    model, _ = _scenario_model(cfg, args)
    out = _Outputs(cfg.output_dir)
    header, rows = reports.information_premium_data(model, cfg.deltas,
                                                    _epsilon_grid(cfg), cfg.horizon)
    path = out.path("loss_of_utility.csv")
    reports.write_csv(path, header, rows)
    if args.render:
        figures.render_information_premium(header, rows,
                                           out.path("loss_of_utility.png"))
    print(f"wrote {path}")
    return 0


def cmd_efficiency_curve(args) -> int:
    cfg = _load(args)
    model, _ = _scenario_model(cfg, args)
    out = _Outputs(cfg.output_dir)
    header, rows = reports.information_premium_data(model, cfg.deltas,
                                                    _epsilon_grid(cfg), cfg.horizon)
    path = out.path("efficiency.csv")
    reports.write_csv(path, header, rows)
    if args.render:
        figures.render_information_premium(header, rows, out.path("efficiency.png"))
    print(f"wrote {path}")
    return 0


def cmd_admissibility(args) -> int:
    cfg = _load(args)
    model, _ = _scenario_model(cfg, args)
    delta = args.delta if args.delta is not None else cfg.deltas[0]
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilons[-1]
    pref = PreferenceSpec.from_delta(delta, epsilon)
    if pref.is_log:
        raise ValidationError("the admissibility report is defined for CRRA preferences")
    out = _Outputs(cfg.output_dir)
    T = cfg.horizon
    variance2 = solve_filter_variance(model, T, 2 * 2000)
    full = solve_full_info(model, pref, T)
    partial = solve_partial_info(model, pref, T, variance=variance2)
    report = admissibility_report(model, pref, full, partial,
                                  variance2.subsample(2),
                                  alpha=args.alpha, d=args.d_free, q=args.q_free)
    path = out.path(f"admissibility_delta{_num_tag(delta)}_eps{_num_tag(epsilon)}.json")
    with open(path, "w") as fh:
        fh.write(report.to_json())
    print(f"wrote {path}")
    return 0


def _reproduce_table3(cfg, out, render) -> None:
    mode = cfg.modes[0] if cfg.modes else "partial"
    header, rows, _ = reports.terminal_wealth_table(
        cfg.model, cfg.scenarios, cfg.deltas, cfg.epsilons, mode,
        cfg.horizon, cfg.dt, cfg.paths, cfg.seed, n_jobs=cfg.jobs,
        progress=lambda s, d, e, st: print(
            f"scenario {s} delta={d:g} eps={e:g}: mean={st['mean']:.4f} "
            f"var={st['variance']:.4f}", flush=True),
    )
    path = out.path("table3.csv")
    reports.write_csv(path, header, rows)
    print(f"wrote {path}")


def _reproduce_table4(cfg, out, render) -> None:
    scen = "3" if "3" in cfg.scenarios else next(iter(cfg.scenarios))
    header, rows, _ = reports.full_vs_partial_table(
        cfg.model, cfg.scenarios[scen], 0.7, 1.0, cfg.horizon, cfg.dt,
        cfg.paths, cfg.seed, n_jobs=cfg.jobs)
    path = out.path("table4.csv")
    reports.write_csv(path, header, rows)
    print(f"wrote {path}")


def _reproduce_figure(cfg, out, number: int, render: bool) -> None:
    model = cfg.scenario_model(next(iter(cfg.scenarios)))
    if number == 1:
        header, rows = reports.filter_demo_data(model, cfg.horizon, cfg.dt, cfg.seed)
        renderer = figures.render_filter_demo
        stem = "figure1_filter"
    elif number == 2:
        header, rows = reports.initial_exposures_data(model, cfg.deltas,
                                                      cfg.epsilons, cfg.horizon,
                                                      cfg.v0, cfg.protection_level)
        renderer = figures.render_initial_exposures
        stem = "figure2_initial_exposures"
    elif number == 3:
        header, rows = reports.exposure_paths_data(model, 1.0, 1.0, cfg.horizon,
                                                   cfg.dt, cfg.seed,
                                                   v0=cfg.v0,
                                                   protection_level=cfg.protection_level)
        renderer = figures.render_exposure_paths
        stem = "figure3_exposure_paths"
    elif number == 4:
        header, rows = reports.multiplier_curve_data(model, cfg.deltas,
                                                     _epsilon_grid(cfg),
                                                     cfg.horizon, cfg.v0,
                                                     cfg.protection_level)
        renderer = figures.render_multiplier_curve
        stem = "figure4_multiplier"
    elif number == 5:
        header, rows = reports.multiplier_paths_data(model, 1.0, cfg.epsilons,
                                                     cfg.horizon, cfg.dt, cfg.seed)
        renderer = figures.render_multiplier_paths
        stem = "figure5_multiplier_paths"
    elif number == 6:
        header, rows = reports.information_premium_data(model, cfg.deltas,
                                                        _epsilon_grid(cfg),
                                                        cfg.horizon)
        renderer = figures.render_information_premium
        stem = "figure6_information_premium"
    else:
        raise ValidationError("figure number must be between 1 and 6")
    path = out.path(f"{stem}.csv")
    reports.write_csv(path, header, rows)
    if render:
        renderer(header, rows, out.path(f"{stem}.png"))
    print(f"wrote {path}")


def cmd_reproduce(args) -> int:
    cfg = _load(args)
    out = _Outputs(cfg.output_dir)
    if (args.table is None) == (args.figure is None):
        raise ValidationError("choose exactly one of --table or --figure")
    try:
        if args.table is not None:
            if args.table == 3:
                _reproduce_table3(cfg, out, args.render)
            elif args.table == 4:
                _reproduce_table4(cfg, out, args.render)
            else:
                raise ValidationError("table must be 3 or 4")
        else:
            _reproduce_figure(cfg, out, args.figure, args.render)
    except Exception:
        out.discard()
        raise
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="carbonppi",
        description="Carbon-penalised proportional portfolio insurance toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve the value-function coefficient system")
    _add_common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="Monte Carlo run for one preference cell")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("filter-demo", help="one factor path and its filtered estimate")
    _add_common(p)
    p.set_defaults(func=cmd_filter_demo)

    p = sub.add_parser("loss-curve", help="loss of utility versus carbon aversion")
    _add_common(p)
    p.set_defaults(func=cmd_loss_curve)

    p = sub.add_parser("efficiency-curve", help="efficiency versus carbon aversion")
    _add_common(p)
    p.set_defaults(func=cmd_efficiency_curve)

    p = sub.add_parser("admissibility", help="sufficient-condition report")
    _add_common(p)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--d-free", type=float, default=1.1)
    p.add_argument("--q-free", type=float, default=1.1)
    p.set_defaults(func=cmd_admissibility)

    p = sub.add_parser("reproduce", help="regenerate a summary table or figure dataset")
    _add_common(p)
    p.add_argument("--table", type=int, default=None, choices=[3, 4])
    p.add_argument("--figure", type=int, default=None, choices=[1, 2, 3, 4, 5, 6])
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError,) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
