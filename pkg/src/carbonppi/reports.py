"""Dataset builders for the summary tables and figure data, plus CSV output.

Every builder returns ``(header, rows)`` with plain float rows; the CSV
writer renders numbers with 17 significant digits so a fixed seed gives
byte-identical files across runs and worker counts.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .analysis import efficiency, loss_of_utility
from .filtering import filter_run
from .market import MarketModel, PreferenceSpec
from .odes import (
    FilterVarianceCurve,
    OdeGrid,
    log_closed_forms,
    solve_filter_variance,
    solve_full_info,
    solve_partial_info,
)
from .policy import theta_full, theta_partial
from .simulate import ControlSpec, SimConfig, evolve_ppi, run_monte_carlo, simulate_drivers


def format_number(x: float) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    text = "\n".join(lines) + "\n"
    with open(path, "w", newline="") as fh:
        fh.write(text)


def _solved_inputs(model: MarketModel, pref: PreferenceSpec, T: float,
                   steps: int):
    """Coefficient grid (or closed forms) plus variance curves for one pref."""
    variance2 = solve_filter_variance(model, T, 2 * steps)
    variance = variance2.subsample(2)
    if pref.is_log:
        return {"log_coeffs": log_closed_forms(model, pref, T),
                "variance": variance, "full": None, "partial": None}
    full = solve_full_info(model, pref, T, steps)
    partial = solve_partial_info(model, pref, T, steps, variance2)
    return {"log_coeffs": None, "variance": variance, "full": full,
            "partial": partial}


def simulate_cell(model: MarketModel, delta: float, epsilon: float,
                  info_mode: str, T: float, dt: float, n_paths: int,
                  seed: int, v0: float = 1.0, protection_level: float = 1.0,
                  n_jobs: int = 1):
    pref = PreferenceSpec.from_delta(delta, epsilon)
    config = SimConfig(T=T, dt=dt, n_paths=n_paths, seed=seed,
                       info_mode=info_mode, pref=pref, v0=v0,
                       protection_level=protection_level, n_jobs=n_jobs)
    return run_monte_carlo(model, config)


STAT_ROWS = ("mean", "variance", "q05", "q50", "q90", "se_mean")


def terminal_wealth_table(model: MarketModel, scenarios: dict, deltas,
                          epsilons, info_mode: str, T: float, dt: float,
                          n_paths: int, seed: int, n_jobs: int = 1,
                          progress=None):
    """Statistic-by-cell table of the terminal wealth distribution.

    One column per (scenario, epsilon) pair, one block of statistic rows per
    delta; mirrors the layout of the summary table in the study this
    reproduces.
    """
    names = list(scenarios)
    cells = {}
    for name in names:
        scen_model = model.with_drift(scenarios[name])
        for delta in deltas:
            for eps in epsilons:
                out = simulate_cell(scen_model, delta, eps, info_mode,
                                    T, dt, n_paths, seed, n_jobs=n_jobs)
                cells[(name, delta, eps)] = out.stats_dict()
                if progress is not None:
                    progress(name, delta, eps, cells[(name, delta, eps)])
    header = ["statistic", "delta"] + [
        f"scenario{name}_eps{_eps_tag(eps)}" for name in names for eps in epsilons
    ]
    rows = []
    for delta in deltas:
        for stat in STAT_ROWS:
            row = [stat, delta]
            for name in names:
                for eps in epsilons:
                    row.append(cells[(name, delta, eps)][stat])
            rows.append(row)
    return header, rows, cells


def _eps_tag(eps: float) -> str:
    return format(eps, "g").replace(".", "p").replace("-", "m")


def full_vs_partial_table(model: MarketModel, scenario_drift, delta: float,
                          epsilon: float, T: float, dt: float, n_paths: int,
                          seed: int, n_jobs: int = 1):
    """Terminal-wealth statistics under full versus partial information."""
    scen_model = model.with_drift(scenario_drift)
    stats = {}
    for mode in ("full", "partial"):
        out = simulate_cell(scen_model, delta, epsilon, mode, T, dt,
                            n_paths, seed, n_jobs=n_jobs)
        stats[mode] = out.stats_dict()
    header = ["statistic", "full", "partial"]
    rows = [[stat, stats["full"][stat], stats["partial"][stat]]
            for stat in STAT_ROWS]
    return header, rows, stats


def _stat_value(stats: dict, name: str):
    return stats[name]


def filter_demo_data(model: MarketModel, T: float, dt: float, seed: int,
                     path_index: int = 0):
    """One trajectory of the factor and of its filtered estimate."""
    steps = int(round(T / dt))
    y, logs = simulate_drivers(model, T, dt, seed, path_index)
    variance = solve_filter_variance(model, T, steps)
    gamma = filter_run(np.diff(logs[0], axis=0), model, variance, dt)
    t = np.arange(steps + 1) * dt
    header = ["t", "factor", "filtered_mean"]
    rows = np.column_stack([t, y[0], gamma])
    return header, rows


def initial_exposures_data(model: MarketModel, deltas, epsilons, T: float,
                           v0: float = 1.0, protection_level: float = 1.0,
                           steps: int = 2000):
    """Optimal partial-information stock exposures at time zero."""
    c0 = v0 - v0 * protection_level * math.exp(-model.r * T)
    variance2 = solve_filter_variance(model, T, 2 * steps)
    header = ["delta", "epsilon", "asset", "exposure"]
    rows = []
    for delta in deltas:
        for eps in epsilons:
            pref = PreferenceSpec.from_delta(delta, eps)
            if pref.is_log:
                ctrl = theta_partial(0.0, model.gamma0, model, pref)
            else:
                grid = solve_partial_info(model, pref, T, steps, variance2)
                ctrl = theta_partial(0.0, model.gamma0, model, pref,
                                     grid, variance2.subsample(2))
            exposure = ctrl.theta * c0 / v0
            for i in range(model.n):
                rows.append([delta, eps, i + 1, exposure[i]])
    return header, rows


def exposure_paths_data(model: MarketModel, delta: float, epsilon: float,
                        T: float, dt: float, seed: int, path_index: int = 0,
                        v0: float = 1.0, protection_level: float = 1.0):
    """Simulated optimal exposures to each stock along one path (partial info)."""
    pref = PreferenceSpec.from_delta(delta, epsilon)
    config = SimConfig(T=T, dt=dt, n_paths=1, seed=seed, info_mode="partial",
                       pref=pref, v0=v0, protection_level=protection_level)
    from .simulate import build_control_tables
    base, slope, gains = build_control_tables(model, config)
    drivers = simulate_drivers(model, T, dt, seed, path_index)
    _, trace = evolve_ppi(drivers, model, config, base, slope, gains, trace=True)
    t = trace["t"][:-1]
    v = trace["v"][0, :-1]
    floor = trace["floor"][:-1]
    theta = trace["theta"][0]
    exposures = theta * (np.maximum(v - floor, 0.0) / v)[:, None]
    header = ["t"] + [f"exposure_{i + 1}" for i in range(model.n)]
    rows = np.column_stack([t, exposures])
    return header, rows


def multiplier_curve_data(model: MarketModel, deltas, eps_grid, T: float,
                          v0: float = 1.0, protection_level: float = 1.0,
                          steps: int = 2000):
    """Initial multiplier and risk-free exposure as functions of carbon aversion."""
    c0 = v0 - v0 * protection_level * math.exp(-model.r * T)
    variance2 = solve_filter_variance(model, T, 2 * steps)
    variance = variance2.subsample(2)
    header = ["epsilon", "delta", "multiplier", "risk_free_exposure"]
    rows = []
    for delta in deltas:
        for eps in eps_grid:
            pref = PreferenceSpec.from_delta(delta, eps)
            if pref.is_log:
                ctrl = theta_partial(0.0, model.gamma0, model, pref)
            else:
                grid = solve_partial_info(model, pref, T, steps, variance2)
                ctrl = theta_partial(0.0, model.gamma0, model, pref, grid, variance)
            m = float(ctrl.theta.sum())
            risk_free = 1.0 - m * c0 / v0
            rows.append([eps, delta, m, risk_free])
    return header, rows


def multiplier_paths_data(model: MarketModel, delta: float, epsilons, T: float,
                          dt: float, seed: int, path_index: int = 0,
                          steps: int = 2000):
    """Multiplier trajectories under full and partial information, one path.

    Both information modes see the same simulated drivers; the partial mode
    replaces the factor by its filtered estimate.
    """
    sim_steps = int(round(T / dt))
    y, logs = simulate_drivers(model, T, dt, seed, path_index)
    variance_sim = solve_filter_variance(model, T, sim_steps)
    gamma = filter_run(np.diff(logs[0], axis=0), model, variance_sim, dt)
    t = np.arange(sim_steps + 1) * dt
    columns = [t]
    header = ["t"]
    for eps in epsilons:
        pref = PreferenceSpec.from_delta(delta, eps)
        tag = _eps_tag(eps)
        if pref.is_log:
            m_full = [theta_full(tk, yk, model, pref).theta.sum()
                      for tk, yk in zip(t, y[0])]
            m_part = [theta_partial(tk, gk, model, pref).theta.sum()
                      for tk, gk in zip(t, gamma)]
        else:
            variance2 = solve_filter_variance(model, T, 2 * steps)
            full = solve_full_info(model, pref, T, steps)
            part = solve_partial_info(model, pref, T, steps, variance2)
            variance = variance2.subsample(2)
            m_full = [theta_full(tk, yk, model, pref, full).theta.sum()
                      for tk, yk in zip(t, y[0])]
            m_part = [theta_partial(tk, gk, model, pref, part, variance).theta.sum()
                      for tk, gk in zip(t, gamma)]
        header += [f"full_eps{tag}", f"partial_eps{tag}"]
        columns += [np.asarray(m_full), np.asarray(m_part)]
    return header, np.column_stack(columns)


def information_premium_data(model: MarketModel, deltas, eps_grid, T: float,
                             steps: int = 2000, c0: float = 1.0):
    """Loss of utility at time zero and efficiency versus carbon aversion."""
    header = ["epsilon", "delta", "loss_of_utility", "efficiency"]
    rows = []
    variance2 = solve_filter_variance(model, T, 2 * steps)
    variance = variance2.subsample(2)
    for delta in deltas:
        for eps in eps_grid:
            pref = PreferenceSpec.from_delta(delta, eps)
            if pref.is_log:
                coeffs = log_closed_forms(model, pref, T)
                loss = loss_of_utility(0.0, c0, model.gamma0, model, pref,
                                       log_coeffs=coeffs, variance=variance)
                eff = efficiency(model, pref, log_coeffs=coeffs, variance=variance)
            else:
                full = solve_full_info(model, pref, T, steps)
                part = solve_partial_info(model, pref, T, steps, variance2)
                loss = loss_of_utility(0.0, c0, model.gamma0, model, pref,
                                       full_grid=full, partial_grid=part,
                                       variance=variance)
                eff = efficiency(model, pref, full_grid=full, variance=variance)
            rows.append([eps, delta, loss, eff])
    return header, rows


def ensure_dir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path
