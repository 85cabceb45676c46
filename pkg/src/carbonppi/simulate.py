"""Monte Carlo engine for the insured portfolio.

Per-path randomness is drawn from an own generator seeded by
``(seed, path_index)``, so any path can be regenerated in isolation and the
output is independent of block partitioning and worker count.  Each path uses
one generator call: the first draw initialises the factor, the rest are the
per-step driver increments.

The factor is stepped with its exact conditional mean and variance applied to
the same Gaussian draws that drive log prices, which keeps the per-step driver
correlation at its model value while removing discretisation bias from the
factor itself.  Log prices and the portfolio value use explicit Euler steps.
Absorption at the floor is checked at grid times; once a path is absorbed its
value grows at the risk-free rate.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import analysis
from .errors import ValidationError
from .market import MarketModel, PreferenceSpec, effective_risk
from .odes import (
    DEFAULT_STEPS,
    FilterVarianceCurve,
    OdeGrid,
    solve_filter_variance,
    solve_full_info,
    solve_partial_info,
)
from .policy import control_table

DEFAULT_BLOCK = 2048


@dataclass(frozen=True)
class ControlSpec:
    """What drives the exposure: the optimal rule or a frozen strategy."""

    kind: str = "optimal"              # "optimal" | "theta" | "multiplier"
    theta: np.ndarray | None = None    # fixed exposure vector, kind == "theta"
    m: float | None = None             # fixed multiplier, kind == "multiplier"
    pi: np.ndarray | None = None       # fixed weights, kind == "multiplier"

    def __post_init__(self):
        if self.kind not in ("optimal", "theta", "multiplier"):
            raise ValidationError(f"unknown control kind {self.kind!r}")
        if self.kind == "theta" and self.theta is None:
            raise ValidationError("fixed-theta control needs a theta vector")
        if self.kind == "multiplier" and (self.m is None or self.pi is None):
            raise ValidationError("fixed-multiplier control needs m and pi")

    def fixed_theta(self, n: int) -> np.ndarray:
        if self.kind == "theta":
            theta = np.asarray(self.theta, dtype=float)
        else:
            theta = float(self.m) * np.asarray(self.pi, dtype=float)
        if theta.shape != (n,):
            raise ValidationError(f"fixed control must have shape ({n},)")
        return theta


@dataclass(frozen=True)
class SimConfig:
    T: float
    dt: float
    n_paths: int
    seed: int
    info_mode: str                     # "full" | "partial"
    pref: PreferenceSpec
    v0: float = 1.0
    protection_level: float = 1.0
    control: ControlSpec = field(default_factory=ControlSpec)
    solver_steps: int = DEFAULT_STEPS
    block_size: int = DEFAULT_BLOCK
    n_jobs: int = 1

    def __post_init__(self):
        if self.T <= 0 or self.dt <= 0:
            raise ValidationError("horizon and step must be positive")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("dt must divide T")
        if self.n_paths < 1:
            raise ValidationError("need at least one path")
        if not 0.0 < self.protection_level <= 1.0:
            raise ValidationError("protection level must lie in (0, 1]")
        if self.v0 <= 0:
            raise ValidationError("initial wealth must be positive")
        if self.info_mode not in ("full", "partial"):
            raise ValidationError(f"unknown info mode {self.info_mode!r}")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def guarantee(self) -> float:
        return self.v0 * self.protection_level


@dataclass(frozen=True)
class PathRecord:
    terminal_v: float
    terminal_cushion: float
    terminal_penalised_cushion: float
    absorbed: bool
    absorption_time: float            # nan when never absorbed
    breach: float                     # max observed (F - V)^+ over the grid


@dataclass
class SimOutput:
    terminal_v: np.ndarray
    terminal_cushion: np.ndarray
    terminal_penalised: np.ndarray
    absorbed: np.ndarray
    absorption_time: np.ndarray
    breach: np.ndarray
    meta: dict

    def __post_init__(self):
        self.stats = analysis.summary_stats(self.terminal_v)

    @property
    def n_paths(self) -> int:
        return len(self.terminal_v)

    def path_record(self, i: int) -> PathRecord:
        return PathRecord(
            terminal_v=float(self.terminal_v[i]),
            terminal_cushion=float(self.terminal_cushion[i]),
            terminal_penalised_cushion=float(self.terminal_penalised[i]),
            absorbed=bool(self.absorbed[i]),
            absorption_time=float(self.absorption_time[i]),
            breach=float(self.breach[i]),
        )

    def stats_dict(self) -> dict:
        s = self.stats
        return {
            "mean": s.mean,
            "variance": s.variance,
            "q05": s.q05,
            "q50": s.q50,
            "q90": s.q90,
            "se_mean": math.sqrt(s.variance / self.n_paths) if self.n_paths > 1 else 0.0,
            "n_paths": self.n_paths,
            "absorbed_paths": int(self.absorbed.sum()),
            "max_breach": float(self.breach.max(initial=0.0)),
        }

    def to_csv(self, path) -> None:
        from .reports import write_csv
        rows = np.column_stack([
            np.arange(self.n_paths, dtype=float),
            self.terminal_v,
            self.terminal_cushion,
            self.terminal_penalised,
            self.absorbed.astype(float),
            self.absorption_time,
            self.breach,
        ])
        write_csv(path, ["path", "terminal_v", "terminal_cushion",
                         "terminal_penalised_cushion", "absorbed",
                         "absorption_time", "breach"], rows)


class _Drivers:
    """Precomputed per-step constants for the joint factor/price dynamics."""

    def __init__(self, model: MarketModel, dt: float):
        tm = model.transformed
        self.n = model.n
        self.dt = dt
        self.sqrt_dt = math.sqrt(dt)
        self.a = model.a
        self.b_half = model.b - 0.5 * model.sigma ** 2
        self.tsig_s = tm.sigma_tilde_s
        self.tsig_y = tm.sigma_tilde_y
        self.tsig_y_scalar = tm.sigma_tilde_y_scalar
        lam = model.lam
        self.phi = math.exp(lam * dt)
        if lam != 0.0:
            self.shift = model.beta / lam * math.expm1(lam * dt)
            self.noise_scale = math.sqrt(math.expm1(2.0 * lam * dt) / (2.0 * lam * dt))
        else:
            self.shift = model.beta * dt
            self.noise_scale = 1.0


def _path_normals(seed: int, index: int, count: int) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    return rng.standard_normal(count)


def simulate_drivers(model: MarketModel, T: float, dt: float, seed: int,
                     path_indices) -> tuple[np.ndarray, np.ndarray]:
    """Joint factor and log-price paths for the given path indices.

    Returns ``(y, logs)`` with shapes (m, steps+1) and (m, steps+1, n); log
    prices start at zero (prices are defined up to their initial level).
    A scalar index yields the same arrays with m = 1.
    """
    if np.isscalar(path_indices):
        path_indices = [int(path_indices)]
    indices = [int(i) for i in path_indices]
    steps = int(round(T / dt))
    if abs(steps * dt - T) > 1e-9 * max(1.0, T):
        raise ValidationError("dt must divide T")
    d = _Drivers(model, dt)
    n = model.n
    m = len(indices)
    count = 1 + steps * (n + 1)
    z = np.empty((m, count))
    for row, idx in enumerate(indices):
        z[row] = _path_normals(seed, idx, count)
    y0 = model.gamma0 + math.sqrt(model.p0) * z[:, 0]
    zi = z[:, 1:].reshape(m, steps, n + 1)
    noise_s = np.einsum("msj,ij->msi", zi[:, :, :n], d.tsig_s) * d.sqrt_dt
    w = (np.einsum("msj,j->ms", zi[:, :, :n], d.tsig_y)
         + d.tsig_y_scalar * zi[:, :, n]) * d.sqrt_dt

    y = np.empty((m, steps + 1))
    y[:, 0] = y0
    for k in range(steps):
        y[:, k + 1] = d.phi * y[:, k] + d.shift + d.noise_scale * w[:, k]

    inc = (np.multiply.outer(y[:, :-1], d.a) + d.b_half[None, None, :]) * dt + noise_s
    logs = np.empty((m, steps + 1, n))
    logs[:, 0, :] = 0.0
    np.cumsum(inc, axis=1, out=logs[:, 1:, :])
    return y, logs


def _evolve_block(y: np.ndarray, logs: np.ndarray, model: MarketModel,
                  config: SimConfig, base: np.ndarray, slope: np.ndarray,
                  gains: np.ndarray | None, trace: bool = False) -> dict:
    """Evolve the insured portfolio over one block of simulated paths.

    ``base``/``slope`` give the exposure rule theta = base[k] + slope[k]*state
    at grid node k; ``gains`` are the filter gain rows (required in partial
    mode).  Absorption freezes the risky exposure and compounds the value at
    the risk-free rate.
    """
    m, nodes, n = logs.shape
    steps = nodes - 1
    dt = config.dt
    d = _Drivers(model, dt)
    r = model.r
    G = config.guarantee
    tgrid = np.arange(steps + 1) * dt
    floor = G * np.exp(-r * (config.T - tgrid))
    pen_diag = np.diag(effective_risk(model, config.pref).penalty).copy()
    partial = config.info_mode == "partial"
    if partial and gains is None:
        raise ValidationError("partial mode needs filter gains")

    dlogs = np.diff(logs, axis=1)
    V = np.full(m, config.v0)
    gamma = np.full(m, model.gamma0)
    alive = np.ones(m, dtype=bool)
    absorption = np.full(m, np.nan)
    breach = np.zeros(m)
    accum = np.zeros(m)
    grow = math.exp(r * dt)

    if trace:
        v_path = np.empty((m, steps + 1))
        v_path[:, 0] = V
        theta_path = np.empty((m, steps, n))
        state_path = np.empty((m, steps + 1))
        state_path[:, 0] = gamma if partial else y[:, 0]

    for k in range(steps):
        yk = y[:, k]
        state = gamma if partial else yk
        theta = base[k][None, :] + slope[k][None, :] * state[:, None]
        dk = dlogs[:, k, :]
        # price noise recovered from the observed increments
        prem_plus_noise = dk + (0.5 * model.sigma ** 2 - r)[None, :] * dt
        risky = np.einsum("pn,pn->p", theta, prem_plus_noise)
        cushion = np.maximum(V - floor[k], 0.0)
        V_next = V + r * V * dt + np.where(alive, cushion * risky, 0.0)
        V_next = np.where(alive, V_next, V * grow)
        accum += np.where(alive, np.einsum("pn,pn->p", theta * theta,
                                           np.broadcast_to(pen_diag, theta.shape)) * dt, 0.0)
        if partial:
            innovation = dk - (np.multiply.outer(gamma, model.a)
                               + d.b_half[None, :]) * dt
            gamma = gamma + (model.lam * gamma + model.beta) * dt \
                + innovation @ gains[k]
        V = V_next
        newly = alive & (V <= floor[k + 1])
        absorption[newly] = tgrid[k + 1]
        alive &= ~newly
        np.maximum(breach, floor[k + 1] - V, out=breach)
        if trace:
            v_path[:, k + 1] = V
            theta_path[:, k, :] = theta
            state_path[:, k + 1] = gamma if partial else y[:, k + 1]

    breach = np.maximum(breach, 0.0)
    cushion_T = V - G
    out = {
        "terminal_v": V,
        "terminal_cushion": cushion_T,
        "terminal_penalised": cushion_T * np.exp(-0.5 * accum),
        "absorbed": ~alive,
        "absorption_time": absorption,
        "breach": breach,
    }
    if trace:
        out["trace"] = {"t": tgrid, "v": v_path, "theta": theta_path,
                        "state": state_path, "floor": floor}
    return out


def build_control_tables(model: MarketModel, config: SimConfig,
                         grid: OdeGrid | None = None,
                         variance: FilterVarianceCurve | None = None):
    """Exposure-rule tables and filter gains on the simulation grid.

    Solves whatever inputs are missing: the coefficient grid for optimal CRRA
    rules and the sim-grid variance curve for partial information.
    """
    steps = config.steps
    times = np.arange(steps + 1) * config.dt
    pref = config.pref
    sim_variance = None
    gains = None
    if config.info_mode == "partial":
        sim_variance = solve_filter_variance(model, config.T, steps) \
            if variance is None or variance.steps != steps else variance
        gains = sim_variance.pbar @ model.transformed.cov_s_inv

    if config.control.kind != "optimal":
        theta = config.control.fixed_theta(model.n)
        base = np.broadcast_to(theta, (steps + 1, model.n)).copy()
        slope = np.zeros((steps + 1, model.n))
        return base, slope, gains

    if pref.is_log:
        base, slope = control_table(model, pref, config.info_mode, times)
        return base, slope, gains

    if grid is None:
        if config.info_mode == "full":
            grid = solve_full_info(model, pref, config.T, config.solver_steps)
        else:
            grid = solve_partial_info(model, pref, config.T, config.solver_steps)
    base, slope = control_table(model, pref, config.info_mode, times,
                                grid=grid, variance=sim_variance)
    return base, slope, gains


def evolve_ppi(drivers: tuple[np.ndarray, np.ndarray], model: MarketModel,
               config: SimConfig, base: np.ndarray, slope: np.ndarray,
               gains: np.ndarray | None = None, trace: bool = False):
    """Evolve the portfolio along precomputed driver paths.

    ``drivers`` is the (y, logs) pair from simulate_drivers.  Returns a list
    of PathRecord (plus the trace dict when requested).
    """
    y, logs = drivers
    out = _evolve_block(np.atleast_2d(y), logs if logs.ndim == 3 else logs[None],
                        model, config, base, slope, gains, trace=trace)
    records = [
        PathRecord(
            terminal_v=float(out["terminal_v"][i]),
            terminal_cushion=float(out["terminal_cushion"][i]),
            terminal_penalised_cushion=float(out["terminal_penalised"][i]),
            absorbed=bool(out["absorbed"][i]),
            absorption_time=float(out["absorption_time"][i]),
            breach=float(out["breach"][i]),
        )
        for i in range(out["terminal_v"].shape[0])
    ]
    if trace:
        return records, out["trace"]
    return records


def run_monte_carlo(model: MarketModel, config: SimConfig,
                    grid: OdeGrid | None = None,
                    variance: FilterVarianceCurve | None = None) -> SimOutput:
    """Full Monte Carlo run: solve, simulate in blocks, aggregate.

    Results depend only on (seed, path index); block size and worker count
    do not change the output.
    """
    base, slope, gains = build_control_tables(model, config, grid, variance)
    n_paths = config.n_paths
    fields = {
        "terminal_v": np.empty(n_paths),
        "terminal_cushion": np.empty(n_paths),
        "terminal_penalised": np.empty(n_paths),
        "absorbed": np.empty(n_paths, dtype=bool),
        "absorption_time": np.empty(n_paths),
        "breach": np.empty(n_paths),
    }
    blocks = [(lo, min(lo + config.block_size, n_paths))
              for lo in range(0, n_paths, config.block_size)]

    def work(span):
        lo, hi = span
        drivers = simulate_drivers(model, config.T, config.dt, config.seed,
                                   range(lo, hi))
        out = _evolve_block(drivers[0], drivers[1], model, config,
                            base, slope, gains)
        for name, arr in fields.items():
            arr[lo:hi] = out[name]

    if config.n_jobs > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            list(pool.map(work, blocks))
    else:
        for span in blocks:
            work(span)

    meta = {
        "T": config.T,
        "dt": config.dt,
        "n_paths": n_paths,
        "seed": config.seed,
        "info_mode": config.info_mode,
        "utility": config.pref.utility,
        "delta": config.pref.delta,
        "epsilon": config.pref.epsilon,
        "v0": config.v0,
        "protection_level": config.protection_level,
        "control": config.control.kind,
    }
    return SimOutput(meta=meta, **fields)


def with_paths(config: SimConfig, **kwargs) -> SimConfig:
    """Convenience copy-with-overrides for SimConfig."""
    return replace(config, **kwargs)
