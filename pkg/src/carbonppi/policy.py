"""Feedback evaluation of the optimal carbon-penalised insurance controls.

The control vector theta is the per-asset exposure of the cushion
(theta = multiplier * portfolio weights).  Under CRRA utility it is affine in
the factor state with time-varying coefficients read off the solved ODE
grids; under log utility it is the myopic rule alone.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateMultiplier, OutOfGrid, ValidationError, WrongShape
from .market import MarketModel, PreferenceSpec, effective_risk
from .odes import FilterVarianceCurve, OdeGrid

MULTIPLIER_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ControlVector:
    theta: np.ndarray      # (n,) cushion exposure per asset
    t: float
    state: float           # factor value (full info) or its filtered mean

    def __post_init__(self):
        if not np.all(np.isfinite(self.theta)):
            raise ValidationError("control vector has non-finite entries")


@dataclass(frozen=True)
class DemandDecomposition:
    """Myopic, intertemporal-hedging and filter-correction components."""

    myopic: np.ndarray
    intertemporal: np.ndarray
    partial_correction: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.myopic + self.intertemporal + self.partial_correction


def _check_time(t: float, grid: OdeGrid) -> None:
    if t < grid.t[0] - 1e-12 or t > grid.t[-1] + 1e-12:
        raise OutOfGrid(f"t={t} outside the solved grid [0, {grid.t[-1]}]")


def theta_full(t: float, y: float, model: MarketModel, pref: PreferenceSpec,
               full_grid: OdeGrid | None = None) -> ControlVector:
    """Optimal exposure under full information at time t and factor value y."""
    inv = effective_risk(model, pref).inverse(pref)
    premium = model.a * y + model.b - model.r
    theta = inv @ premium
    if not pref.is_log:
        if full_grid is None:
            raise ValidationError("CRRA preferences need the solved coefficient grid")
        _check_time(t, full_grid)
        f, g, _ = full_grid.interp(t)
        theta = theta + (inv @ model.transformed.cross_sy) * (f * y + g)
    return ControlVector(theta=np.asarray(theta, dtype=float), t=float(t), state=float(y))


def theta_partial(t: float, gamma: float, model: MarketModel, pref: PreferenceSpec,
                  partial_grid: OdeGrid | None = None,
                  variance: FilterVarianceCurve | None = None) -> ControlVector:
    """Optimal exposure under partial information at filtered mean gamma."""
    inv = effective_risk(model, pref).inverse(pref)
    premium = model.a * gamma + model.b - model.r
    theta = inv @ premium
    if not pref.is_log:
        if partial_grid is None or variance is None:
            raise ValidationError("CRRA preferences need the partial grid and variance curve")
        _check_time(t, partial_grid)
        f, g, _ = partial_grid.interp(t)
        pbar = variance.pbar_at(t)
        theta = theta + (inv @ pbar) * (f * gamma + g)
    return ControlVector(theta=np.asarray(theta, dtype=float), t=float(t), state=float(gamma))


def multiplier_and_weights(control: ControlVector) -> tuple[float, np.ndarray]:
    """Recover the multiplier m = sum(theta) and weights pi = theta / m.

    The last weight absorbs the rounding residual so the weights sum to one
    exactly.
    """
    theta = control.theta
    m = float(theta.sum())
    if abs(m) <= MULTIPLIER_TOLERANCE:
        raise DegenerateMultiplier("exposures sum to zero; weights are undefined")
    pi = theta / m
    pi[-1] += 1.0 - pi.sum()
    return m, pi


def exposures(m: float, pi: np.ndarray, V: float, F: float) -> tuple[np.ndarray, float]:
    """Fraction of wealth held in each stock and in the risk-free asset."""
    if V <= 0:
        raise ValidationError("portfolio value must be positive")
    cushion = max(V - F, 0.0)
    risky = m * np.asarray(pi, dtype=float) * cushion / V
    return risky, float(1.0 - risky.sum())


def two_asset_decomposition(t: float, state: float, model: MarketModel,
                            pref: PreferenceSpec, grid: OdeGrid | None,
                            info_mode: str,
                            variance: FilterVarianceCurve | None = None) -> DemandDecomposition:
    """Split the two-asset control into myopic / hedging / filter terms.

    Requires two stocks driven by independent Brownian motions (zero asset
    cross-correlation); correlations with the factor may be anything.
    """
    if model.n != 2:
        raise WrongShape("decomposition is defined for exactly two assets")
    if abs(model.R[0, 1]) > 1e-12:
        raise WrongShape("decomposition requires uncorrelated assets")
    if info_mode not in ("full", "partial"):
        raise ValidationError(f"unknown info mode {info_mode!r}")
    if model.k != 1:
        raise WrongShape("expected one green and one brown asset")

    aversion = np.array([pref.delta, pref.delta + pref.epsilon])
    sig = model.sigma
    rho_y = model.R[:2, 2]
    myopic = (model.a * state + model.b - model.r) / (aversion * sig ** 2)

    if pref.is_log:
        zero = np.zeros(2)
        return DemandDecomposition(myopic=myopic, intertemporal=zero,
                                   partial_correction=zero.copy())

    if grid is None:
        raise ValidationError("CRRA preferences need the solved coefficient grid")
    _check_time(t, grid)
    f, g, _ = grid.interp(t)
    slope = f * state + g
    intertemporal = model.sigma_y * rho_y / (aversion * sig) * slope
    if info_mode == "full":
        correction = np.zeros(2)
    else:
        if variance is None:
            raise ValidationError("partial mode needs the variance curve")
        p_t = float(variance.p_at(t))
        correction = model.a * p_t / (aversion * sig ** 2) * slope
    return DemandDecomposition(myopic=myopic, intertemporal=intertemporal,
                               partial_correction=correction)


def control_table(model: MarketModel, pref: PreferenceSpec, info_mode: str,
                  times: np.ndarray, grid: OdeGrid | None = None,
                  variance: FilterVarianceCurve | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Presample the affine control theta(t, s) = A[k] + B[k] * s on a grid.

    Used by the simulator so per-step control evaluation is two vector ops.
    """
    if info_mode not in ("full", "partial"):
        raise ValidationError(f"unknown info mode {info_mode!r}")
    inv = effective_risk(model, pref).inverse(pref)
    m = len(times)
    base = np.broadcast_to(inv @ (model.b - model.r), (m, model.n)).copy()
    slope = np.broadcast_to(inv @ model.a, (m, model.n)).copy()
    if not pref.is_log:
        if grid is None:
            raise ValidationError("CRRA preferences need the solved coefficient grid")
        f, g, _ = grid.interp(times)
        if info_mode == "full":
            hedge = np.broadcast_to(inv @ model.transformed.cross_sy, (m, model.n))
        else:
            if variance is None:
                raise ValidationError("partial mode needs the variance curve")
            hedge = variance.pbar_at(times) @ inv
        base += hedge * g[:, None]
        slope += hedge * f[:, None]
    return base, slope
