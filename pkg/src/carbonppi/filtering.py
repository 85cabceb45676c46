"""Conditional-mean filter for the latent factor given observed prices.

The conditional variance is deterministic and precomputed (FilterVarianceCurve);
only the conditional mean is propagated along each observed path.  Observations
enter as log-return increments, so the innovation subtracts the usual
half-variance adjustment that converts the arithmetic drift of prices into the
drift of log prices.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteObservation, ValidationError
from .market import MarketModel
from .odes import FilterVarianceCurve


@dataclass(frozen=True)
class FilterState:
    t: float
    gamma: float

    def __post_init__(self):
        if not np.isfinite(self.gamma):
            raise ValidationError("filter mean must be finite")


def filter_init(model: MarketModel) -> FilterState:
    """Initial state: the prior mean at time zero."""
    return FilterState(t=0.0, gamma=float(model.gamma0))


def filter_gain(model: MarketModel, variance: FilterVarianceCurve, t) -> np.ndarray:
    """Gain row applied to log-return innovations at time t."""
    return variance.pbar_at(t) @ model.transformed.cov_s_inv


def filter_step(state: FilterState, log_returns: np.ndarray, dt: float,
                model: MarketModel, variance: FilterVarianceCurve) -> FilterState:
    """One explicit Euler update of the conditional mean.

    ``log_returns`` are the increments of log prices over [t, t + dt].
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    obs = np.asarray(log_returns, dtype=float)
    if obs.shape != (model.n,):
        raise ValidationError(f"expected {model.n} log returns")
    if not np.all(np.isfinite(obs)):
        raise NonFiniteObservation("log returns contain NaN or inf")
    gamma = state.gamma
    expected = (model.a * gamma + model.b - 0.5 * model.sigma ** 2) * dt
    gain = filter_gain(model, variance, state.t)
    new_gamma = gamma + (model.lam * gamma + model.beta) * dt + gain @ (obs - expected)
    return FilterState(t=state.t + dt, gamma=float(new_gamma))


def filter_run(log_return_path: np.ndarray, model: MarketModel,
               variance: FilterVarianceCurve, dt: float) -> np.ndarray:
    """Run the filter over a whole path of log-return increments.

    ``log_return_path`` has shape (steps, n); returns the gamma path of
    length steps + 1 including the prior mean at t = 0.
    """
    path = np.asarray(log_return_path, dtype=float)
    if path.ndim == 1 and path.size == 0:
        return np.array([model.gamma0])
    if path.ndim != 2 or path.shape[1] != model.n:
        raise ValidationError(f"log-return path must have shape (steps, {model.n})")
    state = filter_init(model)
    out = np.empty(path.shape[0] + 1)
    out[0] = state.gamma
    for i in range(path.shape[0]):
        state = filter_step(state, path[i], dt, model, variance)
        out[i + 1] = state.gamma
    return out
