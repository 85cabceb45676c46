"""Value functions, information-premium measures, admissibility checks and
sample statistics.

The value function is exponentially quadratic in the factor state for CRRA
utility and additively quadratic for log utility.  The log-utility constant
terms are assembled in the variant consistent with the integrated factor
moments, which is the convention the Monte Carlo and loss-of-utility
identities validate.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptySample, NonPositiveCushion, ValidationError
from .market import MarketModel, PreferenceSpec, effective_risk
from .odes import (
    FilterVarianceCurve,
    LogCoefficients,
    OdeGrid,
    _align_variance,
    information_gap_tail,
    log_closed_forms,
)


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    variance: float
    q05: float
    q50: float
    q90: float


def summary_stats(samples) -> SummaryStats:
    """Mean (compensated summation), unbiased variance and 5/50/90 quantiles.

    Quantiles interpolate linearly between order statistics at rank
    (n - 1) * p, so a sorted sample 1..100 has median 50.5.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise EmptySample("summary statistics need at least one observation")
    mean = math.fsum(x) / x.size
    if x.size > 1:
        variance = math.fsum((x - mean) ** 2) / (x.size - 1)
    else:
        variance = 0.0
    q05, q50, q90 = np.quantile(x, [0.05, 0.5, 0.9], method="linear")
    return SummaryStats(mean=float(mean), variance=float(variance),
                        q05=float(q05), q50=float(q50), q90=float(q90))


def _crra_value(c: float, delta: float, exponent: float) -> float:
    return c ** (1.0 - delta) / (1.0 - delta) * math.exp(exponent)


def value_function(t: float, c: float, state: float, model: MarketModel,
                   pref: PreferenceSpec, info_mode: str,
                   grid: OdeGrid | None = None,
                   log_coeffs: LogCoefficients | None = None,
                   variance: FilterVarianceCurve | None = None,
                   log_convention: str = "consistent") -> float:
    """Optimal expected utility at (t, cushion c, factor state).

    ``state`` is the factor value under full information and its filtered
    mean under partial information.  For log utility the quadratic
    coefficient follows the stated convention: ``"consistent"`` (default)
    uses half the closed-form coefficient in both information modes, which is
    the value the integrated factor moments produce; ``"printed"`` keeps the
    full coefficient in the full-information branch.
    """
    if c <= 0:
        raise NonPositiveCushion("the cushion must be positive")
    if info_mode not in ("full", "partial"):
        raise ValidationError(f"unknown info mode {info_mode!r}")
    if not pref.is_log:
        if grid is None or grid.system != info_mode:
            raise ValidationError(f"need the solved {info_mode!r} coefficient grid")
        f, g, h = grid.interp(t)
        return _crra_value(c, pref.delta, 0.5 * f * state ** 2 + g * state + h)

    if log_coeffs is None:
        raise ValidationError("log utility needs the closed-form coefficients")
    tau_term = model.r * (log_coeffs.T - t)
    f = float(log_coeffs.f(t))
    g = float(log_coeffs.g(t))
    if info_mode == "full":
        if log_convention == "consistent":
            quad = 0.5 * f
        elif log_convention == "printed":
            quad = f
        else:
            raise ValidationError(f"unknown log convention {log_convention!r}")
        h = float(log_coeffs.h(t))
    else:
        if variance is None:
            raise ValidationError("partial-information log value needs the variance curve")
        quad = 0.5 * f
        h = float(log_coeffs.h_tilde(t, variance, variant=log_convention))
    return math.log(c) + tau_term + quad * state ** 2 + g * state + h


def expected_full_value(c: float, model: MarketModel, pref: PreferenceSpec,
                        grid: OdeGrid | None = None,
                        log_coeffs: LogCoefficients | None = None,
                        gamma: float | None = None,
                        p: float | None = None) -> float:
    """Time-zero full-information value averaged over the factor prior.

    With the factor normally distributed, the exponential-quadratic CRRA
    value has the closed Gaussian expectation; the log value only needs the
    prior second moment.  Used to compare against Monte Carlo that redraws
    the initial factor per path.
    """
    if c <= 0:
        raise NonPositiveCushion("the cushion must be positive")
    gamma = model.gamma0 if gamma is None else gamma
    p = model.p0 if p is None else p
    if not pref.is_log:
        if grid is None or grid.system != "full":
            raise ValidationError("need the solved full-information grid")
        f, g, h = (float(x) for x in grid.interp(0.0))
        den = 1.0 - f * p
        if den <= 0:
            raise ValidationError("Gaussian expectation diverges: 1 - f P <= 0")
        expo = h + 0.5 * g ** 2 * p / den + g * gamma / den \
            + 0.5 * f * gamma ** 2 / den
        return c ** (1.0 - pref.delta) / (1.0 - pref.delta) \
            * math.exp(expo) / math.sqrt(den)
    if log_coeffs is None:
        raise ValidationError("log utility needs the closed-form coefficients")
    f = float(log_coeffs.f(0.0))
    g = float(log_coeffs.g(0.0))
    h = float(log_coeffs.h(0.0))
    return math.log(c) + model.r * log_coeffs.T \
        + 0.5 * f * (gamma ** 2 + p) + g * gamma + h


def loss_of_utility(t: float, c: float, gamma: float, model: MarketModel,
                    pref: PreferenceSpec,
                    full_grid: OdeGrid | None = None,
                    partial_grid: OdeGrid | None = None,
                    log_coeffs: LogCoefficients | None = None,
                    variance: FilterVarianceCurve | None = None) -> float:
    """Expected value-function gap between full and partial information.

    Nonnegative for every admissible preference; zero at t = T and whenever
    the filter variance vanishes.
    """
    if c <= 0:
        raise NonPositiveCushion("the cushion must be positive")
    if variance is None:
        raise ValidationError("loss of utility needs the variance curve")
    if pref.is_log:
        if log_coeffs is None:
            log_coeffs = log_closed_forms(model, pref, float(variance.t[-1]))
        tail = np.interp(t, variance.t, variance.integral_tail())
        return 0.5 * log_coeffs.quad_a * float(tail)
    if full_grid is None or partial_grid is None:
        raise ValidationError("CRRA loss needs both coefficient grids")
    tail = information_gap_tail(full_grid, variance, model, pref)
    j_t = float(np.interp(t, full_grid.t, tail))
    fb, gb, hb = partial_grid.interp(t)
    delta = pref.delta
    gap = math.exp(0.5 * (1.0 - delta) * j_t) - 1.0
    return c ** (1.0 - delta) / (1.0 - delta) * gap \
        * math.exp(0.5 * fb * gamma ** 2 + gb * gamma + hb)


def efficiency(model: MarketModel, pref: PreferenceSpec,
               full_grid: OdeGrid | None = None,
               log_coeffs: LogCoefficients | None = None,
               variance: FilterVarianceCurve | None = None) -> float:
    """Initial-cushion fraction equating full- and partial-information utility."""
    if variance is None:
        raise ValidationError("efficiency needs the variance curve")
    if pref.is_log:
        if log_coeffs is None:
            log_coeffs = log_closed_forms(model, pref, float(variance.t[-1]))
        total = float(variance.integral_tail()[0])
        return math.exp(-0.5 * log_coeffs.quad_a * total)
    if full_grid is None:
        raise ValidationError("CRRA efficiency needs the full-information grid")
    tail = information_gap_tail(full_grid, variance, model, pref)
    return math.exp(-0.5 * float(tail[0]))


def var_y(model: MarketModel, t: float) -> float:
    """Unconditional variance of the factor at time t.

    Uses the squared-volatility stationary constant so the result carries
    variance units for any sign of the mean-reversion coefficient.
    """
    lam = model.lam
    if abs(lam) < 1e-12:
        return model.p0 + model.sigma_y ** 2 * t
    e2 = math.exp(2.0 * lam * t)
    v_inf = model.sigma_y ** 2 / (-2.0 * lam)
    return model.p0 * e2 + v_inf * (1.0 - e2)


@dataclass(frozen=True)
class AdmissibilityReport:
    """Sufficient-condition check list for one (delta, epsilon) pair.

    ``checks`` holds each inequality by name; ``overall`` is the conjunction
    per information mode.  A failing inequality only means the sufficient
    conditions do not certify admissibility, not that the strategy fails.
    """

    delta: float
    epsilon: float
    alpha: float
    d: float
    q: float
    constants: dict
    checks: dict
    overall: dict
    notes: tuple

    def to_json(self, indent: int = 2) -> str:
        payload = {
            "delta": self.delta,
            "epsilon": self.epsilon,
            "free_constants": {"alpha": self.alpha, "d": self.d, "q": self.q},
            "constants": self.constants,
            "checks": self.checks,
            "overall": self.overall,
            "notes": list(self.notes),
        }
        return json.dumps(payload, indent=indent)


def admissibility_report(model: MarketModel, pref: PreferenceSpec,
                         full_grid: OdeGrid, partial_grid: OdeGrid,
                         variance: FilterVarianceCurve,
                         alpha: float = 0.1, d: float = 1.1,
                         q: float = 1.1) -> AdmissibilityReport:
    """Evaluate the sufficient admissibility inequalities for both modes."""
    if pref.is_log:
        raise ValidationError("the admissibility conditions are stated for CRRA")
    if alpha <= 0 or d <= 1 or q <= 1:
        raise ValidationError("need alpha > 0, d > 1, q > 1")
    variance = _align_variance(full_grid, variance)
    delta = pref.delta
    n = model.n
    T = float(full_grid.t[-1])
    tm = model.transformed
    risk = effective_risk(model, pref)
    inv = risk.theta_hat_inv
    a = model.a
    br = model.b - model.r
    u = tm.cross_sy

    sup_f = float(np.max(full_grid.f))
    sup_g = float(np.max(full_grid.g))
    sup_fbar = float(np.max(partial_grid.f))
    sup_pfbar = float(np.max(variance.p * partial_grid.f))
    a_m = float(np.max(np.abs(a)))
    b_m = float(np.max(np.abs(br)))
    w = float(np.max(np.abs(tm.cov_s)))
    w_tilde = float(np.max(np.abs(risk.theta_hat)))
    c1 = float(np.max(np.abs(inv @ (a + u * sup_f))))
    c2 = float(np.max(np.abs(inv @ (br + u * sup_g))))
    mix = tm.sigma_tilde_s @ np.linalg.inv(tm.sigma_tilde_s).T
    c1_tilde = float(np.max(np.abs(inv @ (a + mix @ (a * sup_pfbar + u * sup_fbar)))))
    var_max = max(model.p0, var_y(model, T))

    f0 = float(full_grid.f[0])
    p0 = float(variance.p[0])
    om = 1.0 - delta
    in_low = delta < 1.0

    def admissibility_margin(c_val: float) -> float:
        if in_low:
            bracket = max(1.0, d * om * (1.0 + alpha) * w) * c_val ** 2 + a_m ** 2
        else:
            bracket = min(-(1.0 + w), d * om * (1.0 + alpha) * w_tilde) * c_val ** 2 \
                - a_m ** 2
        return 1.0 - 8.0 * d * om * (1.0 + alpha) * n * T * bracket * var_max

    margins = {
        "full_uniform_integrability":
            1.0 - q * (1.0 + alpha) * f0 * var_max if in_low else None,
        "full_admissibility": admissibility_margin(c1),
        "partial_uniform_integrability":
            1.0 - q * (1.0 + alpha) * f0 / (1.0 - p0 * f0) * var_max if in_low else None,
        "partial_admissibility": admissibility_margin(c1_tilde),
    }
    checks = {name: True if m is None else bool(m > 0.0)
              for name, m in margins.items()}
    overall = {
        "full": checks["full_uniform_integrability"] and checks["full_admissibility"],
        "partial": checks["partial_uniform_integrability"] and checks["partial_admissibility"],
    }
    constants = {
        "a_M": a_m, "b_M": b_m, "w": w, "w_tilde": w_tilde,
        "c1": c1, "c2": c2, "c1_tilde": c1_tilde,
        "sup_f": sup_f, "sup_g": sup_g, "sup_fbar": sup_fbar,
        "sup_p_fbar": sup_pfbar, "var_y_max": var_max,
        "margins": {k: v for k, v in margins.items() if v is not None},
    }
    notes = (
        "high risk aversion (delta > 1) certifies uniform integrability with no extra condition",
        "the stationary factor variance uses squared volatility over twice the reversion rate",
    )
    return AdmissibilityReport(delta=delta, epsilon=pref.epsilon, alpha=alpha,
                               d=d, q=q, constants=constants, checks=checks,
                               overall=overall, notes=notes)
