"""Backward coefficient ODEs, the filter-variance equation and closed forms.

The value function of the insurance problem is exponentially quadratic in the
factor, with time coefficients (f, g, h) solving a triangular system: a scalar
Riccati equation for f, a linear equation for g given f, and an integration
for h given (f, g).  Under partial information the same structure holds with
time-dependent coefficients built from the deterministic filter variance P(t).

All systems are integrated with the classical fixed-step fourth-order
Runge-Kutta scheme; backward systems are integrated in the reversed time
s = T - t.  For the partial-information system the variance curve is solved
on a doubled grid so that RK4 half-step nodes are exact rather than
interpolated.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    InadmissibleDelta,
    LambdaZero,
    NegativeVariance,
    OutOfGrid,
    RiccatiBlowUp,
    SingularTransform,
    ValidationError,
)
from .market import MarketModel, PreferenceSpec, effective_risk, is_admissible_delta

BLOW_UP_LIMIT = 1e8
BARRIER_TOLERANCE = 1e-10
LAMBDA_TOLERANCE = 1e-12
DEFAULT_STEPS = 2000


@dataclass(frozen=True)
class OdeGrid:
    """Coefficient curves (f, g, h) on a uniform time grid over [0, T]."""

    t: np.ndarray
    f: np.ndarray
    g: np.ndarray
    h: np.ndarray
    system: str            # "full" | "partial"
    delta: float
    epsilon: float

    @property
    def horizon(self) -> float:
        return float(self.t[-1])

    def _check(self, tq) -> np.ndarray:
        tq = np.asarray(tq, dtype=float)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise OutOfGrid(f"time outside [{self.t[0]}, {self.t[-1]}]")
        return np.clip(tq, self.t[0], self.t[-1])

    def interp(self, tq):
        """Linear interpolation of (f, g, h) at times tq."""
        tq = self._check(tq)
        return (np.interp(tq, self.t, self.f),
                np.interp(tq, self.t, self.g),
                np.interp(tq, self.t, self.h))

    def to_csv(self, path) -> None:
        from .reports import write_csv
        rows = np.column_stack([self.t, self.f, self.g, self.h])
        write_csv(path, ["t", "f", "g", "h"], rows)


@dataclass(frozen=True)
class FilterVarianceCurve:
    """Deterministic conditional variance P(t) and gain row pbar(t)."""

    t: np.ndarray
    p: np.ndarray
    pbar: np.ndarray       # (len(t), n); row = sigma_tilde_y @ sigma_tilde_s.T + P(t) a

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    def p_at(self, tq):
        tq = np.asarray(tq, dtype=float)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise OutOfGrid("time outside the variance grid")
        return np.interp(np.clip(tq, self.t[0], self.t[-1]), self.t, self.p)

    def pbar_at(self, tq) -> np.ndarray:
        tq = np.asarray(tq, dtype=float)
        if np.any(tq < self.t[0] - 1e-12) or np.any(tq > self.t[-1] + 1e-12):
            raise OutOfGrid("time outside the variance grid")
        tq = np.clip(tq, self.t[0], self.t[-1])
        cols = [np.interp(tq, self.t, self.pbar[:, j]) for j in range(self.pbar.shape[1])]
        return np.stack(cols, axis=-1)

    def subsample(self, every: int) -> "FilterVarianceCurve":
        return FilterVarianceCurve(self.t[::every], self.p[::every], self.pbar[::every])

    def integral_tail(self) -> np.ndarray:
        """Trapezoid cumulative integral of P from each node to T."""
        return _right_cumtrapz(self.t, self.p)


def _right_cumtrapz(t: np.ndarray, y: np.ndarray) -> np.ndarray:
    """I[j] = integral of y from t[j] to t[-1] by the composite trapezoid rule."""
    seg = 0.5 * (y[1:] + y[:-1]) * np.diff(t)
    out = np.zeros_like(y)
    out[:-1] = seg[::-1].cumsum()[::-1]
    return out


def _full_info_coefficients(model: MarketModel, pref: PreferenceSpec):
    tm = model.transformed
    inv = effective_risk(model, pref).inverse(pref)
    u = tm.cross_sy                 # sigma_tilde_s @ sigma_tilde_y == (sigma_tilde_y @ sigma_tilde_s.T)^T
    a = model.a
    br = model.b - model.r
    om = 1.0 - pref.delta
    A = om * (u @ inv @ u) + model.sigma_y ** 2
    B = om * (u @ inv @ a) + model.lam
    C = om * (a @ inv @ a)
    D = om * (u @ inv @ br) + model.beta
    E = om * (a @ inv @ br)
    F0 = om * model.r + 0.5 * om * (br @ inv @ br)
    return float(A), float(B), float(C), float(D), float(E), float(F0)


def _rk4_backward(steps: int, h: float, rhs, terminal=(0.0, 0.0, 0.0)):
    """Integrate (f, g, h) backward from t = T with classical RK4.

    ``rhs(j, f, g, h)`` evaluates the reversed-time derivative at doubled-grid
    node j (j = 2*i are whole steps, odd j are half steps).  Returns arrays
    indexed by the forward grid.
    """
    f = np.empty(steps + 1)
    g = np.empty(steps + 1)
    hh = np.empty(steps + 1)
    yf, yg, yh = terminal
    f[steps], g[steps], hh[steps] = yf, yg, yh
    for i in range(steps, 0, -1):
        j = 2 * i
        k1f, k1g, k1h = rhs(j, yf, yg, yh)
        k2f, k2g, k2h = rhs(j - 1, yf + 0.5 * h * k1f, yg + 0.5 * h * k1g, yh + 0.5 * h * k1h)
        k3f, k3g, k3h = rhs(j - 1, yf + 0.5 * h * k2f, yg + 0.5 * h * k2g, yh + 0.5 * h * k2h)
        k4f, k4g, k4h = rhs(j - 2, yf + h * k3f, yg + h * k3g, yh + h * k3h)
        yf += h / 6.0 * (k1f + 2.0 * k2f + 2.0 * k3f + k4f)
        yg += h / 6.0 * (k1g + 2.0 * k2g + 2.0 * k3g + k4g)
        yh += h / 6.0 * (k1h + 2.0 * k2h + 2.0 * k3h + k4h)
        if abs(yf) > BLOW_UP_LIMIT:
            raise RiccatiBlowUp(f"|f| exceeded {BLOW_UP_LIMIT:g} at t={(i - 1) * h:g}")
        f[i - 1], g[i - 1], hh[i - 1] = yf, yg, yh
    return f, g, hh


def _require_crra_admissible(model: MarketModel, pref: PreferenceSpec) -> None:
    if pref.is_log:
        raise ValidationError("the coefficient ODEs are for CRRA; use log_closed_forms")
    if not is_admissible_delta(model, pref.delta, pref.epsilon):
        raise InadmissibleDelta(
            f"delta={pref.delta} lies outside the admissible set "
            f"(discriminant <= 0 at epsilon={pref.epsilon})"
        )


def solve_full_info(model: MarketModel, pref: PreferenceSpec, T: float,
                    steps: int = DEFAULT_STEPS) -> OdeGrid:
    """Backward RK4 solution of the full-information coefficient system."""
    _require_crra_admissible(model, pref)
    if steps < 100:
        raise ValidationError("steps must be at least 100")
    A, B, C, D, E, F0 = _full_info_coefficients(model, pref)
    sy2 = model.sigma_y ** 2
    h = T / steps

    def rhs(_j, f, g, hh):
        df = A * f * f + 2.0 * B * f + C
        dg = B * g + D * f + A * f * g + E
        dh = F0 + D * g + 0.5 * sy2 * f + 0.5 * A * g * g
        return df, dg, dh

    f, g, hh = _rk4_backward(steps, h, rhs)
    t = np.linspace(0.0, T, steps + 1)
    return OdeGrid(t, f, g, hh, "full", pref.delta, pref.epsilon)


def solve_filter_variance(model: MarketModel, T: float,
                          steps: int = DEFAULT_STEPS) -> FilterVarianceCurve:
    """Forward RK4 for the scalar Riccati equation of the filter variance."""
    tm = model.transformed
    minv = tm.cov_s_inv
    a = model.a
    u = tm.cross_sy
    Ap = float(a @ minv @ a)
    Bp = 2.0 * model.lam - 2.0 * float(u @ minv @ a)
    Cp = model.sigma_y ** 2 - float(u @ minv @ u)
    h = T / steps

    def rhs(p):
        return -Ap * p * p + Bp * p + Cp

    p = np.empty(steps + 1)
    y = float(model.p0)
    p[0] = y
    for i in range(steps):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if y < -1e-12:
            raise NegativeVariance(f"P({(i + 1) * h:g}) = {y:.3e} < 0")
        p[i + 1] = y
    t = np.linspace(0.0, T, steps + 1)
    pbar = u[None, :] + p[:, None] * a[None, :]
    return FilterVarianceCurve(t, p, pbar)


def solve_partial_info(model: MarketModel, pref: PreferenceSpec, T: float,
                       steps: int = DEFAULT_STEPS,
                       variance: FilterVarianceCurve | None = None) -> OdeGrid:
    """Backward RK4 for the partial-information coefficient system.

    The time-dependent coefficients come from the filter-variance curve,
    solved on a doubled grid so RK4 half-steps hit exact nodes.
    """
    _require_crra_admissible(model, pref)
    if steps < 100:
        raise ValidationError("steps must be at least 100")
    if variance is None:
        variance = solve_filter_variance(model, T, 2 * steps)
    if variance.steps != 2 * steps:
        raise ValidationError(
            f"variance curve must have {2 * steps} steps (got {variance.steps})"
        )
    tm = model.transformed
    inv = effective_risk(model, pref).inverse(pref)
    minv = tm.cov_s_inv
    a = model.a
    br = model.b - model.r
    om = 1.0 - pref.delta

    pbar = variance.pbar                       # (2*steps+1, n)
    pb_inv = pbar @ inv
    Aj = (om * np.einsum("jn,jn->j", pb_inv, pbar)
          + np.einsum("jn,jn->j", pbar @ minv, pbar)).tolist()
    Bj = (om * (pb_inv @ a) + model.lam).tolist()
    Dj = (om * (pb_inv @ br) + model.beta).tolist()
    Qj = np.einsum("jn,jn->j", pbar @ minv, pbar).tolist()
    C = om * float(a @ inv @ a)
    E = om * float(a @ inv @ br)
    F0 = om * model.r + 0.5 * om * float(br @ inv @ br)
    h = T / steps

    def rhs(j, f, g, hh):
        Acoef = Aj[j]
        Bcoef = Bj[j]
        df = Acoef * f * f + 2.0 * Bcoef * f + C
        dg = Bcoef * g + Dj[j] * f + Acoef * f * g + E
        dh = F0 + Dj[j] * g + 0.5 * Qj[j] * f + 0.5 * Acoef * g * g
        return df, dg, dh

    f, g, hh = _rk4_backward(steps, h, rhs)
    t = np.linspace(0.0, T, steps + 1)
    return OdeGrid(t, f, g, hh, "partial", pref.delta, pref.epsilon)


def _align_variance(full_grid: OdeGrid, variance: FilterVarianceCurve) -> FilterVarianceCurve:
    t = full_grid.t
    if variance.steps == 2 * (len(t) - 1):
        variance = variance.subsample(2)
    if len(variance.t) != len(t) or not np.allclose(variance.t, t, atol=1e-10):
        raise ValidationError("variance curve and coefficient grid do not match")
    return variance


def information_gap_tail(full_grid: OdeGrid, variance: FilterVarianceCurve,
                         model: MarketModel, pref: PreferenceSpec) -> np.ndarray:
    """Tail integral (node j to T) of the information-gap integrand.

    The integrand is P/(1 - P f) times the quadratic form of f times the
    factor-noise row plus the drift loading, weighted by the inverse effective
    risk matrix.  It drives both the full-to-partial constant-term map and the
    loss-of-utility and efficiency formulas.
    """
    variance = _align_variance(full_grid, variance)
    p = variance.p
    fh = full_grid.f
    den = 1.0 - p * fh
    if np.any(den <= BARRIER_TOLERANCE):
        raise SingularTransform("1 - P(t) f(t) fell below tolerance")
    tm = model.transformed
    inv = effective_risk(model, pref).inverse(pref)
    u = tm.cross_sy
    w = fh[:, None] * u[None, :] + model.a[None, :]
    quad = np.einsum("jn,nm,jm->j", w, inv, w)
    return _right_cumtrapz(full_grid.t, p / den * quad)


def partial_from_full(full_grid: OdeGrid, variance: FilterVarianceCurve,
                      model: MarketModel, pref: PreferenceSpec) -> OdeGrid:
    """Partial-information coefficients obtained algebraically from the
    full-information solution and the variance curve.

    Independent of solve_partial_info; the two routes agreeing is the central
    consistency check of the solver stack.
    """
    if full_grid.system != "full":
        raise ValidationError("first argument must be a full-information grid")
    variance = _align_variance(full_grid, variance)
    t = full_grid.t
    p = variance.p
    fh, gh, hh = full_grid.f, full_grid.g, full_grid.h
    den = 1.0 - p * fh
    if np.any(den <= BARRIER_TOLERANCE):
        raise SingularTransform("1 - P(t) f(t) fell below tolerance")
    tail = information_gap_tail(full_grid, variance, model, pref)
    fbar = fh / den
    gbar = gh / den
    hbar = hh - 0.5 * np.log(den) + 0.5 * gh ** 2 * p / den \
        - 0.5 * (1.0 - pref.delta) * tail
    return OdeGrid(t, fbar, gbar, hbar, "partial", pref.delta, pref.epsilon)


@dataclass(frozen=True)
class LogCoefficients:
    """Closed-form value-function coefficients for logarithmic utility.

    ``f``, ``g`` and ``h`` are the full-information coefficients; ``h_tilde``
    is the partial-information constant term, which depends on the filter
    variance through an integral evaluated by the trapezoid rule.

    ``h_tilde`` variants:
      * ``"consistent"`` (default): assembled from the filtered-factor moment
        formulas, h - (q/2) * (int_t^T P ds - P(t) (e^{2 lam (T-t)} - 1) / (2 lam))
        with q the premium quadratic form.  This is the variant consistent
        with the loss-of-utility identity and with Monte Carlo.
      * ``"printed"``: plus sign on the bracket and the trailing factor 1/2.
      * ``"lambda"``: plus sign on the bracket with the trailing 1/(2 lam).
    """

    T: float
    lam: float
    beta: float
    sigma_y: float
    r: float
    quad_a: float          # a' Theta^-1 a
    cross_ab: float        # a' Theta^-1 (b - r 1)
    quad_b: float          # (b - r 1)' Theta^-1 (b - r 1)

    def _tau(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.T + 1e-12):
            raise OutOfGrid(f"time outside [0, {self.T}]")
        return self.T - np.clip(t, 0.0, self.T)

    def f(self, t):
        tau = self._tau(t)
        return self.quad_a / (2.0 * self.lam) * np.expm1(2.0 * self.lam * tau)

    def g(self, t):
        tau = self._tau(t)
        e1 = np.expm1(self.lam * tau)
        return (self.cross_ab / self.lam * e1
                + self.beta * self.quad_a / (2.0 * self.lam ** 2) * e1 ** 2)

    def h(self, t):
        tau = self._tau(t)
        lam = self.lam
        e1 = np.expm1(lam * tau)
        e2 = np.expm1(2.0 * lam * tau)
        base = (self.r + 0.5 * self.quad_b) * tau
        mid = self.beta * self.cross_ab / lam * (e1 / lam - tau)
        quad = self.beta ** 2 * self.quad_a / (2.0 * lam ** 2) * (
            e2 / (2.0 * lam) - 2.0 / lam * e1 + tau)
        noise = 0.5 * self.sigma_y ** 2 * self.quad_a / (2.0 * lam) * (
            e2 / (2.0 * lam) - tau)
        return base + mid + quad + noise

    def h_tilde(self, t, variance: FilterVarianceCurve,
                variant: str = "consistent"):
        tau = self._tau(t)
        tail = np.interp(np.clip(t, 0.0, self.T), variance.t, variance.integral_tail())
        p_t = variance.p_at(np.clip(np.asarray(t, dtype=float), 0.0, self.T))
        e2 = np.expm1(2.0 * self.lam * tau)
        if variant == "consistent":
            return self.h(t) - 0.5 * self.quad_a * (tail - p_t * e2 / (2.0 * self.lam))
        if variant == "printed":
            return self.h(t) + 0.5 * self.quad_a * (tail - p_t * e2 / 2.0)
        if variant == "lambda":
            return self.h(t) + 0.5 * self.quad_a * (tail - p_t * e2 / (2.0 * self.lam))
        raise ValidationError(f"unknown h_tilde variant {variant!r}")


def log_closed_forms(model: MarketModel, pref: PreferenceSpec, T: float) -> LogCoefficients:
    """Closed-form log-utility coefficients (requires lam != 0)."""
    if abs(model.lam) < LAMBDA_TOLERANCE:
        raise LambdaZero("log closed forms divide by the mean-reversion rate")
    if not pref.is_log:
        raise ValidationError("log_closed_forms requires log utility")
    inv = effective_risk(model, pref).theta_log_inv
    a = model.a
    br = model.b - model.r
    return LogCoefficients(
        T=float(T), lam=model.lam, beta=model.beta, sigma_y=model.sigma_y,
        r=model.r,
        quad_a=float(a @ inv @ a),
        cross_ab=float(a @ inv @ br),
        quad_b=float(br @ inv @ br),
    )


def ou_moments(model: MarketModel, t: float, T: float, state: float,
               mode: str = "latent",
               variance: FilterVarianceCurve | None = None):
    """Integrated first and second moments of the factor from t to T.

    ``mode="latent"`` integrates the moments of the factor itself started at
    ``state``; ``mode="filtered"`` integrates the moments of its conditional
    mean, whose extra variance term is a quadrature over the gain curve.
    """
    lam, beta, sy = model.lam, model.beta, model.sigma_y
    if abs(lam) < LAMBDA_TOLERANCE:
        raise LambdaZero("moment formulas divide by the mean-reversion rate")
    if not 0.0 <= t <= T + 1e-12:
        raise OutOfGrid("need 0 <= t <= T")
    tau = T - t
    phi1 = np.expm1(lam * tau) / lam
    phi2 = np.expm1(2.0 * lam * tau) / (2.0 * lam)
    mean_shift = state + beta / lam
    m1 = state * phi1 + beta / lam * (phi1 - tau)
    m2_mean = mean_shift ** 2 * phi2 - 2.0 * beta / lam * mean_shift * phi1 \
        + (beta / lam) ** 2 * tau
    if mode == "latent":
        m2 = m2_mean + sy ** 2 / (2.0 * lam) * (phi2 - tau)
    elif mode == "filtered":
        if variance is None:
            raise ValidationError("filtered mode needs a FilterVarianceCurve")
        tm = model.transformed
        minv = tm.cov_s_inv
        quad = np.einsum("jn,nm,jm->j", variance.pbar, minv, variance.pbar)
        weight = np.expm1(2.0 * lam * (T - variance.t)) / (2.0 * lam)
        mask = variance.t >= t - 1e-12
        tt, yy = variance.t[mask], (quad * weight)[mask]
        m2 = m2_mean + float(np.trapz(yy, tt))
    else:
        raise ValidationError(f"unknown mode {mode!r}")
    return float(m1), float(m2)


def richardson_ratio(solve, steps: int) -> float:
    """Order diagnostic: ratio of successive step-halving errors at t = 0."""
    c1 = solve(steps)
    c2 = solve(2 * steps)
    c4 = solve(4 * steps)
    num = abs(c1 - c2)
    den = abs(c2 - c4)
    if den == 0:
        return np.inf
    return float(num / den)
