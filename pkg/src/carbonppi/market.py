"""Market model, correlation transform and effective-risk matrices.

The market has ``n`` stocks whose drifts are modulated by a latent
Ornstein-Uhlenbeck factor ``Y``:

    dS_i / S_i = (a_i Y + b_i) dt + sigma_i dW^S_i
    dY         = (lam Y + beta) dt + sigma_y dW^Y

with a correlation matrix ``R`` for the n+1 Brownian drivers.  A Cholesky
factor ``L`` of ``R`` rewrites everything on independent drivers ``Z``:

    dS_i / S_i = (a_i Y + b_i) dt + row_i(sigma_tilde_s) dZ^S
    dY         = (lam Y + beta) dt + sigma_tilde_y dZ^S + sigma_tilde_y_scalar dZ^Y

The first ``k`` stocks are low carbon intensity ("green"); the remaining
``n - k`` are "brown" and carry the carbon penalty ``epsilon``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AsymmetricInput, NotPositiveDefinite, ValidationError

# Smallest acceptable Cholesky pivot when validating a correlation matrix.
PD_TOLERANCE = 1e-10
SYMMETRY_TOLERANCE = 1e-10


def _readonly(x, dtype=float) -> np.ndarray:
    arr = np.array(x, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TransformedModel:
    """Uncorrelated-driver representation derived from the Cholesky factor."""

    L: np.ndarray                      # (n+1, n+1) lower triangular, L L^T = R
    sigma_tilde_s: np.ndarray          # (n, n)  Sigma_S @ L[:n, :n]
    sigma_tilde_y: np.ndarray          # (n,)    sigma_y * L[n, :n]  (row vector)
    sigma_tilde_y_scalar: float        # sigma_y * L[n, n]

    @cached_property
    def cov_s(self) -> np.ndarray:
        """Full asset covariance sigma_tilde_s @ sigma_tilde_s.T."""
        c = self.sigma_tilde_s @ self.sigma_tilde_s.T
        return _readonly((c + c.T) / 2.0)

    @cached_property
    def cov_s_inv(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.cov_s))

    @cached_property
    def cross_sy(self) -> np.ndarray:
        """Covariance vector sigma_tilde_s @ sigma_tilde_y, entry i = sigma_i sigma_y rho_iY."""
        return _readonly(self.sigma_tilde_s @ self.sigma_tilde_y)


@dataclass(frozen=True)
class MarketModel:
    """All market and latent-factor parameters (annualised units)."""

    n: int
    k: int
    a: np.ndarray          # (n,) drift loading on Y, 1/year
    b: np.ndarray          # (n,) drift intercept, 1/year
    sigma: np.ndarray      # (n,) per-asset volatilities, 1/sqrt(year)
    R: np.ndarray          # (n+1, n+1) correlation of the drivers
    r: float               # risk-free rate
    lam: float             # OU mean-reversion coefficient
    beta: float            # OU drift intercept
    sigma_y: float         # OU volatility
    gamma0: float          # prior mean of Y_0
    p0: float              # prior variance of Y_0

    def __post_init__(self):
        object.__setattr__(self, "a", _readonly(self.a))
        object.__setattr__(self, "b", _readonly(self.b))
        object.__setattr__(self, "sigma", _readonly(self.sigma))
        object.__setattr__(self, "R", _readonly(self.R))
        n = self.n
        if not (0 <= self.k <= n):
            raise ValidationError(f"k must lie in [0, n]; got k={self.k}, n={n}")
        for name in ("a", "b", "sigma"):
            if getattr(self, name).shape != (n,):
                raise ValidationError(f"{name} must have shape ({n},)")
        if np.any(self.sigma <= 0):
            raise ValidationError("sigma must be positive")
        if self.sigma_y <= 0:
            raise ValidationError("sigma_y must be positive")
        if self.p0 < 0:
            raise ValidationError("p0 must be nonnegative")
        if self.R.shape != (n + 1, n + 1):
            raise ValidationError(f"R must have shape ({n + 1}, {n + 1})")
        _validate_correlation(self.R)

    @cached_property
    def transformed(self) -> TransformedModel:
        return decompose_correlation(self)

    @property
    def carbon_split(self) -> np.ndarray:
        """Boolean mask, True on brown assets."""
        mask = np.zeros(self.n, dtype=bool)
        mask[self.k:] = True
        return mask

    def with_drift(self, a) -> "MarketModel":
        """Copy of the model with a replaced factor-loading vector."""
        return MarketModel(self.n, self.k, np.asarray(a, dtype=float), self.b,
                           self.sigma, self.R, self.r, self.lam, self.beta,
                           self.sigma_y, self.gamma0, self.p0)


def _validate_correlation(R: np.ndarray) -> None:
    if np.abs(R - R.T).max() > SYMMETRY_TOLERANCE:
        raise AsymmetricInput("correlation matrix is not symmetric")
    if np.abs(np.diag(R) - 1.0).max() > SYMMETRY_TOLERANCE:
        raise ValidationError("correlation matrix must have a unit diagonal")
    if np.abs(R).max() > 1.0 + SYMMETRY_TOLERANCE:
        raise ValidationError("correlation entries must lie in [-1, 1]")


def _cholesky(R: np.ndarray) -> np.ndarray:
    """Lower-triangular Cholesky factor with an explicit pivot tolerance."""
    m = R.shape[0]
    L = np.zeros_like(R)
    for i in range(m):
        pivot = R[i, i] - L[i, :i] @ L[i, :i]
        if pivot <= PD_TOLERANCE:
            raise NotPositiveDefinite(
                f"correlation matrix is not positive definite (pivot {pivot:.3e} at row {i})"
            )
        L[i, i] = np.sqrt(pivot)
        for j in range(i + 1, m):
            L[j, i] = (R[j, i] - L[j, :i] @ L[i, :i]) / L[i, i]
    return L


def decompose_correlation(model: MarketModel) -> TransformedModel:
    """Build the uncorrelated-driver representation from the model's R.

    Raises AsymmetricInput / NotPositiveDefinite on an invalid correlation
    matrix (already enforced at model construction, re-checked here because
    the operation is also usable standalone).
    """
    R = np.asarray(model.R, dtype=float)
    _validate_correlation(R)
    L = _cholesky(R)
    n = model.n
    sigma_tilde_s = np.diag(model.sigma) @ L[:n, :n]
    sigma_tilde_y = model.sigma_y * L[n, :n]
    return TransformedModel(
        L=_readonly(L),
        sigma_tilde_s=_readonly(sigma_tilde_s),
        sigma_tilde_y=_readonly(sigma_tilde_y),
        sigma_tilde_y_scalar=float(model.sigma_y * L[n, n]),
    )


@dataclass(frozen=True)
class PreferenceSpec:
    """Utility choice plus carbon aversion.

    ``delta`` is the relative risk aversion of the power utility
    c**(1-delta) / (1-delta); ``delta == 1`` means logarithmic utility and is
    always routed through the log-specific formulas.
    """

    utility: str           # "crra" | "log"
    delta: float
    epsilon: float

    def __post_init__(self):
        if self.utility not in ("crra", "log"):
            raise ValidationError(f"unknown utility {self.utility!r}")
        if self.utility == "crra" and (self.delta <= 0 or self.delta == 1.0):
            raise ValidationError("crra requires delta in (0,1) or (1,inf)")
        if self.utility == "log" and self.delta != 1.0:
            raise ValidationError("log utility fixes delta = 1")
        if self.epsilon < 0:
            raise ValidationError("epsilon must be nonnegative")

    @classmethod
    def crra(cls, delta: float, epsilon: float) -> "PreferenceSpec":
        return cls("crra", float(delta), float(epsilon))

    @classmethod
    def log(cls, epsilon: float) -> "PreferenceSpec":
        return cls("log", 1.0, float(epsilon))

    @classmethod
    def from_delta(cls, delta: float, epsilon: float) -> "PreferenceSpec":
        """delta == 1 selects log utility, anything else CRRA."""
        if delta == 1.0:
            return cls.log(epsilon)
        return cls.crra(delta, epsilon)

    @property
    def is_log(self) -> bool:
        return self.utility == "log"

    def carbon_mask(self, n: int, k: int) -> np.ndarray:
        """Penalty vector with k leading zeros and epsilon on brown entries."""
        e = np.zeros(n)
        e[k:] = self.epsilon
        return e


@dataclass(frozen=True)
class EffectiveRisk:
    """Penalty and effective risk matrices entering every control formula.

    ``penalty`` is the diagonal carbon-penalty matrix diag(e_i sigma_i^2);
    ``theta_hat`` adds delta times the asset covariance, ``theta_log`` adds
    it once (the log-utility weighting).
    """

    penalty: np.ndarray
    theta_hat: np.ndarray
    theta_log: np.ndarray

    @cached_property
    def theta_hat_inv(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.theta_hat))

    @cached_property
    def theta_log_inv(self) -> np.ndarray:
        return _readonly(np.linalg.inv(self.theta_log))

    def matrix(self, pref: PreferenceSpec) -> np.ndarray:
        return self.theta_log if pref.is_log else self.theta_hat

    def inverse(self, pref: PreferenceSpec) -> np.ndarray:
        return self.theta_log_inv if pref.is_log else self.theta_hat_inv


def effective_risk(model: MarketModel, pref: PreferenceSpec) -> EffectiveRisk:
    """Carbon penalty diag(e_i sigma_i^2) and the risk matrices built on it.

    The per-asset volatility matrix is diagonal, so masking its square by the
    carbon-aversion vector touches diagonal entries only.
    """
    tm = model.transformed
    e = pref.carbon_mask(model.n, model.k)
    penalty = np.diag(e * model.sigma ** 2)
    cov = tm.cov_s
    return EffectiveRisk(
        penalty=_readonly(penalty),
        theta_hat=_readonly(penalty + pref.delta * cov),
        theta_log=_readonly(penalty + cov),
    )


def discriminant(model: MarketModel, delta: float, epsilon: float) -> float:
    """Discriminant of the scalar Riccati equation at risk aversion delta.

    Computed as B**2 - A*C for the quadratic A f^2 + 2 B f + C appearing in
    the backward equation, so that the value at delta -> 1 is lam**2.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    tm = model.transformed
    pref = PreferenceSpec.from_delta(delta, epsilon)
    inv = effective_risk(model, pref).inverse(pref)
    u = tm.cross_sy                       # (n,)  sigma_tilde_s @ sigma_tilde_y
    one_minus = 1.0 - delta
    A = one_minus * (u @ inv @ u) + model.sigma_y ** 2
    B = one_minus * (u @ inv @ model.a) + model.lam
    C = one_minus * (model.a @ inv @ model.a)
    return float(B * B - A * C)


def is_admissible_delta(model: MarketModel, delta: float, epsilon: float) -> bool:
    """True iff delta is a CRRA risk aversion with a bounded Riccati solution."""
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if delta == 1.0:
        return False
    return discriminant(model, delta, epsilon) > 0.0


def two_asset_delta_star(a1: float, a2: float, sigma1: float, sigma2: float,
                         lam: float, sigma_y: float, epsilon: float) -> float:
    """Critical risk aversion for two uncorrelated assets, factor-independent.

    Returns delta_star in [0, 1) such that the Riccati discriminant is
    positive for every delta > delta_star.  With no factor exposure at all the
    discriminant is lam**2 everywhere, so the degenerate answer is zero.
    """
    if sigma1 <= 0 or sigma2 <= 0 or sigma_y <= 0:
        raise ValidationError("volatilities must be positive")
    if a1 == 0.0 and a2 == 0.0:
        return 0.0
    if a1 == 0.0:
        if epsilon > 0 and lam ** 2 >= sigma_y ** 2 * a2 ** 2 / (epsilon * sigma2 ** 2):
            return 0.0
        dbar = (a2 ** 2 * sigma_y ** 2 - epsilon * lam ** 2 * sigma2 ** 2) / \
               (lam ** 2 * sigma2 ** 2 + a2 ** 2 * sigma_y ** 2)
        return max(dbar, 0.0)
    s1, s2, sy = sigma1 ** 2, sigma2 ** 2, sigma_y ** 2
    c2 = lam ** 2 * s1 * s2 + (a1 ** 2 * s2 + a2 ** 2 * s1) * sy
    c1 = epsilon * lam ** 2 * s1 * s2 - ((1.0 - epsilon) * a1 ** 2 * s2 + a2 ** 2 * s1) * sy
    c0 = -epsilon * a1 ** 2 * s2 * sy
    roots = np.roots([c2, c1, c0])
    real = sorted(float(x.real) for x in roots if abs(x.imag) < 1e-12)
    positive = [x for x in real if x > 0]
    if not positive:
        # epsilon == 0 collapses the constant term; the nonzero root is the cutoff
        return max(real[-1], 0.0) if real else 0.0
    return positive[0]
