import numpy as np
import pytest

from carbonppi import (
    MarketModel,
    PreferenceSpec,
    decompose_correlation,
    discriminant,
    effective_risk,
    is_admissible_delta,
    two_asset_delta_star,
)
from carbonppi.errors import (
    AsymmetricInput,
    NotPositiveDefinite,
    ValidationError,
)

from conftest import two_asset_model


def _model_with_R(R, n=None, **overrides):
    n = R.shape[0] - 1 if n is None else n
    kwargs = dict(n=n, k=1, a=np.full(n, 0.05), b=np.full(n, 0.01),
                  sigma=np.linspace(0.15, 0.25, n), R=R, r=0.01, lam=-0.5,
                  beta=0.5, sigma_y=0.05, gamma0=1.0, p0=0.0025)
    kwargs.update(overrides)
    return MarketModel(**kwargs)


class TestDecomposeCorrelation:
    def test_identity_correlation(self):
        model = _model_with_R(np.eye(3), n=2)
        tm = decompose_correlation(model)
        assert np.array_equal(tm.L, np.eye(3))
        assert np.allclose(tm.sigma_tilde_s, np.diag(model.sigma))
        assert np.allclose(tm.sigma_tilde_y, 0.0)
        assert tm.sigma_tilde_y_scalar == model.sigma_y

    def test_table1_reconstruction(self, table1_model):
        tm = table1_model.transformed
        R = table1_model.R
        assert np.abs(tm.L @ tm.L.T - R).max() < 1e-12
        # unit first pivot makes the first column of L equal that of R
        assert np.allclose(tm.L[:, 0], R[:, 0], atol=1e-15)
        assert np.all(np.diag(tm.L) > 0)

    def test_covariance_reconstruction(self, table1_model):
        tm = table1_model.transformed
        sig = table1_model.sigma
        R = table1_model.R
        n = table1_model.n
        expected_cov = np.outer(sig, sig) * R[:n, :n]
        assert np.allclose(tm.cov_s, expected_cov, atol=1e-14)
        expected_cross = sig * table1_model.sigma_y * R[:n, n]
        assert np.allclose(tm.cross_sy, expected_cross, atol=1e-14)

    def test_correlation_above_one_rejected(self):
        R = np.array([[1.0, 1.2, 0.0], [1.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(ValidationError):
            _model_with_R(R, n=2)

    def test_asymmetric_rejected(self):
        R = np.array([[1.0, 0.3, 0.0], [0.2, 1.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(AsymmetricInput):
            _model_with_R(R, n=2)

    def test_indefinite_rejected(self):
        R = np.array([
            [1.0, 0.9, 0.9],
            [0.9, 1.0, -0.9],
            [0.9, -0.9, 1.0],
        ])
        assert np.linalg.eigvalsh(R).min() < 0
        with pytest.raises(NotPositiveDefinite):
            _model_with_R(R, n=2)


class TestEffectiveRisk:
    def test_zero_carbon_aversion(self, table1_model):
        pref = PreferenceSpec.crra(0.7, 0.0)
        risk = effective_risk(table1_model, pref)
        assert np.all(risk.penalty == 0.0)
        assert np.allclose(risk.theta_hat, 0.7 * table1_model.transformed.cov_s)

    def test_two_asset_diagonal(self):
        model = two_asset_model()
        pref = PreferenceSpec.crra(0.7, 1.0)
        risk = effective_risk(model, pref)
        s1, s2 = model.sigma
        expected = np.diag([0.7 * s1 ** 2, (1.0 + 0.7) * s2 ** 2])
        assert np.allclose(risk.theta_hat, expected, atol=1e-15)

    def test_table1_spd(self, table1_model):
        pref = PreferenceSpec.log(1.0)
        risk = effective_risk(table1_model, pref)
        assert np.linalg.eigvalsh(risk.theta_log).min() > 0

    def test_random_models_spd(self):
        rng = np.random.default_rng(4)
        for _ in range(1000):
            n = int(rng.integers(2, 6))
            # random correlation through a random-factor Gram matrix
            B = rng.standard_normal((n + 1, n + 3))
            C = B @ B.T + 0.5 * np.eye(n + 1)
            d = np.sqrt(np.diag(C))
            R = C / np.outer(d, d)
            np.fill_diagonal(R, 1.0)
            model = _model_with_R(R, n=n,
                                  k=int(rng.integers(0, n + 1)),
                                  sigma=rng.uniform(0.05, 0.5, n))
            delta = float(rng.uniform(0.05, 5.0))
            if delta == 1.0:
                delta = 1.5
            pref = PreferenceSpec.from_delta(delta, float(rng.uniform(0.0, 3.0)))
            risk = effective_risk(model, pref)
            np.linalg.cholesky(risk.matrix(pref))

    def test_mask_effect_monotone(self, table1_model):
        prev = None
        k = table1_model.k
        for eps in (0.0, 0.5, 1.0, 2.0):
            risk = effective_risk(table1_model, PreferenceSpec.crra(0.7, eps))
            diag = np.diag(risk.theta_hat)
            assert np.all(risk.penalty[:k, :] == 0.0)
            assert np.all(risk.penalty[:, :k] == 0.0)
            if prev is not None:
                assert np.all(diag[k:] > prev[k:])
                assert np.allclose(diag[:k], prev[:k])
            prev = diag


class TestDiscriminant:
    def test_limit_at_one_is_lambda_squared(self, table1_model):
        lam2 = table1_model.lam ** 2
        gaps = [abs(discriminant(table1_model, 1.0 + h, 1.0) - lam2)
                for h in (1e-1, 1e-2, 1e-3)]
        assert gaps[0] > gaps[1] > gaps[2]
        assert gaps[2] < 1e-2
        assert abs(discriminant(table1_model, 1.0 - 1e-3, 1.0) - lam2) < 1e-2

    def test_zero_loading_gives_lambda_squared(self, table1_model):
        model = table1_model.with_drift(np.zeros(table1_model.n))
        for delta in (0.3, 0.7, 2.0, 5.0):
            assert discriminant(model, delta, 1.0) == pytest.approx(model.lam ** 2)

    def test_two_asset_closed_form(self):
        model = two_asset_model()
        a1, a2 = model.a
        s1, s2 = model.sigma
        for delta in (0.3, 0.7, 2.0):
            for eps in (0.0, 1.0, 3.0):
                expected = model.lam ** 2 - (1 - delta) * (
                    a1 ** 2 / (delta * s1 ** 2)
                    + a2 ** 2 / ((delta + eps) * s2 ** 2)
                ) * model.sigma_y ** 2
                assert discriminant(model, delta, eps) == pytest.approx(expected, rel=1e-12)


class TestAdmissibleSet:
    def test_neighbourhood_of_one(self, table1_model):
        assert is_admissible_delta(table1_model, 1.0 + 1e-3, 1.0)
        assert is_admissible_delta(table1_model, 1.0 - 1e-3, 1.0)

    def test_one_excluded(self, table1_model):
        assert not is_admissible_delta(table1_model, 1.0, 1.0)

    def test_low_delta_inadmissible_when_factor_strong(self):
        # strong loading on the brown stock, weak reversion
        model = two_asset_model(a1=0.0, a2=0.5, lam=-0.05, sigma_y=0.5, s2=0.2)
        eps = 1.0
        assert model.lam ** 2 < model.sigma_y ** 2 * 0.5 ** 2 / (eps * 0.2 ** 2)
        dbar = two_asset_delta_star(0.0, 0.5, model.sigma[0], 0.2,
                                    model.lam, model.sigma_y, eps)
        assert 0.0 < dbar < 1.0
        assert not is_admissible_delta(model, dbar / 2.0, eps)
        assert is_admissible_delta(model, (1.0 + dbar) / 2.0, eps)


class TestTwoAssetDeltaStar:
    def test_strong_reversion_zero_cutoff(self):
        # lam^2 >= sigma_y^2 a2^2 / (eps sigma2^2)
        assert two_asset_delta_star(0.0, 0.05, 0.19, 0.21, -0.5, 0.05, 1.0) == 0.0

    def test_no_factor_exposure(self):
        assert two_asset_delta_star(0.0, 0.0, 0.19, 0.21, -0.5, 0.05, 1.0) == 0.0

    @pytest.mark.parametrize("a1,a2,eps", [
        (0.3, 0.2, 1.0), (0.5, 0.1, 0.5), (0.2, 0.4, 2.0), (0.3, 0.2, 0.0),
    ])
    def test_quadratic_root_matches_bisection(self, a1, a2, eps):
        s1, s2, lam, sy = 0.19, 0.21, -0.2, 0.3
        model = two_asset_model(a1=a1, a2=a2, s1=s1, s2=s2, lam=lam, sigma_y=sy)
        star = two_asset_delta_star(a1, a2, s1, s2, lam, sy, eps)
        assert 0.0 <= star < 1.0

        def disc(delta):
            return discriminant(model, delta, eps)

        if star > 0:
            assert disc(star + 1e-6) > 0
            assert disc(star - 1e-6) < 0
            # independent bisection on the sign change
            lo, hi = 1e-9, 1.0 - 1e-9
            assert disc(lo) < 0 < disc(hi)
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if disc(mid) < 0:
                    lo = mid
                else:
                    hi = mid
            assert star == pytest.approx(0.5 * (lo + hi), abs=1e-9)

    def test_cutoff_consistency_for_appendix_setting(self):
        star = two_asset_delta_star(0.0, 0.5, 0.19, 0.2, -0.05, 0.5, 1.0)
        model = two_asset_model(a1=0.0, a2=0.5, s2=0.2, lam=-0.05, sigma_y=0.5)
        assert discriminant(model, star + 1e-6, 1.0) > 0
        assert discriminant(model, star - 1e-6, 1.0) < 0


class TestModelValidation:
    def test_negative_sigma_rejected(self):
        with pytest.raises(ValidationError, match="sigma"):
            two_asset_model(s2=-0.1)

    def test_bad_k(self):
        with pytest.raises(ValidationError):
            MarketModel(n=2, k=3, a=np.zeros(2), b=np.zeros(2),
                        sigma=np.array([0.1, 0.2]), R=np.eye(3), r=0.01,
                        lam=-0.5, beta=0.5, sigma_y=0.05, gamma0=0.0, p0=0.0)

    def test_negative_prior_variance(self):
        with pytest.raises(ValidationError):
            two_asset_model(p0=-1.0)
