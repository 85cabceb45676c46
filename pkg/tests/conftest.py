import numpy as np
import pytest

from carbonppi import MarketModel, load_default_config

HORIZON = 5.0


@pytest.fixture(scope="session")
def baseline_config():
    return load_default_config()


@pytest.fixture(scope="session")
def table1_model(baseline_config):
    """Four-asset model with the base (scenario 2) drift loading."""
    return baseline_config.scenario_model("2")


@pytest.fixture(scope="session")
def scenario_models(baseline_config):
    return {name: baseline_config.scenario_model(name)
            for name in baseline_config.scenarios}


def two_asset_model(a1=0.08, a2=0.055, b1=-0.03, b2=0.01, s1=0.19, s2=0.21,
                    rho1y=0.0, rho2y=0.0, lam=-0.5, beta=0.5, sigma_y=0.05,
                    r=0.01, gamma0=1.0, p0=0.0025) -> MarketModel:
    """One green and one brown stock driven by independent Brownian motions."""
    R = np.array([
        [1.0, 0.0, rho1y],
        [0.0, 1.0, rho2y],
        [rho1y, rho2y, 1.0],
    ])
    return MarketModel(n=2, k=1, a=np.array([a1, a2]), b=np.array([b1, b2]),
                       sigma=np.array([s1, s2]), R=R, r=r, lam=lam, beta=beta,
                       sigma_y=sigma_y, gamma0=gamma0, p0=p0)


def degenerate_factor_model(n=3, p0=0.0, sigma_y=1e-12) -> MarketModel:
    """Uncorrelated drivers, no factor loading: the factor is irrelevant."""
    R = np.eye(n + 1)
    return MarketModel(n=n, k=1, a=np.zeros(n),
                       b=np.array([0.03, 0.05, 0.04])[:n],
                       sigma=np.array([0.2, 0.25, 0.3])[:n], R=R, r=0.01,
                       lam=-0.5, beta=0.5, sigma_y=sigma_y, gamma0=1.0, p0=p0)
