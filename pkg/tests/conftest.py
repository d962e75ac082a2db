import numpy as np
import pytest

from perishsim import CostRates, DemandScenario, EnvParams, NoiseModel


def random_params(rng: np.random.Generator, allow_zero_lead=True) -> EnvParams:
    m = int(rng.integers(1, 5))
    lead_lo = 0 if allow_zero_lead else 1
    L = int(rng.integers(lead_lo, 4))
    T = L + int(rng.integers(4, 16))
    Q = float(rng.choice([1.0, 5.0, 20.0]))
    n_max = [None, 4, 6][int(rng.integers(0, 3))]
    yield_max = float(rng.choice([0.0, 0.1, 0.25]))
    batch_costs = [(0.0,), (0.0, 5.0, 8.0, 9.0, 10.0)][int(rng.integers(0, 2))]
    return EnvParams(
        horizon=T,
        lead_time=L,
        lifetime=m,
        batch_size=Q,
        max_batches=n_max,
        yield_max=yield_max,
        batch_costs=batch_costs,
    )


def random_rates(rng: np.random.Generator) -> CostRates:
    c = float(rng.choice([0.0, 1.0, 2.0, 5.0]))
    return CostRates(
        c_hat=c,
        h_hat=float(rng.uniform(0.5, 2.0)),
        b_hat=c + float(rng.uniform(5.0, 100.0)),
        w_hat=float(rng.uniform(0.0, 5.0)),
    )


def random_scenario(rng: np.random.Generator, horizon: int) -> DemandScenario:
    forecast = rng.uniform(0.0, 12.0, size=horizon)
    noise = NoiseModel(kind="balanced", level=float(rng.uniform(0.0, 0.4)))
    return DemandScenario(forecast=forecast, noise=noise)


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
