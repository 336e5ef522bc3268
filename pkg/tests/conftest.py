import numpy as np
import pytest

from sgdvar import baselines, estimator
from sgdvar.schedule import StepParams


def run_gradient_stream(params: StepParams, n: int, d: int, seed: int):
    """Drive the estimator on standard-normal gradients, recording the path."""
    gen = np.random.default_rng(seed)
    state = estimator.init(gen.normal(size=d), params)
    iterates = [state.iterate.copy()]
    averages = [state.average.copy()]
    while state.n < n:
        estimator.step(state, gen.normal(size=d))
        iterates.append(state.iterate.copy())
        averages.append(state.average.copy())
    traj = baselines.Trajectory(np.array(iterates), np.array(averages))
    return state, traj


def valid_params(gen: np.random.Generator) -> StepParams:
    """One admissible (c_gamma, alpha, s, delta, mu) tuple."""
    alpha = gen.uniform(0.55, 0.9)
    s = gen.uniform((1.0 + alpha) / 2.0 + 0.005, 0.995)
    delta = gen.uniform(s / 2.0 + 0.005, (1.0 + s) / 2.0 - 0.005)
    mu = float(gen.choice([0.0, 0.0, 0.3, 1.0, 2.5]))
    return StepParams(gen.uniform(0.5, 2.0), alpha, s, delta, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
