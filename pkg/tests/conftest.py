import numpy as np
import pytest

from msstab import ChannelSpec, StateSpace, synthesize


@pytest.fixture(scope="session")
def example_plant() -> StateSpace:
    """Unstable two-state benchmark plant used throughout the suite."""
    return StateSpace([[1.2, 0.0], [1.0, 1.1]], [[1.0], [0.0]], [[1.0, 1.0]], [[0.0]])


@pytest.fixture(scope="session")
def example_channel() -> ChannelSpec:
    """Three-tap delay channel of the benchmark example."""
    return ChannelSpec([0.6, 0.3, 0.1], [0.6, 0.4, 0.0])


@pytest.fixture(scope="session")
def optimal_design(example_plant, example_channel):
    """Synthesized optimal controller for the benchmark loop (shared)."""
    return synthesize(example_plant, example_channel)


def scale_controller(K: StateSpace, kappa: float) -> StateSpace:
    return StateSpace(K.A, K.B, kappa * K.C, kappa * K.D)


def random_stable_siso(rng: np.random.Generator, n_max: int = 4,
                       rho_max: float = 0.9) -> StateSpace:
    """Random strictly proper Schur SISO model with spectral radius <= rho_max."""
    n = int(rng.integers(1, n_max + 1))
    A = rng.standard_normal((n, n))
    rho = max(np.max(np.abs(np.linalg.eigvals(A))), 1e-6)
    A *= rng.uniform(0.3, 1.0) * rho_max / rho
    B = rng.standard_normal((n, 1))
    C = rng.standard_normal((1, n))
    return StateSpace(A, B, C, [[0.0]])


def random_channel(rng: np.random.Generator, tau_max: int = 6) -> ChannelSpec:
    tau = int(rng.integers(0, tau_max + 1))
    p = rng.uniform(0.05, 1.0, tau + 1)
    p /= p.sum()
    # nudge the sum exactly onto 1 so the strict PMF validation passes
    p[-1] += 1.0 - p.sum()
    a = rng.uniform(-2.0, 2.0, tau + 1)
    return ChannelSpec(p, a)
