import numpy as np
import pytest

from mirrorcavity import IntegratorConfig, ModelParams, drive_for_occupation, simulate


def strong_family(drive: complex = 0.0) -> ModelParams:
    """Strong-coupling family used by the sweep-based tests."""
    return ModelParams(omega_c=1.0, omega_m=10.0, g=0.3, gamma1=0.1, gamma2=10.0,
                       drive=drive)


def strong_family_at(n: float) -> ModelParams:
    base = strong_family(1.0)
    return strong_family(drive_for_occupation(base, n))


def mc_benchmark() -> ModelParams:
    """Weak-drive benchmark for Monte Carlo versus analytics: weak coupling so
    the linearized covariance is accurate to well below the statistical error."""
    base = ModelParams(omega_c=1.0, omega_m=10.0, g=0.05, gamma1=0.1, gamma2=10.0,
                       drive=1.0)
    return ModelParams(omega_c=1.0, omega_m=10.0, g=0.05, gamma1=0.1, gamma2=10.0,
                       drive=drive_for_occupation(base, 0.05))


@pytest.fixture(scope="session")
def benchmark_mc_stats():
    """One medium reduced-system run at the MC benchmark, shared across tests."""
    params = mc_benchmark()
    config = IntegratorConfig(dt=1e-4, t_end=6.0, n_traj=4000, seed=11)
    return params, config, simulate(params, config, system="reduced")


def random_params(rng: np.random.Generator, g_range=(0.05, 0.6)) -> ModelParams:
    return ModelParams(
        omega_c=rng.uniform(0.2, 3.0),
        omega_m=rng.uniform(0.5, 20.0),
        g=rng.uniform(*g_range),
        gamma1=rng.uniform(0.1, 1.0),
        gamma2=rng.uniform(0.5, 20.0),
        drive=rng.uniform(0.05, 3.0) * np.exp(1j * rng.uniform(0, 2 * np.pi)),
    )
