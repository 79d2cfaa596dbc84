import numpy as np
import pytest

from twoscale import NoiseSpec, SchedulePair, StepSchedule, SystemSpec


@pytest.fixture
def sys_a() -> SystemSpec:
    """Scalar reference system: Delta = 1, Q = 2, fixed point (-1, 3)."""
    return SystemSpec(
        A11=[[2.0]],
        A12=[[1.0]],
        A21=[[1.0]],
        A22=[[1.0]],
        b1=[1.0],
        b2=[2.0],
        noise=NoiseSpec(Gamma11=[[1.0]], Gamma12=[[0.0]], Gamma22=[[1.0]]),
    )


@pytest.fixture
def sys_a_pair() -> SchedulePair:
    """Reference schedules with ratio limit 0 and inverse-growth limit 0.1."""
    return SchedulePair(
        slow=StepSchedule(base=1.0, horizon_scale=10.0, exponent=1.0),
        fast=StepSchedule(base=1.0, horizon_scale=10.0, exponent=0.7),
    )


@pytest.fixture
def mc_pair() -> SchedulePair:
    """1/(k+1) slow schedule: fast transients, inverse-growth limit 1."""
    return SchedulePair(
        slow=StepSchedule(base=1.0, horizon_scale=1.0, exponent=1.0),
        fast=StepSchedule(base=1.0, horizon_scale=10.0, exponent=0.7),
    )


def random_stable_system(
    rng: np.random.Generator,
    n: int | None = None,
    m: int | None = None,
    drift_margin: float = 0.8,
    distribution: str = "gaussian",
) -> SystemSpec:
    """Random system whose fast block and reduced drift are comfortably stable.

    Eigenvalue real parts of A22 sit above 0.6 and those of the reduced drift
    above drift_margin, leaving room for inverse-growth limits up to 1 in the
    shifted stability condition.
    """
    n = int(rng.integers(1, 7)) if n is None else n
    m = int(rng.integers(1, 7)) if m is None else m

    A22 = rng.standard_normal((m, m))
    shift = max(0.0, -float(np.min(np.linalg.eigvals(A22).real))) + 0.6
    A22 = A22 + shift * np.eye(m)

    A12 = rng.standard_normal((n, m))
    A21 = rng.standard_normal((m, n))
    A11 = rng.standard_normal((n, n))
    delta = A11 - A12 @ np.linalg.solve(A22, A21)
    shift = max(0.0, -float(np.min(np.linalg.eigvals(delta).real))) + drift_margin
    A11 = A11 + shift * np.eye(n)

    d = n + m
    L = rng.standard_normal((d, d)) / np.sqrt(d)
    J = L @ L.T + 0.05 * np.eye(d)
    return SystemSpec(
        A11=A11,
        A12=A12,
        A21=A21,
        A22=A22,
        b1=rng.standard_normal(n),
        b2=rng.standard_normal(m),
        noise=NoiseSpec(
            Gamma11=J[:n, :n],
            Gamma12=J[:n, n:],
            Gamma22=J[n:, n:],
            distribution=distribution,
        ),
    )
