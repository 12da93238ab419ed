import numpy as np
import pytest

from phaseavg import (
    SolverSettings,
    SpringParams,
    initial_state,
    swing_spring_model,
)

START_POSITIONS = (0.006, 0.0, 0.012)
START_VELOCITIES = (0.0, 0.00489, 0.0)


@pytest.fixture(scope="session")
def params():
    return SpringParams()


@pytest.fixture(scope="session")
def model(params):
    return swing_spring_model(params)


@pytest.fixture(scope="session")
def u0(params):
    return initial_state(START_POSITIONS, START_VELOCITIES, params)


@pytest.fixture(scope="session")
def settings():
    return SolverSettings()


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
