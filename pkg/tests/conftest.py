import numpy as np
import pytest

from nmrgrover.hamiltonians import StaticField

TWO_PI = 2 * np.pi
OMEGA_F = TWO_PI * 62.5


@pytest.fixture(scope="session")
def field():
    return StaticField.from_hz(105.79e6, 10840.0)


@pytest.fixture(scope="session")
def omega_f():
    return OMEGA_F
