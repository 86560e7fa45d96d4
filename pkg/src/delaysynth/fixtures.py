"""Benchmark plants, starting gains and reference gains used by tests, scripts and the CLI."""
import numpy as np

from .synthesis import DelaySystem

# Plant with tr(A) = 0: one unstable and one stable mode.
EXAMPLE1_A = np.array([[0.2, 0.0], [0.2, -0.2]])
EXAMPLE1_B = np.array([[-1.0, 0.0], [-1.0, -1.0]])
EXAMPLE1_K0 = np.array([[1.2, 0.0], [-1.0, 1.8]])

# Reference state-feedback gains per order N with their certified / spectral delay bounds.
EXAMPLE1_REFERENCE_GAINS = {
    1: np.array([[0.1979, 0.0057], [-0.1195, 0.0383]]),
    2: np.array([[0.2011, 0.0001], [-0.1463, 0.0915]]),
    3: np.array([[0.2005, 0.0], [-0.1375, 0.0744]]),
}
EXAMPLE1_REFERENCE_HMAX = {1: 4.986, 2: 4.980, 3: 4.991}
EXAMPLE1_REFERENCE_SPECTRAL = {1: 4.987, 2: 4.980, 3: 4.991}

# Single-input plant (B not invertible).
EXAMPLE2_A = np.array([[0.0, 1.0], [-2.0, -0.1]])
EXAMPLE2_B = np.array([[0.0], [1.0]])
EXAMPLE2_K0 = np.array([[-1.0, -5.0]])


def example1() -> DelaySystem:
    return DelaySystem(EXAMPLE1_A, EXAMPLE1_B)


def example2() -> DelaySystem:
    return DelaySystem(EXAMPLE2_A, EXAMPLE2_B)


def reference_delayed_matrix(N: int) -> np.ndarray:
    """``A_d = B K`` for the reference gain of order ``N``."""
    return EXAMPLE1_B @ EXAMPLE1_REFERENCE_GAINS[N]
