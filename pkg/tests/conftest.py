import numpy as np
import pytest

from dotpulse import DotGeometry, MicroSpectral, QubitParams, rate_curve_from_model
from dotpulse.dynamics import PulseSchedule


@pytest.fixture(scope="session")
def paper_qubit():
    """Delta = 1 ueV, T = 300 mK."""
    return QubitParams(delta=1e-3, temperature=0.3)


@pytest.fixture(scope="session")
def fit_geometry():
    """E0 = 1.7 meV, L = 45 nm, assumed thickness 3 nm."""
    return DotGeometry.from_thickness(e0=1.7, thickness_nm=3.0, half_separation=45.0)


@pytest.fixture(scope="session")
def micro_model(fit_geometry):
    return MicroSpectral(geometry=fit_geometry)


@pytest.fixture(scope="session")
def paper_template():
    """Square wave with the experimental 43 Hz dither."""
    return PulseSchedule(
        offset=0.0,
        toggle_amplitude=0.21,
        toggle_freq=215.0,
        dither_amplitude=0.06,
        dither_freq=43.0,
    )


@pytest.fixture(scope="session")
def micro_truth_curve(paper_qubit, micro_model):
    """Microscopic relaxation-rate curve sampled for fast evaluation."""
    return rate_curve_from_model(paper_qubit, micro_model, 0.7, n_knots=161)


@pytest.fixture(scope="session")
def paper_freqs():
    return 43.0 * np.array([5, 12, 30, 75, 150, 302])
