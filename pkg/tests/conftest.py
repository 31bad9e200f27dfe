import numpy as np
import pytest

from ergodic_mlmc.model import SdeModel


def constant_model(sigma, drift=None, x0=0.0, name="trivial"):
    """Scalar model with constant diffusion ``sigma`` and drift zero unless given."""
    return SdeModel(
        dim_state=1, dim_noise=1,
        drift=drift or (lambda X: np.zeros_like(X)),
        diffusion=lambda X: np.full((len(X), 1, 1), float(sigma)),
        initial_state=np.array([x0]), diffusion_matrix=np.full((1, 1), float(sigma)),
        drift_jacobian=lambda X: np.zeros((len(X), 1, 1)),
        drift_coefficients=None if drift else (0.0,), name=name,
    )


@pytest.fixture
def still_model():
    """f = 0, g = 0: nothing moves."""
    return constant_model(0.0, name="still")


@pytest.fixture
def brownian_model():
    """f = 0, g = 1: pure Brownian motion."""
    return constant_model(1.0, name="brownian")


_CRITERIA = []


@pytest.fixture
def criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion, then assert it."""

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2} ({title}): {detail}"
        _CRITERIA.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_CRITERIA):
            terminalreporter.write_line(line)
