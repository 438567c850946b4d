import numpy as np
import pytest

from safesynth import ControlSystem, LayerStack, SafeRegion
from safesynth.config import assemble


def zero_system(dim=2, num_inputs=1, disturbance=None):
    """f == 0 with identity-flow reach boxes."""
    inputs = [[float(k)] for k in range(num_inputs)]
    return ControlSystem(dim, inputs, lambda x, u: np.zeros_like(x),
                         disturbance=disturbance,
                         growth_matrices=[np.zeros((dim, dim))],
                         name="zero")


@pytest.fixture(scope="session")
def dcdc_desk_literal():
    """Desk DC-DC exactly as pinned by the acceptance battery (tau kept at
    the fine-grid value; the abstract game is empty at this coarseness)."""
    return assemble({"system": "dcdc", "eta1": "0.005 0.005",
                     "tau1": "0.0625", "layers": "3"})


@pytest.fixture(scope="session")
def dcdc_desk():
    """Desk DC-DC with the geometry-preserving scaling (eta and tau both
    10x the fine grid), which has a nonempty winning set."""
    return assemble({"system": "dcdc", "eta1": "0.005 0.005",
                     "tau1": "0.625", "layers": "3"})


@pytest.fixture(scope="session")
def spiral():
    return assemble({"system": "spiral"})


@pytest.fixture
def toy_stack():
    return LayerStack([0.0, 0.0], [1.0, 1.0], [0.125, 0.125], 0.1, 2)


@pytest.fixture
def toy_region():
    return SafeRegion([0.0, 0.0], [1.0, 1.0])
