import numpy as np
import pytest

from larp.core import KernelDistribution
from larp.lrpe import kernel_from_noise


@pytest.fixture
def image():
    """A 28x28 map, the size of one digit image."""
    return np.random.default_rng(0).random((28, 28))


@pytest.fixture(params=[9, 25], ids=["3x3", "5x5"])
def kernel(request):
    noise = np.random.default_rng(1).random(request.param)
    return kernel_from_noise(KernelDistribution(midpoint=0.1, log_halfwidth=-1.0), noise)
