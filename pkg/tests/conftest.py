import numpy as np
import pytest

from attribound._kernels import jit as jit_kernels
from attribound._kernels import ref as ref_kernels


@pytest.fixture(params=["numba", "numpy"], ids=["numba", "numpy"])
def kernels_backend(request):
    """Run kernel-level tests against both backends."""
    return jit_kernels if request.param == "numba" else ref_kernels


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
