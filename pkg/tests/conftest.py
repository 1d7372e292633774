import numpy as np
import pytest

from sepkit import kernels


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["numpy", "numba"])
def kernel_set(request):
    return kernels.NUMPY_KERNELS if request.param == "numpy" else kernels.NUMBA_KERNELS


def naive_dft(v):
    n = len(v)
    idx = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(idx, idx) / n) @ v


def direct_convolve(x, h):
    out = np.zeros(len(x) + len(h) - 1)
    for i, xi in enumerate(x):
        out[i:i + len(h)] += xi * h
    return out
