import numpy as np
import pytest

from otguide import _accel, kernels

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = ["numpy"] + (["numba"] if _accel.HAVE_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    if request.param == "numba":
        return dict(
            sinkhorn_log=kernels.sinkhorn_log_numba,
            crop=kernels.crop_resize_numba,
            adjoint=kernels.crop_resize_adjoint_numba,
        )
    return dict(
        sinkhorn_log=kernels.sinkhorn_log_numpy,
        crop=kernels.crop_resize_numpy,
        adjoint=kernels.crop_resize_adjoint_numpy,
    )


def random_unit(rng, *shape):
    x = rng.standard_normal(shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)
