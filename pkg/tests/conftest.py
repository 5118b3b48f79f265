import numpy as np
import pytest

from tridentnet import cvae, dataset
from tridentnet._kernels import pykernels, select_backend


def _backends():
    backends = [pykernels]
    try:
        compiled = select_backend("cython")
    except ImportError:
        return backends
    return backends + [compiled]


@pytest.fixture(params=_backends(), ids=lambda b: b.NAME)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def tiny_config():
    return cvae.ModelConfig(
        horizon=3,
        num_modes=3,
        scene_channels=6,
        plan_size=8,
        scene_size=8,
        conv_channels=(4, 4),
        enc_dense=4,
        embed_dim=4,
        recog_hidden=4,
        dec_hidden=4,
    )


def make_tiny_inputs(seed: int, horizon: int = 3):
    rng = np.random.default_rng(seed)
    plan = (rng.random((2, 8, 8)) > 0.5).astype(np.float64)
    scene = np.zeros((6, 8, 8))
    classes = rng.integers(0, 6, (8, 8))
    scene[classes, np.arange(8)[:, None], np.arange(8)[None, :]] = 1.0
    y = rng.standard_normal((horizon, 2)) * 4.0
    return plan, scene, y


@pytest.fixture(scope="session")
def straight_world():
    return dataset.gen_synthetic_world(0, "straight")


@pytest.fixture(scope="session")
def intersection_world():
    return dataset.gen_synthetic_world(0, "intersection", maneuver="left")
