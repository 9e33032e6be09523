import os
from pathlib import Path

import numpy as np
import pytest
from fractal_ae import EncoderDecoder, Hyperparams


def pytest_addoption(parser):
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="run reproduction tests on real datasets",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


class FiniteDiff:
    STEP = 1e-5

    @staticmethod
    def gradient(f, x):
        """Central differences of the scalar function `f` at array `x`."""
        grad = np.zeros_like(x)
        flat = x.reshape(-1)
        out = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + FiniteDiff.STEP
            plus = f()
            flat[i] = orig - FiniteDiff.STEP
            minus = f()
            flat[i] = orig
            out[i] = (plus - minus) / (2 * FiniteDiff.STEP)
        return grad

    @staticmethod
    def rel_error(analytic, numeric):
        scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic), 1e-8)
        return np.linalg.norm(analytic - numeric) / scale


@pytest.fixture
def finite_diff():
    return FiniteDiff


class Instances:
    @staticmethod
    def random(seed, n=None, m=None, d=None, k=None):
        """A random (x, w, ed, hp) problem with positive weights, all sizes <= 10."""
        gen = np.random.default_rng(seed)
        n = n or int(gen.integers(2, 11))
        m = m or int(gen.integers(2, 11))
        d = d or int(gen.integers(1, 11))
        k = k or int(gen.integers(1, m + 1))
        x = gen.uniform(0, 1, (n, m))
        w = gen.uniform(0.2, 1.5, m)
        ed = EncoderDecoder(gen.normal(0, 0.5, (m, d)), gen.normal(0, 0.5, (d, m)))
        return x, w, ed, Hyperparams(k=k, d=d)

    @staticmethod
    def identity(m=4, n=20, seed=0):
        """Data that the identity pipeline m=d=k, w=1, W_E=W_D=I reproduces."""
        x = np.random.default_rng(seed).uniform(0, 1, (n, m))
        ed = EncoderDecoder(np.eye(m), np.eye(m))
        return x, np.ones(m), ed, Hyperparams(k=m, d=m)


@pytest.fixture
def instances():
    return Instances


def _env_path(name):
    value = os.environ.get(name)
    if not value:
        pytest.skip(f"set {name} to run this test")
    path = Path(value)
    if not path.exists():
        pytest.skip(f"{name}={value} does not exist")
    return path


@pytest.fixture
def mnist_dir():
    return _env_path("FRACTAL_AE_MNIST_DIR")


@pytest.fixture
def coil20_csv():
    return _env_path("FRACTAL_AE_COIL20_CSV")
