import numpy as np
import pytest

from voxenc.dataio import FeatureMatrix, ResponseMatrix


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def feature_100hz(rng):
    data = rng.standard_normal((6000, 3))
    return FeatureMatrix(data, rate_hz=100.0, label="test")


@pytest.fixture
def raw_response(rng):
    data = rng.standard_normal((300, 5)) + np.linspace(0, 2, 300)[:, None]
    return ResponseMatrix(data, tr_seconds=2.0, preprocessed=False)
