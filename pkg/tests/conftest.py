import pytest

from prunekit import storage
from prunekit.graph import build_cnn14_preset
from prunekit.importance import score_model


@pytest.fixture(scope="session")
def cnn14():
    return build_cnn14_preset()


@pytest.fixture(scope="session")
def cnn14_checkpoint(cnn14):
    return storage.init_random(cnn14, seed=0)


@pytest.fixture(scope="session")
def cnn14_weight_norm_report(cnn14, cnn14_checkpoint):
    return score_model(cnn14, cnn14_checkpoint.tensors, "weight_norm")
