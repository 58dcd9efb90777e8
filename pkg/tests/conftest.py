import numpy as np
import pytest

from lightnet.data import synth_sar_generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tiny_dataset():
    """10 classes x 12 train + 6 test chips at 64x64 (fast shared fixture)."""
    train, test, manifest = synth_sar_generate(
        num_classes=10, per_class_train=12, per_class_test=6,
        resolution=64, seed=7,
    )
    return train, test, manifest
