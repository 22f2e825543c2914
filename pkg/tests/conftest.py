import numpy as np
import pytest

from tsynd.diffcore import SeededRng
from tsynd.harness import RunConfig, make_shapes, train_classifier
from tsynd.models import AutoencoderModel, train_autoencoder


@pytest.fixture(scope="session")
def shapes_small():
    return make_shapes(1000, 0, "train"), make_shapes(200, 0, "val"), make_shapes(200, 0, "test")


@pytest.fixture(scope="session")
def trained_ae(shapes_small):
    train, _, _ = shapes_small
    ae = AutoencoderModel.build(SeededRng(0).child("ae"))
    curve = train_autoencoder(ae, train.images, 5, SeededRng(0))
    ae.curve = curve
    return ae


@pytest.fixture(scope="session")
def trained_clf(shapes_small):
    train, val, _ = shapes_small
    result = train_classifier(RunConfig(mode="baseline", epochs=12, seed=0), train, val)
    return result.model


@pytest.fixture
def rng():
    return SeededRng(1234)


def random_array(rng: np.random.Generator, *dims, low=-1.0, high=1.0):
    return rng.uniform(low, high, dims)
