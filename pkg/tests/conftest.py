import numpy as np
import pytest

from larp.core import KernelDistribution, LayerSpec, ModelConfig
from larp.loaders import LabeledDataset, write_idx_images, write_idx_labels
from larp.lrpe import kernel_from_noise
from larp.network import build_model
from larp.training import from_vector, to_vector


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def delta_kernel():
    """3x3 kernel with a 1 at the centre and 0 elsewhere: a = 0, b = 2, u = 0.5 at the centre."""
    noise = np.zeros(9)
    noise[4] = 0.5
    return kernel_from_noise(KernelDistribution(midpoint=1.0, log_halfwidth=0.0), noise)


@pytest.fixture
def tiny_config():
    return ModelConfig(
        layers=(LayerSpec(2, 9), LayerSpec(3, 9)),
        num_classes=3,
        seed=11,
        input_height=8,
        input_width=8,
    )


@pytest.fixture
def randomize():
    """Replace every trainable parameter of a model with seeded random values."""

    def _randomize(model, seed=0):
        generator = np.random.default_rng(seed)
        vector = to_vector(model)
        pairs = model.config.projection_parameter_count
        vector[0:pairs:2] = generator.normal(0.0, 0.5, size=pairs // 2)
        vector[1:pairs:2] = generator.uniform(-1.5, -0.5, size=pairs // 2)
        vector[pairs:] = generator.normal(0.0, 1.0, size=vector.size - pairs)
        return from_vector(model, vector)

    return _randomize


@pytest.fixture
def tiny_model(tiny_config, randomize):
    return randomize(build_model(tiny_config), seed=3)


@pytest.fixture
def toy_dataset(rng):
    """Twelve 8x8 images in three classes, four each."""
    images = rng.random((12, 8, 8))
    labels = np.repeat(np.arange(3), 4)
    return LabeledDataset(images, labels)


@pytest.fixture
def idx_pair(tmp_path, toy_dataset):
    """The toy dataset written as an IDX image/label file pair."""
    images = np.round(toy_dataset.images * 255.0) / 255.0
    images_path = tmp_path / "images-idx3-ubyte"
    labels_path = tmp_path / "labels-idx1-ubyte"
    write_idx_images(images_path, images)
    write_idx_labels(labels_path, toy_dataset.labels)
    return images_path, labels_path, LabeledDataset(images, toy_dataset.labels)
