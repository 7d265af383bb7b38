"""
The layered network: alternating projection ensembles and nonlinearities,
global mean pooling of the last layer's maps into one feature per map, and
a linear softmax head.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .core import (
    WIRING_STREAM,
    KernelDistribution,
    LayerSpec,
    ModelConfig,
    ProjectionKernel,
    as_feature_map,
    child_rng,
)
from .exceptions import InvalidParameterError, ShapeError
from .lrpe import project_ensemble
from .nonl import avr, smr_ensemble

__all__ = [
    "ForwardTrace",
    "LayerTrace",
    "Model",
    "build_model",
    "desk_config",
    "draw_noise",
    "extract_features",
    "forward",
    "full_config",
    "predict",
    "softmax_classify",
]

logger = logging.getLogger("larp.network")


def full_config(num_classes=10, seed=0):
    """Three layers of 512, 512 and 1024 projections with 5x5 support on 28x28 inputs."""
    return ModelConfig(
        layers=(LayerSpec(512, 25), LayerSpec(512, 25), LayerSpec(1024, 25)),
        num_classes=num_classes,
        seed=seed,
    )


def desk_config(num_classes=10, seed=0):
    return ModelConfig(
        layers=(LayerSpec(32, 9), LayerSpec(32, 9), LayerSpec(64, 9)),
        num_classes=num_classes,
        seed=seed,
    )


def _coefficients(midpoints, log_halfwidths, noise, size):
    half = np.exp(log_halfwidths)
    lower = midpoints - half
    upper = midpoints + half
    flat = lower[:, np.newaxis] + (upper - lower)[:, np.newaxis] * noise
    return np.ascontiguousarray(flat.reshape(-1, size, size))


def _float_array(values, shape, name):
    arr = np.array(values, dtype=np.float64)
    if arr.shape != shape:
        raise ShapeError(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.isfinite(arr).all():
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True, eq=False)
class Model:
    """
    Full trainable state. Per-layer arrays are indexed by projection:
    ``midpoints[i][j]``, ``log_halfwidths[i][j]``, ``noise[i][j]`` (flat, n_s)
    and ``coefficients[i][j]`` (s x s). Treat instances as immutable; use
    ``with_parameters`` to derive an updated model.
    """

    config: ModelConfig
    midpoints: tuple[np.ndarray, ...]
    log_halfwidths: tuple[np.ndarray, ...]
    noise: tuple[np.ndarray, ...]
    coefficients: tuple[np.ndarray, ...]
    wirings: tuple[np.ndarray, ...]
    classifier_weights: np.ndarray
    classifier_bias: np.ndarray

    @classmethod
    def from_parameters(cls, config, midpoints, log_halfwidths, noise, classifier_weights, classifier_bias):
        if not config.is_wired:
            raise ShapeError("model config must carry explicit wiring for every layer")
        mids, rhos, noises, coefficients, wirings = [], [], [], [], []
        for index, layer in enumerate(config.layers):
            count = layer.num_projections
            mid = _float_array(midpoints[index], (count,), f"layer {index} midpoints")
            rho = _float_array(log_halfwidths[index], (count,), f"layer {index} log_halfwidths")
            if not np.isfinite(np.exp(rho)).all():
                raise InvalidParameterError(f"layer {index} log_halfwidths overflow the halfwidth")
            layer_noise = _float_array(noise[index], (count, layer.support), f"layer {index} noise")
            mids.append(mid)
            rhos.append(rho)
            noises.append(layer_noise)
            coefficients.append(_coefficients(mid, rho, layer_noise, layer.kernel_size))
            wirings.append(np.array(layer.wiring, dtype=np.intp))
        shape = (config.num_classes, config.feature_dim)
        return cls(
            config=config,
            midpoints=tuple(mids),
            log_halfwidths=tuple(rhos),
            noise=tuple(noises),
            coefficients=tuple(coefficients),
            wirings=tuple(wirings),
            classifier_weights=_float_array(classifier_weights, shape, "classifier weights"),
            classifier_bias=_float_array(classifier_bias, (config.num_classes,), "classifier bias"),
        )

    def with_parameters(self, midpoints, log_halfwidths, classifier_weights, classifier_bias):
        """Same architecture and noise, new trainable values."""
        return Model.from_parameters(
            self.config,
            midpoints,
            log_halfwidths,
            self.noise,
            classifier_weights,
            classifier_bias,
        )

    def distribution(self, layer, projection):
        return KernelDistribution(
            midpoint=float(self.midpoints[layer][projection]),
            log_halfwidth=float(self.log_halfwidths[layer][projection]),
        )

    def kernel(self, layer, projection):
        return ProjectionKernel(
            noise=self.noise[layer][projection],
            coefficients=self.coefficients[layer][projection],
        )

    @property
    def trainable_count(self):
        return self.config.parameter_count


def _resolve_wiring(config):
    wirings = []
    available = 1
    for index, layer in enumerate(config.layers):
        if layer.wiring is not None:
            wirings.append(layer.wiring)
        elif index == 0:
            wirings.append((0,) * layer.num_projections)
        else:
            wirings.append(
                tuple(
                    int(child_rng(config.seed, index, j, WIRING_STREAM).integers(available))
                    for j in range(layer.num_projections)
                )
            )
        available = layer.num_projections
    return config.with_wiring(wirings)


def draw_noise(config):
    """Frozen kernel noise of every layer, one (N_i, n_s) array each, regenerated from the seed."""
    return [
        np.stack([child_rng(config.seed, index, j).random(layer.support) for j in range(layer.num_projections)])
        for index, layer in enumerate(config.layers)
    ]


def build_model(config):
    """
    Fresh model: wiring and kernel noise drawn from the seed, distributions
    centred on zero with halfwidth 1/sqrt(n_s), classifier at zero.
    """
    config = _resolve_wiring(config)
    noise = draw_noise(config)
    midpoints = [np.zeros(layer.num_projections) for layer in config.layers]
    log_halfwidths = [
        np.full(layer.num_projections, -0.5 * math.log(layer.support)) for layer in config.layers
    ]
    model = Model.from_parameters(
        config,
        midpoints,
        log_halfwidths,
        noise,
        np.zeros((config.num_classes, config.feature_dim)),
        np.zeros(config.num_classes),
    )
    logger.debug(
        "built model: %d layers, %d projection parameters, %d classifier parameters",
        config.num_layers,
        config.projection_parameter_count,
        config.classifier_parameter_count,
    )
    return model


@dataclass(frozen=True, eq=False)
class LayerTrace:
    inputs: np.ndarray  # (M, H, W) maps feeding the layer
    projected: np.ndarray  # Y, (N, H, W)
    rectified: np.ndarray  # |Y|
    regularized: np.ndarray  # median-filtered |Y|, the layer output
    median_sources: np.ndarray  # flat source index per output position


@dataclass(frozen=True, eq=False)
class ForwardTrace:
    image: np.ndarray
    layers: tuple[LayerTrace, ...]
    features: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray


def _check_image(model, image):
    image = as_feature_map(image, "image")
    expected = (model.config.input_height, model.config.input_width)
    if image.shape != expected:
        raise ShapeError(f"image has shape {image.shape}, model expects {expected}")
    return image


def _logits(features, weights, bias):
    features = np.asarray(features, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or features.shape[-1:] != weights.shape[1:] or bias.shape != weights.shape[:1]:
        raise ShapeError(
            f"features {features.shape}, weights {weights.shape} and bias {bias.shape} do not agree"
        )
    return features @ weights.T + bias


def softmax_classify(features, weights, bias):
    """Class probabilities ``softmax(W @ features + bias)``; batches along the first axis."""
    return softmax(_logits(features, weights, bias), axis=-1)


def forward(model, image):
    config = model.config
    maps = _check_image(model, image)[np.newaxis]
    image = maps[0]
    layers = []
    for index in range(config.num_layers):
        projected = project_ensemble(maps, model.coefficients[index], model.wirings[index])
        rectified = avr(projected)
        regularized, sources = smr_ensemble(rectified, config.smr_window)
        layers.append(LayerTrace(maps, projected, rectified, regularized, sources))
        maps = regularized
    features = maps.mean(axis=(1, 2))
    logits = _logits(features, model.classifier_weights, model.classifier_bias)
    return ForwardTrace(
        image=image,
        layers=tuple(layers),
        features=features,
        logits=logits,
        probabilities=softmax(logits),
    )


def extract_features(model, image):
    """The ``feature_dim`` pooled random features of one image."""
    return forward(model, image).features


def predict(model, image):
    """Most probable class; ties go to the lowest index."""
    return int(np.argmax(forward(model, image).probabilities))
