"""
Cross-entropy objective, backpropagation to the kernel distributions and
full-batch scaled conjugate gradient training.

Parameter vectors use one flat layout throughout: for every layer, the
(midpoint, log_halfwidth) pair of each projection in order, then the
classifier weights row-major, then the classifier bias.
"""

import logging
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from joblib import Parallel, delayed
from scipy.special import log_softmax, softmax

from .exceptions import ConfigError, EmptyDatasetError, InputError, ShapeError
from .loaders.splits import stratified_subsample
from .lrpe import project_ensemble_backward
from .network import forward, predict
from .nonl import avr_backward, route_median_gradient
from .scg import ScgConfig, scg_minimize

__all__ = [
    "Evaluation",
    "GradientCheck",
    "ParameterVector",
    "ScgConfig",
    "backward",
    "batch_loss",
    "batch_loss_and_gradient",
    "cross_entropy",
    "evaluate",
    "finite_diff_gradient",
    "from_vector",
    "gradient_check",
    "head_loss_and_gradient",
    "mean_cross_entropy",
    "relative_error",
    "roundoff_floor",
    "sample_loss_and_gradient",
    "scg_train",
    "stability_signature",
    "to_vector",
    "training_subset",
]

logger = logging.getLogger("larp.training")

type ParameterVector = npt.NDArray[np.float64]

# Samples per unit of parallel work; results are reduced in chunk order.
CHUNK_SIZE = 16
RELATIVE_ERROR_FLOOR = 1e-5
# Finite-difference denominator floor, in units of the central-difference
# round-off eps * max(|loss|, 1) / step.
ROUNDOFF_FLOOR_SCALE = 5e6


# ---------------------------------------------------------------------------
# Parameter vectors
# ---------------------------------------------------------------------------


def to_vector(model):
    parts = [np.column_stack((m, rho)).ravel() for m, rho in zip(model.midpoints, model.log_halfwidths, strict=True)]
    parts.append(model.classifier_weights.ravel())
    parts.append(model.classifier_bias)
    return np.concatenate(parts)


def from_vector(model, vector):
    """Model with the architecture and noise of ``model`` and the values in ``vector``."""
    config = model.config
    vector = np.asarray(vector, dtype=np.float64)
    if vector.shape != (config.parameter_count,):
        raise ShapeError(f"parameter vector has shape {vector.shape}, expected ({config.parameter_count},)")
    midpoints, log_halfwidths = [], []
    offset = 0
    for layer in config.layers:
        pairs = vector[offset : offset + 2 * layer.num_projections].reshape(-1, 2)
        midpoints.append(pairs[:, 0].copy())
        log_halfwidths.append(pairs[:, 1].copy())
        offset += 2 * layer.num_projections
    weight_count = config.num_classes * config.feature_dim
    weights = vector[offset : offset + weight_count].reshape(config.num_classes, config.feature_dim)
    bias = vector[offset + weight_count :]
    return model.with_parameters(midpoints, log_halfwidths, weights, bias)


# ---------------------------------------------------------------------------
# Loss
# ---------------------------------------------------------------------------


def _check_labels(labels, num_classes):
    labels = np.asarray(labels)
    if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= num_classes):
        raise InputError(f"labels must be class indices in [0, {num_classes})")
    return labels.astype(np.intp, copy=False)


def cross_entropy(probabilities, label):
    probabilities = np.asarray(probabilities, dtype=np.float64)
    if probabilities.ndim != 1:
        raise ShapeError(f"probabilities must be one-dimensional, got shape {probabilities.shape}")
    if not 0 <= label < probabilities.size:
        raise InputError(f"label {label} is out of range for {probabilities.size} classes")
    return -float(np.log(probabilities[label]))


def mean_cross_entropy(probabilities, labels):
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = _check_labels(labels, probabilities.shape[1])
    return float(-np.mean(np.log(probabilities[np.arange(labels.size), labels])))


def head_loss_and_gradient(features, labels, weights, bias):
    """
    Mean cross-entropy of a linear softmax head over a batch.

    Returns ``(loss, grad_weights, grad_bias, grad_features)``; the feature
    gradient has one row per sample.
    """
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if features.shape[1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ShapeError(f"features {features.shape}, weights {weights.shape} and bias {bias.shape} do not agree")
    labels = _check_labels(np.atleast_1d(labels), weights.shape[0])
    if labels.shape != (features.shape[0],):
        raise ShapeError(f"{labels.size} labels for {features.shape[0]} feature rows")
    count = features.shape[0]
    logits = features @ weights.T + bias
    rows = np.arange(count)
    loss = float(-np.mean(log_softmax(logits, axis=1)[rows, labels]))
    dlogits = softmax(logits, axis=1)
    dlogits[rows, labels] -= 1.0
    dlogits /= count
    return loss, dlogits.T @ features, dlogits.sum(axis=0), dlogits @ weights


# ---------------------------------------------------------------------------
# Backpropagation
# ---------------------------------------------------------------------------


def _check_trace(model, trace):
    config = model.config
    if len(trace.layers) != config.num_layers or trace.features.shape != (config.feature_dim,):
        raise ShapeError("trace does not match the model architecture")
    for index, layer in enumerate(trace.layers):
        if layer.projected.shape[0] != config.layers[index].num_projections:
            raise ShapeError(f"layer {index} of the trace does not match the model")


def backward(model, trace, label):
    """Gradient of the sample's cross-entropy with respect to ``to_vector(model)``."""
    _check_trace(model, trace)
    config = model.config
    _, grad_weights, grad_bias, grad_features = head_loss_and_gradient(
        trace.features[np.newaxis],
        [label],
        model.classifier_weights,
        model.classifier_bias,
    )
    last = trace.layers[-1].regularized
    cells = last.shape[1] * last.shape[2]
    upstream = np.broadcast_to((grad_features[0] / cells)[:, np.newaxis, np.newaxis], last.shape)

    layer_grads = [None] * config.num_layers
    for index in reversed(range(config.num_layers)):
        layer = trace.layers[index]
        grad_rectified = route_median_gradient(layer.median_sources, upstream)
        grad_projected = avr_backward(layer.projected, grad_rectified)
        grad_inputs, grad_taps = project_ensemble_backward(
            layer.inputs,
            model.coefficients[index],
            model.wirings[index],
            grad_projected,
            need_input_grad=index > 0,
        )
        flat = grad_taps.reshape(grad_taps.shape[0], -1)
        # dk/dm = 1, dk/drho = exp(rho) * (2u - 1)
        slope = np.exp(model.log_halfwidths[index])[:, np.newaxis] * (2.0 * model.noise[index] - 1.0)
        layer_grads[index] = np.column_stack((flat.sum(axis=1), (flat * slope).sum(axis=1))).ravel()
        upstream = grad_inputs

    return np.concatenate([*layer_grads, grad_weights.ravel(), grad_bias])


def sample_loss_and_gradient(model, image, label):
    trace = forward(model, image)
    _check_labels([label], model.config.num_classes)
    loss = float(-log_softmax(trace.logits)[label])
    return loss, backward(model, trace, label)


def _sample_loss(model, image, label):
    return float(-log_softmax(forward(model, image).logits)[label])


def _chunks(count):
    return [(start, min(start + CHUNK_SIZE, count)) for start in range(0, count, CHUNK_SIZE)]


def _map_chunks(work, count, workers):
    """Run ``work(start, stop)`` per chunk; results come back in chunk order."""
    chunks = _chunks(count)
    if workers <= 1 or len(chunks) == 1:
        return [work(start, stop) for start, stop in chunks]
    return Parallel(n_jobs=workers, prefer="threads")(delayed(work)(start, stop) for start, stop in chunks)


def _check_batch(model, images, labels):
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3 or images.shape[0] == 0:
        raise InputError(f"expected a non-empty (n, H, W) image batch, got shape {images.shape}")
    labels = _check_labels(labels, model.config.num_classes)
    if labels.shape != (images.shape[0],):
        raise InputError(f"{labels.size} labels for {images.shape[0]} images")
    return images, labels


def batch_loss_and_gradient(model, images, labels, workers=1):
    """Mean loss and gradient over the batch; independent of ``workers``."""
    images, labels = _check_batch(model, images, labels)

    def work(start, stop):
        loss = 0.0
        grad = np.zeros(model.config.parameter_count)
        for i in range(start, stop):
            sample_loss, sample_grad = sample_loss_and_gradient(model, images[i], labels[i])
            loss += sample_loss
            grad += sample_grad
        return loss, grad

    loss = 0.0
    grad = np.zeros(model.config.parameter_count)
    for chunk_loss, chunk_grad in _map_chunks(work, images.shape[0], workers):
        loss += chunk_loss
        grad += chunk_grad
    count = images.shape[0]
    return loss / count, grad / count


def batch_loss(model, images, labels, workers=1):
    images, labels = _check_batch(model, images, labels)

    def work(start, stop):
        return sum(_sample_loss(model, images[i], labels[i]) for i in range(start, stop))

    return sum(_map_chunks(work, images.shape[0], workers)) / images.shape[0]


# ---------------------------------------------------------------------------
# Finite-difference checks
# ---------------------------------------------------------------------------


def finite_diff_gradient(objective, params, step):
    if step <= 0:
        raise InputError(f"finite-difference step must be positive, got {step}")
    params = np.array(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        saved = params[i]
        params[i] = saved + step
        plus = objective(params)
        params[i] = saved - step
        minus = objective(params)
        params[i] = saved
        grad[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, floor=RELATIVE_ERROR_FLOOR):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def roundoff_floor(loss, step):
    """
    Relative-error denominator floor for a central difference of ``loss``
    with ``step``. Entries smaller than the round-off of the difference
    quotient are compared in absolute terms against this scale.
    """
    noise = np.finfo(np.float64).eps * max(abs(float(loss)), 1.0) / step
    return max(RELATIVE_ERROR_FLOOR, ROUNDOFF_FLOOR_SCALE * noise)


def _signature(trace):
    return tuple((np.sign(layer.projected), layer.median_sources) for layer in trace.layers)


def _same_signature(left, right):
    return all(
        np.array_equal(signs_l, signs_r) and np.array_equal(src_l, src_r)
        for (signs_l, src_l), (signs_r, src_r) in zip(left, right, strict=True)
    )


def stability_signature(model, image):
    """Sign pattern of every projection output and every median selection."""
    return _signature(forward(model, image))


@dataclass(frozen=True, eq=False)
class GradientCheck:
    analytic: np.ndarray
    numeric: np.ndarray
    stable: np.ndarray  # coordinates whose perturbation kept the signature
    floor: float = RELATIVE_ERROR_FLOOR

    @property
    def errors(self):
        return relative_error(self.analytic, self.numeric, self.floor)

    @property
    def max_error(self):
        errors = self.errors[self.stable]
        return float(errors.max()) if errors.size else 0.0

    @property
    def checked(self):
        return int(self.stable.sum())

    @property
    def stable_fraction(self):
        return self.checked / self.stable.size if self.stable.size else 1.0


def gradient_check(model, image, label, step=1e-6):
    """
    Compare ``backward`` against central differences on every parameter.
    Coordinates whose +/- perturbation switches a sign or a median source
    are marked unstable and excluded from ``max_error``. The relative error
    uses ``roundoff_floor`` of the unperturbed loss as its denominator floor.
    """
    if step <= 0:
        raise InputError(f"finite-difference step must be positive, got {step}")
    trace = forward(model, image)
    base = _signature(trace)
    analytic = backward(model, trace, label)
    params = to_vector(model)
    numeric = np.empty_like(params)
    stable = np.ones(params.size, dtype=bool)
    for i in range(params.size):
        losses = []
        for offset in (step, -step):
            shifted = params.copy()
            shifted[i] += offset
            shifted_trace = forward(from_vector(model, shifted), image)
            stable[i] &= _same_signature(base, _signature(shifted_trace))
            losses.append(float(-log_softmax(shifted_trace.logits)[label]))
        numeric[i] = (losses[0] - losses[1]) / (2.0 * step)
    loss = float(-log_softmax(trace.logits)[label])
    return GradientCheck(analytic=analytic, numeric=numeric, stable=stable, floor=roundoff_floor(loss, step))


# ---------------------------------------------------------------------------
# Training and evaluation
# ---------------------------------------------------------------------------


class _BatchObjective:
    """Loss and gradient as functions of the parameter vector."""

    def __init__(self, model, images, labels, workers):
        self.model = model
        self.images = images
        self.labels = labels
        self.workers = workers

    def loss(self, vector):
        return batch_loss(from_vector(self.model, vector), self.images, self.labels, self.workers)

    def gradient(self, vector):
        return batch_loss_and_gradient(from_vector(self.model, vector), self.images, self.labels, self.workers)[1]


def training_subset(model, dataset, subsample=None):
    """The stratified subsample ``scg_train`` optimizes over, seeded by the model seed."""
    if subsample is None or subsample >= len(dataset):
        return dataset
    return stratified_subsample(dataset, subsample, seed=model.config.seed)


def scg_train(model, dataset, config=None, *, subsample=None, workers=1):
    """
    Train every distribution and the classifier jointly, full batch, on
    ``training_subset(model, dataset, subsample)``.

    Returns ``(trained_model, history)`` where ``history`` lists the
    per-iteration ``HistoryEntry`` records.
    """
    config = config or ScgConfig()
    if len(dataset) == 0:
        raise EmptyDatasetError("training dataset is empty")
    if workers < 1:
        raise ConfigError(f"workers must be positive, got {workers}")
    dataset = training_subset(model, dataset, subsample)
    images, labels = _check_batch(model, dataset.images, dataset.labels)
    logger.info(
        "training %d parameters on %d samples with %d worker(s)",
        model.config.parameter_count,
        images.shape[0],
        workers,
    )
    objective = _BatchObjective(model, images, labels, workers)
    result = scg_minimize(objective.loss, objective.gradient, to_vector(model), config)
    logger.info("training stopped (%s) at loss %.6g", result.reason, result.loss)
    return from_vector(model, result.params), result.history


@dataclass(frozen=True, eq=False)
class Evaluation:
    error_rate: float  # percent
    confusion: np.ndarray  # confusion[true, predicted]
    misclassified: int
    total: int


def evaluate(model, dataset, workers=1):
    if len(dataset) == 0:
        raise EmptyDatasetError("evaluation dataset is empty")
    images, labels = _check_batch(model, dataset.images, dataset.labels)

    def work(start, stop):
        return [predict(model, images[i]) for i in range(start, stop)]

    predictions = np.array(
        [p for chunk in _map_chunks(work, images.shape[0], workers) for p in chunk],
        dtype=np.intp,
    )
    num_classes = model.config.num_classes
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)
    misclassified = int((predictions != labels).sum())
    total = int(labels.size)
    return Evaluation(
        error_rate=100.0 * misclassified / total,
        confusion=confusion,
        misclassified=misclassified,
        total=total,
    )
