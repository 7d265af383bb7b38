"""
Randomized oracle checks behind ``larp verify``.

Each check draws its own random instances from a seed, compares the fast
implementation against a brute-force reference and reports the largest
discrepancy it saw.
"""

import logging
from dataclasses import dataclass

import numpy as np

from .core import KernelDistribution, LayerSpec, ModelConfig
from .lrpe import dense_oracle, kernel_from_noise, project, project_backward
from .network import build_model
from .nonl import smr, smr_oracle
from .training import from_vector, gradient_check, to_vector

__all__ = [
    "OracleResult",
    "check_adjoint",
    "check_gradients",
    "check_median",
    "check_projection",
    "random_toy_model",
    "run_all",
]

logger = logging.getLogger("larp.verification")

PROJECTION_TOLERANCE = 1e-12
ADJOINT_TOLERANCE = 1e-10
MEDIAN_TOLERANCE = 0.0
GRADIENT_TOLERANCE = 1e-4
MIN_STABLE_FRACTION = 0.95

MAX_PROJECTION_SIDE = 16
MAX_MEDIAN_SIDE = 32
SUPPORTS = (9, 25)


@dataclass(frozen=True, slots=True)
class OracleResult:
    name: str
    max_error: float
    tolerance: float
    checked: int
    passed: bool

    @property
    def status(self):
        return "PASS" if self.passed else "FAIL"

    def line(self):
        return (
            f"{self.name} max_error={self.max_error:.3e} tolerance={self.tolerance:.0e} "
            f"checked={self.checked} status={self.status}"
        )


def _scaled_error(actual, expected):
    scale = max(float(np.max(np.abs(expected))), 1e-5)
    return float(np.max(np.abs(actual - expected))) / scale


def _random_kernel(rng):
    support = int(rng.choice(SUPPORTS))
    dist = KernelDistribution(midpoint=float(rng.normal(0.0, 0.5)), log_halfwidth=float(rng.uniform(-2.0, 0.5)))
    return kernel_from_noise(dist, rng.random(support))


def _random_map(rng, low, high):
    height, width = rng.integers(low, high + 1, size=2)
    return rng.standard_normal((int(height), int(width)))


def check_projection(trials, rng):
    """Sliding projection against the explicit banded matrix."""
    worst = 0.0
    for _ in range(trials):
        kernel = _random_kernel(rng)
        image = _random_map(rng, kernel.size, MAX_PROJECTION_SIDE)
        matrix = dense_oracle(kernel, *image.shape)
        worst = max(worst, _scaled_error(project(image, kernel).ravel(), matrix @ image.ravel()))
    return OracleResult("projection", worst, PROJECTION_TOLERANCE, trials, worst <= PROJECTION_TOLERANCE)


def check_adjoint(trials, rng, adjoint=project_backward):
    """
    ``<P x, y> == <x, P^T y>`` for the input gradient and
    ``<P x, y> == <k, dP/dk y>`` for the coefficient gradient.
    """
    worst = 0.0
    for _ in range(trials):
        kernel = _random_kernel(rng)
        image = _random_map(rng, kernel.size, MAX_PROJECTION_SIDE)
        upstream = rng.standard_normal(image.shape)
        grad_input, grad_coefficients = adjoint(image, kernel, upstream)
        forward_inner = float(np.vdot(project(image, kernel), upstream))
        for other in (float(np.vdot(image, grad_input)), float(np.vdot(kernel.coefficients, grad_coefficients))):
            scale = max(abs(forward_inner), abs(other), 1e-5)
            worst = max(worst, abs(forward_inner - other) / scale)
    return OracleResult("adjoint", worst, ADJOINT_TOLERANCE, trials, worst <= ADJOINT_TOLERANCE)


def check_median(trials, rng):
    """Median filter against sorting every window; every other map is quantised to force ties."""
    worst = 0.0
    for trial in range(trials):
        image = _random_map(rng, 1, MAX_MEDIAN_SIDE)
        if trial % 2:
            image = np.round(image * 2.0) / 2.0
        worst = max(worst, float(np.max(np.abs(smr(image) - smr_oracle(image)))))
    return OracleResult("median", worst, MEDIAN_TOLERANCE, trials, worst <= MEDIAN_TOLERANCE)


def random_toy_model(rng, seed=0, num_classes=3, side=8, support=9):
    """Up to two layers of up to three projections, with every parameter randomized."""
    num_layers = int(rng.integers(1, 3))
    layers = tuple(LayerSpec(int(rng.integers(1, 4)), support) for _ in range(num_layers))
    config = ModelConfig(layers=layers, num_classes=num_classes, seed=seed, input_height=side, input_width=side)
    model = build_model(config)
    vector = to_vector(model)
    pairs = config.projection_parameter_count
    vector[0:pairs:2] = rng.normal(0.0, 0.5, size=pairs // 2)
    vector[1:pairs:2] = rng.uniform(-1.5, -0.5, size=pairs // 2)
    vector[pairs:] = rng.normal(0.0, 1.0, size=vector.size - pairs)
    return from_vector(model, vector)


def check_gradients(models, rng, step=1e-6):
    """Backpropagation against central differences on random toy models."""
    worst = 0.0
    checked = 0
    total = 0
    for index in range(models):
        model = random_toy_model(rng, seed=index)
        image = rng.random((model.config.input_height, model.config.input_width))
        label = int(rng.integers(model.config.num_classes))
        result = gradient_check(model, image, label, step)
        worst = max(worst, result.max_error)
        checked += result.checked
        total += result.stable.size
    stable_fraction = checked / total if total else 1.0
    if stable_fraction < MIN_STABLE_FRACTION:
        logger.warning("only %.1f%% of gradient coordinates were median-stable", 100.0 * stable_fraction)
    passed = worst < GRADIENT_TOLERANCE and stable_fraction >= MIN_STABLE_FRACTION
    return OracleResult("gradient", worst, GRADIENT_TOLERANCE, checked, passed)


def run_all(trials, seed, grad_models=20, adjoint=project_backward):
    """
    Run every oracle. With ``trials == 0`` nothing is checked and every
    oracle passes vacuously.
    """
    if trials == 0:
        logger.warning("verify ran with 0 trials; every oracle passes vacuously")
        grad_models = 0
    streams = [np.random.default_rng([seed, k]) for k in range(4)]
    results = [
        check_projection(trials, streams[0]),
        check_adjoint(trials, streams[1], adjoint),
        check_median(trials, streams[2]),
        check_gradients(grad_models, streams[3]),
    ]
    for result in results:
        logger.debug("%s", result.line())
    return results
