"""
Domain types and seeded randomness shared by every layer of the network.

A feature map is a C-contiguous 2D float64 numpy array. Kernel distributions
are stored as (midpoint, log-halfwidth) so the uniform bounds [a, b] stay
ordered under unconstrained optimization; kernels carry the frozen noise
they were sampled with, so coefficients are a deterministic function of the
distribution parameters.
"""

import math
from dataclasses import dataclass, replace

import numpy as np
import numpy.typing as npt

from .exceptions import ConfigError, InvalidParameterError, ShapeError

__all__ = [
    "NOISE_STREAM",
    "WIRING_STREAM",
    "FeatureMap",
    "KernelDistribution",
    "LayerSpec",
    "ModelConfig",
    "ProjectionKernel",
    "Rng",
    "as_feature_map",
    "child_rng",
    "derive_bounds",
    "is_perfect_square",
]

type FeatureMap = npt.NDArray[np.float64]
type Rng = np.random.Generator

# Sub-stream tags appended to the (layer, projection) derivation path.
NOISE_STREAM = 0
WIRING_STREAM = 1

MAX_SEED = 2**64 - 1


def is_perfect_square(n):
    return n >= 1 and math.isqrt(n) ** 2 == n


def as_feature_map(values, name="feature map"):
    """
    Return ``values`` as a C-contiguous float64 2D array, copying only when
    needed. Rejects anything that is not 2D or holds NaN/Inf.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ShapeError(f"{name} must be a non-empty 2D array, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise InvalidParameterError(f"{name} contains non-finite values")
    return arr


def derive_bounds(dist):
    """
    Uniform bounds (a, b) = (m - exp(rho), m + exp(rho)) of a kernel
    distribution.
    """
    m = dist.midpoint
    rho = dist.log_halfwidth
    if not (math.isfinite(m) and math.isfinite(rho)):
        raise InvalidParameterError(f"distribution parameters must be finite, got m={m!r}, rho={rho!r}")
    half = float(np.exp(rho))
    if not math.isfinite(half):
        raise InvalidParameterError(f"log_halfwidth {rho!r} overflows the halfwidth")
    return m - half, m + half


def child_rng(seed, layer, projection, stream=NOISE_STREAM):
    """
    Independent PCG64 stream for one (layer, projection) pair.

    The derivation path goes into ``SeedSequence.spawn_key``, so streams do
    not depend on the order in which they are requested.
    """
    if not 0 <= seed <= MAX_SEED:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed}")
    sequence = np.random.SeedSequence(int(seed), spawn_key=(int(layer), int(projection), int(stream)))
    return np.random.Generator(np.random.PCG64(sequence))


@dataclass(frozen=True, slots=True)
class KernelDistribution:
    midpoint: float = 0.0
    log_halfwidth: float = 0.0

    @classmethod
    def from_bounds(cls, lower, upper):
        if not lower < upper:
            raise InvalidParameterError(f"lower bound {lower!r} must be below upper bound {upper!r}")
        return cls(midpoint=0.5 * (lower + upper), log_halfwidth=math.log(0.5 * (upper - lower)))

    @property
    def bounds(self):
        return derive_bounds(self)


@dataclass(frozen=True, eq=False, slots=True)
class ProjectionKernel:
    """
    Frozen sampling noise in [0, 1) plus the coefficients derived from it.
    Both are flat arrays of ``support`` entries; ``taps`` gives the s x s
    row-major view used by the projection.
    """

    noise: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        noise = np.ascontiguousarray(self.noise, dtype=np.float64).ravel()
        coefficients = np.ascontiguousarray(self.coefficients, dtype=np.float64).ravel()
        if not is_perfect_square(noise.size):
            raise ConfigError(f"kernel support must be a perfect square, got {noise.size}")
        if coefficients.shape != noise.shape:
            raise ShapeError(f"{coefficients.size} coefficients for {noise.size} noise samples")
        object.__setattr__(self, "noise", noise)
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def support(self):
        return self.noise.size

    @property
    def size(self):
        return math.isqrt(self.noise.size)

    @property
    def taps(self):
        return self.coefficients.reshape(self.size, self.size)


@dataclass(frozen=True, slots=True)
class LayerSpec:
    num_projections: int
    support: int = 25
    # Input-map index per projection; None means "draw from the seed".
    wiring: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.num_projections < 1:
            raise ConfigError(f"num_projections must be positive, got {self.num_projections}")
        if not is_perfect_square(self.support):
            raise ConfigError(f"support must be a perfect square, got {self.support}")
        if math.isqrt(self.support) % 2 == 0:
            raise ConfigError(f"kernel side must be odd, got support {self.support}")
        if self.wiring is not None:
            wiring = tuple(int(k) for k in self.wiring)
            if len(wiring) != self.num_projections:
                raise ConfigError(f"wiring has {len(wiring)} entries for {self.num_projections} projections")
            if any(k < 0 for k in wiring):
                raise ConfigError("wiring entries must be non-negative")
            object.__setattr__(self, "wiring", wiring)

    @property
    def kernel_size(self):
        return math.isqrt(self.support)


@dataclass(frozen=True, slots=True)
class ModelConfig:
    layers: tuple[LayerSpec, ...]
    num_classes: int = 10
    seed: int = 0
    input_height: int = 28
    input_width: int = 28
    smr_window: int = 3

    def __post_init__(self):
        layers = tuple(self.layers)
        object.__setattr__(self, "layers", layers)
        if not layers:
            raise ConfigError("a model needs at least one layer")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be positive, got {self.num_classes}")
        if not 0 <= self.seed <= MAX_SEED:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if self.input_height < 1 or self.input_width < 1:
            raise ConfigError(f"input dimensions must be positive, got {self.input_height}x{self.input_width}")
        if self.smr_window < 1 or self.smr_window % 2 == 0:
            raise ConfigError(f"smr_window must be odd and positive, got {self.smr_window}")
        available = 1
        for index, layer in enumerate(layers):
            if layer.kernel_size > min(self.input_height, self.input_width):
                raise ConfigError(
                    f"layer {index}: {layer.kernel_size}x{layer.kernel_size} kernel does not fit "
                    f"{self.input_height}x{self.input_width} inputs"
                )
            if layer.wiring is not None and max(layer.wiring) >= available:
                raise ConfigError(
                    f"layer {index}: wiring entry {max(layer.wiring)} >= {available} maps from the previous layer"
                )
            available = layer.num_projections

    @property
    def num_layers(self):
        return len(self.layers)

    @property
    def feature_dim(self):
        return self.layers[-1].num_projections

    @property
    def projection_parameter_count(self):
        return sum(2 * layer.num_projections for layer in self.layers)

    @property
    def classifier_parameter_count(self):
        return self.num_classes * (self.feature_dim + 1)

    @property
    def parameter_count(self):
        return self.projection_parameter_count + self.classifier_parameter_count

    @property
    def is_wired(self):
        return all(layer.wiring is not None for layer in self.layers)

    def with_wiring(self, wirings):
        layers = tuple(replace(layer, wiring=tuple(w)) for layer, w in zip(self.layers, wirings, strict=True))
        return replace(self, layers=layers)
