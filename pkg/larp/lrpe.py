"""
Localized random projection ensembles.

A projection applies an s x s kernel as a banded Toeplitz operator: the
zero-padded, same-size sliding cross-correlation of a feature map with the
kernel taps (row-major, s odd). Kernels are drawn from a uniform
distribution through frozen noise, ``k_t = a + (b - a) * u_t``.

The explicit matrix is only ever built by ``dense_oracle``, which exists to
check the sliding implementation.
"""

import numpy as np
import numpy.typing as npt

from . import _kernels
from .core import ProjectionKernel, as_feature_map, derive_bounds, is_perfect_square
from .exceptions import ConfigError, OracleTooLargeError, ShapeError

__all__ = [
    "DEFAULT_ORACLE_MAX_ENTRIES",
    "DenseMatrix",
    "dense_oracle",
    "kernel_from_noise",
    "project",
    "project_backward",
    "project_ensemble",
    "project_ensemble_backward",
    "refresh_coefficients",
    "sample_kernel",
]

type DenseMatrix = npt.NDArray[np.float64]

DEFAULT_ORACLE_MAX_ENTRIES = 1 << 22


def kernel_from_noise(dist, noise):
    """Build a kernel from explicitly supplied noise samples."""
    noise = np.ascontiguousarray(noise, dtype=np.float64).ravel()
    if not is_perfect_square(noise.size):
        raise ConfigError(f"kernel support must be a perfect square, got {noise.size}")
    lower, upper = derive_bounds(dist)
    return ProjectionKernel(noise=noise, coefficients=lower + (upper - lower) * noise)


def sample_kernel(dist, support, rng):
    """Draw ``support`` noise samples in [0, 1) from ``rng`` and derive the kernel."""
    if not is_perfect_square(support):
        raise ConfigError(f"kernel support must be a perfect square, got {support}")
    return kernel_from_noise(dist, rng.random(support))


def refresh_coefficients(kernel, dist):
    """Recompute coefficients for new distribution parameters; noise is kept."""
    return kernel_from_noise(dist, kernel.noise)


def _check_kernel_fits(size, height, width):
    if size % 2 == 0:
        raise ConfigError(f"kernel side must be odd, got {size}")
    if height < size or width < size:
        raise ShapeError(f"{height}x{width} map is smaller than the {size}x{size} kernel")


def _as_taps(coefficients):
    taps = np.ascontiguousarray(coefficients, dtype=np.float64)
    if taps.ndim != 3 or taps.shape[1] != taps.shape[2]:
        raise ShapeError(f"coefficients must have shape (N, s, s), got {taps.shape}")
    return taps


def _as_wiring(wiring, count, available):
    wiring = np.ascontiguousarray(wiring, dtype=np.intp)
    if wiring.shape != (count,):
        raise ShapeError(f"wiring must have {count} entries, got shape {wiring.shape}")
    if count and (wiring.min() < 0 or wiring.max() >= available):
        raise ConfigError(f"wiring entries must lie in [0, {available})")
    return wiring


def project_ensemble(inputs, coefficients, wiring):
    """
    Apply N projections to a stack of M input maps.

    ``inputs`` is (M, H, W), ``coefficients`` is (N, s, s) and ``wiring[j]``
    names the input map projection j reads. Returns the (N, H, W) outputs.
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    if inputs.ndim != 3:
        raise ShapeError(f"inputs must have shape (M, H, W), got {inputs.shape}")
    taps = _as_taps(coefficients)
    _check_kernel_fits(taps.shape[1], inputs.shape[1], inputs.shape[2])
    wiring = _as_wiring(wiring, taps.shape[0], inputs.shape[0])
    return _kernels.correlate_ensemble(inputs, taps, wiring)


def project_ensemble_backward(inputs, coefficients, wiring, upstream, need_input_grad=True):
    """
    Gradients of ``sum(project_ensemble(inputs, ...) * upstream)``.

    Returns ``(grad_inputs, grad_coefficients)``; ``grad_inputs`` is None when
    ``need_input_grad`` is false (first layer: nothing upstream to feed).
    """
    inputs = np.ascontiguousarray(inputs, dtype=np.float64)
    taps = _as_taps(coefficients)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    if inputs.ndim != 3:
        raise ShapeError(f"inputs must have shape (M, H, W), got {inputs.shape}")
    _check_kernel_fits(taps.shape[1], inputs.shape[1], inputs.shape[2])
    expected = (taps.shape[0], inputs.shape[1], inputs.shape[2])
    if upstream.shape != expected:
        raise ShapeError(f"upstream gradient has shape {upstream.shape}, expected {expected}")
    wiring = _as_wiring(wiring, taps.shape[0], inputs.shape[0])
    return _kernels.correlate_ensemble_backward(inputs, taps, wiring, upstream, bool(need_input_grad))


_SINGLE = np.zeros(1, dtype=np.intp)


def project(input_map, kernel):
    """Project one feature map with one kernel (same-size, zero padded)."""
    input_map = as_feature_map(input_map, "projection input")
    return project_ensemble(input_map[np.newaxis], kernel.taps[np.newaxis], _SINGLE)[0]


def project_backward(input_map, kernel, upstream_grad):
    """
    Adjoint of ``project``: returns ``(grad_input, grad_coefficients)`` where
    ``grad_coefficients`` is flat, one entry per tap.
    """
    input_map = as_feature_map(input_map, "projection input")
    upstream_grad = as_feature_map(upstream_grad, "upstream gradient")
    if upstream_grad.shape != input_map.shape:
        raise ShapeError(f"upstream gradient {upstream_grad.shape} does not match input {input_map.shape}")
    grad_inputs, grad_taps = project_ensemble_backward(
        input_map[np.newaxis],
        kernel.taps[np.newaxis],
        _SINGLE,
        upstream_grad[np.newaxis],
    )
    return grad_inputs[0], grad_taps[0].ravel()


def dense_oracle(kernel, height, width, max_entries=DEFAULT_ORACLE_MAX_ENTRIES):
    """
    Explicit (H*W) x (H*W) matrix M with ``M @ X.ravel() == project(X).ravel()``.
    """
    size = kernel.size
    _check_kernel_fits(size, height, width)
    cells = height * width
    if cells * cells > max_entries:
        raise OracleTooLargeError(f"{cells}x{cells} oracle exceeds the cap of {max_entries} entries")
    radius = size // 2
    taps = kernel.taps
    matrix = np.zeros((cells, cells), dtype=np.float64)
    rows = np.arange(cells).reshape(height, width)
    for dy in range(size):
        for dx in range(size):
            oy = dy - radius
            ox = dx - radius
            ys = slice(max(0, -oy), min(height, height - oy))
            xs = slice(max(0, -ox), min(width, width - ox))
            out_rows = rows[ys, xs]
            in_cols = out_rows + oy * width + ox
            matrix[out_rows.ravel(), in_cols.ravel()] = taps[dy, dx]
    return matrix
