"""
Nonlinearity layer: absolute value rectification followed by sliding-window
median regularization, with their subgradients.

The median window uses edge replication at the borders, so the output keeps
the input's shape. Its subgradient routes each output's upstream gradient to
the single input element that supplied the median; among window elements
equal to the median, the first in window scan order is chosen.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import _kernels
from .core import as_feature_map
from .exceptions import ConfigError, ShapeError

__all__ = [
    "DEFAULT_WINDOW",
    "avr",
    "avr_backward",
    "route_median_gradient",
    "smr",
    "smr_backward",
    "smr_ensemble",
    "smr_oracle",
    "smr_with_sources",
]

DEFAULT_WINDOW = 3


def _check_window(window):
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"median window must be odd and positive, got {window}")


def _check_same_shape(input_map, upstream_grad):
    if input_map.shape != upstream_grad.shape:
        raise ShapeError(f"upstream gradient {upstream_grad.shape} does not match input {input_map.shape}")


def avr(input_map):
    return np.abs(input_map)


def avr_backward(input_map, upstream_grad):
    """Subgradient of |x| with sign(0) = 0."""
    input_map = np.asarray(input_map, dtype=np.float64)
    upstream_grad = np.asarray(upstream_grad, dtype=np.float64)
    _check_same_shape(input_map, upstream_grad)
    return upstream_grad * np.sign(input_map)


def smr_ensemble(maps, window=DEFAULT_WINDOW):
    """
    Median-filter every map of an (N, H, W) stack. Returns ``(values, sources)``
    where ``sources`` holds flat indices into each map.
    """
    _check_window(window)
    maps = np.ascontiguousarray(maps, dtype=np.float64)
    if maps.ndim != 3:
        raise ShapeError(f"maps must have shape (N, H, W), got {maps.shape}")
    return _kernels.median_ensemble(maps, window)


def smr_with_sources(input_map, window=DEFAULT_WINDOW):
    input_map = as_feature_map(input_map, "median input")
    values, sources = smr_ensemble(input_map[np.newaxis], window)
    return values[0], sources[0]


def smr(input_map, window=DEFAULT_WINDOW):
    return smr_with_sources(input_map, window)[0]


def route_median_gradient(sources, upstream):
    """
    Scatter upstream gradients onto median sources. Accepts a single
    (H, W) map or an (N, H, W) stack.
    """
    sources = np.ascontiguousarray(sources, dtype=np.intp)
    upstream = np.ascontiguousarray(upstream, dtype=np.float64)
    _check_same_shape(sources, upstream)
    if upstream.ndim == 2:
        return _kernels.route_ensemble(sources[np.newaxis], upstream[np.newaxis])[0]
    return _kernels.route_ensemble(sources, upstream)


def smr_backward(input_map, upstream_grad, window=DEFAULT_WINDOW):
    input_map = as_feature_map(input_map, "median input")
    upstream_grad = as_feature_map(upstream_grad, "upstream gradient")
    _check_same_shape(input_map, upstream_grad)
    _, sources = smr_with_sources(input_map, window)
    return route_median_gradient(sources, upstream_grad)


def smr_oracle(input_map, window=DEFAULT_WINDOW):
    """Brute-force median: sort every edge-replicated window."""
    _check_window(window)
    radius = window // 2
    padded = np.pad(np.asarray(input_map, dtype=np.float64), radius, mode="edge")
    windows = sliding_window_view(padded, (window, window))
    flat = windows.reshape(*windows.shape[:2], window * window)
    return np.sort(flat, axis=-1)[..., (window * window) // 2]
