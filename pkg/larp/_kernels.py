"""
Cython-accelerated inner loops for the projection and median layers.

Compiled by setup.py; runs unmodified (and slowly) as plain Python when the
extension is not built. Every function works on a whole ensemble of maps at
once so a layer costs one call, and the loops run without the GIL so
per-sample work can be spread over threads.

Callers are responsible for passing C-contiguous float64 / intp arrays of
consistent shapes; the public wrappers in lrpe.py and nonl.py do the checks.
"""

import cython
import numpy as np

__all__ = [
    "correlate_ensemble",
    "correlate_ensemble_backward",
    "median_ensemble",
    "route_ensemble",
]


@cython.boundscheck(False)
@cython.wraparound(False)
def correlate_ensemble(
    inputs: cython.double[:, :, ::1],
    taps: cython.double[:, :, ::1],
    wiring: cython.Py_ssize_t[::1],
):
    """
    Zero-padded same-size 2D cross-correlation of ``inputs[wiring[j]]`` with
    ``taps[j]`` for every projection j. Returns an (N, H, W) array.
    """
    count: cython.Py_ssize_t = taps.shape[0]
    size: cython.Py_ssize_t = taps.shape[1]
    height: cython.Py_ssize_t = inputs.shape[1]
    width: cython.Py_ssize_t = inputs.shape[2]
    radius: cython.Py_ssize_t = size // 2
    result = np.zeros((count, height, width), dtype=np.float64)
    out: cython.double[:, :, ::1] = result
    j: cython.Py_ssize_t
    src: cython.Py_ssize_t
    y: cython.Py_ssize_t
    x: cython.Py_ssize_t
    dy: cython.Py_ssize_t
    dx: cython.Py_ssize_t
    iy: cython.Py_ssize_t
    ix: cython.Py_ssize_t
    acc: cython.double

    with cython.nogil:
        for j in range(count):
            src = wiring[j]
            for y in range(height):
                for x in range(width):
                    acc = 0.0
                    for dy in range(size):
                        iy = y + dy - radius
                        if iy < 0 or iy >= height:
                            continue
                        for dx in range(size):
                            ix = x + dx - radius
                            if ix < 0 or ix >= width:
                                continue
                            acc += taps[j, dy, dx] * inputs[src, iy, ix]
                    out[j, y, x] = acc
    return result


@cython.boundscheck(False)
@cython.wraparound(False)
def correlate_ensemble_backward(
    inputs: cython.double[:, :, ::1],
    taps: cython.double[:, :, ::1],
    wiring: cython.Py_ssize_t[::1],
    upstream: cython.double[:, :, ::1],
    need_input_grad: cython.bint,
):
    """
    Adjoint of correlate_ensemble.

    Returns ``(grad_inputs, grad_taps)``. ``grad_inputs`` has the shape of
    ``inputs`` and sums the contributions of every projection wired to the
    same input map, in projection order. It is None when
    ``need_input_grad`` is false.
    """
    count: cython.Py_ssize_t = taps.shape[0]
    size: cython.Py_ssize_t = taps.shape[1]
    height: cython.Py_ssize_t = inputs.shape[1]
    width: cython.Py_ssize_t = inputs.shape[2]
    radius: cython.Py_ssize_t = size // 2
    grad_taps_arr = np.zeros((count, size, size), dtype=np.float64)
    grad_taps: cython.double[:, :, ::1] = grad_taps_arr
    grad_inputs_arr = np.zeros((inputs.shape[0], height, width), dtype=np.float64)
    grad_inputs: cython.double[:, :, ::1] = grad_inputs_arr
    j: cython.Py_ssize_t
    src: cython.Py_ssize_t
    y: cython.Py_ssize_t
    x: cython.Py_ssize_t
    dy: cython.Py_ssize_t
    dx: cython.Py_ssize_t
    iy: cython.Py_ssize_t
    ix: cython.Py_ssize_t
    g: cython.double

    with cython.nogil:
        for j in range(count):
            src = wiring[j]
            for y in range(height):
                for x in range(width):
                    g = upstream[j, y, x]
                    if g == 0.0:
                        continue
                    for dy in range(size):
                        iy = y + dy - radius
                        if iy < 0 or iy >= height:
                            continue
                        for dx in range(size):
                            ix = x + dx - radius
                            if ix < 0 or ix >= width:
                                continue
                            grad_taps[j, dy, dx] += g * inputs[src, iy, ix]
                            if need_input_grad:
                                grad_inputs[src, iy, ix] += g * taps[j, dy, dx]
    if not need_input_grad:
        return None, grad_taps_arr
    return grad_inputs_arr, grad_taps_arr


@cython.cfunc
@cython.nogil
@cython.exceptval(check=False)
def _clamp(value: cython.Py_ssize_t, upper: cython.Py_ssize_t) -> cython.Py_ssize_t:
    if value < 0:
        return 0
    if value > upper:
        return upper
    return value


@cython.boundscheck(False)
@cython.wraparound(False)
def median_ensemble(maps: cython.double[:, :, ::1], window: cython.Py_ssize_t):
    """
    Sliding-window median with edge replication for every map in ``maps``.

    Returns ``(values, sources)``: the medians, and for each output position
    the flat (row-major) index of the input element that supplied the
    median. When several window elements equal the median, the first one in
    window scan order wins.
    """
    count: cython.Py_ssize_t = maps.shape[0]
    height: cython.Py_ssize_t = maps.shape[1]
    width: cython.Py_ssize_t = maps.shape[2]
    radius: cython.Py_ssize_t = window // 2
    area: cython.Py_ssize_t = window * window
    rank: cython.Py_ssize_t = area // 2
    values_arr = np.empty((count, height, width), dtype=np.float64)
    sources_arr = np.empty((count, height, width), dtype=np.intp)
    values: cython.double[:, :, ::1] = values_arr
    sources: cython.Py_ssize_t[:, :, ::1] = sources_arr
    scan_arr = np.empty(area, dtype=np.float64)
    sorted_arr = np.empty(area, dtype=np.float64)
    origin_arr = np.empty(area, dtype=np.intp)
    scan: cython.double[::1] = scan_arr
    ordered: cython.double[::1] = sorted_arr
    origin: cython.Py_ssize_t[::1] = origin_arr
    j: cython.Py_ssize_t
    y: cython.Py_ssize_t
    x: cython.Py_ssize_t
    dy: cython.Py_ssize_t
    dx: cython.Py_ssize_t
    iy: cython.Py_ssize_t
    ix: cython.Py_ssize_t
    n: cython.Py_ssize_t
    k: cython.Py_ssize_t
    v: cython.double
    med: cython.double

    with cython.nogil:
        for j in range(count):
            for y in range(height):
                for x in range(width):
                    n = 0
                    for dy in range(window):
                        iy = _clamp(y + dy - radius, height - 1)
                        for dx in range(window):
                            ix = _clamp(x + dx - radius, width - 1)
                            v = maps[j, iy, ix]
                            scan[n] = v
                            origin[n] = iy * width + ix
                            # insertion into the sorted prefix
                            k = n - 1
                            while k >= 0 and ordered[k] > v:
                                ordered[k + 1] = ordered[k]
                                k -= 1
                            ordered[k + 1] = v
                            n += 1
                    med = ordered[rank]
                    values[j, y, x] = med
                    for n in range(area):
                        if scan[n] == med:
                            sources[j, y, x] = origin[n]
                            break
    return values_arr, sources_arr


@cython.boundscheck(False)
@cython.wraparound(False)
def route_ensemble(sources: cython.Py_ssize_t[:, :, ::1], upstream: cython.double[:, :, ::1]):
    """
    Scatter each output position's upstream gradient onto its median source.
    Overlapping windows accumulate in scan order.
    """
    count: cython.Py_ssize_t = sources.shape[0]
    height: cython.Py_ssize_t = sources.shape[1]
    width: cython.Py_ssize_t = sources.shape[2]
    grad_arr = np.zeros((count, height * width), dtype=np.float64)
    grad: cython.double[:, ::1] = grad_arr
    j: cython.Py_ssize_t
    y: cython.Py_ssize_t
    x: cython.Py_ssize_t

    with cython.nogil:
        for j in range(count):
            for y in range(height):
                for x in range(width):
                    grad[j, sources[j, y, x]] += upstream[j, y, x]
    return grad_arr.reshape(count, height, width)
