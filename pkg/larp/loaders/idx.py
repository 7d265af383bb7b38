"""
IDX binary files as published with the MNIST digits: a big-endian header
(magic, then one 32-bit count per dimension) followed by unsigned bytes in
row-major order. Paths ending in ``.gz`` are read and written through gzip.
"""

import gzip
import logging
import struct
from pathlib import Path

import numpy as np

from larp.exceptions import FormatError, InputError

from .base import LabeledDataset, Loader

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

logger = logging.getLogger("larp.loaders")


def _open(path, mode):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode)
    return path.open(mode)


def _read(path):
    try:
        with _open(path, "rb") as f:
            return f.read()
    except gzip.BadGzipFile as e:
        raise FormatError(f"{path}: {e}") from e


def _parse(path, magic, dims):
    data = _read(path)
    header_size = 4 * (1 + dims)
    if len(data) < header_size:
        raise FormatError(f"{path}: truncated IDX header ({len(data)} bytes)")
    found, *shape = struct.unpack(f">{1 + dims}I", data[:header_size])
    if found != magic:
        raise FormatError(f"{path}: bad IDX magic 0x{found:08x}, expected 0x{magic:08x}")
    expected = int(np.prod(shape))
    body = data[header_size:]
    if len(body) < expected:
        raise FormatError(f"{path}: truncated IDX body ({len(body)} of {expected} bytes)")
    if len(body) > expected:
        raise FormatError(f"{path}: {len(body) - expected} trailing bytes after IDX body")
    return np.frombuffer(body, dtype=np.uint8).reshape(shape)


def load_idx_images(path):
    """(n, rows, cols) float64 images scaled to [0, 1] by p / 255."""
    images = _parse(path, IMAGE_MAGIC, 3) / 255.0
    logger.debug("read %d images of %dx%d from %s", *images.shape, path)
    return images


def load_idx_labels(path):
    return _parse(path, LABEL_MAGIC, 1).astype(np.intp)


def _write(path, magic, values):
    header = struct.pack(f">{1 + values.ndim}I", magic, *values.shape)
    with _open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(values, dtype=np.uint8).tobytes())


def write_idx_images(path, images):
    """Quantise [0, 1] images to bytes with round(255 * p) and write them."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 3:
        raise InputError(f"images must have shape (n, rows, cols), got {images.shape}")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise InputError("image values must lie in [0, 1]")
    _write(path, IMAGE_MAGIC, np.rint(images * 255.0))


def write_idx_labels(path, labels):
    labels = np.asarray(labels)
    if labels.ndim != 1 or (labels.size and (labels.min() < 0 or labels.max() > 255)):
        raise InputError("labels must be a flat sequence of values in [0, 255]")
    _write(path, LABEL_MAGIC, labels)


class IdxLoader(Loader):
    def __init__(self, images_path, labels_path, class_names=None):
        self.images_path = Path(images_path)
        self.labels_path = Path(labels_path)
        self.class_names = class_names

    def sources(self):
        return (self.images_path, self.labels_path)

    def load(self):
        images = load_idx_images(self.images_path)
        labels = load_idx_labels(self.labels_path)
        if images.shape[0] != labels.shape[0]:
            raise FormatError(
                f"{self.images_path} holds {images.shape[0]} images but {self.labels_path} holds {labels.shape[0]} labels"
            )
        return LabeledDataset(images, labels, self.class_names)
