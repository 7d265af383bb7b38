"""
Labelled image directories: one sub-directory per class, sorted by name to
assign class indices, each holding binary greyscale PGM (P5) files.
"""

import logging
from pathlib import Path

import numpy as np

from larp.exceptions import EmptyDatasetError, FormatError

from .base import LabeledDataset, Loader

PGM_MAGIC = b"P5"
MAX_MAXVAL = 65535
_WHITESPACE = b" \t\r\n\v\f"

logger = logging.getLogger("larp.loaders")


def _header_tokens(data, path):
    """The four header fields and the offset of the raster."""
    tokens = []
    pos = 0
    end = len(data)
    while len(tokens) < 4:
        while pos < end and data[pos] in _WHITESPACE:
            pos += 1
        if pos < end and data[pos] == ord("#"):
            while pos < end and data[pos] != ord("\n"):
                pos += 1
            continue
        start = pos
        while pos < end and data[pos] not in _WHITESPACE and data[pos] != ord("#"):
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    if pos >= end:
        raise FormatError(f"{path}: PGM header is not followed by a raster")
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def read_pgm(path):
    """One P5 image as a float64 map scaled by p / maxval."""
    data = Path(path).read_bytes()
    if not data.startswith(PGM_MAGIC):
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    tokens, offset = _header_tokens(data, path)
    if tokens[0] != PGM_MAGIC:
        raise FormatError(f"{path}: not a binary PGM (P5) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise FormatError(f"{path}: malformed PGM header") from e
    if width < 1 or height < 1 or not 1 <= maxval <= MAX_MAXVAL:
        raise FormatError(f"{path}: invalid PGM dimensions {width}x{height} or maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    expected = width * height * dtype.itemsize
    raster = data[offset : offset + expected]
    if len(raster) < expected:
        raise FormatError(f"{path}: truncated PGM raster ({len(raster)} of {expected} bytes)")
    samples = np.frombuffer(raster, dtype=dtype).reshape(height, width)
    if samples.max() > maxval:
        raise FormatError(f"{path}: sample exceeds maxval {maxval}")
    return samples / float(maxval)


def load_image_dir(root_path, extension=".pgm"):
    root = Path(root_path)
    if not extension.startswith("."):
        extension = f".{extension}"
    class_dirs = sorted(p for p in root.iterdir() if p.is_dir())
    images, labels = [], []
    shape = None
    for label, class_dir in enumerate(class_dirs):
        for path in sorted(class_dir.glob(f"*{extension}")):
            image = read_pgm(path)
            if shape is None:
                shape = image.shape
            elif image.shape != shape:
                raise FormatError(f"{path}: image is {image.shape}, earlier images are {shape}")
            images.append(image)
            labels.append(label)
    if not images:
        raise EmptyDatasetError(f"no {extension} images found under {root}")
    logger.debug("read %d images in %d classes from %s", len(images), len(class_dirs), root)
    return LabeledDataset(np.stack(images), np.array(labels, dtype=np.intp), [p.name for p in class_dirs])


class ImageDirLoader(Loader):
    def __init__(self, root, extension=".pgm"):
        self.root = Path(root)
        self.extension = extension

    def sources(self):
        return (self.root,)

    def load(self):
        return load_image_dir(self.root, self.extension)
