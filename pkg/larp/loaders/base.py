import numpy as np

from larp.exceptions import FormatError, InputError


class LabeledDataset:
    """
    Images stacked as an (n, H, W) float64 array with one class index per
    image. ``class_names``, when given, fixes the class count; otherwise it
    is one more than the largest label.
    """

    def __init__(self, images, labels, class_names=None):
        images = np.ascontiguousarray(images, dtype=np.float64)
        labels = np.asarray(labels)
        if images.ndim != 3:
            raise FormatError(f"images must stack to shape (n, H, W), got {images.shape}")
        if labels.ndim != 1 or labels.shape[0] != images.shape[0]:
            raise InputError(f"{labels.size} labels for {images.shape[0]} images")
        if labels.size and not np.issubdtype(labels.dtype, np.integer):
            raise InputError(f"labels must be integers, got dtype {labels.dtype}")
        labels = labels.astype(np.intp)
        if labels.size and labels.min() < 0:
            raise InputError("labels must be non-negative")
        if class_names is not None:
            class_names = tuple(class_names)
            if labels.size and labels.max() >= len(class_names):
                raise InputError(f"label {labels.max()} is out of range for {len(class_names)} classes")
        self.images = images
        self.labels = labels
        self.class_names = class_names

    def __len__(self):
        return self.labels.shape[0]

    def __repr__(self):
        return f"<{self.__class__.__qualname__}: {len(self)} images of {self.image_shape}>"

    @property
    def image_shape(self):
        return self.images.shape[1:]

    @property
    def num_classes(self):
        if self.class_names is not None:
            return len(self.class_names)
        return int(self.labels.max()) + 1 if self.labels.size else 0

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(self.images[indices], self.labels[indices], self.class_names)


class Loader:
    def load(self):
        """Read the source and return a LabeledDataset."""
        raise NotImplementedError("subclasses of Loader must provide a load() method")

    def sources(self):
        """The paths this loader reads, for error messages and logging."""
        raise NotImplementedError("subclasses of Loader must provide a sources() method")
