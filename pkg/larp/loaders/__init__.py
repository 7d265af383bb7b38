from .base import LabeledDataset, Loader
from .idx import IdxLoader, load_idx_images, load_idx_labels, write_idx_images, write_idx_labels
from .image_dir import ImageDirLoader, load_image_dir
from .splits import deterministic_split, stratified_subsample

__all__ = [
    "IdxLoader",
    "ImageDirLoader",
    "LabeledDataset",
    "Loader",
    "deterministic_split",
    "load_idx_images",
    "load_idx_labels",
    "load_image_dir",
    "stratified_subsample",
    "write_idx_images",
    "write_idx_labels",
]
