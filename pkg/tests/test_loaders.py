import gzip
import struct

import numpy as np
import pytest

from larp.exceptions import EmptyDatasetError, FormatError, InputError
from larp.loaders import (
    IdxLoader,
    ImageDirLoader,
    LabeledDataset,
    deterministic_split,
    load_idx_images,
    load_idx_labels,
    load_image_dir,
    stratified_subsample,
    write_idx_images,
    write_idx_labels,
)
from larp.loaders.base import Loader
from larp.loaders.image_dir import read_pgm
from larp.loaders.splits import split_indices


def _idx_images_bytes(raster, magic=0x803):
    n, rows, cols = raster.shape
    return struct.pack(">4I", magic, n, rows, cols) + raster.astype(np.uint8).tobytes()


def _idx_labels_bytes(labels, magic=0x801):
    return struct.pack(">2I", magic, len(labels)) + bytes(labels)


def _pgm(width, height, maxval, samples, header_extra=b""):
    dtype = ">u2" if maxval > 255 else np.uint8
    raster = np.asarray(samples, dtype=dtype).tobytes()
    return b"P5\n" + header_extra + f"{width} {height}\n{maxval}\n".encode() + raster


def _write_pgm(path, samples, maxval=255):
    samples = np.asarray(samples)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(_pgm(samples.shape[1], samples.shape[0], maxval, samples))


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------


class TestIdx:
    def test_two_images(self, tmp_path):
        raster = np.array([[[0, 255], [255, 0]], [[255, 255], [0, 0]]])
        (tmp_path / "images").write_bytes(_idx_images_bytes(raster))
        (tmp_path / "labels").write_bytes(_idx_labels_bytes([3, 7]))
        dataset = IdxLoader(tmp_path / "images", tmp_path / "labels").load()
        assert dataset.images.shape == (2, 2, 2)
        assert np.array_equal(dataset.images[0], [[0.0, 1.0], [1.0, 0.0]])
        assert np.array_equal(dataset.labels, [3, 7])
        assert dataset.num_classes == 8

    def test_scaling(self, tmp_path):
        raster = np.arange(0, 256, dtype=np.uint8).reshape(1, 16, 16)
        (tmp_path / "images").write_bytes(_idx_images_bytes(raster))
        images = load_idx_images(tmp_path / "images")
        assert images.dtype == np.float64
        assert np.array_equal(images[0], raster[0] / 255.0)

    def test_wrong_magic(self, tmp_path):
        (tmp_path / "images").write_bytes(_idx_images_bytes(np.zeros((1, 2, 2)), magic=0x801))
        with pytest.raises(FormatError, match="magic"):
            load_idx_images(tmp_path / "images")

    def test_labels_wrong_magic(self, tmp_path):
        (tmp_path / "labels").write_bytes(_idx_labels_bytes([1], magic=0x803))
        with pytest.raises(FormatError):
            load_idx_labels(tmp_path / "labels")

    def test_truncated_body(self, tmp_path):
        (tmp_path / "images").write_bytes(_idx_images_bytes(np.zeros((2, 3, 3)))[:-1])
        with pytest.raises(FormatError, match="truncated"):
            load_idx_images(tmp_path / "images")

    def test_truncated_header(self, tmp_path):
        (tmp_path / "labels").write_bytes(b"\x00\x00\x08")
        with pytest.raises(FormatError):
            load_idx_labels(tmp_path / "labels")

    def test_trailing_bytes(self, tmp_path):
        (tmp_path / "labels").write_bytes(_idx_labels_bytes([1, 2]) + b"\x00")
        with pytest.raises(FormatError):
            load_idx_labels(tmp_path / "labels")

    def test_count_mismatch(self, tmp_path):
        (tmp_path / "images").write_bytes(_idx_images_bytes(np.zeros((2, 2, 2))))
        (tmp_path / "labels").write_bytes(_idx_labels_bytes([1, 2, 3]))
        with pytest.raises(FormatError):
            IdxLoader(tmp_path / "images", tmp_path / "labels").load()

    def test_gzip(self, tmp_path):
        raster = np.array([[[0, 255], [255, 0]]])
        with gzip.open(tmp_path / "images.gz", "wb") as f:
            f.write(_idx_images_bytes(raster))
        assert np.array_equal(load_idx_images(tmp_path / "images.gz")[0], [[0.0, 1.0], [1.0, 0.0]])

    def test_bad_gzip(self, tmp_path):
        (tmp_path / "labels.gz").write_bytes(_idx_labels_bytes([1]))
        with pytest.raises(FormatError):
            load_idx_labels(tmp_path / "labels.gz")

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_idx_images(tmp_path / "absent")

    def test_rewrite_is_bit_identical(self, tmp_path):
        raster = np.random.default_rng(5).integers(0, 256, size=(3, 4, 5))
        original = _idx_images_bytes(raster)
        (tmp_path / "images").write_bytes(original)
        write_idx_images(tmp_path / "copy", load_idx_images(tmp_path / "images"))
        assert (tmp_path / "copy").read_bytes() == original

    def test_write_labels(self, idx_pair):
        _, labels_path, dataset = idx_pair
        assert np.array_equal(load_idx_labels(labels_path), dataset.labels)

    def test_write_rejects_out_of_range(self, tmp_path):
        with pytest.raises(InputError):
            write_idx_images(tmp_path / "images", np.full((1, 2, 2), 1.5))
        with pytest.raises(InputError):
            write_idx_labels(tmp_path / "labels", [0, 256])

    def test_sources(self, tmp_path):
        loader = IdxLoader(tmp_path / "a", tmp_path / "b")
        assert loader.sources() == (tmp_path / "a", tmp_path / "b")


# ---------------------------------------------------------------------------
# PGM directories
# ---------------------------------------------------------------------------


class TestReadPgm:
    def test_full_scale(self, tmp_path):
        _write_pgm(tmp_path / "x.pgm", np.full((2, 3), 255))
        image = read_pgm(tmp_path / "x.pgm")
        assert image.shape == (2, 3)
        assert np.array_equal(image, np.ones((2, 3)))

    def test_sixteen_bit(self, tmp_path):
        _write_pgm(tmp_path / "x.pgm", [[0, 1000], [500, 250]], maxval=1000)
        assert np.array_equal(read_pgm(tmp_path / "x.pgm"), [[0.0, 1.0], [0.5, 0.25]])

    def test_comment_in_header(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(_pgm(2, 1, 4, [2, 4], header_extra=b"# scanned\n"))
        assert np.array_equal(read_pgm(tmp_path / "x.pgm"), [[0.5, 1.0]])

    def test_ascii_pgm_rejected(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P2\n1 1\n255\n0\n")
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")

    def test_truncated_raster(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(_pgm(3, 3, 255, np.zeros(9))[:-2])
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")

    def test_sample_above_maxval(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(_pgm(2, 1, 10, [3, 11]))
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")

    def test_bad_maxval(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"P5\n1 1\n0\n\x00")
        with pytest.raises(FormatError):
            read_pgm(tmp_path / "x.pgm")


class TestImageDir:
    def test_classes_sorted_by_name(self, tmp_path):
        _write_pgm(tmp_path / "b" / "1.pgm", [[255, 0]])
        _write_pgm(tmp_path / "a" / "1.pgm", [[0, 0]])
        _write_pgm(tmp_path / "a" / "2.pgm", [[0, 255]])
        dataset = load_image_dir(tmp_path)
        assert dataset.class_names == ("a", "b")
        assert np.array_equal(dataset.labels, [0, 0, 1])
        assert np.array_equal(dataset.images[2], [[1.0, 0.0]])

    def test_ignores_other_extensions(self, tmp_path):
        _write_pgm(tmp_path / "a" / "1.pgm", [[0]])
        (tmp_path / "a" / "notes.txt").write_text("not an image")
        assert len(load_image_dir(tmp_path)) == 1

    def test_empty_root(self, tmp_path):
        with pytest.raises(EmptyDatasetError):
            load_image_dir(tmp_path)

    def test_empty_is_a_format_error(self, tmp_path):
        (tmp_path / "a").mkdir()
        with pytest.raises(FormatError):
            load_image_dir(tmp_path)

    def test_mixed_dimensions(self, tmp_path):
        _write_pgm(tmp_path / "a" / "1.pgm", np.zeros((2, 2)))
        _write_pgm(tmp_path / "a" / "2.pgm", np.zeros((2, 3)))
        with pytest.raises(FormatError):
            load_image_dir(tmp_path)

    def test_loader(self, tmp_path):
        _write_pgm(tmp_path / "a" / "1.pgm", [[0]])
        loader = ImageDirLoader(tmp_path)
        assert loader.sources() == (tmp_path,)
        assert len(loader.load()) == 1


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------


class TestLabeledDataset:
    def test_rejects_flat_images(self):
        with pytest.raises(FormatError):
            LabeledDataset(np.zeros((4, 4)), [0, 1, 2, 3])

    def test_rejects_label_count(self):
        with pytest.raises(InputError):
            LabeledDataset(np.zeros((2, 3, 3)), [0])

    def test_rejects_float_labels(self):
        with pytest.raises(InputError):
            LabeledDataset(np.zeros((2, 3, 3)), [0.0, 1.0])

    def test_rejects_labels_outside_class_names(self):
        with pytest.raises(InputError):
            LabeledDataset(np.zeros((2, 3, 3)), [0, 2], class_names=["a", "b"])

    def test_subset_keeps_class_names(self):
        dataset = LabeledDataset(np.zeros((3, 2, 2)), [0, 1, 1], class_names=["a", "b", "c"])
        subset = dataset.subset([2])
        assert len(subset) == 1
        assert subset.num_classes == 3

    def test_loader_is_abstract(self):
        with pytest.raises(NotImplementedError):
            Loader().load()


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------


class TestSplits:
    def test_halves_each_class(self):
        labels = np.repeat(np.arange(10), 10)
        train, test = split_indices(labels, 0.5, seed=0)
        for c in range(10):
            assert np.count_nonzero(labels[train] == c) == 5
            assert np.count_nonzero(labels[test] == c) == 5

    def test_disjoint_and_exhaustive(self):
        labels = np.repeat(np.arange(3), [4, 7, 5])
        train, test = split_indices(labels, 0.3, seed=9)
        assert not set(train) & set(test)
        assert np.array_equal(np.sort(np.concatenate([train, test])), np.arange(16))

    def test_floor_goes_to_test(self):
        labels = np.repeat([0, 1], [5, 3])
        _, test = split_indices(labels, 0.5, seed=1)
        assert np.count_nonzero(labels[test] == 0) == 2
        assert np.count_nonzero(labels[test] == 1) == 1

    def test_same_seed_same_split(self):
        labels = np.repeat(np.arange(4), 6)
        first = split_indices(labels, 0.5, seed=3)
        second = split_indices(labels, 0.5, seed=3)
        assert np.array_equal(first[0], second[0])
        assert np.array_equal(first[1], second[1])

    def test_seed_changes_split(self):
        labels = np.repeat(np.arange(2), 20)
        assert not np.array_equal(split_indices(labels, 0.5, seed=0)[1], split_indices(labels, 0.5, seed=1)[1])

    def test_singleton_class(self):
        with pytest.raises(InputError):
            split_indices(np.array([0, 0, 1]), 0.5, seed=0)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.2, 1.5])
    def test_fraction_range(self, fraction):
        with pytest.raises(InputError):
            split_indices(np.array([0, 0, 1, 1]), fraction, seed=0)

    def test_deterministic_split(self, toy_dataset):
        train, test = deterministic_split(toy_dataset, 0.5, seed=2)
        assert len(train) == len(test) == 6
        assert np.array_equal(np.bincount(test.labels), [2, 2, 2])


class TestStratifiedSubsample:
    def test_proportions(self):
        dataset = LabeledDataset(np.zeros((40, 1, 1)), np.repeat([0, 1], [30, 10]))
        subset = stratified_subsample(dataset, 8, seed=0)
        assert np.array_equal(np.bincount(subset.labels), [6, 2])

    def test_largest_remainder(self):
        dataset = LabeledDataset(np.zeros((9, 1, 1)), np.repeat([0, 1, 2], 3))
        subset = stratified_subsample(dataset, 4, seed=0)
        # quotas are 4/3 each; the single extra sample goes to class 0
        assert np.array_equal(np.bincount(subset.labels), [2, 1, 1])

    def test_larger_than_dataset(self, toy_dataset):
        assert stratified_subsample(toy_dataset, 100, seed=0) is toy_dataset

    def test_repeatable(self, toy_dataset):
        first = stratified_subsample(toy_dataset, 6, seed=4)
        second = stratified_subsample(toy_dataset, 6, seed=4)
        assert np.array_equal(first.images, second.images)

    def test_positive_size(self, toy_dataset):
        with pytest.raises(InputError):
            stratified_subsample(toy_dataset, 0, seed=0)
