"""Seeded, class-stratified train/test splits and subsets."""

import math

import numpy as np

from larp.exceptions import InputError


def _class_indices(labels):
    return [np.flatnonzero(labels == c) for c in np.unique(labels)]


def split_indices(labels, fraction, seed):
    """
    ``(train, test)`` index arrays, both sorted. Each class sends
    ``floor(n_c * fraction)`` of its samples to test, drawn by a seeded
    shuffle, and the rest to train.
    """
    if not 0.0 < fraction < 1.0:
        raise InputError(f"split fraction must lie strictly between 0 and 1, got {fraction}")
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    train, test = [], []
    for indices in _class_indices(labels):
        if indices.size < 2:
            raise InputError(f"class {labels[indices[0]]} has fewer than 2 samples and cannot be split")
        shuffled = rng.permutation(indices)
        n_test = math.floor(indices.size * fraction)
        test.append(shuffled[:n_test])
        train.append(shuffled[n_test:])
    return np.sort(np.concatenate(train)), np.sort(np.concatenate(test))


def deterministic_split(dataset, fraction, seed):
    train, test = split_indices(dataset.labels, fraction, seed)
    return dataset.subset(train), dataset.subset(test)


def stratified_subsample(dataset, size, seed):
    """
    ``size`` samples with per-class counts proportional to the full set
    (largest-remainder rounding), each class shuffled by ``seed``.
    """
    if size < 1:
        raise InputError(f"subsample size must be positive, got {size}")
    if size >= len(dataset):
        return dataset
    groups = _class_indices(dataset.labels)
    counts = np.array([g.size for g in groups])
    quotas = size * counts / counts.sum()
    take = np.floor(quotas).astype(np.intp)
    remainder = size - int(take.sum())
    # ties go to the lower class index
    order = np.argsort(-(quotas - take), kind="stable")
    take[order[:remainder]] += 1
    rng = np.random.default_rng(seed)
    chosen = [rng.permutation(g)[:n] for g, n in zip(groups, take, strict=True)]
    return dataset.subset(np.sort(np.concatenate(chosen)))
