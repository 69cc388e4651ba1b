"""Glue between run configs, dataset files and encoders."""

from __future__ import annotations

import numpy as np

from .config import DataConfig, EncoderConfig
from .encoding import encode_dog, encode_gmm_dataset, encode_intensity, fit_gmm, to_storage
from .errors import ConfigurationError, EncodingError
from .io import IdxDataset, load_idx, load_raw


def load_split(data: DataConfig, split: str) -> IdxDataset | None:
    """Load the ``train`` or ``test`` split named in ``data``; ``None`` if absent."""
    images = getattr(data, f"{split}_images")
    labels = getattr(data, f"{split}_labels")
    if images is None and labels is None:
        return None
    if images is None or labels is None:
        raise ConfigurationError(f"[data] {split}_images and {split}_labels must be given together")
    loader = load_idx if data.format == "idx" else load_raw
    ds = loader(images, labels, split)
    limit = getattr(data, f"limit_{split}")
    if limit is not None:
        ds = IdxDataset(ds.images[:limit], ds.labels[:limit], split)
    return ds


def _channels_last(images: np.ndarray) -> np.ndarray:
    return images if images.ndim == 4 else images[..., None]


def input_grid(images: np.ndarray, encoder: EncoderConfig) -> tuple[int, int, int]:
    """``(rows, cols, hypercolumns per pixel)`` of the encoded input layer."""
    img = _channels_last(images)
    rows, cols, ch = img.shape[1:]
    if encoder.kind == "dog":
        return rows, cols, encoder.dog.channels_per_pixel
    if encoder.kind == "gmm":
        return rows, cols, ch
    return rows, cols, 1


def encode_images(images: np.ndarray, encoder: EncoderConfig, gmm=None, seed: int = 0, chunk: int = 5000):
    """Encode a ``uint8`` image batch; returns ``(stored codes, gmm model)``.

    ``intensity`` and ``dog`` work on pixel values scaled to [0, 1]. ``gmm``
    fits one unit-variance mixture per pixel/channel on raw 0..255 values
    unless a fitted ``gmm`` model is passed (e.g. the one from the train split).
    """
    img = _channels_last(np.asarray(images))
    n = len(img)
    if encoder.kind == "intensity":
        if img.shape[-1] != 1:
            raise EncodingError(f"intensity coding needs grayscale images, got {img.shape[-1]} channels")
        parts = [encode_intensity(img[lo : lo + chunk, ..., 0] / 255.0) for lo in range(0, n, chunk)]
    elif encoder.kind == "dog":
        parts = [encode_dog(img[lo : lo + chunk] / 255.0, encoder.dog, batch=True) for lo in range(0, n, chunk)]
    else:
        flat = img.reshape(n, -1).astype(np.float64)
        if gmm is None:
            gmm = fit_gmm(flat, encoder.gmm_k, seed=seed)
        parts = [encode_gmm_dataset(flat[lo : lo + chunk], gmm) for lo in range(0, n, chunk)]
    return np.concatenate([to_storage(p) for p in parts]), gmm
