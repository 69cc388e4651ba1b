"""Population-vector encoders for the input layer.

Every encoder emits activities shaped ``(H, M)`` (or ``(N, H, M)`` for a
batch): ``H`` hypercolumns of ``M`` minicolumns whose activities sum to one.

Three encoders are provided:

* ``encode_intensity`` -- grayscale pixel ``x`` becomes ``(x, 1 - x)``.
* ``encode_gmm`` -- Gaussian posteriors under a per-attribute mixture with
  identity covariance and uniform priors (fitted by ``fit_gmm``).
* ``encode_dog`` -- difference-of-Gaussians response ``r`` per pixel and
  channel, squashed into an on/off pair ``(sig(r), sig(-r))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, EncodingError, ShapeError

NORM_TOL = 1e-9


def check_population_code(code: np.ndarray, tol: float = NORM_TOL) -> None:
    """Raise ``EncodingError`` unless every hypercolumn is a distribution."""
    code = np.asarray(code)
    if code.ndim < 2:
        raise ShapeError(f"population code needs at least 2 dims, got shape {code.shape}")
    if not np.all(np.isfinite(code)):
        raise EncodingError("population code has non-finite activities")
    if np.any(code < 0):
        raise EncodingError("population code has negative activities")
    err = np.max(np.abs(code.sum(axis=-1) - 1.0), initial=0.0)
    if err > tol:
        raise EncodingError(f"hypercolumn sums deviate from 1 by {err:.3g} (> {tol:g})")


def to_storage(code: np.ndarray) -> np.ndarray:
    """Storage precision for encoded datasets (single precision)."""
    return np.ascontiguousarray(code, dtype=np.float32)


def to_activity(stored: np.ndarray) -> np.ndarray:
    """Promote stored codes to float64 and renormalize every hypercolumn.

    All training and evaluation paths consume codes through this function,
    so a freshly encoded dataset and one read back from the binary cache
    produce bitwise-identical activities.
    """
    act = np.asarray(stored, dtype=np.float32).astype(np.float64)
    act /= act.sum(axis=-1, keepdims=True)
    return act


# --------------------------------------------------------------------------
# grayscale intensity
# --------------------------------------------------------------------------


def encode_intensity(image: np.ndarray) -> np.ndarray:
    """Encode grayscale values in [0, 1] as one 2-unit hypercolumn per pixel.

    ``image`` may be a single ``(rows, cols)`` image or a batch
    ``(N, rows, cols)``; pixels are flattened row-major. Returns
    ``(rows*cols, 2)`` or ``(N, rows*cols, 2)``.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim not in (2, 3):
        raise ShapeError(f"expected (rows, cols) or (N, rows, cols), got shape {img.shape}")
    bad = ~((img >= 0.0) & (img <= 1.0))
    if bad.any():
        where = tuple(int(v) for v in np.argwhere(bad)[0])
        raise EncodingError(f"pixel {where} has value {img[where]!r} outside [0, 1]")
    flat = img.reshape(img.shape[:-2] + (-1,))
    return np.stack([flat, 1.0 - flat], axis=-1)


# --------------------------------------------------------------------------
# Gaussian mixture vector quantization
# --------------------------------------------------------------------------


@dataclass
class GmmModel:
    """Per-attribute component means, shape ``(attributes, k)``.

    A trailing dimension ``(attributes, k, d)`` is allowed for vector-valued
    attributes.
    """

    means: np.ndarray
    n_iter: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def attribute_count(self) -> int:
        return self.means.shape[0]

    @property
    def components_per_attribute(self) -> int:
        return self.means.shape[1]


def _gmm_loglik(x: np.ndarray, means: np.ndarray) -> tuple[float, np.ndarray]:
    # x: (N, d), means: (k, d); uniform priors, identity covariance
    d2 = ((x[:, None, :] - means[None, :, :]) ** 2).sum(axis=-1)
    logp = -0.5 * d2
    mx = logp.max(axis=1, keepdims=True)
    e = np.exp(logp - mx)
    z = e.sum(axis=1, keepdims=True)
    resp = e / z
    dim = x.shape[1]
    ll = float(np.sum(mx[:, 0] + np.log(z[:, 0])) - x.shape[0] * (np.log(means.shape[0]) + 0.5 * dim * np.log(2 * np.pi)))
    return ll, resp


def _fit_one(x: np.ndarray, k: int, rng: np.random.Generator, tol: float, max_iter: int) -> tuple[np.ndarray, int]:
    distinct = np.unique(x, axis=0)
    if len(distinct) >= k:
        idx = rng.choice(len(distinct), size=k, replace=False)
    else:
        idx = rng.choice(len(distinct), size=k, replace=True)
    means = distinct[np.sort(idx)].astype(np.float64)
    prev, resp = _gmm_loglik(x, means)
    it = 0
    for it in range(1, max_iter + 1):
        w = resp.sum(axis=0)
        nz = w > 0
        means[nz] = (resp[:, nz].T @ x) / w[nz, None]
        ll, resp = _gmm_loglik(x, means)
        if abs(ll - prev) <= tol * max(abs(prev), 1e-300):
            break
        prev = ll
    return means, it


def fit_gmm(samples: np.ndarray, k: int, seed: int = 0, tol: float = 1e-6, max_iter: int = 200) -> GmmModel:
    """Fit ``k`` unit-variance Gaussians per attribute by EM (soft k-means).

    ``samples`` is ``(N, attributes)`` or ``(N, attributes, d)``. Means are
    initialised from ``k`` distinct sample values drawn with a generator
    seeded by ``(seed, attribute)``; EM stops when the relative
    log-likelihood change drops below ``tol`` or after ``max_iter`` rounds.
    An attribute with a single distinct value ends with all means equal to it.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim == 2:
        x = x[:, :, None]
        squeeze = True
    elif x.ndim == 3:
        squeeze = False
    else:
        raise ShapeError(f"samples must be (N, A) or (N, A, d), got shape {x.shape}")
    n, n_attr, dim = x.shape
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    if n < k:
        raise ConfigurationError(f"need at least k={k} samples, got {n}")
    if not np.all(np.isfinite(x)):
        raise EncodingError("samples contain non-finite values")
    means = np.empty((n_attr, k, dim))
    iters = np.empty(n_attr, dtype=int)
    for a in range(n_attr):
        rng = np.random.default_rng([seed, a])
        means[a], iters[a] = _fit_one(x[:, a, :], k, rng, tol, max_iter)
    return GmmModel(means[..., 0] if squeeze else means, iters)


def _gmm_posterior(values: np.ndarray, means: np.ndarray) -> np.ndarray:
    # values (..., d), means (k, d)
    d2 = ((values[..., None, :] - means) ** 2).sum(axis=-1)
    logp = -0.5 * d2
    logp -= logp.max(axis=-1, keepdims=True)
    e = np.exp(logp)
    return e / e.sum(axis=-1, keepdims=True)


def encode_gmm(value, model: GmmModel, attribute_index: int) -> np.ndarray:
    """Posterior membership vector (length k) of one attribute value."""
    if not 0 <= attribute_index < model.attribute_count:
        raise IndexError(f"attribute {attribute_index} not fitted (model has {model.attribute_count})")
    means = model.means[attribute_index]
    if means.ndim == 1:
        means = means[:, None]
    v = np.atleast_1d(np.asarray(value, dtype=np.float64))
    return _gmm_posterior(v, means)


def encode_gmm_dataset(samples: np.ndarray, model: GmmModel) -> np.ndarray:
    """Encode a whole ``(N, attributes[, d])`` array to ``(N, attributes, k)``."""
    x = np.asarray(samples, dtype=np.float64)
    means = model.means if model.means.ndim == 3 else model.means[..., None]
    if x.ndim == 2:
        x = x[..., None]
    if x.shape[1] != means.shape[0]:
        raise ShapeError(f"samples have {x.shape[1]} attributes, model has {means.shape[0]}")
    out = np.empty(x.shape[:2] + (means.shape[1],))
    for a in range(x.shape[1]):
        out[:, a] = _gmm_posterior(x[:, a], means[a])
    return out


# --------------------------------------------------------------------------
# difference of Gaussians
# --------------------------------------------------------------------------

CHANNEL_MODES = ("grayscale", "red-green", "blue-yellow", "color")


def gaussian_kernel(size: int, sigma: float) -> np.ndarray:
    """Sampled isotropic Gaussian truncated to ``size x size``, summing to 1."""
    if size % 2 != 1 or size < 1:
        raise ConfigurationError(f"kernel size must be odd and positive, got {size}")
    if sigma <= 0:
        raise ConfigurationError(f"sigma must be positive, got {sigma}")
    r = np.arange(size) - size // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * sigma**2))
    return g / g.sum()


@dataclass(frozen=True)
class DogFilterBank:
    sigma_small: float = 0.5
    sigma_large: float = 1.0
    small_size: int = 3
    large_size: int = 5
    gain: float = 4.0
    polarity: str = "on"
    channel_mode: str = "grayscale"
    boundary: str = "nearest"

    def __post_init__(self):
        if self.polarity not in ("on", "off"):
            raise ConfigurationError(f"polarity must be 'on' or 'off', got {self.polarity!r}")
        if self.channel_mode not in CHANNEL_MODES:
            raise ConfigurationError(f"channel_mode must be one of {CHANNEL_MODES}, got {self.channel_mode!r}")
        if self.boundary not in ("nearest", "zero"):
            raise ConfigurationError(f"boundary must be 'nearest' or 'zero', got {self.boundary!r}")
        if self.small_size > self.large_size:
            raise ConfigurationError("small aperture must not exceed the large one")

    @property
    def small_aperture(self) -> np.ndarray:
        return gaussian_kernel(self.small_size, self.sigma_small)

    @property
    def large_aperture(self) -> np.ndarray:
        return gaussian_kernel(self.large_size, self.sigma_large)

    @property
    def kernel(self) -> np.ndarray:
        """Center-minus-surround kernel on the large aperture (sign per polarity)."""
        pad = (self.large_size - self.small_size) // 2
        k = np.pad(self.small_aperture, pad) - self.large_aperture
        return k if self.polarity == "on" else -k

    @property
    def channels_per_pixel(self) -> int:
        return 3 if self.channel_mode == "color" else 1


def filter2d(img: np.ndarray, kernel: np.ndarray, boundary: str = "nearest") -> np.ndarray:
    """Correlate the last two axes of ``img`` with ``kernel`` ("same" size)."""
    kh, kw = kernel.shape
    ph, pw = kh // 2, kw // 2
    pad = [(0, 0)] * (img.ndim - 2) + [(ph, ph), (pw, pw)]
    if boundary == "zero":
        padded = np.pad(img, pad, mode="constant")
    else:
        padded = np.pad(img, pad, mode="edge")
    rows, cols = img.shape[-2:]
    out = np.zeros(img.shape, dtype=np.float64)
    for u in range(kh):
        for v in range(kw):
            if kernel[u, v] != 0.0:
                out += kernel[u, v] * padded[..., u : u + rows, v : v + cols]
    return out


def _opponent_planes(img: np.ndarray, mode: str) -> np.ndarray:
    # img (..., rows, cols, C) -> (..., P, rows, cols)
    c = img.shape[-1]
    if c == 1:
        if mode != "grayscale":
            raise EncodingError(f"channel_mode {mode!r} needs an RGB image, got 1 channel")
        return np.moveaxis(img, -1, -3)
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    lum = (r + g + b) / 3.0
    rg = r - g
    by = b - (r + g) / 2.0
    planes = {"grayscale": [lum], "red-green": [rg], "blue-yellow": [by], "color": [lum, rg, by]}[mode]
    return np.stack(planes, axis=-3)


def dog_response(image: np.ndarray, bank: DogFilterBank) -> np.ndarray:
    """Raw DoG responses, shape ``(..., P, rows, cols)``."""
    planes = _opponent_planes(image, bank.channel_mode)
    return filter2d(planes, bank.kernel, bank.boundary)


def _on_off(r: np.ndarray, gain: float) -> np.ndarray:
    # hi = sig(|g r|) >= 0.5 so 1 - hi is exact and on + off == 1 bitwise
    hi = 1.0 / (1.0 + np.exp(-gain * np.abs(r)))
    lo = 1.0 - hi
    pos = r >= 0
    on = np.where(pos, hi, lo)
    off = np.where(pos, lo, hi)
    return np.stack([on, off], axis=-1)


def encode_dog(image: np.ndarray, bank: DogFilterBank | None = None, batch: bool = False) -> np.ndarray:
    """DoG + sigmoid on/off encoding.

    ``image`` is ``(rows, cols)``, ``(rows, cols, 1)`` or ``(rows, cols, 3)``;
    with ``batch=True`` a leading sample axis is expected. Hypercolumns are
    laid out pixel-major then channel (``i = (row*cols + col)*P + p``).
    """
    bank = bank or DogFilterBank()
    img = np.asarray(image, dtype=np.float64)
    lead = 1 if batch else 0
    if img.ndim == 2 + lead:
        img = img[..., None]
    if img.ndim != 3 + lead:
        raise ShapeError(f"unexpected image shape {np.shape(image)}")
    if img.shape[-1] not in (1, 3):
        raise EncodingError(f"unsupported channel count {img.shape[-1]} (need 1 or 3)")
    resp = dog_response(img, bank)  # (..., P, rows, cols)
    resp = np.moveaxis(resp, -3, -1)  # (..., rows, cols, P)
    resp = resp.reshape(resp.shape[:-3] + (-1,))
    return _on_off(resp, bank.gain)
