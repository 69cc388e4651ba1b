"""Dataset loaders and the binary / text artifacts the CLI reads and writes.

Formats
-------
IDX (MNIST, Fashion-MNIST)
    big-endian: magic ``0x00000803`` (images) or ``0x00000801`` (labels),
    one u32 per dimension, then raw u8. ``.gz`` files are read transparently.
raw image pack (SVHN, CIFAR-10 after conversion)
    little-endian u32 ``N, H, W, C`` then ``N*H*W*C`` u8; labels as u32 ``N``
    then ``N`` u8.
encoded cache ``BPOP``
    magic ``b"BPOP"``, u32 version, ``N``, ``H``, ``M`` then row-major
    little-endian float32 activities.
checkpoint ``BCPN``
    magic ``b"BCPN"``, u32 version, ``h_inp, m_inp, h_hid, m_hid, fanin``,
    the ``h_inp x h_hid`` connectivity as row-major little-bit-order bitmap,
    then pre, post and joint traces as little-endian float64. Bias and
    weights are recomputed on load.
"""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    CountMismatchError,
    LoadError,
    MagicMismatchError,
    ShapeError,
    TruncatedFileError,
    UnsupportedExportError,
)
from .plasticity import recompute_parameters
from .state import LayerGeometry, NetworkState, Traces

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
BPOP_MAGIC = b"BPOP"
BCPN_MAGIC = b"BCPN"
FORMAT_VERSION = 1


def _read_bytes(path) -> bytes:
    path = Path(path)
    if not path.exists():
        raise LoadError(f"{path}: no such file")
    if path.suffix == ".gz":
        with gzip.open(path, "rb") as f:
            return f.read()
    return path.read_bytes()


def _parse_idx(buf: bytes, path, magic: int, ndim: int) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(buf) >= 4:
        (got,) = struct.unpack(">I", buf[:4])
        if got != magic:
            raise MagicMismatchError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    if len(buf) < header:
        raise TruncatedFileError(f"{path}: expected at least {header} header bytes, got {len(buf)}")
    dims = struct.unpack(f">{ndim}I", buf[4:header])
    expected = header + int(np.prod(dims))
    if len(buf) < expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, count=int(np.prod(dims)), offset=header).reshape(dims)


@dataclass
class IdxDataset:
    images: np.ndarray  # uint8 (N, rows, cols) or (N, rows, cols, C)
    labels: np.ndarray  # uint8 (N,)
    split: str = "train"

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def grid(self) -> tuple[int, int, int]:
        ch = self.images.shape[3] if self.images.ndim == 4 else 1
        return self.images.shape[1], self.images.shape[2], ch

    def scaled(self) -> np.ndarray:
        """Pixel values divided by 255 as float64."""
        return self.images.astype(np.float64) / 255.0


def load_idx(path_images, path_labels, split: str = "train") -> IdxDataset:
    images = _parse_idx(_read_bytes(path_images), path_images, IDX_IMAGES_MAGIC, 3)
    labels = _parse_idx(_read_bytes(path_labels), path_labels, IDX_LABELS_MAGIC, 1)
    if len(images) != len(labels):
        raise CountMismatchError(f"{len(images)} images but {len(labels)} labels")
    return IdxDataset(images, labels, split)


def write_idx(path_images, path_labels, images: np.ndarray, labels: np.ndarray) -> None:
    images = np.asarray(images, dtype=np.uint8)
    Path(path_images).write_bytes(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape) + images.tobytes())
    write_labels(path_labels, labels)


def write_labels(path, labels: np.ndarray) -> None:
    """Labels alone as an IDX ``0x00000801`` file."""
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">2I", IDX_LABELS_MAGIC, len(labels)) + labels.tobytes())


def read_labels(path) -> np.ndarray:
    return _parse_idx(_read_bytes(path), path, IDX_LABELS_MAGIC, 1)


def load_raw(path_images, path_labels, split: str = "train") -> IdxDataset:
    buf = _read_bytes(path_images)
    if len(buf) < 16:
        raise TruncatedFileError(f"{path_images}: expected at least 16 header bytes, got {len(buf)}")
    n, h, w, c = struct.unpack("<4I", buf[:16])
    expected = 16 + n * h * w * c
    if len(buf) < expected:
        raise TruncatedFileError(f"{path_images}: expected {expected} bytes, got {len(buf)}")
    images = np.frombuffer(buf, np.uint8, n * h * w * c, 16).reshape(n, h, w, c)
    lbuf = _read_bytes(path_labels)
    (nl,) = struct.unpack("<I", lbuf[:4])
    if len(lbuf) < 4 + nl:
        raise TruncatedFileError(f"{path_labels}: expected {4 + nl} bytes, got {len(lbuf)}")
    if nl != n:
        raise CountMismatchError(f"{n} images but {nl} labels")
    return IdxDataset(images, np.frombuffer(lbuf, np.uint8, nl, 4), split)


# --------------------------------------------------------------------------
# encoded cache
# --------------------------------------------------------------------------


def write_codes(path, codes: np.ndarray) -> None:
    codes = np.asarray(codes)
    if codes.ndim != 3:
        raise ShapeError(f"codes must be (N, H, M), got shape {codes.shape}")
    n, h, m = codes.shape
    body = np.ascontiguousarray(codes, dtype="<f4").tobytes()
    Path(path).write_bytes(BPOP_MAGIC + struct.pack("<4I", FORMAT_VERSION, n, h, m) + body)


def read_codes(path) -> np.ndarray:
    buf = _read_bytes(path)
    if len(buf) < 20:
        raise TruncatedFileError(f"{path}: expected at least 20 header bytes, got {len(buf)}")
    if buf[:4] != BPOP_MAGIC:
        raise MagicMismatchError(f"{path}: magic {buf[:4]!r}, expected {BPOP_MAGIC!r}")
    version, n, h, m = struct.unpack("<4I", buf[4:20])
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported version {version}")
    expected = 20 + 4 * n * h * m
    if len(buf) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(buf)}")
    return np.frombuffer(buf, dtype="<f4", offset=20).reshape(n, h, m).astype(np.float32)


# --------------------------------------------------------------------------
# checkpoints
# --------------------------------------------------------------------------


def checkpoint_bytes(state: NetworkState) -> bytes:
    g = state.geometry
    bits = np.packbits(state.connectivity.astype(np.uint8).ravel(), bitorder="little")
    parts = [
        BCPN_MAGIC,
        struct.pack("<6I", FORMAT_VERSION, g.h_inp, g.m_inp, g.h_hid, g.m_hid, state.fanin),
        bits.tobytes(),
        np.ascontiguousarray(state.traces.pre, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.traces.post, dtype="<f8").tobytes(),
        np.ascontiguousarray(state.traces.joint, dtype="<f8").tobytes(),
    ]
    return b"".join(parts)


def save_checkpoint(path, state: NetworkState) -> None:
    Path(path).write_bytes(checkpoint_bytes(state))


def load_checkpoint(path) -> NetworkState:
    buf = _read_bytes(path)
    if len(buf) < 28:
        raise TruncatedFileError(f"{path}: expected at least 28 header bytes, got {len(buf)}")
    if buf[:4] != BCPN_MAGIC:
        raise MagicMismatchError(f"{path}: magic {buf[:4]!r}, expected {BCPN_MAGIC!r}")
    version, h_inp, m_inp, h_hid, m_hid, fanin = struct.unpack("<6I", buf[4:28])
    if version != FORMAT_VERSION:
        raise LoadError(f"{path}: unsupported version {version}")
    g = LayerGeometry(h_inp, m_inp, h_hid, m_hid)
    nbits = (h_inp * h_hid + 7) // 8
    sizes = [nbits, 8 * g.n_inp, 8 * g.n_hid, 8 * g.n_inp * g.n_hid]
    expected = 28 + sum(sizes)
    if len(buf) != expected:
        raise TruncatedFileError(f"{path}: expected {expected} bytes, got {len(buf)}")
    off = 28
    bits = np.frombuffer(buf, np.uint8, nbits, off)
    off += nbits
    conn = np.unpackbits(bits, count=h_inp * h_hid, bitorder="little").reshape(h_inp, h_hid).astype(bool)
    pre = np.frombuffer(buf, "<f8", g.n_inp, off).reshape(h_inp, m_inp).astype(np.float64)
    off += sizes[1]
    post = np.frombuffer(buf, "<f8", g.n_hid, off).reshape(h_hid, m_hid).astype(np.float64)
    off += sizes[2]
    joint = np.frombuffer(buf, "<f8", g.n_inp * g.n_hid, off).reshape(g.n_inp, g.n_hid).astype(np.float64)
    if np.any(conn.sum(axis=0) != fanin):
        raise LoadError(f"{path}: connectivity violates fan-in {fanin}")
    traces = Traces(pre, post, joint)
    bias, weights = recompute_parameters(traces)
    return NetworkState(g, fanin, conn, traces, bias, weights)


# --------------------------------------------------------------------------
# PGM / CSV
# --------------------------------------------------------------------------


def write_pgm(path, image: np.ndarray) -> None:
    """Binary ``P5`` grayscale image; ``image`` is u8 or floats in [0, 1]."""
    img = np.asarray(image)
    if img.ndim != 2:
        raise UnsupportedExportError(f"PGM needs a 2-D image, got shape {img.shape}")
    if img.dtype != np.uint8:
        img = np.clip(np.rint(np.asarray(img, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    rows, cols = img.shape
    Path(path).write_bytes(f"P5\n{cols} {rows}\n255\n".encode("ascii") + img.tobytes())


def read_pgm(path) -> np.ndarray:
    buf = Path(path).read_bytes()
    fields = []
    pos = 0
    while len(fields) < 4:
        while buf[pos : pos + 1].isspace():
            pos += 1
        if buf[pos : pos + 1] == b"#":
            pos = buf.index(b"\n", pos) + 1
            continue
        end = pos
        while not buf[end : end + 1].isspace():
            end += 1
        fields.append(buf[pos:end])
        pos = end
    if fields[0] != b"P5":
        raise MagicMismatchError(f"{path}: not a binary PGM")
    cols, rows, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise LoadError(f"{path}: only maxval 255 is supported")
    return np.frombuffer(buf, np.uint8, rows * cols, pos + 1).reshape(rows, cols)


def write_csv(path, rows: list[dict], fieldnames: list[str] | None = None) -> None:
    fieldnames = fieldnames or (list(rows[0]) if rows else [])
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.DictWriter(f, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)


def read_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))
