"""Receptive-field images: connectivity masks and per-minicolumn feature tiles."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .encoding import to_activity
from .errors import UnsupportedExportError
from .io import write_csv, write_pgm
from .network import hidden_codes
from .state import NetworkState


def infer_grid(h_inp: int) -> tuple[int, int, int]:
    """Square pixel grid ``(rows, cols, channels)`` for ``h_inp`` hypercolumns."""
    for ch in (1, 3):
        if h_inp % ch == 0:
            side = math.isqrt(h_inp // ch)
            if side * side * ch == h_inp:
                return side, side, ch
    raise UnsupportedExportError(f"{h_inp} input hypercolumns do not form a square pixel grid")


def _check_grid(state: NetworkState, grid) -> tuple[int, int, int]:
    grid = infer_grid(state.geometry.h_inp) if grid is None else tuple(grid)
    if len(grid) != 3 or grid[0] * grid[1] * grid[2] != state.geometry.h_inp:
        raise UnsupportedExportError(f"grid {grid} does not cover {state.geometry.h_inp} input hypercolumns")
    return grid


def connectivity_masks(state: NetworkState, grid=None) -> np.ndarray:
    """Boolean ``(h_hid, rows, cols)``; a pixel is set if any of its channels is active."""
    rows, cols, ch = _check_grid(state, grid)
    c = state.connectivity.reshape(rows, cols, ch, -1).any(axis=2)
    return np.moveaxis(c, -1, 0)


def mask_spread(masks: np.ndarray) -> float:
    """Mean pairwise pixel distance within each mask, averaged over masks.

    Masks with fewer than two pixels contribute nothing.
    """
    vals = []
    for m in masks:
        pts = np.argwhere(m).astype(np.float64)
        n = len(pts)
        if n < 2:
            continue
        d = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
        vals.append(d.sum() / (n * (n - 1)))
    return float(np.mean(vals)) if vals else 0.0


def trace_features(state: NetworkState, grid=None) -> np.ndarray:
    """Trace-weighted mean of the first input minicolumn per hidden minicolumn.

    ``joint[i, 0, j, k] / post[j, k]`` estimates ``E[x_i0 | y_jk]``; channels
    are averaged. Returns ``(h_hid, m_hid, rows, cols)``.
    """
    rows, cols, ch = _check_grid(state, grid)
    cond = state.traces.joint4()[:, 0, :, :] / state.traces.post[None, :, :]  # (h_inp, h_hid, m_hid)
    cond = cond.reshape(rows, cols, ch, *cond.shape[1:]).mean(axis=2)
    return np.transpose(cond, (2, 3, 0, 1))


def sample_features(
    state: NetworkState, codes: np.ndarray, grid=None, threshold: float = 0.9
) -> tuple[np.ndarray, np.ndarray]:
    """Mean first-minicolumn input over samples with hidden activity ``> threshold``.

    Returns the ``(h_hid, m_hid, rows, cols)`` averages and the per-minicolumn
    sample counts. Minicolumns never above threshold fall back to the
    trace-weighted estimate.
    """
    rows, cols, ch = _check_grid(state, grid)
    g = state.geometry
    total = np.zeros((g.h_hid, g.m_hid, g.h_inp))
    count = np.zeros((g.h_hid, g.m_hid), dtype=np.int64)
    for lo in range(0, len(codes), 1000):
        x = to_activity(codes[lo : lo + 1000])[..., 0]  # (n, h_inp)
        sel = (hidden_codes(state, codes[lo : lo + 1000]) > threshold).astype(np.float64)
        total += np.einsum("njk,ni->jki", sel, x)
        count += sel.sum(axis=0).astype(np.int64)
    mean = total / np.maximum(count, 1)[..., None]
    mean = mean.reshape(g.h_hid, g.m_hid, rows, cols, ch).mean(axis=-1)
    fallback = trace_features(state, grid)
    return np.where((count > 0)[..., None, None], mean, fallback), count


def mosaic(tiles: np.ndarray, gap: int = 1) -> np.ndarray:
    """Lay ``(n, rows, cols)`` tiles on a near-square sheet with a black gap."""
    n, rows, cols = tiles.shape
    per_row = math.ceil(math.sqrt(n))
    nrows = math.ceil(n / per_row)
    sheet = np.zeros((nrows * (rows + gap) - gap, per_row * (cols + gap) - gap))
    for t in range(n):
        r, c = divmod(t, per_row)
        sheet[r * (rows + gap) : r * (rows + gap) + rows, c * (cols + gap) : c * (cols + gap) + cols] = tiles[t]
    return sheet


def export_receptive_fields(
    state: NetworkState,
    out_dir,
    grid=None,
    dataset: np.ndarray | None = None,
    threshold: float = 0.9,
) -> dict:
    """Write ``mask_JJJ.pgm`` and ``features_JJJ.pgm`` for every hidden hypercolumn.

    Masks are 255 where the pixel feeds hypercolumn ``j``. Feature sheets
    hold one tile per minicolumn: the trace-weighted input average, or with
    ``dataset`` (stored codes) the mean of samples activating the minicolumn
    above ``threshold``. A ``receptive_fields.csv`` summary is written too.
    """
    grid = _check_grid(state, grid)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    masks = connectivity_masks(state, grid)
    if dataset is None:
        feats, counts = trace_features(state, grid), None
    else:
        feats, counts = sample_features(state, dataset, grid, threshold)
    rows = []
    for j, m in enumerate(masks):
        write_pgm(out / f"mask_{j:03d}.pgm", np.where(m, 255, 0).astype(np.uint8))
        write_pgm(out / f"features_{j:03d}.pgm", np.clip(mosaic(feats[j]), 0.0, 1.0))
        rows.append(
            {
                "hypercolumn": j,
                "pixels": int(m.sum()),
                "spread": mask_spread(m[None]),
                "silent_minicolumns": "" if counts is None else int((counts[j] == 0).sum()),
            }
        )
    write_csv(out / "receptive_fields.csv", rows)
    return {"count": len(masks), "spread": mask_spread(masks), "grid": grid}
