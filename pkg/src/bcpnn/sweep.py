"""Architecture sweep over total hidden minicolumns, minicolumns per hypercolumn and fan-in."""

from __future__ import annotations

import itertools
import logging
from dataclasses import replace

import numpy as np

from .evaluation import ProbeConfig, train_probe
from .network import hidden_codes
from .trainer import TrainingConfig, train

log = logging.getLogger(__name__)

SWEEP_FIELDS = ["n_hid", "m_hid", "h_hid", "fanin", "repeats", "error_mean", "error_std", "error", "errors"]


def probe_error(state, train_codes, train_labels, test_codes, test_labels, probe_config, seed) -> float:
    """Test classification error (%) of a linear probe on noise-free hidden codes."""
    h = hidden_codes(state, train_codes, dtype=np.float32)
    c = int(max(np.max(train_labels), np.max(test_labels)) + 1)
    probe = train_probe(h, train_labels, probe_config, seed, n_classes=c)
    del h
    acc = probe.accuracy(hidden_codes(state, test_codes, dtype=np.float32), test_labels)
    return 100.0 * (1.0 - acc)


def cell_reason(n_hid: int, m_hid: int, fanin: int, h_inp: int) -> str | None:
    """Why a grid cell cannot be trained, or ``None`` if it can."""
    if m_hid < 2:
        return f"m_hid={m_hid} < 2"
    if n_hid % m_hid:
        return f"n_hid={n_hid} is not a multiple of m_hid={m_hid}"
    if not 1 <= fanin <= h_inp:
        return f"fanin={fanin} outside [1, h_inp={h_inp}]"
    return None


def sweep(
    n_hid: list[int],
    m_hid: list[int],
    fanin: list[int],
    train_codes: np.ndarray,
    train_labels: np.ndarray,
    test_codes: np.ndarray,
    test_labels: np.ndarray,
    base: TrainingConfig = TrainingConfig(),
    repeats: int = 1,
    probe_config: ProbeConfig = ProbeConfig(),
    seed_probe: int = 0,
    grid: tuple[int, int, int] | None = None,
    engine: str = "fast",
) -> tuple[list[dict], list[dict]]:
    """Train and probe every feasible cell ``repeats`` times.

    Repeat ``r`` offsets every training seed by ``r`` and the probe seed
    likewise. Returns ``(rows, skipped)``: one row per trained cell with the
    mean and sample standard deviation of the error (%), formatted as
    ``"mean ± std"`` in ``error``; and one entry per infeasible cell.
    """
    h_inp = train_codes.shape[1]
    rows, skipped = [], []
    for n, m, f in itertools.product(n_hid, m_hid, fanin):
        reason = cell_reason(n, m, f, h_inp)
        if reason is not None:
            log.warning("skipping cell n_hid=%d m_hid=%d fanin=%d: %s", n, m, f, reason)
            skipped.append({"n_hid": n, "m_hid": m, "fanin": f, "reason": reason})
            continue
        cfg = replace(base, h_hid=n // m, m_hid=m, fanin=f)
        errors = []
        for r in range(repeats):
            run = train(cfg.with_seed_offset(r), train_codes, grid=grid, engine=engine)
            errors.append(
                probe_error(run.state, train_codes, train_labels, test_codes, test_labels, probe_config, seed_probe + r)
            )
            log.info("n_hid=%d m_hid=%d fanin=%d repeat %d: error %.3f%%", n, m, f, r, errors[-1])
        mean = float(np.mean(errors))
        std = float(np.std(errors, ddof=1)) if repeats > 1 else 0.0
        rows.append(
            {
                "n_hid": n,
                "m_hid": m,
                "h_hid": n // m,
                "fanin": f,
                "repeats": repeats,
                "error_mean": mean,
                "error_std": std,
                "error": f"{mean:.2f} ± {std:.2f}",
                "errors": " ".join(f"{e:.4f}" for e in errors),
            }
        )
    return rows, skipped


def interior_minimum(errors: list[float]) -> bool:
    """True when both endpoints are strictly worse than the best interior point."""
    if len(errors) < 3:
        return False
    best = min(errors[1:-1])
    return errors[0] > best and errors[-1] > best
