"""Online unsupervised training loop.

Per sample: noisy forward pass, trace update, parameter refresh. Every
``t_swap`` samples (global count) a structural plasticity step runs when
connectivity is ``"structural"``.

Two interchangeable engines run that loop:

``reference``
    Literal composition of ``forward``, ``update_traces`` and
    ``recompute_parameters`` over the full dense state. Slow, used as the
    yardstick in tests.
``fast``
    Keeps exact per-sample traces only for the active hypercolumn pairs (the
    only ones the forward pass reads) and folds the silent pairs in with one
    matrix product per flush. The pre/post traces, active joint traces,
    hidden activities and swap decisions track the reference engine to
    rounding; silent joint entries differ by at most the joint floor where the
    floor clamp engaged.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .encoding import to_activity
from .errors import ConfigurationError, ShapeError
from .network import (
    compute_support,
    init_network,
    local_connectivity,
    random_connectivity,
    softmax_activation,
)
from .plasticity import PlasticityConfig, SwapResult, refresh_parameters, structural_step, update_traces
from .state import LayerGeometry, NetworkState

log = logging.getLogger(__name__)

CONNECTIVITY_MODES = ("structural", "random", "local")
PRE_INIT_MODES = ("data", "uniform")


@dataclass(frozen=True)
class TrainingConfig:
    """Model and learning parameters. Defaults follow the MNIST setup."""

    h_hid: int = 30
    m_hid: int = 100
    fanin: int = 78
    alpha: float = 1e-4
    noise: float = 1e-3
    epochs: int = 5
    n_swap: int = 100
    t_swap: int = 500
    rho: float = 1.1
    prospective_fanout: bool = True
    trace_floor: float | None = None
    connectivity: str = "structural"
    local_patch: int = 9
    seed_network: int = 0
    seed_shuffle: int = 1
    seed_noise: int = 2
    pre_init: str = "data"

    def __post_init__(self):
        if self.connectivity not in CONNECTIVITY_MODES:
            raise ConfigurationError(f"connectivity must be one of {CONNECTIVITY_MODES}, got {self.connectivity!r}")
        if self.pre_init not in PRE_INIT_MODES:
            raise ConfigurationError(f"pre_init must be one of {PRE_INIT_MODES}, got {self.pre_init!r}")
        if self.epochs < 0:
            raise ConfigurationError(f"epochs must be >= 0, got {self.epochs}")
        if self.noise < 0:
            raise ConfigurationError(f"noise must be >= 0, got {self.noise}")
        self.plasticity  # validates alpha, rho, floor, swap settings

    @property
    def plasticity(self) -> PlasticityConfig:
        return PlasticityConfig(self.alpha, self.trace_floor, self.rho, self.n_swap, self.t_swap, self.prospective_fanout)

    def with_seed_offset(self, offset: int) -> "TrainingConfig":
        return replace(
            self,
            seed_network=self.seed_network + offset,
            seed_shuffle=self.seed_shuffle + offset,
            seed_noise=self.seed_noise + offset,
        )


def input_marginals(data: np.ndarray, chunk: int = 5000) -> np.ndarray:
    """Mean input activity ``(h_inp, m_inp)`` over stored codes, in float64."""
    total = np.zeros(data.shape[1:])
    for lo in range(0, len(data), chunk):
        total += to_activity(data[lo : lo + chunk]).sum(axis=0)
    return total / len(data)


def start_at_marginals(state: NetworkState, marginals: np.ndarray, floor: float) -> NetworkState:
    """Set the pre traces to ``marginals`` and the joint traces to pre x post.

    Weights stay exactly zero, but a hidden unit that is rarely active no
    longer keeps a stale uniform estimate of its inputs: its conditional
    ``joint / post`` starts at the input marginal instead.
    """
    state.traces.pre[:] = np.maximum(marginals, floor)
    state.traces.joint[:] = np.outer(state.traces.pre.ravel(), state.traces.post.ravel())
    return refresh_parameters(state)


def build_network(
    config: TrainingConfig,
    h_inp: int,
    m_inp: int,
    grid: tuple[int, int, int] | None = None,
    data: np.ndarray | None = None,
) -> NetworkState:
    """Initial network for ``config`` on an input layer of ``h_inp x m_inp``.

    ``"local"`` connectivity needs ``grid`` (rows, cols, channels) and sets
    fan-in to ``local_patch**2 * channels``. With ``pre_init="data"`` and
    training ``data`` (stored codes) given, the traces start at the input
    marginals (see ``start_at_marginals``); otherwise they are uniform.
    """
    geometry = LayerGeometry(h_inp, m_inp, config.h_hid, config.m_hid)
    rng = np.random.default_rng(config.seed_network)
    if config.connectivity == "local":
        if grid is None or grid[0] * grid[1] * grid[2] != h_inp:
            raise ConfigurationError(f"local connectivity needs a pixel grid matching h_inp={h_inp}, got {grid}")
        c = local_connectivity(grid, config.h_hid, config.local_patch, rng)
        state = init_network(geometry, int(c[:, 0].sum()), config.seed_network, c)
    else:
        if not 1 <= config.fanin <= h_inp:
            raise ConfigurationError(f"fanin must lie in [1, h_inp={h_inp}], got {config.fanin}")
        c = random_connectivity(h_inp, config.h_hid, config.fanin, rng)
        state = init_network(geometry, config.fanin, config.seed_network, c)
    if config.pre_init == "data" and data is not None and len(data):
        start_at_marginals(state, input_marginals(data), config.plasticity.floor)
    return state


def log_linear_checkpoints(limit: int) -> list[int]:
    """1, 2, 5, 10, 20, 50, ... up to ``limit`` inclusive."""
    out = []
    scale = 1
    while scale <= limit:
        out.extend(v for v in (scale, 2 * scale, 5 * scale) if v <= limit)
        scale *= 10
    return out


@dataclass
class TrainRun:
    config: TrainingConfig
    data: np.ndarray  # stored codes (N, h_inp, m_inp)
    state: NetworkState
    iteration: int = 0
    swap_log: list[dict] = field(default_factory=list)
    epoch_swaps: list[int] = field(default_factory=list)
    structural_steps: int = 0

    @property
    def n_train(self) -> int:
        return len(self.data)


class _ActiveTraceEngine:
    """Exact per-sample traces on active blocks; deferred silent blocks."""

    def __init__(self, state: NetworkState, alpha: float, floor: float):
        self.state = state
        self.alpha = alpha
        self.decay = 1.0 - alpha
        self.floor = floor
        self.xs: list[np.ndarray] = []
        self.ys: list[np.ndarray] = []
        self.gather()

    def gather(self):
        st = self.state
        # fan-in is the same for every hidden hypercolumn
        self.idx = np.stack([np.flatnonzero(st.connectivity[:, j]) for j in range(st.geometry.h_hid)])
        self.jj = np.arange(st.geometry.h_hid)[:, None]
        self.active = st.traces.joint4()[self.idx, :, self.jj, :]  # (h_hid, fanin, m_inp, m_hid)

    def hidden(self, x: np.ndarray, noise: np.ndarray | None) -> np.ndarray:
        tr = self.state.traces
        xa = x[self.idx]  # (h_hid, fanin, m_inp)
        logpost = np.log(tr.post)
        s = np.einsum("jfm,jfmk->jk", xa, np.log(self.active))
        s -= np.einsum("jfm,jfm->j", xa, np.log(tr.pre)[self.idx])[:, None]
        s += (1.0 - xa.sum(axis=(1, 2)))[:, None] * logpost
        if noise is not None:
            s += noise
        e = np.exp(s - s.max(axis=1, keepdims=True))
        return e / e.sum(axis=1, keepdims=True)

    def learn(self, x: np.ndarray, y: np.ndarray):
        tr = self.state.traces
        a, d, fl = self.alpha, self.decay, self.floor
        tr.pre *= d
        tr.pre += a * x
        np.maximum(tr.pre, fl, out=tr.pre)
        tr.post *= d
        tr.post += a * y
        np.maximum(tr.post, fl, out=tr.post)
        xa = x[self.idx]
        self.active *= d
        self.active += a * (xa[..., None] * y[:, None, None, :])
        np.maximum(self.active, fl * fl, out=self.active)
        self.xs.append(x.ravel())
        self.ys.append(y.ravel())

    @property
    def pending(self) -> int:
        return len(self.xs)

    def flush(self):
        """Bring the full joint trace up to date and refresh bias and weights."""
        tr = self.state.traces
        b = len(self.xs)
        if b:
            coef = self.alpha * self.decay ** np.arange(b - 1, -1, -1)
            xs = np.asarray(self.xs) * coef[:, None]
            tr.joint *= self.decay**b
            tr.joint += xs.T @ np.asarray(self.ys)
            np.maximum(tr.joint, self.floor**2, out=tr.joint)
            self.xs.clear()
            self.ys.clear()
        tr.joint4()[self.idx, :, self.jj, :] = self.active
        refresh_parameters(self.state, self.floor)


def _check_data(run: TrainRun) -> None:
    g = run.state.geometry
    if run.data.ndim != 3 or run.data.shape[1:] != (g.h_inp, g.m_inp):
        raise ConfigurationError(f"dataset shape {run.data.shape} does not match input layer ({g.h_inp}, {g.m_inp})")
    if run.state.geometry.h_hid != run.config.h_hid or run.state.geometry.m_hid != run.config.m_hid:
        raise ConfigurationError("network geometry does not match the training config")


def _record_swaps(run: TrainRun, result: SwapResult) -> None:
    run.structural_steps += 1
    for j, cnt in enumerate(result.counts):
        run.swap_log.append(
            {
                "iteration": run.iteration,
                "hypercolumn": j,
                "swaps": int(cnt),
                "mean_active_usage": float(result.mean_active[j]),
                "mean_silent_usage": float(result.mean_silent[j]),
            }
        )


def train_unsupervised(
    run: TrainRun,
    engine: str = "fast",
    on_checkpoint: Callable[[int, NetworkState], None] | None = None,
    checkpoints: list[int] | None = None,
    flush_every: int = 500,
    on_epoch: Callable[[int, NetworkState], None] | None = None,
) -> NetworkState:
    """Train ``run.state`` in place for ``config.epochs`` epochs.

    Samples are visited in a fresh seeded permutation each epoch; support
    noise comes from an independent seeded stream. ``on_checkpoint`` is called
    with a fully refreshed state at each iteration in ``checkpoints``
    (default: log-linear 1, 2, 5, 10, ...); ``on_epoch`` likewise after
    every epoch with the epoch number (1-based).
    """
    _check_data(run)
    if engine not in ("fast", "reference"):
        raise ConfigurationError(f"unknown engine {engine!r}")
    cfg = run.config
    pcfg = cfg.plasticity
    floor = pcfg.floor
    state = run.state
    g = state.geometry
    structural = cfg.connectivity == "structural"
    shuffle_rng = np.random.default_rng(cfg.seed_shuffle)
    noise_rng = np.random.default_rng(cfg.seed_noise)
    total = cfg.epochs * run.n_train
    marks = set(log_linear_checkpoints(run.iteration + total) if checkpoints is None else checkpoints)
    fast = _ActiveTraceEngine(state, cfg.alpha, floor) if engine == "fast" else None
    chunk = 1000

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(run.n_train)
        swaps_before = sum(r["swaps"] for r in run.swap_log)
        for lo in range(0, len(order), chunk):
            block = to_activity(run.data[order[lo : lo + chunk]])
            for x in block:
                noise = cfg.noise * noise_rng.standard_normal((g.h_hid, g.m_hid)) if cfg.noise > 0 else None
                if fast is not None:
                    y = fast.hidden(x, noise)
                    fast.learn(x, y)
                else:
                    support = compute_support(state, x)
                    if noise is not None:
                        support += noise
                    y = softmax_activation(support)
                    update_traces(state.traces, x, y, cfg.alpha, floor, inplace=True)
                    refresh_parameters(state, floor)
                run.iteration += 1
                if structural and run.iteration % cfg.t_swap == 0:
                    if fast is not None:
                        fast.flush()
                    _record_swaps(run, structural_step(state, pcfg))
                    if fast is not None:
                        fast.gather()
                elif fast is not None and fast.pending >= flush_every:
                    fast.flush()
                if on_checkpoint is not None and run.iteration in marks:
                    if fast is not None:
                        fast.flush()
                    on_checkpoint(run.iteration, state)
        run.epoch_swaps.append(sum(r["swaps"] for r in run.swap_log) - swaps_before)
        if on_epoch is not None:
            if fast is not None:
                fast.flush()
            on_epoch(epoch + 1, state)
    if fast is not None:
        fast.flush()
    return state


def train(
    config: TrainingConfig,
    data: np.ndarray,
    grid: tuple[int, int, int] | None = None,
    engine: str = "fast",
    **kwargs,
) -> TrainRun:
    """Build a network for ``data`` (stored codes ``(N, h_inp, m_inp)``) and train it."""
    data = np.asarray(data)
    if data.ndim != 3:
        raise ShapeError(f"expected (N, h_inp, m_inp) codes, got shape {data.shape}")
    state = build_network(config, data.shape[1], data.shape[2], grid, data)
    run = TrainRun(config, data, state)
    train_unsupervised(run, engine=engine, **kwargs)
    return run
