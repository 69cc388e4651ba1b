"""Network construction and the feedforward pass (support + softmax)."""

from __future__ import annotations

import numpy as np

from .encoding import to_activity
from .errors import ConfigurationError, ShapeError
from .plasticity import recompute_parameters
from .state import LayerGeometry, NetworkState, Traces


def random_connectivity(h_inp: int, h_hid: int, fanin: int, rng: np.random.Generator) -> np.ndarray:
    """Each hidden hypercolumn gets ``fanin`` distinct inputs, uniformly drawn."""
    c = np.zeros((h_inp, h_hid), dtype=bool)
    for j in range(h_hid):
        c[rng.choice(h_inp, size=fanin, replace=False), j] = True
    return c


def local_connectivity(
    grid: tuple[int, int, int], h_hid: int, patch: int, rng: np.random.Generator
) -> np.ndarray:
    """Square ``patch x patch`` receptive fields at random positions on the grid.

    ``grid`` is ``(rows, cols, channels)``; every channel of a covered pixel
    is connected, so fan-in is ``patch**2 * channels``.
    """
    rows, cols, ch = grid
    if patch > rows or patch > cols:
        raise ConfigurationError(f"patch {patch} does not fit a {rows}x{cols} grid")
    c = np.zeros((rows, cols, ch, h_hid), dtype=bool)
    for j in range(h_hid):
        r0 = rng.integers(0, rows - patch + 1)
        c0 = rng.integers(0, cols - patch + 1)
        c[r0 : r0 + patch, c0 : c0 + patch, :, j] = True
    return c.reshape(rows * cols * ch, h_hid)


def init_network(
    geometry: LayerGeometry,
    fanin: int,
    seed: int = 0,
    connectivity: np.ndarray | None = None,
) -> NetworkState:
    """Fresh network with uniform traces, hence zero weights.

    Connectivity is drawn with ``random_connectivity`` from a generator
    seeded by ``seed`` unless an explicit boolean matrix is supplied.
    """
    if not 1 <= fanin <= geometry.h_inp:
        raise ConfigurationError(f"fanin must lie in [1, h_inp={geometry.h_inp}], got {fanin}")
    if connectivity is None:
        connectivity = random_connectivity(geometry.h_inp, geometry.h_hid, fanin, np.random.default_rng(seed))
    else:
        connectivity = np.asarray(connectivity, dtype=bool).copy()
        if connectivity.shape != (geometry.h_inp, geometry.h_hid):
            raise ShapeError(f"connectivity shape {connectivity.shape} != {(geometry.h_inp, geometry.h_hid)}")
        if np.any(connectivity.sum(axis=0) != fanin):
            raise ConfigurationError(f"every hidden hypercolumn needs exactly {fanin} active inputs")
    traces = Traces.uniform(geometry)
    bias, weights = recompute_parameters(traces)
    return NetworkState(geometry, fanin, connectivity, traces, bias, weights, seed)


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def effective_weights(state: NetworkState) -> np.ndarray:
    """Weights with silent hypercolumn pairs zeroed."""
    return state.weights * state.expanded_mask()


def compute_support(
    state: NetworkState,
    activity: np.ndarray,
    noise_std: float = 0.0,
    rng=None,
    weights: np.ndarray | None = None,
) -> np.ndarray:
    """Support ``b + sum_im pi_im w_imjk c_ij`` (+ Gaussian noise).

    ``activity`` is ``(h_inp, m_inp)`` or a batch ``(N, h_inp, m_inp)``.
    ``weights`` may carry precomputed ``effective_weights`` for repeated calls.
    Returns ``(h_hid, m_hid)`` or ``(N, h_hid, m_hid)``.
    """
    g = state.geometry
    x = np.asarray(activity, dtype=np.float64)
    if x.shape[-2:] != (g.h_inp, g.m_inp) or x.ndim not in (2, 3):
        raise ShapeError(f"input shape {x.shape} does not match ({g.h_inp}, {g.m_inp})")
    lead = x.shape[:-2]
    w = effective_weights(state) if weights is None else weights
    s = x.reshape(lead + (g.n_inp,)) @ w
    s = s.reshape(lead + (g.h_hid, g.m_hid)) + state.bias
    if noise_std > 0:
        s += noise_std * _as_rng(rng).standard_normal(s.shape)
    return s


def softmax_activation(support: np.ndarray) -> np.ndarray:
    """Softmax within every hypercolumn (last axis), overflow-safe."""
    s = np.asarray(support, dtype=np.float64)
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def forward(state: NetworkState, activity: np.ndarray, noise_std: float = 0.0, rng=None) -> np.ndarray:
    return softmax_activation(compute_support(state, activity, noise_std, rng))


def hidden_codes(state: NetworkState, activities: np.ndarray, chunk: int = 1000, dtype=np.float64) -> np.ndarray:
    """Noise-free hidden activities for a dataset, ``(N, h_hid, m_hid)``.

    ``activities`` may be stored codes of any float dtype; each chunk goes
    through ``encoding.to_activity`` before the pass.
    """
    w = effective_weights(state)
    g = state.geometry
    out = np.empty((len(activities), g.h_hid, g.m_hid), dtype=dtype)
    for lo in range(0, len(activities), chunk):
        x = to_activity(activities[lo : lo + chunk])
        out[lo : lo + chunk] = softmax_activation(compute_support(state, x, weights=w))
    return out
