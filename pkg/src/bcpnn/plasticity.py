"""Hebbian-Bayesian synaptic plasticity and usage-driven structural rewiring."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvariantViolation
from .state import NetworkState, Traces


@dataclass(frozen=True)
class PlasticityConfig:
    alpha: float = 1e-4
    trace_floor: float | None = None  # defaults to alpha / 10
    rho: float = 1.1
    n_swap: int = 100
    t_swap: int = 500
    prospective_fanout: bool = True  # score silent candidates with the fan-out they would have once active

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ConfigurationError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.trace_floor is not None and self.trace_floor <= 0:
            raise ConfigurationError(f"trace_floor must be positive, got {self.trace_floor}")
        if self.rho < 1.0:
            raise ConfigurationError(f"rho must be >= 1, got {self.rho}")
        if self.n_swap < 0 or self.t_swap < 1:
            raise ConfigurationError("n_swap must be >= 0 and t_swap >= 1")

    @property
    def floor(self) -> float:
        return self.alpha / 10.0 if self.trace_floor is None else self.trace_floor


def update_traces(
    traces: Traces,
    input_activity: np.ndarray,
    hidden_activity: np.ndarray,
    alpha: float,
    floor: float | None = None,
    inplace: bool = False,
) -> Traces:
    """One exponential-averaging step of the pre, post and joint p-traces.

    Marginal traces are clamped from below at ``floor`` (``alpha / 10`` when
    not given) and joint traces at ``floor**2``, so the logarithms in
    ``recompute_parameters`` stay finite and a pair whose marginals both sit
    at the floor still looks independent rather than strongly coupled.
    """
    floor = alpha / 10.0 if floor is None else floor
    x = np.asarray(input_activity, dtype=np.float64)
    y = np.asarray(hidden_activity, dtype=np.float64)
    if x.shape != traces.pre.shape or y.shape != traces.post.shape:
        raise ConfigurationError(
            f"activity shapes {x.shape}, {y.shape} do not match traces {traces.pre.shape}, {traces.post.shape}"
        )
    out = traces if inplace else traces.copy()
    decay = 1.0 - alpha
    out.pre *= decay
    out.pre += alpha * x
    out.post *= decay
    out.post += alpha * y
    out.joint *= decay
    out.joint += alpha * np.outer(x.ravel(), y.ravel())
    np.maximum(out.pre, floor, out=out.pre)
    np.maximum(out.post, floor, out=out.post)
    np.maximum(out.joint, floor * floor, out=out.joint)
    return out


def check_weight_bounds(traces: Traces, weights: np.ndarray, floor: float, slack: float = 1e-9) -> None:
    """Assert ``2 log(floor) - log(p_i p_j) <= w <= -log(max(p_i, p_j))``."""
    pi = traces.pre.ravel()[:, None]
    pj = traces.post.ravel()[None, :]
    upper = -np.log(np.maximum(pi, pj))
    lower = 2.0 * np.log(floor) - np.log(pi * pj)
    if np.any(weights > upper + slack) or np.any(weights < lower - slack):
        raise InvariantViolation("weights escaped the bounds implied by the trace floor and joint bound")


def recompute_parameters(
    traces: Traces, floor: float | None = None, validate: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Bias ``log p_j`` and weight ``log(p_ij / (p_i p_j))`` from the traces."""
    marginal = min(traces.pre.min(), traces.post.min())
    joint = traces.joint.min()
    if not (marginal > 0.0 and joint > 0.0):
        raise InvariantViolation(f"non-positive trace value {min(marginal, joint)!r}")
    if floor is not None and (marginal < floor or joint < floor * floor):
        raise InvariantViolation(f"trace value below the floor {floor!r}")
    bias = np.log(traces.post)
    weights = np.log(traces.joint / np.outer(traces.pre.ravel(), traces.post.ravel()))
    if validate:
        check_weight_bounds(traces, weights, floor if floor is not None else min(marginal, np.sqrt(joint)))
    return bias, weights


def refresh_parameters(state: NetworkState, floor: float | None = None, validate: bool = False) -> NetworkState:
    state.bias, state.weights = recompute_parameters(state.traces, floor, validate)
    return state


# --------------------------------------------------------------------------
# structural plasticity
# --------------------------------------------------------------------------


def usage_numerator(state: NetworkState) -> np.ndarray:
    """Mutual information per hypercolumn pair, ``sum_{m,k} p_imjk w_imjk``."""
    g = state.geometry
    j4 = state.traces.joint.reshape(g.h_inp, g.m_inp, g.h_hid, g.m_hid)
    w4 = state.weights.reshape(g.h_inp, g.m_inp, g.h_hid, g.m_hid)
    return np.einsum("imjk,imjk->ij", j4, w4)


def fanout(connectivity: np.ndarray) -> np.ndarray:
    """Active outgoing connections per input hypercolumn (0 counts as 1)."""
    return np.maximum(connectivity.sum(axis=1), 1)


def compute_usage(state: NetworkState) -> np.ndarray:
    """Usage ``U_ij``: mutual information normalised by the input fan-out.

    Computed for every pair, silent ones included.
    """
    return usage_numerator(state) / fanout(state.connectivity)[:, None]


@dataclass
class SwapResult:
    counts: np.ndarray  # swaps per hidden hypercolumn
    mean_active: np.ndarray  # mean usage over active inputs, per hidden hypercolumn
    mean_silent: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def structural_step(state: NetworkState, config: PlasticityConfig) -> SwapResult:
    """Swap silent and active connections of every hidden hypercolumn.

    For each hidden hypercolumn ``j`` up to ``config.n_swap`` times: take the
    silent input with the highest usage and the active input with the lowest;
    if the former beats the latter by more than the factor ``rho`` the two
    trade places, otherwise rewiring for ``j`` stops. Ties go to the lowest
    index. Usage numerators are fixed for the whole step; fan-out
    denominators follow every swap. An input moved within the step is not
    moved back in the same step, which rules out a pair trading places
    repeatedly as their fan-outs shift.

    With ``config.prospective_fanout`` a silent candidate is scored with the
    fan-out it would have after the swap (its current fan-out plus one), so
    both sides of the comparison count ``j``. Otherwise two equally
    informative inputs whose fan-outs differ by one trade places back and
    forth at every step. Mutates ``state.connectivity`` in place.
    """
    c = state.connectivity
    num = usage_numerator(state)
    out_deg = c.sum(axis=1).astype(np.int64)
    h_inp, h_hid = c.shape
    counts = np.zeros(h_hid, dtype=np.int64)
    mean_active = np.zeros(h_hid)
    mean_silent = np.zeros(h_hid)
    for j in range(h_hid):
        col = c[:, j]
        moved = np.zeros(h_inp, dtype=bool)
        for _ in range(config.n_swap):
            extra = (~col).astype(np.int64) if config.prospective_fanout else 0
            silent = ~col & ~moved
            active = col & ~moved
            if not silent.any() or not active.any():
                break
            u = num[:, j] / np.maximum(out_deg + extra, 1)
            s = int(np.argmax(np.where(silent, u, -np.inf)))
            a = int(np.argmin(np.where(active, u, np.inf)))
            if not u[s] > config.rho * u[a]:
                break
            col[s] = True
            col[a] = False
            moved[s] = moved[a] = True
            out_deg[s] += 1
            out_deg[a] -= 1
            counts[j] += 1
        u = num[:, j] / np.maximum(out_deg, 1)
        mean_active[j] = u[col].mean() if col.any() else 0.0
        mean_silent[j] = u[~col].mean() if (~col).any() else 0.0
    return SwapResult(counts, mean_active, mean_silent)
