"""Batch EM for a multinomial mixture, the yardstick for one-hypercolumn BCPNN.

A hidden hypercolumn with full connectivity is a mixture model: the post
trace is the prior ``p_k`` and ``joint / post`` is the conditional
``p(x_im | y_k)``. Its softmax over the support is the E-step posterior, and
the trace/parameter refresh is an online M-step. ``em_oracle`` runs the
classic batch version of that procedure so the online network can be
checked against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ConfigurationError
from .state import NetworkState

_TINY = np.finfo(np.float64).tiny


@dataclass
class MixtureOracleResult:
    priors: np.ndarray  # (k,)
    conditionals: np.ndarray  # (h_inp, k, m_inp), rows sum to 1 over m
    log_likelihood: float
    history: list[float] = field(default_factory=list)
    n_iter: int = 0


def _log(p: np.ndarray) -> np.ndarray:
    return np.log(np.maximum(p, _TINY))


def mixture_support(data: np.ndarray, priors: np.ndarray, conditionals: np.ndarray) -> np.ndarray:
    """Unnormalised log posterior ``log p_k + sum_im x_im log p_imk``, shape (N, k)."""
    return _log(priors)[None, :] + np.einsum("nim,ikm->nk", data, _log(conditionals))


def e_step(data: np.ndarray, priors: np.ndarray, conditionals: np.ndarray) -> tuple[np.ndarray, float]:
    """Posterior responsibilities (softmax of the support) and the log-likelihood."""
    s = mixture_support(data, priors, conditionals)
    mx = s.max(axis=1, keepdims=True)
    e = np.exp(s - mx)
    z = e.sum(axis=1, keepdims=True)
    return e / z, float(np.sum(mx[:, 0] + np.log(z[:, 0])))


def m_step(data: np.ndarray, resp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nk = resp.sum(axis=0)
    priors = nk / nk.sum()
    counts = np.einsum("nk,nim->ikm", resp, data)
    conditionals = counts / np.maximum(nk, _TINY)[None, :, None]
    return priors, conditionals


def em_oracle(
    data: np.ndarray, k: int, seed: int = 0, tol: float = 1e-8, max_iter: int = 10_000
) -> MixtureOracleResult:
    """Fit a ``k``-component multinomial mixture to one-hot data by batch EM.

    ``data`` is ``(N, h_inp, m_inp)``. Responsibilities start from a seeded
    Dirichlet draw; iteration stops when the relative change of the
    log-likelihood falls below ``tol``. ``history`` holds the
    log-likelihood after every M-step and never decreases.
    """
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 3 or len(x) == 0:
        raise DataError(f"need a non-empty (N, h_inp, m_inp) dataset, got shape {x.shape}")
    if k < 1:
        raise ConfigurationError(f"k must be >= 1, got {k}")
    rng = np.random.default_rng(seed)
    resp = rng.dirichlet(np.ones(k), size=len(x)) if k > 1 else np.ones((len(x), 1))
    priors, cond = m_step(x, resp)
    history: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        resp, ll = e_step(x, priors, cond)
        history.append(ll)
        if len(history) > 1 and abs(history[-1] - history[-2]) <= tol * abs(history[-2]):
            break
        priors, cond = m_step(x, resp)
    return MixtureOracleResult(priors, cond, history[-1], history, it)


def mixture_from_state(state: NetworkState, j: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Mixture parameters held by hidden hypercolumn ``j``'s traces.

    Only the active inputs of ``j`` are returned; conditionals are
    renormalised over ``m`` to absorb floor clamping.
    """
    g = state.geometry
    active = np.flatnonzero(state.connectivity[:, j])
    post = state.traces.post[j]
    joint = state.traces.joint4()[active, :, j, :]  # (f, m_inp, m_hid)
    cond = np.transpose(joint, (0, 2, 1)) / post[None, :, None]
    cond /= cond.sum(axis=2, keepdims=True)
    return post / post.sum(), cond


def network_log_likelihood(state: NetworkState, data: np.ndarray, j: int = 0) -> float:
    """Data log-likelihood under the mixture encoded by hypercolumn ``j``."""
    priors, cond = mixture_from_state(state, j)
    active = np.flatnonzero(state.connectivity[:, j])
    _, ll = e_step(np.asarray(data, dtype=np.float64)[:, active], priors, cond)
    return ll


def oracle_posteriors(state: NetworkState, data: np.ndarray, j: int = 0) -> np.ndarray:
    """E-step posteriors computed from the traces as raw mixture parameters.

    Unlike ``mixture_from_state`` nothing is renormalised, so the result is
    directly comparable with the network's own softmax output.
    """
    active = np.flatnonzero(state.connectivity[:, j])
    post = state.traces.post[j]
    cond = np.transpose(state.traces.joint4()[active, :, j, :], (0, 2, 1)) / post[None, :, None]
    resp, _ = e_step(np.asarray(data, dtype=np.float64)[:, active], post, cond)
    return resp


# --------------------------------------------------------------------------
# toy mixture data and the end-to-end comparison
# --------------------------------------------------------------------------


def toy_mixture(
    n_samples: int = 300, n_attributes: int = 8, n_values: int = 4, k: int = 3, seed: int = 0, concentration: float = 0.3
) -> tuple[np.ndarray, np.ndarray]:
    """One-hot samples from a random ``k``-cluster categorical mixture.

    Each cluster draws one categorical distribution per attribute from a
    symmetric Dirichlet(``concentration``); small concentrations give
    well-separated clusters. Returns ``(data (N, A, V), cluster ids)``.
    """
    rng = np.random.default_rng(seed)
    probs = rng.dirichlet(np.full(n_values, concentration), size=(k, n_attributes))
    z = rng.integers(0, k, size=n_samples)
    data = np.zeros((n_samples, n_attributes, n_values))
    for a in range(n_attributes):
        u = rng.random(n_samples)
        v = (u[:, None] > np.cumsum(probs[z, a], axis=1)).sum(axis=1)
        data[np.arange(n_samples), a, np.minimum(v, n_values - 1)] = 1.0
    return data, z


def best_em(data: np.ndarray, k: int, seeds=range(5), **kwargs) -> MixtureOracleResult:
    """Highest-likelihood batch EM fit over several seeded restarts."""
    return max((em_oracle(data, k, seed=s, **kwargs) for s in seeds), key=lambda r: r.log_likelihood)


def mixture_network_config(k: int, n_attributes: int, epochs: int | None = None, seed: int = 0):
    """Training setup for a single fully connected hidden hypercolumn of ``k`` units."""
    from .trainer import TrainingConfig

    return TrainingConfig(
        h_hid=1, m_hid=k, fanin=n_attributes, alpha=2e-3, noise=0.5, epochs=40 if epochs is None else epochs,
        connectivity="random", seed_network=seed, seed_shuffle=seed + 1, seed_noise=seed + 2,
    )


def run_oracle(
    n_samples: int = 300,
    n_attributes: int = 8,
    n_values: int = 4,
    k: int = 3,
    seed: int = 0,
    epochs: int | None = None,
) -> dict:
    """Train a one-hypercolumn network on toy data and compare with batch EM.

    Reports the largest gap between the network's forward posteriors and the
    oracle E-step evaluated on the same (trained) parameters, plus both data
    log-likelihoods and their relative difference.
    """
    from .network import forward
    from .trainer import train

    data, _ = toy_mixture(n_samples, n_attributes, n_values, k, seed)
    em = best_em(data, k)
    run = train(mixture_network_config(k, n_attributes, epochs, seed), data, engine="fast")
    posterior_gap = float(np.max(np.abs(forward(run.state, data)[:, 0, :] - oracle_posteriors(run.state, data))))
    ll_net = network_log_likelihood(run.state, data)
    return {
        "samples": n_samples,
        "attributes": n_attributes,
        "values": n_values,
        "clusters": k,
        "em_log_likelihood": em.log_likelihood,
        "em_iterations": em.n_iter,
        "network_log_likelihood": ll_net,
        "relative_gap": abs(ll_net - em.log_likelihood) / abs(em.log_likelihood),
        "posterior_max_abs_diff": posterior_gap,
    }
