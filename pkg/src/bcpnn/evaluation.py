"""Linear-probe evaluation and representation diagnostics."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .network import hidden_codes
from .state import NetworkState

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ProbeConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7
    batch: int = 100
    epochs: int = 25


class Adam:
    """Adam with bias-corrected moments, updating arrays in place."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-7):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


@dataclass
class LinearProbe:
    weights: np.ndarray  # (D, C)
    bias: np.ndarray  # (C,)
    optimizer: Adam
    loss_history: list[float] = field(default_factory=list)

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias

    def predict(self, features: np.ndarray, chunk: int = 10_000) -> np.ndarray:
        x = _flat(features)
        return np.concatenate(
            [np.argmax(self.logits(x[lo : lo + chunk]), axis=1) for lo in range(0, len(x), chunk)]
        ) if len(x) else np.zeros(0, dtype=int)

    def accuracy(self, features: np.ndarray, labels: np.ndarray) -> float:
        return float(np.mean(self.predict(features) == np.asarray(labels)))


def _flat(features: np.ndarray) -> np.ndarray:
    f = np.asarray(features)
    return f.reshape(len(f), -1)


def _softmax_rows(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def train_probe(
    features: np.ndarray,
    labels: np.ndarray,
    config: ProbeConfig = ProbeConfig(),
    seed: int = 0,
    n_classes: int | None = None,
) -> LinearProbe:
    """Softmax regression on frozen features, cross-entropy + Adam minibatches.

    Features are flattened per sample. Weights start at zero; ``seed`` only
    drives the per-epoch minibatch order, so the result is deterministic.
    """
    x = _flat(features)
    y = np.asarray(labels)
    if len(x) != len(y):
        raise DataError(f"{len(x)} feature rows but {len(y)} labels")
    if y.ndim != 1 or not np.issubdtype(y.dtype, np.integer):
        raise DataError("labels must be a 1-D integer array")
    c = int(n_classes if n_classes is not None else (y.max() + 1 if len(y) else 0))
    if len(y) and (y.min() < 0 or y.max() >= c):
        raise DataError(f"labels must lie in [0, {c}), got range [{y.min()}, {y.max()}]")
    params = {"w": np.zeros((x.shape[1], c)), "b": np.zeros(c)}
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    probe = LinearProbe(params["w"], params["b"], opt)
    rng = np.random.default_rng(seed)
    onehot = np.eye(c)
    for _ in range(config.epochs):
        order = rng.permutation(len(x))
        total = 0.0
        for lo in range(0, len(x), config.batch):
            idx = order[lo : lo + config.batch]
            xb = np.asarray(x[idx], dtype=np.float64)
            p = _softmax_rows(xb @ params["w"] + params["b"])
            total += float(-np.log(np.maximum(p[np.arange(len(idx)), y[idx]], 1e-300)).sum())
            g = (p - onehot[y[idx]]) / len(idx)
            opt.step(params, {"w": xb.T @ g, "b": g.sum(axis=0)})
        probe.loss_history.append(total / max(len(x), 1))
    return probe


def validation_split(n: int, seed: int = 0, fraction: float = 0.1) -> tuple[np.ndarray, np.ndarray]:
    """Seeded ``(train, validation)`` index split holding out ``fraction`` of ``n``."""
    order = np.random.default_rng(seed).permutation(n)
    cut = int(round(n * fraction))
    return np.sort(order[cut:]), np.sort(order[:cut])


def validation_accuracy(
    state: NetworkState, codes: np.ndarray, labels: np.ndarray, config: ProbeConfig = ProbeConfig(), seed: int = 0
) -> float:
    """Probe accuracy on a 10% hold-out of the training split (convergence curves)."""
    tr, va = validation_split(len(codes), seed)
    labels = np.asarray(labels)
    c = int(labels.max() + 1)
    probe = train_probe(hidden_codes(state, codes[tr], dtype=np.float32), labels[tr], config, seed, n_classes=c)
    return probe.accuracy(hidden_codes(state, codes[va], dtype=np.float32), labels[va])


# --------------------------------------------------------------------------
# diagnostics
# --------------------------------------------------------------------------


def _entropy(p: np.ndarray) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    safe = np.where(p > 0, p, 1.0)
    return -np.sum(np.where(p > 0, p * np.log(safe), 0.0), axis=-1)


def activity_entropy(hidden: np.ndarray) -> float:
    """Mean per-hypercolumn entropy (nats) over samples, shape ``(N, H, M)``.

    Rows are renormalised in float64 first, so reduced-precision codes stay
    within ``[0, ln M]``.
    """
    p = np.asarray(hidden, dtype=np.float64)
    p = p / p.sum(axis=-1, keepdims=True)
    return float(min(np.mean(_entropy(p)), np.log(p.shape[-1])))


def usage_entropy(post: np.ndarray) -> float:
    """Mean entropy (nats) of the post traces ``(H, M)`` across hypercolumns."""
    return float(np.mean(_entropy(post)))


def similarity_ratio(codes: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean within-class over mean all-pairs cosine similarity.

    Self-pairs are excluded from both means. Returns the ratio and the full
    cosine matrix with rows and columns sorted by label (stable).
    """
    x = _flat(codes).astype(np.float64)
    y = np.asarray(labels)
    if len(x) < 2 or len(np.unique(y)) < 2:
        raise DataError("similarity ratio needs at least 2 samples and 2 classes")
    norms = np.linalg.norm(x, axis=1)
    ok = norms > 0
    if not ok.all():
        warnings.warn(f"{int((~ok).sum())} zero-norm vectors excluded from the similarity ratio")
    xn = np.where(ok[:, None], x / np.where(ok, norms, 1.0)[:, None], 0.0)
    sim = xn @ xn.T
    valid = ok[:, None] & ok[None, :]
    np.fill_diagonal(valid, False)
    same = valid & (y[:, None] == y[None, :])
    ratio = float(sim[same].mean() / sim[valid].mean())
    order = np.argsort(y, kind="stable")
    return ratio, sim[np.ix_(order, order)]


@dataclass
class MetricsReport:
    accuracy: float
    s_activity: float
    s_usage: float
    b_inp: float
    b_hid: float
    swap_counts: list[int] = field(default_factory=list)
    similarity_inp: np.ndarray | None = None
    similarity_hid: np.ndarray | None = None

    def row(self, run_id: str) -> dict:
        return {
            "run_id": run_id,
            "accuracy": self.accuracy,
            "s_activity": self.s_activity,
            "s_usage": self.s_usage,
            "b_inp": self.b_inp,
            "b_hid": self.b_hid,
        }


def evaluate(
    state: NetworkState,
    train_codes: np.ndarray,
    train_labels: np.ndarray,
    test_codes: np.ndarray | None,
    test_labels: np.ndarray | None,
    probe_config: ProbeConfig = ProbeConfig(),
    seed: int = 0,
    raw_test: np.ndarray | None = None,
    n_similarity: int = 1000,
    swap_counts: list[int] | None = None,
) -> MetricsReport:
    """Noise-free hidden codes, probe test accuracy and all diagnostics.

    Similarity ratios use ``n_similarity`` test samples drawn with ``seed``;
    the input ratio uses ``raw_test`` when given (e.g. pixel intensities),
    otherwise the encoded input activities.
    """
    if test_codes is None or test_labels is None or len(test_codes) == 0:
        raise DataError("evaluation needs a test split")
    h_train = hidden_codes(state, train_codes, dtype=np.float32)
    h_test = hidden_codes(state, test_codes, dtype=np.float32)
    c = int(max(np.max(train_labels), np.max(test_labels)) + 1)
    probe = train_probe(h_train, train_labels, probe_config, seed, n_classes=c)
    del h_train
    acc = probe.accuracy(h_test, test_labels)
    rng = np.random.default_rng(seed)
    pick = np.sort(rng.choice(len(test_codes), size=min(n_similarity, len(test_codes)), replace=False))
    inp = raw_test if raw_test is not None else test_codes
    lab = np.asarray(test_labels)[pick]
    b_inp, sim_inp = similarity_ratio(np.asarray(inp)[pick], lab)
    b_hid, sim_hid = similarity_ratio(h_test[pick], lab)
    return MetricsReport(
        accuracy=acc,
        s_activity=activity_entropy(h_test),
        s_usage=usage_entropy(state.traces.post),
        b_inp=b_inp,
        b_hid=b_hid,
        swap_counts=list(swap_counts or []),
        similarity_inp=sim_inp,
        similarity_hid=sim_hid,
    )
