"""Parameter-state containers for a two-layer BCPNN."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class LayerGeometry:
    h_inp: int
    m_inp: int
    h_hid: int
    m_hid: int

    def __post_init__(self):
        for name in ("h_inp", "m_inp", "h_hid", "m_hid"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.m_hid < 2:
            raise ConfigurationError("m_hid must be >= 2 (softmax over one unit is degenerate)")

    @property
    def n_inp(self) -> int:
        return self.h_inp * self.m_inp

    @property
    def n_hid(self) -> int:
        return self.h_hid * self.m_hid


@dataclass
class Traces:
    """The three p-traces.

    ``pre`` is ``(h_inp, m_inp)``, ``post`` is ``(h_hid, m_hid)`` and
    ``joint`` is ``(h_inp*m_inp, h_hid*m_hid)`` with row ``i*m_inp + m`` and
    column ``j*m_hid + k``.
    """

    pre: np.ndarray
    post: np.ndarray
    joint: np.ndarray

    @classmethod
    def uniform(cls, geometry: LayerGeometry) -> "Traces":
        pre = np.full((geometry.h_inp, geometry.m_inp), 1.0 / geometry.m_inp)
        post = np.full((geometry.h_hid, geometry.m_hid), 1.0 / geometry.m_hid)
        joint = np.outer(pre.ravel(), post.ravel())
        return cls(pre, post, joint)

    def copy(self) -> "Traces":
        return Traces(self.pre.copy(), self.post.copy(), self.joint.copy())

    def joint4(self) -> np.ndarray:
        """View of ``joint`` as ``(h_inp, m_inp, h_hid, m_hid)``."""
        h_inp, m_inp = self.pre.shape
        h_hid, m_hid = self.post.shape
        return self.joint.reshape(h_inp, m_inp, h_hid, m_hid)


@dataclass
class NetworkState:
    geometry: LayerGeometry
    fanin: int
    connectivity: np.ndarray  # bool (h_inp, h_hid), True = active
    traces: Traces
    bias: np.ndarray  # (h_hid, m_hid)
    weights: np.ndarray  # (n_inp, n_hid)
    seed: int = 0

    def expanded_mask(self) -> np.ndarray:
        """Connectivity broadcast to the minicolumn level, ``(n_inp, n_hid)``."""
        g = self.geometry
        c = self.connectivity.astype(np.float64)
        return np.repeat(np.repeat(c, g.m_inp, axis=0), g.m_hid, axis=1)

    def copy(self) -> "NetworkState":
        return NetworkState(
            self.geometry,
            self.fanin,
            self.connectivity.copy(),
            self.traces.copy(),
            self.bias.copy(),
            self.weights.copy(),
            self.seed,
        )
