import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bcpnn.network import init_network
from bcpnn.plasticity import refresh_parameters, update_traces
from bcpnn.state import LayerGeometry

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


def random_code(rng, n, h, m, concentration=1.0):
    """Valid population codes ``(n, h, m)`` drawn from a Dirichlet."""
    return rng.dirichlet(np.full(m, concentration), size=(n, h))


def trained_state(h_inp=6, m_inp=3, h_hid=3, m_hid=4, fanin=3, steps=200, alpha=0.05, seed=0):
    """A small network whose traces have moved away from uniform."""
    rng = np.random.default_rng(seed)
    g = LayerGeometry(h_inp, m_inp, h_hid, m_hid)
    st = init_network(g, fanin, seed)
    xs = random_code(rng, steps, h_inp, m_inp, 0.3)
    ys = random_code(rng, steps, h_hid, m_hid, 0.3)
    for x, y in zip(xs, ys):
        update_traces(st.traces, x, y, alpha, inplace=True)
    refresh_parameters(st)
    return st


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def blob_images(n, size=12, seed=0, n_classes=3):
    """Synthetic images: each class is a bright blob at a class-specific spot, plus noise."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    centers = [(size * (c + 1) // (n_classes + 1), size * (n_classes - c) // (n_classes + 1)) for c in range(n_classes)]
    rr, cc = np.mgrid[0:size, 0:size]
    imgs = np.empty((n, size, size))
    for t, lab in enumerate(labels):
        r0, c0 = centers[lab]
        r0 += rng.integers(-1, 2)
        c0 += rng.integers(-1, 2)
        blob = np.exp(-((rr - r0) ** 2 + (cc - c0) ** 2) / 4.0)
        imgs[t] = np.clip(blob + 0.1 * rng.random((size, size)), 0, 1)
    return imgs, labels


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
