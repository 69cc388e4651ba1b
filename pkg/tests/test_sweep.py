import numpy as np
import pytest

from bcpnn.encoding import encode_intensity, to_storage
from bcpnn.evaluation import ProbeConfig
from bcpnn.sweep import cell_reason, interior_minimum, probe_error, sweep
from bcpnn.trainer import TrainingConfig, train

from conftest import blob_images

BASE = TrainingConfig(alpha=0.01, noise=0.01, epochs=1, n_swap=2, t_swap=50)
PROBE = ProbeConfig(epochs=2)


@pytest.fixture(scope="module")
def data():
    imgs, labels = blob_images(100, size=8, seed=0)
    timgs, tlabels = blob_images(30, size=8, seed=1)
    return to_storage(encode_intensity(imgs)), labels, to_storage(encode_intensity(timgs)), tlabels


def test_single_cell_equals_direct_run(data):
    tr, trl, te, tel = data
    rows, skipped = sweep([12], [4], [10], tr, trl, te, tel, BASE, repeats=1, probe_config=PROBE)
    assert not skipped and len(rows) == 1
    run = train(TrainingConfig(**{**BASE.__dict__, "h_hid": 3, "m_hid": 4, "fanin": 10}), tr)
    direct = probe_error(run.state, tr, trl, te, tel, PROBE, 0)
    assert rows[0]["error_mean"] == direct
    assert rows[0]["h_hid"] == 3 and rows[0]["error_std"] == 0.0


def test_repeats_report_sample_std(data):
    tr, trl, te, tel = data
    rows, _ = sweep([8], [4], [10], tr, trl, te, tel, BASE, repeats=2, probe_config=PROBE)
    errs = [float(e) for e in rows[0]["errors"].split()]
    assert rows[0]["error_std"] == pytest.approx(np.std(errs, ddof=1), abs=1e-3)
    assert "±" in rows[0]["error"]


def test_infeasible_cells_are_skipped(data):
    tr, trl, te, tel = data
    rows, skipped = sweep([10], [3, 1], [10, 100], tr, trl, te, tel, BASE, probe_config=PROBE)
    assert rows == []
    assert len(skipped) == 4


def test_cell_reason():
    assert cell_reason(30, 10, 5, 64) is None
    assert "multiple" in cell_reason(31, 10, 5, 64)
    assert "m_hid" in cell_reason(30, 1, 5, 64)
    assert "fanin" in cell_reason(30, 10, 65, 64)


def test_interior_minimum():
    assert interior_minimum([3.0, 1.0, 2.0])
    assert not interior_minimum([1.0, 2.0, 3.0])
    assert not interior_minimum([2.0, 1.0])
