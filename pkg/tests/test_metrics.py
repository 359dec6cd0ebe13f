import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from twophase.image_core import GrayImage
from twophase.metrics import QualityReport, mse, psnr, psnr_from_mse


def test_mse_examples():
    a = GrayImage(np.zeros((4, 4)))
    assert mse(a, a) == 0
    assert mse(a, GrayImage(np.full((4, 4), 255.0))) == 65025
    assert mse(GrayImage([[0.0], [0.0]]), GrayImage([[3.0], [4.0]])) == 12.5


def test_psnr_examples():
    a = GrayImage(np.zeros((3, 3)))
    assert psnr(a, a) == math.inf
    assert psnr(a, GrayImage(np.full((3, 3), 255.0))) == 0.0
    assert psnr_from_mse(1.0) == pytest.approx(48.1308, abs=1e-3)
    assert psnr_from_mse(1.0) == pytest.approx(20 * math.log10(255), rel=1e-15)


def test_size_mismatch():
    with pytest.raises(ValueError):
        mse(GrayImage(np.zeros((2, 2))), GrayImage(np.zeros((2, 3))))


def test_quality_report():
    r = QualityReport.compare(GrayImage([[0.0, 0.0]]), GrayImage([[1.0, 1.0]]))
    assert r.mse == 1.0 and r.psnr_db == pytest.approx(48.1308, abs=1e-3)
    same = QualityReport.compare(GrayImage([[5.0]]), GrayImage([[5.0]]))
    assert same.mse == 0 and same.psnr_db == math.inf


@given(st.floats(1e-6, 1e6), st.floats(1e-6, 1e6))
def test_psnr_monotone(e1, e2):
    if e1 < e2:
        assert psnr_from_mse(e1) > psnr_from_mse(e2)


@given(st.integers(0, 2**32 - 1))
def test_psnr_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = GrayImage(rng.uniform(0, 255, (5, 6)))
    b = GrayImage(rng.uniform(0, 255, (5, 6)))
    assert psnr(a, b) == psnr(b, a)
