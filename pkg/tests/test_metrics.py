import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cslidar.metrics import gain_match, ncc, psnr, truth_frames
from cslidar.scene import generate_scene
from cslidar.sensing import DetectorConfig


def test_psnr_known_value():
    t = np.zeros((2, 2))
    t[0, 0] = 1.0
    r = t.copy()
    r[1, 1] = 0.1
    # mse = 0.01 / 4, peak 1
    assert psnr(r, t, match_gain=False) == pytest.approx(10 * math.log10(400))
    assert psnr(t, t) == math.inf


@settings(max_examples=40, deadline=None)
@given(g=st.floats(1e-3, 1e3), seed=st.integers(0, 1000))
def test_psnr_and_ncc_gain_invariant(g, seed):
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, 1, (6, 6))
    r = t + rng.normal(0, 0.1, t.shape)
    assert psnr(g * r, t) == pytest.approx(psnr(r, t), rel=1e-9)
    assert ncc(g * r, t) == pytest.approx(ncc(r, t), rel=1e-9)


def test_gain_match_least_squares():
    t = np.array([1.0, 2.0, 3.0])
    assert np.allclose(gain_match(10 * t, t), t)
    assert np.array_equal(gain_match(np.zeros(3), t), np.zeros(3))


def test_ncc_bounds():
    a = np.arange(10.0)
    assert ncc(a, a) == pytest.approx(1.0)
    assert ncc(a, -a) == pytest.approx(-1.0)
    assert ncc(a, np.ones(10)) == 0.0


def test_truth_frames_select_planes():
    scene = generate_scene("two_plane", 4, 2, r1=50.0, r2=55.0)
    det = DetectorConfig()
    tf = truth_frames(scene, [(330, 336), (364, 370)], det)
    assert tf.shape == (2, 2, 4)
    assert tf[0, :, :2].sum() == 4 and tf[0, :, 2:].sum() == 0
    assert tf[1, :, 2:].sum() == 4
