import dataclasses

import numpy as np
import pytest

from cslidar.config import RunConfig, load_preset
from cslidar.pipeline import (
    acquire,
    process,
    raster_pixel_snr,
    raster_pulses_for_budget,
    run,
    run_raster,
)
from cslidar.scene import DepthScene, generate_scene


@pytest.fixture(scope="module")
def close_cfg():
    return load_preset("close-target")


def test_tv_beats_l1_on_bars(close_cfg):
    scene = generate_scene("bars", 64, 64)
    cfg = close_cfg.replace(masks=256)
    l1_cfg = cfg.replace(objective="l1")
    for seed in range(5):
        acq = acquire(scene, cfg, seed)
        tv = run(scene, cfg, seed, acq=acq)
        l1 = run(scene, l1_cfg, seed, acq=dataclasses.replace(acq, config=l1_cfg))
        assert tv.scores["mean_psnr"] > l1.scores["mean_psnr"]


def test_two_plane_clusters():
    scene = generate_scene("two_plane", 16, 16, r1=50.0, r2=55.0)
    cfg = RunConfig(masks=128, repeats=20, photons_per_mask=20000, background_per_ns=1.0)
    res = run(scene, cfg, seed=0)
    z = res.points[:, 2]
    near = np.abs(z - 50.0) <= 0.5
    far = np.abs(z - 55.0) <= 0.5
    assert near.any() and far.any()
    assert (near | far).sum() >= 0.9 * len(z)
    assert len(res.depth_bins) == 2


def test_no_returns_gives_no_frames():
    scene = DepthScene(8, 8, np.full(64, -1.0), np.ones(64))
    cfg = RunConfig(masks=16, repeats=2, photons_per_pulse_per_pixel=1.0, background_per_ns=1.0)
    res = run(scene, cfg, seed=0, score=False)
    assert res.frame_set is None and len(res.points) == 0


def test_mask_subset_uses_first_masks(close_cfg):
    scene = generate_scene("bars", 32, 32)
    cfg = close_cfg.replace(masks=128, repeats=2)
    acq = acquire(scene, cfg, 3)
    fs = process(acq, n_masks=32)
    assert fs.schedule.selected_rows == acq.schedule.selected_rows[:32]
    assert fs.measurements.shape[0] == 32


def test_non_differential_cs_reconstructs():
    scene = generate_scene("two_plane", 16, 16)
    cfg = RunConfig(masks=128, repeats=20, photons_per_mask=20000, differential=False)
    res = run(scene, cfg, seed=1)
    assert res.frame_set is not None
    assert min(res.scores["ncc"]) > 0.8


def test_raster_budget_and_snr(close_cfg):
    scene = generate_scene("bars", 16, 16)
    assert raster_pulses_for_budget(close_cfg, 4096) == round(512 * 10 * 2 / 4096)
    res = run_raster(scene, close_cfg.replace(masks=64, repeats=10), seed=0)
    assert res.acquisition.schedule.repeats == 5
    assert len(res.frames) == 3
    assert raster_pixel_snr(res, scene) > 1.0
