"""Image-quality scores against ground truth."""

from __future__ import annotations

import math

import numpy as np

from .scene import DepthScene
from .sensing import DetectorConfig, range_to_time

__all__ = ["gain_match", "psnr", "ncc", "truth_frames"]


def gain_match(recon, truth) -> np.ndarray:
    """Scale `recon` by the least-squares gain onto `truth`.

    Reconstructions come out in photon units; truth frames hold albedo.
    """
    r = np.asarray(recon, dtype=float)
    t = np.asarray(truth, dtype=float)
    rr = float(np.vdot(r, r))
    return r * (float(np.vdot(r, t)) / rr) if rr > 0 else r


def psnr(recon, truth, match_gain=True) -> float:
    """Peak SNR in dB with peak ``max(truth)``; gain-matched by default."""
    t = np.asarray(truth, dtype=float)
    r = gain_match(recon, t) if match_gain else np.asarray(recon, dtype=float)
    mse = float(np.mean((r - t) ** 2))
    peak = float(np.max(np.abs(t)))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ncc(a, b) -> float:
    """Zero-mean normalized cross-correlation (Pearson coefficient)."""
    a = np.ravel(np.asarray(a, dtype=float))
    b = np.ravel(np.asarray(b, dtype=float))
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / den if den > 0 else 0.0


def truth_frames(scene: DepthScene, bin_ranges, det: DetectorConfig) -> np.ndarray:
    """Albedo images of the pixels whose return bin falls in each window."""
    bins = np.floor((range_to_time(scene.ranges) - det.gate_delay) / det.bin_width)
    out = np.zeros((len(bin_ranges), scene.height, scene.width))
    for k, (lo, hi) in enumerate(bin_ranges):
        sel = scene.valid & (bins >= lo) & (bins <= hi)
        out[k][sel] = scene.albedos[sel]
    return out
