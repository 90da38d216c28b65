"""End-to-end runs: simulate, process traces, reconstruct, score."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .basis import MaskSchedule, MeasurementBasis, select_rows
from .config import RunConfig, from_mapping
from .metrics import ncc, psnr, truth_frames
from .scene import DepthScene
from .sensing import accumulate, calibrate_photons_per_pixel
from .solver import ReconstructionResult, reconstruct_frames, stack_frames
from .traces import (
    DepthFrameSet,
    build_frame_set,
    correlate_response,
    default_window,
    detect_depth_peaks,
    estimate_background,
    raster_frames,
    signal_free_bins,
    to_differential,
)

__all__ = [
    "Acquisition",
    "RunResult",
    "photon_rate",
    "acquire",
    "acquire_raster",
    "process",
    "run",
    "run_raster",
    "raster_pulses_for_budget",
    "raster_pixel_snr",
    "acquisition_meta",
    "acquisition_from_trace_set",
]


@dataclass
class Acquisition:
    schedule: MaskSchedule
    traces: list
    config: RunConfig
    seed: int
    photons_per_pulse_per_pixel: float
    differential: bool
    width: int
    height: int

    def counts(self) -> np.ndarray:
        return np.stack([t.counts for t in self.traces]).astype(float)

    def totals(self) -> np.ndarray:
        return np.stack([t.total for t in self.traces]).astype(float)


@dataclass
class RunResult:
    acquisition: Acquisition
    frame_set: DepthFrameSet | None
    frames: list
    depth_bins: np.ndarray
    reconstruction: ReconstructionResult | None = None
    points: np.ndarray | None = None
    scores: dict = field(default_factory=dict)


def photon_rate(scene: DepthScene, cfg: RunConfig) -> float:
    if cfg.photons_per_pulse_per_pixel is not None:
        return cfg.photons_per_pulse_per_pixel
    return calibrate_photons_per_pixel(scene, cfg.photons_per_mask, cfg.illumination())


def acquire(scene: DepthScene, cfg: RunConfig, seed: int) -> Acquisition:
    """Simulate a compressed-sensing acquisition of `cfg.masks` random rows."""
    basis = MeasurementBasis(scene.n, "fast_binary", cfg.basis_seed)
    schedule = select_rows(basis, cfg.masks, seed, cfg.repeats)
    ppp = photon_rate(scene, cfg)
    traces = accumulate(scene, schedule, cfg.illumination(ppp), cfg.detector(), cfg.background(),
                        seed, differential=cfg.differential)
    return Acquisition(schedule, traces, cfg, seed, ppp, cfg.differential, scene.width, scene.height)


def raster_pulses_for_budget(cfg: RunConfig, n_pixels: int) -> int:
    """Pulses per pixel that spend the same laser pulses as the CS run."""
    pulses = cfg.masks * cfg.repeats * (2 if cfg.differential else 1)
    return max(1, int(round(pulses / n_pixels)))


def acquire_raster(scene: DepthScene, cfg: RunConfig, seed: int, pulses_per_pixel: int) -> Acquisition:
    """One pixel at a time, at the photon rate the CS run would use."""
    basis = MeasurementBasis(scene.n, "raster")
    schedule = MaskSchedule(basis, tuple(range(scene.n)), pulses_per_pixel)
    ppp = photon_rate(scene, cfg)
    traces = accumulate(scene, schedule, cfg.illumination(ppp), cfg.detector(), cfg.background(),
                        seed, differential=False)
    return Acquisition(schedule, traces, cfg, seed, ppp, False, scene.width, scene.height)


def process(acq: Acquisition, n_masks: int | None = None):
    """Filter traces, find targets and build the depth frame set.

    Uses only the first `n_masks` masks when given.  Returns ``None`` when
    no target is found.
    """
    cfg = acq.config
    det = cfg.detector()
    schedule = acq.schedule if n_masks is None else acq.schedule.subset(n_masks)
    m = schedule.m
    counts = acq.counts()[:m]
    filtered = correlate_response(counts, det.response_curve)
    peaks = detect_depth_peaks(filtered, cfg.threshold_sigma, cfg.valley_ratio)
    if not peaks:
        return None
    window = cfg.window or default_window(cfg.pulse_fwhm_ns * 1e-9, det.bin_width)
    fs = build_frame_set(filtered, peaks, window, schedule, det.bin_width, det.gate_delay,
                         totals=acq.totals()[:m], response_curve=det.response_curve)
    if not acq.differential and schedule.basis.kind == "fast_binary":
        fs = to_differential(fs, counts)
    return fs


def _score(result: RunResult, scene: DepthScene):
    if result.frame_set is None:
        return
    det = result.acquisition.config.detector()
    truth = truth_frames(scene, result.frame_set.bin_ranges, det)
    result.scores["psnr"] = [psnr(f, t) for f, t in zip(result.frames, truth)]
    result.scores["ncc"] = [ncc(f, t > 0) for f, t in zip(result.frames, truth)]
    result.scores["mean_psnr"] = float(np.mean(result.scores["psnr"]))
    result.scores["mean_ncc"] = float(np.mean(result.scores["ncc"]))


def run(scene: DepthScene, cfg: RunConfig, seed: int, acq: Acquisition | None = None,
        n_masks: int | None = None, score: bool = True) -> RunResult:
    """Simulate (unless `acq` is given), reconstruct every frame, stack."""
    acq = acq if acq is not None else acquire(scene, cfg, seed)
    fs = process(acq, n_masks)
    if fs is None:
        return RunResult(acq, None, [], np.array([]), points=np.zeros((0, 4)))
    recon = reconstruct_frames(fs, (acq.width, acq.height), cfg.solver())
    points = stack_frames(recon.frames, recon.depth_bins, cfg.occupancy_threshold)
    result = RunResult(acq, fs, recon.frames, recon.depth_bins, recon, points)
    if score:
        _score(result, scene)
    return result


def run_raster(scene: DepthScene | None, cfg: RunConfig, seed: int, pulses_per_pixel: int | None = None,
               score: bool = True, acq: Acquisition | None = None) -> RunResult:
    """Raster baseline; by default at the CS run's pulse budget."""
    if acq is None:
        if pulses_per_pixel is None:
            pulses_per_pixel = raster_pulses_for_budget(cfg, scene.n)
        acq = acquire_raster(scene, cfg, seed, pulses_per_pixel)
    fs = process(acq)
    if fs is None:
        return RunResult(acq, None, [], np.array([]), points=np.zeros((0, 4)))
    frames = list(raster_frames(fs, acq.counts(), acq.width, acq.height))
    points = stack_frames(frames, fs.depth_bins, acq.config.occupancy_threshold)
    result = RunResult(acq, fs, frames, fs.depth_bins, None, points)
    if score and scene is not None:
        _score(result, scene)
    return result


def raster_pixel_snr(result: RunResult, scene: DepthScene) -> float:
    """Shot-noise SNR ``S / sqrt(S + B)`` of one raster pixel.

    S is the mean background-subtracted window count over target pixels of
    the brightest frame; B the mean background count in a window.
    """
    if result.frame_set is None or not result.frames:
        return 0.0
    fs = result.frame_set
    counts = result.acquisition.counts()
    bg = estimate_background(counts, signal_free_bins(counts.shape[1], fs.bin_ranges))
    sums = [float(np.sum(f[scene.valid])) for f in result.frames]
    b = int(np.argmax(sums))
    lo, hi = fs.bin_ranges[b]
    S = float(np.mean(result.frames[b][scene.valid]))
    B = float(np.mean(bg)) * (hi - lo + 1)
    return float(S / np.sqrt(S + B)) if S + B > 0 else 0.0


def acquisition_meta(acq: Acquisition) -> dict:
    """Manifest fields describing an acquisition."""
    return {
        "seed": acq.seed,
        "width": acq.width,
        "height": acq.height,
        "differential": acq.differential,
        "photons_per_pulse_per_pixel": acq.photons_per_pulse_per_pixel,
        "config": acq.config.to_mapping(),
    }


def acquisition_from_trace_set(manifest: dict, schedule: MaskSchedule, traces) -> Acquisition:
    values = dict(manifest["config"])
    if values.get("response") is not None:
        values["response"] = tuple(values["response"])
    cfg = from_mapping(values)
    return Acquisition(schedule, traces, cfg, int(manifest["seed"]),
                       float(manifest["photons_per_pulse_per_pixel"]), bool(manifest["differential"]),
                       int(manifest["width"]), int(manifest["height"]))
