"""Trace processing: matched filtering, target detection, depth frames."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .basis import MaskSchedule
from .sensing import Trace, time_to_range

__all__ = [
    "DepthFrameSet",
    "correlate_response",
    "detect_depth_peaks",
    "build_frame_set",
    "estimate_background",
    "signal_free_bins",
    "default_window",
    "to_differential",
    "raster_frames",
]

_MAD_TO_SIGMA = 1.4826


@dataclass
class DepthFrameSet:
    """Per-depth measurement vectors.

    ``measurements[i, b]`` is the filtered count of mask `i` summed over the
    window of depth frame `b`; ``variances`` is its shot-noise estimate when
    raw totals were available.  ``dc[b]`` estimates the frame's summed
    intensity (the all-ones row, which no scheduled mask measures).
    """

    depth_bins: np.ndarray
    measurements: np.ndarray
    schedule: MaskSchedule
    window: int
    peak_bins: list
    bin_ranges: list
    variances: np.ndarray | None = None
    diagnostics: list = field(default_factory=list)
    dc: np.ndarray | None = None
    dc_variance: np.ndarray | None = None

    def __post_init__(self):
        self.depth_bins = np.asarray(self.depth_bins, dtype=float)
        self.measurements = np.asarray(self.measurements, dtype=float).reshape(self.schedule.m, -1)
        if self.measurements.shape[1] != len(self.depth_bins):
            raise ValueError("one measurement column per depth bin required")
        if not np.all(np.isfinite(self.measurements)):
            raise ValueError("measurements must be finite")
        if np.any(np.diff(self.depth_bins) <= 0):
            raise ValueError("depth bins must be strictly increasing")

    @property
    def n_frames(self) -> int:
        return len(self.depth_bins)

    def noise_level(self, b: int) -> float:
        """sqrt of the summed variance of frame `b`, or 0 if unknown."""
        if self.variances is None:
            return 0.0
        total = float(np.sum(self.variances[:, b]))
        if self.dc_variance is not None:
            total += float(self.dc_variance[b])
        return math.sqrt(max(0.0, total))


def _as_counts(trace):
    return np.asarray(trace.counts if isinstance(trace, Trace) else trace, dtype=float)


def correlate_response(trace, response_curve, origin: int = 0) -> np.ndarray:
    """Cross-correlate counts with the detector response.

    ``out[t] = sum_j counts[t + j - origin] * response[j]`` with zeros beyond
    the trace ends.  ``origin=0`` undoes the causal response used by the
    simulator.  Works on a single trace or a stack of shape ``(m, T)``.
    """
    r = np.asarray(response_curve, dtype=float).ravel()
    if r.size == 0:
        raise ValueError("response curve is empty")
    c = _as_counts(trace)
    T = c.shape[-1]
    out = np.zeros(c.shape, dtype=float)
    for j, w in enumerate(r):
        s = j - origin
        if w == 0 or abs(s) >= T:
            continue
        if s >= 0:
            out[..., : T - s] += w * c[..., s:]
        else:
            out[..., -s:] += w * c[..., : T + s]
    return out


def _runs(flags):
    idx = np.flatnonzero(np.diff(np.concatenate(([0], flags.astype(np.int8), [0]))))
    return list(zip(idx[0::2], idx[1::2]))


def _split_run(s, lo, hi, valley_ratio):
    seg = s[lo:hi]
    if len(seg) < 3:
        return [lo + int(np.argmax(seg))]
    left = np.concatenate(([-np.inf], seg[:-1]))
    right = np.concatenate((seg[1:], [-np.inf]))
    cand = list(np.flatnonzero((seg >= left) & (seg > right)))
    if not cand:
        return [lo + int(np.argmax(seg))]
    merged = True
    while merged and len(cand) > 1:
        merged = False
        for k in range(len(cand) - 1):
            a, b = cand[k], cand[k + 1]
            valley = seg[a:b + 1].min()
            if valley >= valley_ratio * min(seg[a], seg[b]):
                cand[k:k + 2] = [a if seg[a] >= seg[b] else b]
                merged = True
                break
    return [lo + int(c) for c in cand]


def detect_depth_peaks(filtered, threshold_sigma: float = 5.0, valley_ratio: float = 0.8):
    """Time bins holding targets.

    Sums ``|filtered|`` over masks, sets a noise floor from the median
    absolute deviation (never below the Poisson floor ``sqrt(median)``), and
    keeps bins above ``median + threshold_sigma * sigma``.  Each contiguous
    run yields its highest bin; a run is split into separate peaks where it
    dips below ``valley_ratio`` of the smaller neighbouring maximum.
    """
    f = np.atleast_2d(np.asarray([_as_counts(t) for t in filtered]) if isinstance(filtered, list)
                      else np.asarray(filtered, dtype=float))
    if f.size == 0:
        raise ValueError("need at least one trace")
    s = np.abs(f).sum(axis=0)
    med = float(np.median(s))
    mad = float(np.median(np.abs(s - med)))
    sigma = max(_MAD_TO_SIGMA * mad, math.sqrt(max(med, 1.0)))
    above = s > med + threshold_sigma * sigma
    if not above.any():
        return []
    peaks = []
    for lo, hi in _runs(above):
        peaks.extend(_split_run(s, int(lo), int(hi), valley_ratio))
    return [int(p) for p in peaks]


def default_window(pulse_fwhm: float, bin_width: float) -> int:
    """Half-width in bins: ``ceil(fwhm / bin_width) + 1``."""
    return int(math.ceil(pulse_fwhm / bin_width - 1e-12)) + 1


def build_frame_set(filtered, peak_bins, window: int, schedule: MaskSchedule,
                    bin_width: float, gate_delay: float = 0.0, totals=None,
                    response_curve=(1.0,)) -> DepthFrameSet:
    """Sum each filtered trace over ``[peak - window, peak + window]`` per peak.

    Overlapping windows are merged (the taller peak names the frame) and
    noted in ``diagnostics``.  With raw `totals`, per-entry shot-noise
    variances are propagated through the response-and-window weights.
    """
    if not len(peak_bins):
        raise ValueError("no peaks to build frames from")
    if window < 1:
        raise ValueError("window must be >= 1")
    f = np.atleast_2d(np.asarray(filtered, dtype=float))
    m, T = f.shape
    if m != schedule.m:
        raise ValueError(f"{m} traces for a schedule of {schedule.m} masks")
    strength = np.abs(f).sum(axis=0)
    peaks = sorted(int(p) for p in peak_bins)
    frames = []  # [lo, hi, peak]
    diagnostics = []
    for p in peaks:
        lo, hi = max(0, p - window), min(T - 1, p + window)
        if frames and lo <= frames[-1][1]:
            prev = frames[-1]
            keep = prev[2] if strength[prev[2]] >= strength[p] else p
            diagnostics.append(
                f"windows of peaks at bins {prev[2]} and {p} overlap; merged into one frame"
            )
            frames[-1] = [prev[0], max(prev[1], hi), keep]
        else:
            frames.append([lo, hi, p])
    meas = np.stack([f[:, lo:hi + 1].sum(axis=1) for lo, hi, _ in frames], axis=1)
    variances = dc = dc_var = None
    if totals is not None:
        tot = np.atleast_2d(np.asarray(totals, dtype=float))
        r = np.asarray(response_curve, dtype=float)
        free = signal_free_bins(T, [(lo, hi) for lo, hi, _ in frames])
        bg = tot[:, free].mean(axis=1) if free.size >= 10 else np.zeros(m)
        cols, dcs, dcv = [], [], []
        for lo, hi, _ in frames:
            ind = np.zeros(T)
            ind[lo:hi + 1] = 1.0
            w = np.convolve(ind, r)[:T]
            var_i = tot @ (w * w)
            cols.append(var_i)
            # positive plus complement sees the whole field
            dcs.append(float(np.mean(tot @ w - bg * w.sum())))
            dcv.append(float(np.mean(var_i)) / m)
        variances = np.stack(cols, axis=1)
        dc, dc_var = np.array(dcs), np.array(dcv)
    depth = time_to_range(gate_delay + (np.array([p for _, _, p in frames]) + 0.5) * bin_width)
    return DepthFrameSet(
        depth_bins=depth,
        measurements=meas,
        schedule=schedule,
        window=int(window),
        peak_bins=[p for _, _, p in frames],
        bin_ranges=[(lo, hi) for lo, hi, _ in frames],
        variances=variances,
        diagnostics=diagnostics,
        dc=dc,
        dc_variance=dc_var,
    )


def signal_free_bins(n_bins: int, bin_ranges, margin: int = 2) -> np.ndarray:
    """Indices outside every frame window (widened by `margin`)."""
    free = np.ones(n_bins, dtype=bool)
    for lo, hi in bin_ranges:
        free[max(0, lo - margin):min(n_bins, hi + margin + 1)] = False
    return np.flatnonzero(free)


def estimate_background(trace, signal_free_bins) -> float:
    """Mean count per bin over bins known to be free of target returns."""
    idx = np.asarray(signal_free_bins, dtype=np.intp)
    if idx.size < 10:
        raise ValueError(f"need at least 10 signal-free bins, got {idx.size}")
    c = _as_counts(trace)
    return float(c[..., idx].mean(axis=-1)) if c.ndim == 1 else c[:, idx].mean(axis=1)


def _subtract_background(fs: DepthFrameSet, traces_counts):
    counts = np.atleast_2d(np.asarray(traces_counts, dtype=float))
    free = signal_free_bins(counts.shape[1], fs.bin_ranges)
    bg = estimate_background(counts, free)  # per mask, counts per bin
    widths = np.array([hi - lo + 1 for lo, hi in fs.bin_ranges], dtype=float)
    return fs.measurements - np.outer(bg, widths)


def to_differential(fs: DepthFrameSet, traces_counts) -> DepthFrameSet:
    """Turn positive-mask-only measurements into +/-1 measurements.

    Subtracts the per-mask background from signal-free bins, then removes
    the unknown DC term using the mean over masks:
    ``dc = 2 * mean(y_pos)``, ``y = 2 * y_pos - dc``.
    """
    y_pos = _subtract_background(fs, traces_counts)
    dc = 2.0 * y_pos.mean(axis=0)
    y = 2.0 * y_pos - dc
    var = None if fs.variances is None else 4.0 * fs.variances
    dc_var = None if var is None else var.mean(axis=0) / fs.schedule.m
    return DepthFrameSet(fs.depth_bins, y, fs.schedule, fs.window, fs.peak_bins, fs.bin_ranges,
                         var, fs.diagnostics + ["converted from positive-only measurements"],
                         dc, dc_var)


def raster_frames(fs: DepthFrameSet, traces_counts, width: int, height: int) -> np.ndarray:
    """Direct images from a raster schedule, background subtracted.

    Returns ``(n_frames, height, width)``; pixels never scanned stay 0.
    """
    if fs.schedule.basis.kind != "raster":
        raise ValueError("raster_frames needs a raster schedule")
    y = _subtract_background(fs, traces_counts)
    img = np.zeros((fs.n_frames, width * height))
    img[:, np.asarray(fs.schedule.selected_rows)] = y.T
    return img.reshape(fs.n_frames, height, width)
