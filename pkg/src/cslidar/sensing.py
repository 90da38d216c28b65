"""Photon-counting time-of-flight simulator.

One pulse: every open mask pixel with a return contributes
``photons_per_pulse_per_pixel * albedo * (reference_range / range)**2``
expected photons, arriving at ``2 * range / c`` with a Gaussian spread of
the configured FWHM.  Per time bin the photon arrivals (signal plus solar
background) and dark counts are Poisson, the SiPM microcell array
compresses them, and each fired cell's charge lands on the trace through
the detector response curve.

Time bin ``j`` covers ``[gate_delay + j * bin_width, gate_delay + (j+1) * bin_width)``
measured from pulse emission.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr

from .basis import MaskSchedule, fast_transform, to_dmd
from .scene import DepthScene

__all__ = [
    "C",
    "IlluminationConfig",
    "DetectorConfig",
    "BackgroundConfig",
    "Trace",
    "PulseModel",
    "saturate",
    "simulate_pulse",
    "accumulate",
    "mask_images",
    "calibrate_photons_per_pixel",
    "range_to_time",
    "time_to_range",
]

C = 299_792_458.0  # m/s

_FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))


def range_to_time(r):
    return 2.0 * np.asarray(r, dtype=float) / C


def time_to_range(t):
    return np.asarray(t, dtype=float) * C / 2.0


@dataclass(frozen=True)
class IlluminationConfig:
    photons_per_pulse_per_pixel: float = 1.0
    pulse_fwhm: float = 0.5e-9
    rep_rate: float = 1000.0
    reference_range: float = 50.0

    def __post_init__(self):
        for name in ("photons_per_pulse_per_pixel", "pulse_fwhm", "rep_rate", "reference_range"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class DetectorConfig:
    """SiPM and digitizer settings.

    ``n_microcells=None`` switches saturation off (ideal linear counter).
    `response_curve` is causal: tap 0 is the arrival bin.
    """

    n_microcells: Optional[int] = 3600
    pde: float = 1.0
    dark_rate: float = 1.0e5
    response_curve: tuple = (1.0,)
    bin_width: float = 1.0e-9
    trace_bins: int = 1000
    gate_delay: float = 0.0

    def __post_init__(self):
        if self.n_microcells is not None and self.n_microcells < 1:
            raise ValueError("n_microcells must be >= 1")
        if not 0 < self.pde <= 1:
            raise ValueError("pde must lie in (0, 1]")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be nonnegative")
        resp = tuple(float(v) for v in np.ravel(self.response_curve))
        if not resp or any(v < 0 for v in resp) or abs(sum(resp) - 1.0) > 1e-9:
            raise ValueError("response_curve must be nonnegative and sum to 1")
        object.__setattr__(self, "response_curve", resp)
        if not self.bin_width > 0 or self.trace_bins < 1:
            raise ValueError("bin_width and trace_bins must be positive")
        if self.gate_delay < 0:
            raise ValueError("gate_delay must be nonnegative")

    @property
    def max_range(self) -> float:
        """Farthest range whose return lands inside the trace."""
        return float(time_to_range(self.gate_delay + self.trace_bins * self.bin_width))

    def bin_time(self, j):
        """Start time of bin `j` (s)."""
        return self.gate_delay + np.asarray(j, dtype=float) * self.bin_width

    def bin_center_range(self, j):
        return time_to_range(self.gate_delay + (np.asarray(j, dtype=float) + 0.5) * self.bin_width)


@dataclass(frozen=True)
class BackgroundConfig:
    """Solar background through a half-open mask, photons per ns."""

    rate_per_ns: float = 0.0

    def __post_init__(self):
        if self.rate_per_ns < 0:
            raise ValueError("background rate must be nonnegative")


@dataclass(frozen=True, eq=False)
class Trace:
    """Accumulated trace for one mask.

    `counts` is positive-minus-negative for differential acquisition.
    `total` holds the summed raw counts behind `counts` (positive plus
    negative), the per-bin Poisson variance estimate.
    """

    counts: np.ndarray
    bin_width: float
    n_pulses_accumulated: int
    mask_id: int
    gate_delay: float = 0.0
    total: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("trace counts must be integers")
        object.__setattr__(self, "counts", counts)

    def __eq__(self, other):
        if not isinstance(other, Trace):
            return NotImplemented
        same_total = (self.total is None and other.total is None) or (
            self.total is not None and other.total is not None
            and np.array_equal(self.total, other.total)
        )
        return (
            np.array_equal(self.counts, other.counts)
            and self.bin_width == other.bin_width
            and self.n_pulses_accumulated == other.n_pulses_accumulated
            and self.mask_id == other.mask_id
            and self.gate_delay == other.gate_delay
            and same_total
        )

    __hash__ = None


def saturate(k_arrivals, det: DetectorConfig):
    """Expected number of fired microcells for `k_arrivals` photons in one bin.

    ``n_microcells * (1 - exp(-k * pde / n_microcells))``; monotone and bounded
    by the cell count.  Returns ``k * pde`` when saturation is disabled.
    """
    k = np.asarray(k_arrivals, dtype=float)
    if np.any(k < 0):
        raise ValueError("arrival count must be nonnegative")
    return _fire(k * det.pde, det.n_microcells)


def _fire(detections, n_cells):
    if n_cells is None:
        return detections
    return -n_cells * np.expm1(-detections / n_cells)


class PulseModel:
    """Expected per-bin arrival rates for one scene and configuration.

    Precomputes a sparse ``(trace_bins, n_pixels)`` matrix of expected signal
    photons per pulse from each fully open pixel.
    """

    def __init__(self, scene: DepthScene, illum: IlluminationConfig,
                 det: DetectorConfig, bg: BackgroundConfig):
        self.scene = scene
        self.illum = illum
        self.det = det
        self.bg = bg
        self.response = np.asarray(det.response_curve)
        self.signal_matrix = self._build_signal_matrix()
        self.dark_per_bin = det.dark_rate * det.bin_width

    def _build_signal_matrix(self):
        scene, illum, det = self.scene, self.illum, self.det
        T = det.trace_bins
        valid = scene.valid.ravel()
        pix = np.flatnonzero(valid & (scene.albedos.ravel() > 0))
        if pix.size == 0:
            return sp.csr_matrix((T, scene.n))
        r = scene.ranges.ravel()[pix]
        amp = illum.photons_per_pulse_per_pixel * scene.albedos.ravel()[pix] * (illum.reference_range / r) ** 2
        sigma = illum.pulse_fwhm * _FWHM_TO_SIGMA
        t0 = range_to_time(r) - det.gate_delay
        half = int(math.ceil(6 * sigma / det.bin_width)) + 1
        first = np.floor(t0 / det.bin_width).astype(np.int64) - half
        offs = np.arange(2 * half + 1)
        bins = first[:, None] + offs[None, :]
        lo = (bins * det.bin_width - t0[:, None]) / sigma
        hi = ((bins + 1) * det.bin_width - t0[:, None]) / sigma
        mass = ndtr(hi) - ndtr(lo)
        keep = (bins >= 0) & (bins < T)
        rows = bins[keep]
        cols = np.broadcast_to(pix[:, None], bins.shape)[keep]
        vals = (amp[:, None] * mass)[keep]
        return sp.csr_matrix((vals, (rows, cols)), shape=(T, scene.n))

    def signal_rates(self, mask) -> np.ndarray:
        """Expected signal photons per bin for one pulse through `mask`."""
        m = np.asarray(mask, dtype=float).reshape(-1)
        if m.size != self.scene.n:
            raise ValueError(
                f"mask has {m.size} pixels, scene has {self.scene.width}x{self.scene.height}"
            )
        return self.signal_matrix @ m

    def background_rate(self, mask) -> float:
        """Background photons per bin; scales with the open fraction of `mask`."""
        m = np.asarray(mask, dtype=float)
        open_fraction = float(m.mean())
        return self.bg.rate_per_ns * (self.det.bin_width * 1e9) * open_fraction / 0.5

    def photon_rates(self, mask) -> np.ndarray:
        return self.signal_rates(mask) + self.background_rate(mask)

    def expected_trace(self, mask, saturation=True) -> np.ndarray:
        """Noiseless trace: mean rates through the detector, no sampling."""
        det = self.det
        detections = self.photon_rates(mask) * det.pde + self.dark_per_bin
        fired = _fire(detections, det.n_microcells if saturation else None)
        return np.convolve(fired, self.response)[: det.trace_bins]

    def sample(self, mask, rng: np.random.Generator, n_pulses: int = 1, accumulate=True):
        """Draw `n_pulses` pulses through `mask`.

        Returns the summed integer trace, or per-pulse traces of shape
        ``(n_pulses, trace_bins)`` when ``accumulate=False``.
        """
        det = self.det
        T = det.trace_bins
        lam = self.photon_rates(mask)
        k = rng.poisson(lam, size=(n_pulses, T))
        kd = rng.poisson(self.dark_per_bin, size=(n_pulses, T)) if self.dark_per_bin > 0 else 0
        if det.n_microcells is None:
            fired = (rng.binomial(k, det.pde) if det.pde < 1 else k) + kd
        else:
            e = _fire(k * det.pde + kd, det.n_microcells)
            base = np.floor(e)
            fired = (base + (rng.random(e.shape) < (e - base))).astype(np.int64)
        fired = np.asarray(fired, dtype=np.int64)
        if accumulate:
            fired = fired.sum(axis=0)
        return _spread_response(fired, self.response, rng)


def _spread_response(counts, response, rng):
    # each fired cell's charge lands on tap j with probability response[j]
    if len(response) == 1:
        return counts
    out = np.zeros_like(counts)
    T = counts.shape[-1]
    remaining = counts
    left = 1.0
    for j, p in enumerate(response):
        if j == len(response) - 1:
            take = remaining
        else:
            q = min(1.0, p / left) if left > 0 else 0.0
            take = rng.binomial(remaining, q)
            remaining = remaining - take
            left -= p
        if j < T:
            out[..., j:] += take[..., : T - j]
    return out


def simulate_pulse(scene: DepthScene, mask, illum: IlluminationConfig, det: DetectorConfig,
                   bg: BackgroundConfig, rng: np.random.Generator, mask_id: int = 0) -> Trace:
    """Simulate a single pulse through a binary `mask`; deterministic given `rng`."""
    mask = np.asarray(mask)
    if mask.shape != (scene.height, scene.width) and mask.size != scene.n:
        raise ValueError("mask dimensions do not match the scene")
    model = PulseModel(scene, illum, det, bg)
    counts = model.sample(mask, rng, 1)
    return Trace(counts, det.bin_width, 1, mask_id, det.gate_delay, total=counts.copy())


def mask_images(schedule: MaskSchedule, width: int, height: int) -> np.ndarray:
    """Positive DMD patterns for every scheduled row, shape ``(m, height, width)``."""
    basis = schedule.basis
    if basis.n != width * height:
        raise ValueError(f"basis of size {basis.n} does not match a {width}x{height} scene")
    rows = np.asarray(schedule.selected_rows, dtype=np.intp)
    if basis.kind == "raster":
        out = np.zeros((len(rows), basis.n), dtype=np.uint8)
        out[np.arange(len(rows)), rows] = 1
        return out.reshape(-1, height, width)
    eye = np.zeros((len(rows), basis.n))
    eye[np.arange(len(rows)), rows] = 1.0
    signs = fast_transform(basis, eye)
    return np.stack([to_dmd(s, width, height).positive for s in signs])


def _mask_rng(seed: int, mask_index: int, half: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(mask_index, half)))


def accumulate(scene: DepthScene, schedule: MaskSchedule, illum: IlluminationConfig,
               det: DetectorConfig, bg: BackgroundConfig, rng_seed: int,
               differential: bool = True):
    """Simulate every scheduled mask, summed over `schedule.repeats` pulses.

    Each mask draws from its own stream keyed by ``(rng_seed, mask index)``, so
    results do not depend on the order masks are simulated in.  In
    differential mode the complement pattern is simulated too and subtracted.
    """
    if differential and schedule.basis.kind == "raster":
        raise ValueError("raster schedules are measured non-differentially")
    masks = mask_images(schedule, scene.width, scene.height)
    model = PulseModel(scene, illum, det, bg)
    traces = []
    for i, (row_id, pos) in enumerate(zip(schedule.selected_rows, masks)):
        p = model.sample(pos, _mask_rng(rng_seed, i, 0), schedule.repeats)
        if differential:
            q = model.sample(1 - pos, _mask_rng(rng_seed, i, 1), schedule.repeats)
            counts, total = p - q, p + q
        else:
            counts, total = p, p.copy()
        traces.append(Trace(counts, det.bin_width, schedule.repeats, int(row_id), det.gate_delay, total))
    return traces


def calibrate_photons_per_pixel(scene: DepthScene, photons_per_mask: float,
                                illum: IlluminationConfig) -> float:
    """`photons_per_pulse_per_pixel` giving `photons_per_mask` expected signal
    photons per pulse through a half-open mask."""
    if not photons_per_mask > 0:
        raise ValueError("photons_per_mask must be positive")
    valid = scene.valid
    weight = float(np.sum(scene.albedos[valid] * (illum.reference_range / scene.ranges[valid]) ** 2))
    if weight == 0:
        raise ValueError("scene returns no light; cannot calibrate photon rate")
    return photons_per_mask / (0.5 * weight)
