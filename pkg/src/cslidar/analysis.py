"""Information bounds and photon budgets.

Entropy is in bits; the measurement-count bound uses natural logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .basis import MeasurementBasis, dense_matrix, mutual_incoherence

__all__ = [
    "EntropyBound",
    "BudgetReport",
    "BudgetPreset",
    "DAYLIGHT_532NM",
    "BUDGET_PRESETS",
    "entropy_bound",
    "required_measurements",
    "practical_measurements",
    "photon_budget",
    "mask_snr_estimate",
    "incoherence_report",
]


@dataclass(frozen=True)
class EntropyBound:
    exact_bits: float
    approx_bits: float


def entropy_bound(n: int, k: int) -> EntropyBound:
    """Entropy of an n-pixel image with k nonzeros: ``n * H2(k / n)`` bits.

    Also returns the large-n approximation ``k * log2(n / k)``.
    """
    if n < 1 or k < 0 or k > n:
        raise ValueError(f"need n >= 1 and 0 <= k <= n, got n={n}, k={k}")
    p = k / n
    h = 0.0
    if 0 < k < n:
        h = -p * math.log2(p) - (1.0 - p) * math.log1p(-p) / math.log(2.0)
    approx = k * math.log2(n / k) if k > 0 else 0.0
    return EntropyBound(n * h, approx)


def required_measurements(mu: float, k: int, n: int, delta: float) -> int:
    """``ceil(mu**2 * k * ln(n / delta))`` rows for recovery w.p. > 1 - delta."""
    if mu < 1 or not 0 < delta < 1 or not 1 <= k <= n:
        raise ValueError("need mu >= 1, 0 < delta < 1 and 1 <= k <= n")
    return int(math.ceil(mu * mu * k * math.log(n / delta) - 1e-9))


def practical_measurements(k: int, n: int) -> int:
    """Rule of thumb ``k * log2(n)``."""
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    return int(math.ceil(k * math.log2(n) - 1e-9))


@dataclass(frozen=True)
class BudgetPreset:
    name: str
    window_ns: float
    target_snr: float
    note: str


# Calibrated so 30 background photons/ns in a 1 ns bin require 900 signal
# photons, i.e. signal shot noise sqrt(900) equal to the background count.
DAYLIGHT_532NM = BudgetPreset(
    name="daylight-532nm",
    window_ns=1.0,
    target_snr=900.0 / math.sqrt(930.0),
    note="window 1 ns; target_snr = 900/sqrt(900+30), chosen so 30 photons/ns needs 900 photons",
)
BUDGET_PRESETS = {DAYLIGHT_532NM.name: DAYLIGHT_532NM}


@dataclass(frozen=True)
class BudgetReport:
    min_signal_photons_per_measurement: int
    background_rate_per_ns: float
    recommended_repeats: int
    expected_snr: float
    background_photons: float
    target_snr: float
    window_ns: float
    note: str = ""


def photon_budget(background_rate_per_ns: float, window_ns: float, target_snr: float,
                  photons_per_pulse: float = 1.0, note: str = "") -> BudgetReport:
    """Smallest integer signal S with ``S / sqrt(S + B) >= target_snr``.

    ``B = background_rate_per_ns * window_ns``.  Repeats are the pulses needed
    to collect S at `photons_per_pulse`.
    """
    if background_rate_per_ns < 0 or window_ns < 0 or target_snr < 0:
        raise ValueError("rates, window and target SNR must be nonnegative")
    if not photons_per_pulse > 0:
        raise ValueError("photons_per_pulse must be positive")
    B = background_rate_per_ns * window_ns
    s2 = target_snr * target_snr
    exact = 0.5 * (s2 + math.sqrt(s2 * s2 + 4.0 * s2 * B))
    S = int(math.ceil(exact - 1e-9 * max(1.0, exact)))
    snr = S / math.sqrt(S + B) if S + B > 0 else 0.0
    repeats = int(math.ceil(S / photons_per_pulse - 1e-12)) if S > 0 else 0
    return BudgetReport(S, float(background_rate_per_ns), repeats, snr, B, float(target_snr),
                        float(window_ns), note)


def mask_snr_estimate(photons_per_mask: float, n_pixels: int) -> float:
    """Shot-noise SNR of one differential mask measurement.

    A mask and its complement collect ``2 P`` photons in total (P through
    each half).  Their difference varies from mask to mask by about
    ``2 P / sqrt(n)`` while its shot noise is ``sqrt(2 P)``, so
    ``SNR = sqrt(2 P / n)``.
    """
    if not photons_per_mask > 0 or not n_pixels > 0:
        raise ValueError("inputs must be positive")
    return math.sqrt(2.0 * photons_per_mask / n_pixels)


def incoherence_report(n: int, seed: int = 0) -> dict:
    """Measured incoherence of the pixel basis against the fast basis and a
    random orthonormal basis, next to ``sqrt(2 ln n)``."""
    basis = MeasurementBasis(n, "fast_binary", seed)
    fast = dense_matrix(basis) / math.sqrt(n)
    eye = np.eye(n)
    q, r = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    return {
        "n": n,
        "mu_pixel_fast_binary": mutual_incoherence(eye, fast),
        "mu_pixel_random_orthonormal": mutual_incoherence(eye, q.T),
        "sqrt_2_ln_n": math.sqrt(2.0 * math.log(n)) if n > 1 else 0.0,
        "mu_max": math.sqrt(n),
    }
