import math

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from cslidar.analysis import (
    DAYLIGHT_532NM,
    entropy_bound,
    incoherence_report,
    mask_snr_estimate,
    photon_budget,
    practical_measurements,
    required_measurements,
)


def mp_entropy(n, k):
    mpmath.mp.dps = 50
    p = mpmath.mpf(k) / n
    return n * (-p * mpmath.log(p, 2) - (1 - p) * mpmath.log(1 - p, 2))


def test_entropy_examples():
    assert entropy_bound(100, 0).exact_bits == 0.0
    assert entropy_bound(100, 100).exact_bits == 0.0
    assert entropy_bound(64, 32).exact_bits == pytest.approx(64.0, rel=1e-15)
    eb = entropy_bound(4096, 64)
    assert eb.exact_bits == pytest.approx(475.7, abs=0.15)
    assert eb.approx_bits == 384.0


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 10 ** 7), data=st.data())
def test_entropy_matches_high_precision(n, data):
    k = data.draw(st.integers(1, n - 1))
    got = entropy_bound(n, k).exact_bits
    assert abs(got - float(mp_entropy(n, k))) <= 1e-9 * got


def test_entropy_domain():
    with pytest.raises(ValueError):
        entropy_bound(10, 11)
    with pytest.raises(ValueError):
        entropy_bound(0, 0)


@pytest.mark.parametrize("bits", range(8, 17))
def test_entropy_approximation_gap(bits):
    n = 2 ** bits
    for k in range(1, n // 16 + 1, max(1, n // 512)):
        eb = entropy_bound(n, k)
        gap = eb.exact_bits - eb.approx_bits
        assert gap >= 0
        # n(1-p)(-ln(1-p))/ln2 <= k log2(e)
        assert gap <= k / math.log(2) + 1e-9
        if k <= n // 32:
            assert gap <= 0.25 * eb.exact_bits


def test_entropy_gap_exceeds_quarter_at_one_sixteenth():
    # the 25% margin does not hold all the way to k/n = 1/16
    eb = entropy_bound(65536, 4096)
    assert (eb.exact_bits - eb.approx_bits) / eb.exact_bits > 0.25


def test_required_measurements_examples():
    assert required_measurements(1, 10, 1024, 0.05) == 100
    assert practical_measurements(64, 4096) == 768
    assert practical_measurements(300, 2 ** 20) == 6000


@settings(max_examples=60, deadline=None)
@given(mu=st.floats(1, 8), k=st.integers(1, 500), n=st.integers(500, 10 ** 6),
       delta=st.floats(1e-6, 0.5), f=st.floats(1.0, 3.0))
def test_required_measurements_monotone(mu, k, n, delta, f):
    base = required_measurements(mu, k, n, delta)
    assert required_measurements(mu * f, k, n, delta) >= base
    assert required_measurements(mu, min(n, k + 1), n, delta) >= base
    assert required_measurements(mu, k, n, delta / f) >= base
    assert base >= mu * mu * k * math.log(n / delta) - 1e-6


@pytest.mark.parametrize("args", [(0.5, 1, 10, 0.1), (1, 0, 10, 0.1), (1, 11, 10, 0.1), (1, 1, 10, 1.0)])
def test_required_measurements_domain(args):
    with pytest.raises(ValueError):
        required_measurements(*args)


def test_budget_trivial_and_daylight():
    assert photon_budget(0.0, 1.0, 1.0).min_signal_photons_per_measurement == 1
    day = photon_budget(30.0, DAYLIGHT_532NM.window_ns, DAYLIGHT_532NM.target_snr)
    assert day.min_signal_photons_per_measurement == 900
    night = photon_budget(2.0, DAYLIGHT_532NM.window_ns, DAYLIGHT_532NM.target_snr)
    assert night.min_signal_photons_per_measurement == 873
    assert photon_budget(30.0, 1.0, DAYLIGHT_532NM.target_snr, photons_per_pulse=7.0).recommended_repeats == 129


@settings(max_examples=100, deadline=None)
@given(bg=st.floats(0, 1e4), window=st.floats(0, 100), snr=st.floats(0.01, 100))
def test_budget_is_minimal(bg, window, snr):
    r = photon_budget(bg, window, snr)
    S, B = r.min_signal_photons_per_measurement, bg * window
    assert S / math.sqrt(S + B) >= snr * (1 - 1e-9)
    if S - 1 + B > 0:
        assert (S - 1) / math.sqrt(S - 1 + B) < snr * (1 + 1e-9)
    assert min(S, r.recommended_repeats, r.expected_snr, r.background_photons) >= 0


def test_budget_rejects_negative():
    with pytest.raises(ValueError):
        photon_budget(-1.0, 1.0, 1.0)


def test_mask_snr_anchor_and_scaling():
    assert mask_snr_estimate(25000, 4096) == pytest.approx(3.0, abs=0.5)
    assert mask_snr_estimate(4 * 25000, 4096) == pytest.approx(2 * mask_snr_estimate(25000, 4096))
    vals = [mask_snr_estimate(p, 4096) for p in (1e2, 1e4, 1e6, 1e8)]
    assert vals == sorted(vals)
    with pytest.raises(ValueError):
        mask_snr_estimate(0, 16)


@pytest.mark.parametrize("n", [4, 16, 64, 256])
def test_incoherence_report(n):
    rep = incoherence_report(n)
    assert rep["mu_pixel_fast_binary"] == 1.0
    assert 1.0 <= rep["mu_pixel_random_orthonormal"] <= math.sqrt(n)
    assert rep["sqrt_2_ln_n"] == pytest.approx(math.sqrt(2 * math.log(n)))
