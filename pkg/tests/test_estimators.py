import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pairforge.errors import InsufficientDataError, NegativeRateError
from pairforge.estimators import (CountSummary, DarkAccidentals, Estimate, brightness_from_conversion,
                                  brightness_from_spectral_efficiency, brightness_simple,
                                  conversion_efficiency, dark_accidentals, g2_heralded, g2_predicted,
                                  heralding_efficiency, mu_from_conversion, mu_gen, mu_per_pulse,
                                  nm_per_thz, photon_flux_per_mw, pump_photons,
                                  spectral_conversion_efficiency, weighted_average)
from pairforge.spectral import FLAT, OverlapFactors


def ideal_summary(rate=1e5, eta1=0.1, eta2=0.08, T=10.0, gamma=1.0, **kw):
    """Expected counts for a lossy pair source without dead time or darks."""
    split = gamma
    return CountSummary(N1=rate * eta1 * split * T, N2=rate * eta2 * split * T, T1=T, T2=T, Tc=T,
                        N_mu=rate * eta1 * eta2 * split * T, gamma=gamma, **kw)


# --------------------------------------------------------- conversions

def test_photon_flux_of_one_milliwatt():
    assert photon_flux_per_mw(775e-9) == pytest.approx(3.90e15, rel=2e-3)


def test_pulse_photons_and_mean_pair_number():
    n = pump_photons(0.91e-12)
    assert n == pytest.approx(3.55e6, rel=3e-3)
    assert mu_from_conversion(7.6e-10, n) == pytest.approx(2.7e-3, rel=0.01)
    eta = conversion_efficiency(Estimate(2.7e-3, 0.1e-3), n)
    assert eta.value == pytest.approx(7.6e-10, rel=0.01)


def test_brightness_from_conversion_efficiency():
    assert brightness_from_conversion(7.6e-10, 1.2) == pytest.approx(2.48e6, rel=0.01)


def test_brightness_from_spectral_efficiency():
    assert nm_per_thz(1550e-9) == pytest.approx(8.014, rel=1e-3)
    b = brightness_from_spectral_efficiency(6.81e-7)
    assert b == pytest.approx(3.32e8, rel=5e-3)


def test_spectral_efficiency_scales():
    e = spectral_conversion_efficiency(Estimate(1e-9, 1e-10), 0.5)
    assert e.value == pytest.approx(2e-9) and e.sigma == pytest.approx(2e-10)


# ------------------------------------------------------------ brightness

def test_brightness_simple_ideal():
    # n1 n2 / c12 recovers the pair number for any losses
    rate, t = 2e5, 3.0
    b = brightness_simple(rate * 0.1 * t, rate * 0.2 * t, rate * 0.02 * t, 2.0, t, 1.5)
    assert b.value == pytest.approx(rate / 3.0)


def test_brightness_simple_errors():
    with pytest.raises(InsufficientDataError):
        brightness_simple(1, 1, 0, 1, 1, 1)
    with pytest.raises(ValueError):
        brightness_simple(1, 1, 1, 0, 1, 1)


# --------------------------------------------------------------- mu_gen

@given(st.floats(1e-3, 1.0), st.floats(1e-3, 1.0), st.floats(1e3, 1e7))
def test_mu_gen_invariant_to_losses(eta1, eta2, rate):
    assert mu_gen(ideal_summary(rate, eta1, eta2)).value == pytest.approx(rate, rel=1e-9)


def test_mu_gen_probabilistic_split():
    # a 50:50 split halves singles and coincidences relative to the pair rate;
    # gamma = 1/2 restores the pair rate
    s = CountSummary(N1=1e5 * 0.5, N2=1e5 * 0.5, T1=1, T2=1, Tc=1, N_mu=1e5 * 0.5 * 0.5 * 0.5,
                     gamma=0.5)
    assert mu_gen(s).value == pytest.approx(1e5)


def test_mu_gen_overlap_correction():
    ov = OverlapFactors(eta_s=0.5, eta_i=0.5, eta_pair=0.4)
    s = ideal_summary(overlap=ov)
    assert mu_gen(s).value == pytest.approx(1e5 * ov.correction)


def test_mu_gen_dark_subtraction():
    base = ideal_summary()
    dark = CountSummary(N1=base.N1 + 500 * 10, N2=base.N2 + 200 * 10, T1=10, T2=10, Tc=10,
                        N_mu=base.N_mu, r1=500, r2=200)
    assert mu_gen(dark).value == pytest.approx(mu_gen(base).value)


def test_mu_gen_error_matches_numeric_propagation():
    s = CountSummary(N1=4e5, N2=3e5, T1=9.0, T2=9.5, Tc=8.0, N_mu=2e3, r1=100, r2=50)

    def f(n1, n2, nmu):
        return (n1 / s.T1 - s.r1) * (n2 / s.T2 - s.r2) * s.Tc / nmu

    var = 0.0
    for k, n in enumerate((s.N1, s.N2, s.N_mu)):
        args = [s.N1, s.N2, s.N_mu]
        h = 1e-4 * n
        args[k] = n + h
        up = f(*args)
        args[k] = n - h
        dn = f(*args)
        var += ((up - dn) / (2 * h)) ** 2 * n  # Poisson variance = count
    est = mu_gen(s)
    assert est.value == pytest.approx(f(s.N1, s.N2, s.N_mu))
    assert est.sigma == pytest.approx(math.sqrt(var), rel=1e-6)


def test_accidentals_inflate_error():
    a = mu_gen(ideal_summary())
    b = mu_gen(CountSummary(**{**ideal_summary().__dict__, "N_acc": 1e4}))
    assert b.value == a.value and b.sigma > a.sigma


def test_mu_gen_guards():
    with pytest.raises(InsufficientDataError):
        mu_gen(CountSummary(N1=1, N2=1, T1=1, T2=1, Tc=1, N_mu=0))
    with pytest.raises(NegativeRateError):
        mu_gen(CountSummary(N1=10, N2=10, T1=1, T2=1, Tc=1, N_mu=1, r1=20))
    with pytest.raises(InsufficientDataError):
        CountSummary(N1=1, N2=1, T1=0, T2=1, Tc=1, N_mu=1)
    with pytest.raises(ValueError):
        CountSummary(N1=1, N2=1, T1=1, T2=1, Tc=1, N_mu=1, gamma=0.7)


def test_mu_per_pulse():
    e = mu_per_pulse(Estimate(1e5, 1e3), 33e6)
    assert e.value == pytest.approx(1e5 / 33e6) and e.relative == pytest.approx(0.01)


# ------------------------------------------------------ heralding efficiency

def test_heralding_efficiency_value():
    e = heralding_efficiency(1000, 10_000, 0.5)
    assert e.value == pytest.approx(0.2)


def test_heralding_efficiency_error_by_monte_carlo():
    rng = np.random.default_rng(3)
    n, p = 20_000, 0.07
    draws = rng.binomial(n, p, 4000) / n
    est = heralding_efficiency(p * n, n, 1.0)
    assert est.sigma == pytest.approx(draws.std(), rel=0.05)


def test_heralding_efficiency_guards():
    with pytest.raises(ValueError):
        heralding_efficiency(1, 10, 0)
    with pytest.raises(InsufficientDataError):
        heralding_efficiency(1, 0, 0.5)


# -------------------------------------------------------------------- g2

def test_g2_zero_triples():
    e = g2_heralded(0, 1e6, 1e3, 2e3)
    assert e.value == 0.0 and e.sigma == pytest.approx(1e6 / 2e6)


def test_g2_uncorrelated_counts_give_one():
    e = g2_heralded(50, 1e6, 1e4, 5e3)
    assert e.value == pytest.approx(1.0)
    assert e.relative == pytest.approx(math.sqrt(1 / 50 + 1e-6 + 1e-4 + 2e-4))


def test_g2_error_by_monte_carlo():
    rng = np.random.default_rng(8)
    r3, c13, c23, c123 = 1e6, 3e4, 2e4, 40
    vals = [g2_heralded(*rng.poisson([c123, r3, c13, c23])).value for _ in range(4000)]
    ref = g2_heralded(c123, r3, c13, c23)
    assert ref.sigma == pytest.approx(np.std(vals), rel=0.08)


def test_g2_dark_correction():
    darks = DarkAccidentals(c13=100, c23=100, c123=2, r3=1000)
    raw = g2_heralded(12, 1e6 + 1000, 1e4 + 100, 1e4 + 100)
    corr = g2_heralded(12, 1e6 + 1000, 1e4 + 100, 1e4 + 100, darks)
    assert corr.value == pytest.approx(10 * 1e6 / 1e8)
    assert corr.value < raw.value


def test_dark_accidentals_terms():
    d = dark_accidentals((100.0, 200.0, 50.0), 1000, n1=1e4, n2=2e4, n3=1e5,
                         c12=10, c13=30, c23=40, duration=10.0)
    w = 1e-9
    assert d.c13 == pytest.approx(100 * w * 1e5 + 50 * w * 1e4)
    assert d.c23 == pytest.approx(200 * w * 1e5 + 50 * w * 2e4)
    assert d.c123 == pytest.approx(100 * w * 40 + 200 * w * 30 + 50 * w * 10)
    assert d.r3 == pytest.approx(500.0)


def test_g2_predicted():
    ov = OverlapFactors(eta_s=0.5, eta_i=0.5, eta_pair=0.4)
    exact, approx = g2_predicted(0.01, ov, 0.02)
    assert approx == pytest.approx(2 * 0.01 * 0.625)
    assert exact == pytest.approx(approx - 0.01 * 0.02)
    assert g2_predicted(0.01, FLAT) == (0.02, 0.02)


# -------------------------------------------------------------- averaging

def test_weighted_average_closed_form():
    avg = weighted_average([Estimate(1.0, 0.1), Estimate(2.0, 0.2)])
    assert avg.value == pytest.approx((1 / 0.01 + 2 / 0.04) / (1 / 0.01 + 1 / 0.04))
    assert avg.sigma == pytest.approx((1 / 0.01 + 1 / 0.04) ** -0.5)


def test_weighted_average_monte_carlo():
    rng = np.random.default_rng(2)
    sig = np.array([0.1, 0.3, 0.05])
    means = [weighted_average([Estimate(v, s) for v, s in zip(rng.normal(5.0, sig), sig)]).value
             for _ in range(3000)]
    ref = weighted_average([Estimate(5.0, s) for s in sig]).sigma
    assert np.mean(means) == pytest.approx(5.0, abs=3 * ref / math.sqrt(3000))
    assert np.std(means) == pytest.approx(ref, rel=0.05)


def test_weighted_average_guards():
    with pytest.raises(InsufficientDataError):
        weighted_average([])
    with pytest.raises(ValueError):
        weighted_average([Estimate(1.0, 0.0)])


def test_estimate_helpers():
    e = Estimate(2.0, 0.5)
    assert f"{e:.2f}" == "2.00 +- 0.50"
    assert e.scaled(-2).sigma == 1.0
    assert Estimate(0.0, 1.0).relative == math.inf
    with pytest.raises(ValueError):
        Estimate(1.0, -1.0)
