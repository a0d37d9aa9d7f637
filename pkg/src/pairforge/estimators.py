"""Scalar source estimators with first-order Poisson error propagation.

Counts are raw event numbers accumulated over a measurement; rates are
counts divided by the relevant (ready) time. All functions are pure.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientDataError, NegativeRateError
from .spectral import FLAT, OverlapFactors

H_PLANCK = 6.62607015e-34  # J s
C_LIGHT = 299792458.0  # m/s


@dataclass(frozen=True)
class Estimate:
    value: float
    sigma: float = 0.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def relative(self):
        return self.sigma / abs(self.value) if self.value else math.inf

    def scaled(self, k):
        return Estimate(self.value * k, self.sigma * abs(k))

    def as_dict(self):
        return {"value": self.value, "sigma": self.sigma}

    def __format__(self, spec):
        spec = spec or ".4g"
        return f"{self.value:{spec}} +- {self.sigma:{spec}}"


@dataclass(frozen=True)
class CountSummary:
    """Inputs of the pair-rate estimator.

    ``T1``/``T2`` are the ready times (s) of the two detectors after singles
    post-selection; ``Tc`` is the ready time of the joint coincidence
    selection that produced ``N_mu``. ``N_acc`` is the accidental count that
    was subtracted to obtain ``N_mu`` (used for its variance only).
    """

    N1: float
    N2: float
    T1: float
    T2: float
    Tc: float
    N_mu: float
    r1: float = 0.0
    r2: float = 0.0
    N_acc: float = 0.0
    gamma: float = 1.0
    overlap: OverlapFactors = field(default=FLAT)

    def __post_init__(self):
        for name in ("N1", "N2", "N_acc", "r1", "r2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("T1", "T2", "Tc"):
            if not getattr(self, name) > 0:
                raise InsufficientDataError(f"{name} must be positive")
        if self.gamma not in (0.5, 1.0):
            raise ValueError("gamma is 0.5 (probabilistic split) or 1 (deterministic split)")


def heralding_efficiency(c12, r_other, eta_det):
    """Probability that the partner is present given a click on the other arm.

    ``c12`` and ``r_other`` are counts over the same time (or rates times a
    common duration). The coincidences are a subset of the singles, so the
    conditional fraction carries a binomial error.
    """
    if not 0 < eta_det <= 1:
        raise ValueError("eta_det must lie in (0, 1]")
    if r_other <= 0:
        raise InsufficientDataError("no singles on the heralding arm")
    if c12 < 0:
        raise ValueError("coincidences must be nonnegative")
    p = c12 / r_other
    sigma = math.sqrt(max(p * (1 - p), 0.0) / r_other)
    return Estimate(p / eta_det, sigma / eta_det)


def brightness_simple(n1, n2, c12, pump_power, t, delta_lambda):
    """Pair rate from singles and coincidences, per mW pump and nm bandwidth.

    ``n1``, ``n2``, ``c12`` are counts accumulated over ``t`` seconds, so
    ``n1 * n2 / (c12 * t)`` is the generated pair rate. Passing rates with
    ``t = 1`` gives the same value but then the error is not meaningful.
    """
    if c12 <= 0:
        raise InsufficientDataError("no coincidences")
    if min(n1, n2) < 0 or not (pump_power > 0 and t > 0 and delta_lambda > 0):
        raise ValueError("counts must be nonnegative; power, time and bandwidth positive")
    value = n1 * n2 / (c12 * pump_power * t * delta_lambda)
    rel2 = sum(1.0 / x for x in (n1, n2, c12) if x > 0)
    return Estimate(value, abs(value) * math.sqrt(rel2))


def _net_rate(n, t, r, label):
    x = n / t - r
    if x <= 0:
        raise NegativeRateError(f"dark rate of {label} exceeds its measured count rate")
    return x


def mu_gen(s: CountSummary):
    """Generated pair rate (1/s).

    ``gamma * eta_pair/(eta_s eta_i) * (N1/T1 - r1)(N2/T2 - r2) * Tc / N_mu``
    """
    if s.N_mu <= 0:
        raise InsufficientDataError("no accidental-corrected coincidences")
    x1 = _net_rate(s.N1, s.T1, s.r1, "detector 1")
    x2 = _net_rate(s.N2, s.T2, s.r2, "detector 2")
    value = s.gamma * s.overlap.correction * x1 * x2 * s.Tc / s.N_mu
    rel2 = (s.N1 / (s.T1 * x1) ** 2 + s.N2 / (s.T2 * x2) ** 2
            + (s.N_mu + 2 * s.N_acc) / s.N_mu ** 2)
    return Estimate(value, value * math.sqrt(rel2))


def mu_per_pulse(rate: Estimate, repetition_rate):
    if not repetition_rate > 0:
        raise ValueError("repetition_rate must be positive")
    return rate.scaled(1.0 / repetition_rate)


def pump_photons(pulse_energy, wavelength=775e-9):
    """Photons in a pulse of ``pulse_energy`` J at ``wavelength`` m."""
    return pulse_energy * wavelength / (H_PLANCK * C_LIGHT)


def photon_flux_per_mw(wavelength=775e-9):
    """Photons per second in 1 mW of light."""
    return pump_photons(1e-3, wavelength)


def conversion_efficiency(mu: Estimate, n_pump):
    """Pairs per pump photon from the mean pair number per pulse."""
    if not n_pump > 0:
        raise ValueError("pump photon number must be positive")
    return mu.scaled(1.0 / n_pump)


def spectral_conversion_efficiency(eta_conv: Estimate, bandwidth_thz):
    """Conversion efficiency per THz of pair bandwidth."""
    if not bandwidth_thz > 0:
        raise ValueError("bandwidth must be positive")
    return eta_conv.scaled(1.0 / bandwidth_thz)


def mu_from_conversion(eta_conv, n_pump):
    return eta_conv * n_pump


def nm_per_thz(wavelength=1550e-9):
    """Wavelength interval (nm) spanned by 1 THz at ``wavelength`` m."""
    return wavelength ** 2 / C_LIGHT * 1e12 * 1e9


def brightness_from_conversion(eta_conv, delta_lambda, pump_wavelength=775e-9):
    """Pairs/(s mW nm) implied by a conversion efficiency.

    ``eta_conv`` is an :class:`Estimate` or a float.
    """
    if not delta_lambda > 0:
        raise ValueError("delta_lambda must be positive")
    k = photon_flux_per_mw(pump_wavelength) / delta_lambda
    if isinstance(eta_conv, Estimate):
        return eta_conv.scaled(k)
    return eta_conv * k


def brightness_from_spectral_efficiency(eta_nu, pump_wavelength=775e-9, pair_wavelength=1550e-9):
    """Same as :func:`brightness_from_conversion` for a per-THz efficiency."""
    return brightness_from_conversion(eta_nu, nm_per_thz(pair_wavelength), pump_wavelength)


# ------------------------------------------------------------------ g2

@dataclass(frozen=True)
class DarkAccidentals:
    """Expected herald-conditioned events involving at least one dark count."""

    c13: float = 0.0
    c23: float = 0.0
    c123: float = 0.0
    r3: float = 0.0


def dark_accidentals(dark_rates, window_ps, n1, n2, n3, c12, c13, c23, duration):
    """Dark-count contributions to the heralded counts.

    ``dark_rates = (d1, d2, d3)`` in 1/s for arm 1, arm 2 and the herald;
    the ``n`` are singles and the ``c`` coincidence counts over
    ``duration`` s. A dark count lands in a window of ``window_ps`` around a
    given tag with probability ``d * window``; accidentals among photons are
    genuine multi-pair events and are left in.
    """
    d1, d2, d3 = dark_rates
    w = window_ps * 1e-12
    return DarkAccidentals(
        c13=d1 * w * n3 + d3 * w * n1,
        c23=d2 * w * n3 + d3 * w * n2,
        c123=d1 * w * c23 + d2 * w * c13 + d3 * w * c12,
        r3=d3 * duration,
    )


def g2_heralded(c123, r3, c13, c23, darks: DarkAccidentals | None = None):
    """Heralded ``g2(0) = C123 R3 / (C13 C23)`` from herald-conditioned counts.

    No triples gives 0; its error is then quoted as the value one triple
    would have produced.
    """
    if darks is not None:
        c123 = max(c123 - darks.c123, 0.0)
        r3 = r3 - darks.r3
        c13 = c13 - darks.c13
        c23 = c23 - darks.c23
    if c13 <= 0 or c23 <= 0 or r3 <= 0:
        raise InsufficientDataError("no herald coincidences left after dark correction")
    scale = r3 / (c13 * c23)
    if c123 <= 0:
        return Estimate(0.0, scale)
    value = c123 * scale
    rel2 = 1.0 / c123 + 1.0 / r3 + 1.0 / c13 + 1.0 / c23
    return Estimate(value, value * math.sqrt(rel2))


def g2_predicted(mu, overlap: OverlapFactors, eta_s_times_ts=0.0):
    """Multi-pair prediction of the heralded g2 for Poissonian pair numbers.

    Returns ``(exact, approx)`` with
    ``exact = mu (2 eta_S eta_I / eta_pair - eta_S T_S)`` and
    ``approx = 2 mu eta_S eta_I / eta_pair``.
    """
    if mu < 0:
        raise ValueError("mu must be nonnegative")
    if eta_s_times_ts < 0:
        raise ValueError("eta_S T_S must be nonnegative")
    approx = 2.0 * mu * overlap.ratio
    return approx - mu * eta_s_times_ts, approx


def weighted_average(points):
    """Inverse-variance weighted mean of :class:`Estimate` objects."""
    points = list(points)
    if not points:
        raise InsufficientDataError("no points to average")
    sig = np.array([p.sigma for p in points], dtype=float)
    val = np.array([p.value for p in points], dtype=float)
    if np.any(sig <= 0):
        raise ValueError("every point needs a positive sigma")
    w = sig ** -2
    return Estimate(float(np.sum(w * val) / np.sum(w)), float(np.sum(w) ** -0.5))
