"""Joint spectral amplitude and its Schmidt decomposition.

Signal and idler frequencies are detunings ``x``, ``y`` (THz) from the
degenerate frequency. The JSA is the product of the pump amplitude, taken at
the sum detuning ``x + y``, and the phase-matching amplitude at the
difference ``x - y``::

    psi(x, y) = alpha(x + y) * phi(x - y)

The Schmidt coefficients are the squared singular values of the normalised
matrix ``psi``; ``K = 1 / sum(lambda**2)`` counts the effective modes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError
from .spectral import FrequencyGrid

SINC = "sinc"
SINC2 = "sinc2"
# pump time-bandwidth product of a transform-limited Gaussian (intensity FWHMs)
GAUSS_TBP = 2.0 * np.log(2.0) / np.pi


def _sample(grid, values, nu):
    """Linear interpolation of complex samples, zero outside the grid."""
    p = grid.points
    re = np.interp(nu, p, values.real, left=0.0, right=0.0)
    if np.iscomplexobj(values) and np.any(values.imag):
        return re + 1j * np.interp(nu, p, values.imag, left=0.0, right=0.0)
    return re


def _half_max_bounds(grid, values):
    """Outermost points where ``|values|**2`` reaches half its maximum."""
    inten = np.abs(values) ** 2
    idx = np.flatnonzero(inten >= 0.5 * inten.max())
    pts = grid.points
    return pts[idx[0]], pts[idx[-1]]


def _freeze(values):
    values = np.array(values)
    values.setflags(write=False)
    return values


@dataclass(frozen=True)
class PumpSpectrum:
    """Pump amplitude over the sum detuning, normalised to
    ``sum(|alpha|**2) * spacing == 1``."""

    grid: FrequencyGrid
    amplitude: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitude)
        if a.shape != (self.grid.n_points,):
            raise ValueError("one amplitude per grid point required")
        if not np.all(np.isfinite(a)):
            raise ValueError("pump amplitude must be finite")
        norm = np.sum(np.abs(a) ** 2) * self.grid.spacing
        if norm <= 0:
            raise ValueError("pump amplitude is zero everywhere")
        object.__setattr__(self, "amplitude", _freeze(a / np.sqrt(norm)))

    def __call__(self, nu):
        return _sample(self.grid, self.amplitude, np.asarray(nu, dtype=float))

    @property
    def intensity_fwhm(self):
        lo, hi = _half_max_bounds(self.grid, self.amplitude)
        return hi - lo

    @classmethod
    def gaussian(cls, fwhm, grid=None, center=0.0):
        """Transform-limited Gaussian with spectral intensity FWHM ``fwhm``."""
        if grid is None:
            grid = FrequencyGrid(center, 8 * fwhm, 801)
        sigma_i = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        return cls(grid, np.exp(-((grid.points - center) ** 2) / (4.0 * sigma_i ** 2)))

    @classmethod
    def from_duration(cls, duration_fwhm, grid=None):
        """Transform-limited Gaussian pulse with temporal intensity FWHM
        ``duration_fwhm`` (s)."""
        return cls.gaussian(GAUSS_TBP / duration_fwhm * 1e-12, grid)

    @classmethod
    def from_temporal(cls, times, intensity, grid):
        """Spectrum of a transform-limited pulse with the given temporal
        intensity profile (``times`` in s), evaluated on ``grid`` (THz)."""
        t = np.asarray(times, dtype=float)
        inten = np.asarray(intensity, dtype=float)
        if t.ndim != 1 or t.shape != inten.shape or t.size < 2:
            raise ValueError("times and intensity must be equal-length 1-d arrays")
        if np.any(np.diff(t) <= 0) or np.any(inten < 0):
            raise ValueError("times must increase and intensity be nonnegative")
        field = np.sqrt(inten)
        w = np.gradient(t)  # quadrature weights for uneven sampling
        # direct Fourier sum on the target grid; grids here are small
        phase = np.exp(-2j * np.pi * np.outer(grid.points * 1e12, t - t[np.argmax(inten)]))
        return cls(grid, phase @ (field * w))


@dataclass(frozen=True)
class PhaseMatching:
    """Phase-matching amplitude over the difference detuning ``x - y``."""

    grid: FrequencyGrid
    amplitude: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.amplitude)
        if a.shape != (self.grid.n_points,):
            raise ValueError("one amplitude per grid point required")
        if not np.all(np.isfinite(a)):
            raise ValueError("phase-matching amplitude must be finite")
        if not np.any(a):
            raise ValueError("phase-matching amplitude is zero everywhere")
        object.__setattr__(self, "amplitude", _freeze(a))

    def __call__(self, nu):
        return _sample(self.grid, self.amplitude, np.asarray(nu, dtype=float))

    @property
    def intensity_fwhm(self):
        lo, hi = _half_max_bounds(self.grid, self.amplitude)
        return hi - lo

    @classmethod
    def from_intensity(cls, grid, intensity):
        """Amplitude from measured ``|phi|**2`` samples, zero phase assumed."""
        inten = np.asarray(intensity, dtype=float)
        return cls(grid, np.sqrt(np.clip(inten, 0.0, None)))

    @classmethod
    def gaussian(cls, fwhm, grid=None):
        if grid is None:
            grid = FrequencyGrid(0.0, 8 * fwhm, 801)
        sigma_i = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
        return cls(grid, np.exp(-grid.points ** 2 / (4.0 * sigma_i ** 2)))


def _sinc(x):
    return np.sinc(x / np.pi)


def sinc_phase_matching(length_mm, slope, grid, convention=SINC):
    """Sinc phase matching with a linearised mismatch ``dk = slope * nu``.

    ``slope`` is in rad/(mm THz), so ``dk L / 2 = slope * nu * length_mm / 2``.
    ``convention`` selects ``sinc(dk L/2)`` or ``sinc(dk L/2)**2`` as the
    amplitude.
    """
    if not length_mm > 0 or not slope > 0:
        raise ValueError("length and slope must be positive")
    amp = _sinc(0.5 * slope * length_mm * grid.points)
    if convention == SINC2:
        amp = amp ** 2
    elif convention != SINC:
        raise ValueError(f"convention must be {SINC!r} or {SINC2!r}")
    return PhaseMatching(grid, amp)


def _half_point(convention):
    """``x`` where ``|amplitude(x)|**2`` falls to one half."""
    power = 2 if convention == SINC else 4
    return brentq(lambda x: _sinc(x) ** power - 0.5, 0.1, 3.0, xtol=1e-14)


def slope_for_fwhm(fwhm, length_mm, convention=SINC):
    """Mismatch slope giving ``|phi|**2`` the FWHM ``fwhm`` (THz)."""
    return 4.0 * _half_point(convention) / (length_mm * fwhm)


def calibrated_phase_matching(fwhm, length_mm=1.0, grid=None, convention=SINC, lobes=40):
    """Sinc phase matching whose intensity FWHM over ``x - y`` is ``fwhm``."""
    slope = slope_for_fwhm(fwhm, length_mm, convention)
    if grid is None:
        zero = 2 * np.pi / (slope * length_mm)  # first zero
        grid = FrequencyGrid(0.0, 2 * lobes * zero, 64 * lobes + 1)
    return sinc_phase_matching(length_mm, slope, grid, convention)


@dataclass(frozen=True)
class JsaMatrix:
    signal_grid: FrequencyGrid
    idler_grid: FrequencyGrid
    values: np.ndarray  # [signal, idler], Frobenius norm 1

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape != (self.signal_grid.n_points, self.idler_grid.n_points):
            raise ValueError("matrix shape must match the grids")
        norm = np.linalg.norm(v)
        if not np.isfinite(norm) or norm == 0:
            raise DomainError("JSA vanishes on the chosen grids")
        object.__setattr__(self, "values", _freeze(v / norm))

    @property
    def intensity(self):
        return np.abs(self.values) ** 2

    def table(self):
        """Rows of ``(signal, idler, |psi|^2)`` for plotting."""
        x, y = np.meshgrid(self.signal_grid.points, self.idler_grid.points, indexing="ij")
        return np.column_stack([x.ravel(), y.ravel(), self.intensity.ravel()])


def _check_covered(name, fn, lo, hi):
    a, b = _half_max_bounds(fn.grid, fn.amplitude)
    if a < lo or b > hi:
        raise DomainError(
            f"{name} main lobe [{a:.6g}, {b:.6g}] THz is not covered by the JSA "
            f"grids, which reach [{lo:.6g}, {hi:.6g}] THz")


def build_jsa(pump: PumpSpectrum, pm: PhaseMatching, signal_grid, idler_grid):
    """``psi[i, j] = alpha(x_i + y_j) * phi(x_i - y_j)``, Frobenius-normalised.

    The pump and phase matching are zero outside their own grids. Their
    half-maximum lobes must lie inside the sum and difference ranges spanned
    by the signal and idler grids.
    """
    sg, ig = signal_grid, idler_grid
    _check_covered("pump", pump, sg.start + ig.start, sg.stop + ig.stop)
    _check_covered("phase matching", pm, sg.start - ig.stop, sg.stop - ig.start)
    x = sg.points[:, None]
    y = ig.points[None, :]
    psi = pump(x + y) * pm(x - y)
    return JsaMatrix(sg, ig, psi)


def pulsed_source_jsa(pump_duration, signal_fwhm, convention=SINC, n_points=2400, span_factor=8.0):
    """JSA of a transform-limited Gaussian pump and sinc phase matching.

    ``pump_duration`` is the temporal intensity FWHM (s). ``signal_fwhm``
    (THz) is the bandwidth of one photon; the phase-matching intensity over
    ``x - y`` is twice as broad since ``x`` and ``-y`` move together. Both
    detuning grids span ``span_factor`` signal FWHMs with ``n_points``
    samples.
    """
    fwhm = GAUSS_TBP / pump_duration * 1e-12
    pump = PumpSpectrum.gaussian(fwhm, FrequencyGrid(0.0, 16 * fwhm, 4001))
    pm = calibrated_phase_matching(2 * signal_fwhm, convention=convention,
                                   grid=FrequencyGrid(0.0, 40 * signal_fwhm, 200001))
    grid = FrequencyGrid(0.0, span_factor * signal_fwhm, n_points)
    return build_jsa(pump, pm, grid, grid)


@dataclass(frozen=True)
class SchmidtSpectrum:
    coefficients: np.ndarray  # descending, sum 1

    @property
    def K(self):
        return float(1.0 / np.sum(self.coefficients ** 2))

    def __len__(self):
        return self.coefficients.size


def _matrix(jsa):
    m = jsa.values if isinstance(jsa, JsaMatrix) else np.asarray(jsa)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("JSA must be a nonempty matrix")
    if np.iscomplexobj(m) and not np.any(m.imag):
        m = m.real
    norm = np.linalg.norm(m)
    if norm == 0 or not np.isfinite(norm):
        raise DomainError("JSA has zero or non-finite norm")
    return m / norm


def schmidt_decompose(jsa):
    """Schmidt coefficients of a JSA (a :class:`JsaMatrix` or plain matrix)."""
    m = _matrix(jsa)
    try:
        s = np.linalg.svd(m, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"SVD did not converge: {exc}") from exc
    lam = s ** 2
    lam = lam / lam.sum()
    return SchmidtSpectrum(_freeze(np.sort(lam)[::-1]))


def schmidt_number(jsa):
    """``K`` without a full SVD: ``sum(lambda**2)`` is the squared Frobenius
    norm of the Gram matrix ``psi^H psi`` of the normalised JSA."""
    m = _matrix(jsa)
    if m.shape[0] < m.shape[1]:
        m = m.T
    gram = m.conj().T @ m
    return float(np.real(np.trace(gram)) ** 2 / np.sum(np.abs(gram) ** 2))


def gaussian_schmidt_number(sum_width, diff_width):
    """Closed-form ``K`` of ``exp(-(x+y)**2/2a**2) * exp(-(x-y)**2/2b**2)``.

    Any pair of widths sharing a convention works since only the ratio
    enters: ``K = (a**2 + b**2) / (2 a b)``.
    """
    a, b = float(sum_width), float(diff_width)
    if not a > 0 or not b > 0:
        raise ValueError("widths must be positive")
    return (a * a + b * b) / (2 * a * b)


def g2_unheralded(K):
    """Unheralded ``g2(0) = 1 + 1/K`` of one arm of a pair source."""
    if not K >= 1:
        raise ValueError(f"K must be at least 1, got {K}")
    return 1.0 + 1.0 / K


def load_two_column(path):
    """``x,y`` numeric text columns; one header line and ``#`` comments allowed."""
    rows = []
    with open(path) as fh:
        for ln in fh:
            ln = ln.strip()
            if not ln or ln.startswith("#"):
                continue
            parts = ln.replace(",", " ").split()
            try:
                rows.append((float(parts[0]), float(parts[1])))
            except (ValueError, IndexError):
                if rows:
                    raise ValueError(f"{path}: malformed row {ln!r}") from None
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two rows")
    return np.array(rows)
