"""Frequency grids, filter transmissions and spectral overlap factors.

All frequencies are in THz. A :class:`FrequencyGrid` is uniform; a
:class:`SpectralFunction` is a set of nonnegative samples on such a grid,
evaluated in between by linear interpolation and never extrapolated.

The overlap factors quantify how a pair of frequency-anticorrelated photons
(signal at ``nu0 + f``, idler at ``nu0 - f``) is transmitted by two filters
when the pair detuning ``f`` is spread evenly over an interval ``F``::

    eta_s    = <p_s(nu0 + f)>_F
    eta_i    = <p_i(nu0 - f)>_F
    eta_pair = <p_s(nu0 + f) * p_i(nu0 - f)>_F
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.integrate import trapezoid

from .errors import DomainError

TRANSMISSION = "transmission"
DENSITY = "density"

# relative slack when testing a point against the edge of a grid
_EDGE_TOL = 1e-9


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of ``n_points`` frequencies spanning ``span`` THz around
    ``center_frequency``."""

    center_frequency: float
    span: float
    n_points: int

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError(f"n_points must be an integer >= 2, got {self.n_points}")
        if not np.isfinite(self.span) or self.span <= 0:
            raise ValueError(f"span must be positive, got {self.span}")
        if not np.isfinite(self.center_frequency):
            raise ValueError("center_frequency must be finite")
        object.__setattr__(self, "n_points", int(self.n_points))

    @classmethod
    def from_bounds(cls, start, stop, n_points):
        return cls(0.5 * (start + stop), stop - start, n_points)

    @property
    def spacing(self):
        return self.span / (self.n_points - 1)

    @property
    def start(self):
        return self.center_frequency - 0.5 * self.span

    @property
    def stop(self):
        return self.center_frequency + 0.5 * self.span

    @property
    def points(self):
        return self.start + self.spacing * np.arange(self.n_points)

    def refined(self, factor=2):
        """Same span with ``factor`` times as many intervals."""
        return FrequencyGrid(self.center_frequency, self.span, (self.n_points - 1) * factor + 1)


@dataclass(frozen=True)
class SpectralFunction:
    """Nonnegative samples on a :class:`FrequencyGrid`.

    ``kind`` is ``"transmission"`` (values bounded by 1) or ``"density"``
    (arbitrary nonnegative units).
    """

    grid: FrequencyGrid
    values: np.ndarray = field(repr=False)
    kind: str = TRANSMISSION

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise ValueError(
                f"expected {self.grid.n_points} values, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
        if np.any(values < 0):
            raise ValueError("spectral values must be nonnegative")
        if self.kind not in (TRANSMISSION, DENSITY):
            raise ValueError(f"unknown kind {self.kind!r}")
        if self.kind == TRANSMISSION and np.any(values > 1.0 + 1e-12):
            raise ValueError("transmission values must not exceed 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def frequencies(self):
        return self.grid.points

    def covers(self, lo, hi):
        tol = _EDGE_TOL * self.grid.span
        return lo >= self.grid.start - tol and hi <= self.grid.stop + tol

    def __call__(self, nu):
        nu = np.asarray(nu, dtype=float)
        if nu.size and not self.covers(nu.min(), nu.max()):
            raise DomainError(
                f"frequencies [{nu.min():.6f}, {nu.max():.6f}] THz fall outside the "
                f"sampled range [{self.grid.start:.6f}, {self.grid.stop:.6f}] THz")
        x = np.clip(nu, self.grid.start, self.grid.stop)
        return np.interp(x, self.grid.points, self.values)

    @classmethod
    def constant(cls, grid, level, kind=TRANSMISSION):
        return cls(grid, np.full(grid.n_points, float(level)), kind)

    @classmethod
    def from_samples(cls, frequencies, values, grid=None, kind=TRANSMISSION):
        """Resample arbitrary strictly increasing samples onto a uniform grid.

        Without ``grid`` a grid with the same number of points over the
        sampled range is used.
        """
        frequencies = np.asarray(frequencies, dtype=float)
        values = np.asarray(values, dtype=float)
        if frequencies.ndim != 1 or frequencies.shape != values.shape:
            raise ValueError("frequencies and values must be 1-d arrays of equal length")
        if frequencies.size < 2:
            raise ValueError("need at least two samples")
        if np.any(np.diff(frequencies) <= 0):
            raise ValueError("frequencies must be strictly increasing")
        if grid is None:
            grid = FrequencyGrid.from_bounds(frequencies[0], frequencies[-1], frequencies.size)
        tol = _EDGE_TOL * (frequencies[-1] - frequencies[0])
        if grid.start < frequencies[0] - tol or grid.stop > frequencies[-1] + tol:
            raise DomainError("target grid extends beyond the sampled frequencies")
        return cls(grid, np.interp(grid.points, frequencies, values), kind)


def load_spectral_function(path, n_points=None, kind=TRANSMISSION):
    """Read a two-column ``frequency_THz,value`` text file.

    A single non-numeric header line is skipped. The samples are resampled
    onto a uniform grid by linear interpolation (``n_points`` defaults to the
    number of rows).
    """
    path = Path(path)
    with path.open() as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if lines:
        try:
            float(lines[0].replace(",", " ").split()[0])
        except ValueError:
            lines = lines[1:]
    rows = []
    for ln in lines:
        parts = ln.replace(",", " ").split()
        if len(parts) < 2:
            raise ValueError(f"{path}: expected two columns, got {ln!r}")
        rows.append((float(parts[0]), float(parts[1])))
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least two samples")
    data = np.array(rows)
    grid = None
    if n_points is not None:
        grid = FrequencyGrid.from_bounds(data[0, 0], data[-1, 0], n_points)
    return SpectralFunction.from_samples(data[:, 0], data[:, 1], grid, kind)


def gaussian_channel(grid, center, fwhm, peak=1.0):
    """Gaussian passband, the usual model of an AWG/DWDM channel."""
    sigma = fwhm / (2.0 * np.sqrt(2.0 * np.log(2.0)))
    values = peak * np.exp(-0.5 * ((grid.points - center) / sigma) ** 2)
    return SpectralFunction(grid, values, TRANSMISSION)


def boxcar(grid, lo, hi, level=1.0):
    nu = grid.points
    return SpectralFunction(grid, np.where((nu >= lo) & (nu <= hi), level, 0.0), TRANSMISSION)


@dataclass(frozen=True)
class OverlapFactors:
    eta_s: float
    eta_i: float
    eta_pair: float

    def __post_init__(self):
        for name in ("eta_s", "eta_i", "eta_pair"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0 + 1e-12:
                raise ValueError(f"{name}={v} outside [0, 1]")

    @property
    def ratio(self):
        """``eta_s * eta_i / eta_pair``; the multi-pair enhancement in g2."""
        if self.eta_pair == 0:
            raise ZeroDivisionError("eta_pair is zero")
        return self.eta_s * self.eta_i / self.eta_pair

    @property
    def correction(self):
        """``eta_pair / (eta_s * eta_i)``, the factor entering mu_gen."""
        return 1.0 / self.ratio

    def as_dict(self):
        return {"eta_s": self.eta_s, "eta_i": self.eta_i, "eta_pair": self.eta_pair}


FLAT = OverlapFactors(1.0, 1.0, 1.0)


def _mean_over(interval, values):
    if interval.span <= 0 or interval.n_points < 2:
        raise ValueError("degenerate integration interval")
    return float(trapezoid(values, dx=interval.spacing) / interval.span)


def _detunings(interval):
    if not isinstance(interval, FrequencyGrid):
        raise TypeError("interval must be a FrequencyGrid of detunings")
    return interval.points


def eta_single(p, interval, role, nu0):
    """Mean transmission of one filter over the detuning interval.

    ``interval`` holds detunings ``f`` (THz) relative to the degenerate
    frequency ``nu0``; a signal photon sits at ``nu0 + f`` and its idler at
    ``nu0 - f``.
    """
    f = _detunings(interval)
    if role == "signal":
        nu = nu0 + f
    elif role == "idler":
        nu = nu0 - f
    else:
        raise ValueError(f"role must be 'signal' or 'idler', got {role!r}")
    return _mean_over(interval, p(nu))


def eta_pair(p_s, p_i, interval, nu0):
    """Mean joint transmission of a signal/idler pair over the interval.

    The idler filter is evaluated at the conjugate frequency ``nu0 - f``.
    """
    f = _detunings(interval)
    return _mean_over(interval, p_s(nu0 + f) * p_i(nu0 - f))


def overlap_factors(p_s, p_i, interval, nu0):
    return OverlapFactors(
        eta_single(p_s, interval, "signal", nu0),
        eta_single(p_i, interval, "idler", nu0),
        eta_pair(p_s, p_i, interval, nu0),
    )
