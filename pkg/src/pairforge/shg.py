"""Second harmonic generation with pump depletion.

The converted power follows a tanh^2 depletion law with a single facet
coupling ratio ``c`` applied on both facets::

    P_shg = c^2 * P * tanh^2(sqrt(eta_bk * c * P))

where ``P`` is the fundamental pulse peak power. For rectangular pulses the
peak power is the average power divided by the duty cycle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .errors import DegenerateFitError, FitError


@dataclass(frozen=True)
class ShgParams:
    coupling_ratio: float
    bk_efficiency: float  # 1/W

    def __post_init__(self):
        if not 0.0 < self.coupling_ratio <= 1.0:
            raise ValueError(f"coupling_ratio must lie in (0, 1], got {self.coupling_ratio}")
        if not self.bk_efficiency > 0.0:
            raise ValueError(f"bk_efficiency must be positive, got {self.bk_efficiency}")


DEFAULT_GUESS = ShgParams(coupling_ratio=0.7, bk_efficiency=1.0)


@dataclass(frozen=True)
class PulseTiming:
    repetition_rate: float  # Hz
    pulse_duration: float  # s

    def __post_init__(self):
        if not self.repetition_rate > 0:
            raise ValueError("repetition_rate must be positive")
        if not self.pulse_duration > 0:
            raise ValueError("pulse_duration must be positive")
        if self.duty_cycle >= 1.0:
            raise ValueError(f"duty cycle {self.duty_cycle:.3g} must be below 1")

    @property
    def duty_cycle(self):
        return self.repetition_rate * self.pulse_duration


def peak_from_average(p_avg, timing):
    """Peak power of rectangular pulses with the given average power."""
    p_avg = np.asarray(p_avg, dtype=float)
    if np.any(p_avg < 0):
        raise ValueError("average power must be nonnegative")
    out = p_avg / timing.duty_cycle
    return float(out) if out.ndim == 0 else out


def shg_power(params, p_peak):
    p = np.asarray(p_peak, dtype=float)
    if np.any(p < 0):
        raise ValueError("fundamental power must be nonnegative")
    c, eta = params.coupling_ratio, params.bk_efficiency
    out = c * c * p * np.tanh(np.sqrt(eta * c * p)) ** 2
    return float(out) if out.ndim == 0 else out


def conversion_ratio(params, p_peak):
    """``P_shg / P_fundamental``; equals the average-power ratio for
    rectangular pulses."""
    p = np.asarray(p_peak, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(p > 0, shg_power(params, np.maximum(p, 0)) / np.where(p > 0, p, 1), 0.0)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class ShgFit:
    params: ShgParams
    residual_norm: float  # RMS relative error
    covariance: np.ndarray  # over (coupling_ratio, bk_efficiency)
    n_samples: int

    @property
    def sigma(self):
        return np.sqrt(np.diag(self.covariance))

    def curve(self, p_peak):
        p = np.asarray(p_peak, dtype=float)
        return np.column_stack([p, shg_power(self.params, p)])


def _model_and_jac(theta, p):
    # theta = (log c, log eta); the log parametrisation keeps both positive
    c, eta = np.exp(theta)
    u = np.sqrt(eta * c * p)
    th = np.tanh(u)
    sech2 = 1.0 - th * th
    model = c * c * p * th * th
    # d model / d u = c^2 p 2 tanh sech^2 ; d u / d log(c) = d u / d log(eta) = u / 2
    dmodel_du = 2.0 * c * c * p * th * sech2
    d_logc = 2.0 * model + dmodel_du * 0.5 * u
    d_logeta = dmodel_du * 0.5 * u
    return model, np.column_stack([d_logc, d_logeta])


def fit_shg(samples, initial_guess=DEFAULT_GUESS, max_nfev=2000):
    """Least-squares fit of the depletion model to ``(p_peak, p_shg)`` pairs.

    Residuals are unweighted absolute power differences. The optimiser is
    MINPACK's Levenberg-Marquardt driven with the analytic Jacobian.

    Raises
    ------
    DegenerateFitError
        Fewer than three distinct positive powers, all-zero SHG data, or a
        rank-deficient Jacobian at the solution.
    FitError
        No convergence, or a solution outside the physical region.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError("samples must be a sequence of (p_fundamental, p_shg) pairs")
    # canonical ordering makes the result independent of the input order
    data = data[np.lexsort((data[:, 1], data[:, 0]))]
    p, y = data[:, 0], data[:, 1]
    if np.any(p < 0) or np.any(~np.isfinite(data)):
        raise ValueError("powers must be finite and nonnegative")
    if np.unique(p[p > 0]).size < 3:
        raise DegenerateFitError("need at least three distinct positive fundamental powers")
    if not np.any(y > 0):
        raise DegenerateFitError("SHG power is zero everywhere")

    theta0 = np.log([initial_guess.coupling_ratio, initial_guess.bk_efficiency])
    result = least_squares(
        lambda th: _model_and_jac(th, p)[0] - y,
        theta0,
        jac=lambda th: _model_and_jac(th, p)[1],
        method="lm",
        xtol=1e-15, ftol=1e-15, gtol=1e-15,
        max_nfev=max_nfev,
    )
    c, eta = np.exp(result.x)
    best = (float(c), float(eta))
    if result.status <= 0:
        raise FitError(f"fit did not converge: {result.message}", best=best)
    _, jac = _model_and_jac(result.x, p)
    sv = np.linalg.svd(jac, compute_uv=False)
    if sv[-1] <= sv[0] * 1e-10:
        raise DegenerateFitError("Jacobian is rank deficient at the solution", best=best)
    if not 0 < c <= 1.0 + 1e-9:
        raise FitError(f"fitted coupling ratio {c:.4g} is outside (0, 1]", best=best)
    params = ShgParams(min(float(c), 1.0), float(eta))

    model = shg_power(params, p)
    pos = y > 0
    rel = (model[pos] - y[pos]) / y[pos]
    residual_norm = float(np.sqrt(np.mean(rel ** 2))) if rel.size else 0.0

    dof = max(p.size - 2, 1)
    s2 = float(np.sum((model - y) ** 2)) / dof
    cov_log = np.linalg.pinv(jac.T @ jac) * s2
    scale = np.diag([c, eta])  # d(param)/d(log param)
    covariance = scale @ cov_log @ scale
    return ShgFit(params, residual_norm, covariance, int(p.size))


def load_power_table(path):
    """Two-column ``p_fundamental_peak_W,p_shg_W`` text; one optional header."""
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
    return np.array(rows, dtype=float).reshape(-1, 2)
