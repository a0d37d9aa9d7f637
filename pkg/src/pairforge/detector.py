"""Single-photon avalanche detector model.

Photon arrivals are thinned by the detection efficiency and merged with a
Poisson dark-count process. The merged candidates then pass a
non-extendable dead time: a click blocks the detector for ``dead_time``,
candidates during that interval are lost and do not prolong it.

When the dead time of a click ends, an afterpulse follows with probability
``afterpulse_probability`` after a delay drawn from an exponential with mean
``afterpulse_mean`` truncated to ``afterpulse_window``. An afterpulse is an
ordinary click (it starts a dead time and may afterpulse again) if the
detector is ready at that instant; otherwise it is lost.
"""
from __future__ import annotations

import heapq
from dataclasses import dataclass

import numba
import numpy as np

from .errors import ConfigError
from .tagproc import check_ordered

PS_PER_US = 10 ** 6
PS_PER_S = 10 ** 12


@dataclass(frozen=True)
class DetectorConfig:
    efficiency: float = 1.0
    dead_time: float = 5.0  # us
    afterpulse_probability: float = 0.0
    afterpulse_mean: float = 10.0  # us
    afterpulse_window: float = 40.0  # us
    dark_rate: float = 0.0  # 1/s
    jitter_sigma: float = 0.0  # ps
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.efficiency <= 1.0:
            raise ConfigError("efficiency must lie in [0, 1]")
        if not self.dead_time > 0:
            raise ConfigError("dead_time must be positive")
        if not 0.0 <= self.afterpulse_probability < 1.0:
            raise ConfigError("afterpulse_probability must lie in [0, 1)")
        if not self.afterpulse_mean > 0 or not self.afterpulse_window > 0:
            raise ConfigError("afterpulse mean and window must be positive")
        if self.dark_rate < 0:
            raise ConfigError("dark_rate must be nonnegative")
        if self.jitter_sigma < 0:
            raise ConfigError("jitter_sigma must be nonnegative")

    @property
    def dead_ps(self):
        return int(round(self.dead_time * PS_PER_US))

    def rng(self):
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(self.rng_seed))))


@numba.njit(cache=True)
def _dead_time_kernel(cand, t_end, dead, p_ap, ap_mean, ap_window, rng):
    clicks = np.empty(cand.size + 16, dtype=np.int64)
    n_clicks = 0
    pending = [np.int64(0)]  # typed heap of scheduled afterpulses
    pending.pop()
    # normalisation of the truncated exponential
    trunc = 1.0 - np.exp(-ap_window / ap_mean)
    ready_at = np.iinfo(np.int64).min
    i = 0
    n = cand.size
    while i < n or len(pending) > 0:
        if len(pending) > 0 and (i >= n or pending[0] <= cand[i]):
            t = heapq.heappop(pending)
        else:
            t = cand[i]
            i += 1
        if t >= t_end or t < ready_at:
            continue
        if n_clicks == clicks.size:
            grown = np.empty(2 * clicks.size, dtype=np.int64)
            grown[:n_clicks] = clicks[:n_clicks]
            clicks = grown
        clicks[n_clicks] = t
        n_clicks += 1
        ready_at = t + dead
        if p_ap > 0.0 and rng.random() < p_ap:
            delay = -ap_mean * np.log(1.0 - rng.random() * trunc)
            heapq.heappush(pending, ready_at + np.int64(delay))
    return clicks[:n_clicks]


def detect(arrivals, config, duration_ps, rng=None):
    """Turn photon arrival times (int ps, nondecreasing) into click times.

    ``duration_ps`` bounds the dark-count process and drops clicks at or
    after the end of the measurement. Output is time-ordered. ``rng``
    overrides the generator seeded from ``config.rng_seed``.
    """
    arrivals = np.ascontiguousarray(arrivals, dtype=np.int64)
    check_ordered(arrivals, "arrival stream")
    if rng is None:
        rng = config.rng()
    photons = arrivals[rng.random(arrivals.size) < config.efficiency] \
        if config.efficiency < 1.0 else arrivals
    n_dark = rng.poisson(config.dark_rate * duration_ps / PS_PER_S) if config.dark_rate > 0 else 0
    if n_dark:
        darks = np.sort(rng.integers(0, max(int(duration_ps), 1), size=n_dark))
        cand = np.concatenate([photons, darks])
        cand.sort(kind="stable")
    else:
        cand = photons
    clicks = _dead_time_kernel(
        cand, np.int64(duration_ps), np.int64(config.dead_ps),
        float(config.afterpulse_probability),
        config.afterpulse_mean * PS_PER_US, config.afterpulse_window * PS_PER_US, rng)
    if config.jitter_sigma > 0 and clicks.size:
        clicks = clicks + np.rint(rng.normal(0.0, config.jitter_sigma, clicks.size)).astype(np.int64)
        np.maximum(clicks, 0, out=clicks)
        clicks.sort(kind="stable")
    return clicks
