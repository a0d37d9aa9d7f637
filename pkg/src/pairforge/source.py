"""Monte Carlo photon-pair emission and routing into output channels.

Time is integer picoseconds. Each pump pulse (or cw time bin) emits a
Poisson number of pairs. A pair's signal detuning ``f`` is drawn from the
joint density; the idler sits at the conjugate frequency, so
``signal + idler = 2 * nu0`` exactly (the pump linewidth is neglected here).

Pulses are generated in fixed-size blocks. Every block draws from its own
substream of the run seed, so the output does not depend on how many threads
produced it.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .spectral import DENSITY, FrequencyGrid, SpectralFunction

PS_PER_S = 10 ** 12
BLOCK_PULSES = 1 << 24

# spawn keys separating the random streams of one run
STREAM_EMISSION = 1
STREAM_ROUTING = 2

EMISSION_DTYPE = np.dtype([
    ("pulse_index", "<i8"),
    ("emission_time", "<i8"),
    ("signal_frequency", "<f8"),
    ("idler_frequency", "<f8"),
])

ARRIVAL_DTYPE = np.dtype([
    ("time", "<i8"),
    ("channel", "<u2"),
    ("role", "u1"),  # 0 signal, 1 idler
    ("frequency", "<f8"),
    ("pair", "<i8"),
])

SIGNAL, IDLER = 0, 1


@dataclass(frozen=True)
class Pulsed:
    repetition_rate: float  # Hz
    pulse_duration: float  # s

    def __post_init__(self):
        if not self.repetition_rate > 0 or not self.pulse_duration > 0:
            raise ConfigError("repetition_rate and pulse_duration must be positive")
        if self.repetition_rate * self.pulse_duration >= 1:
            raise ConfigError("pulse_duration must be shorter than the pulse period")

    @property
    def slot_ps(self):
        return PS_PER_S / self.repetition_rate

    @property
    def width_ps(self):
        return self.pulse_duration * PS_PER_S


@dataclass(frozen=True)
class ContinuousWave:
    """cw pumping, simulated as Poisson emission in short fixed bins."""

    pair_rate: float  # 1/s
    bin_duration: float = 1e-9  # s

    def __post_init__(self):
        if self.pair_rate < 0:
            raise ConfigError("pair_rate must be nonnegative")
        if not 0 < self.bin_duration <= 1e-9:
            raise ConfigError("bin_duration must lie in (0, 1 ns]")

    @property
    def slot_ps(self):
        return self.bin_duration * PS_PER_S

    @property
    def width_ps(self):
        return self.slot_ps


@dataclass(frozen=True)
class Demux:
    """Wavelength demultiplexer. ``channel_filters[k] = (signal_filter,
    idler_filter)`` feed output channels ``2k`` and ``2k + 1``."""

    channel_filters: tuple

    def __post_init__(self):
        if not self.channel_filters:
            raise ConfigError("demux needs at least one channel pair")
        for pair in self.channel_filters:
            if len(pair) != 2:
                raise ConfigError("each demux entry is a (signal, idler) filter pair")

    @property
    def filters(self):
        return [f for pair in self.channel_filters for f in pair]


DETERMINISTIC = "deterministic"
PROBABILISTIC = "probabilistic"


@dataclass(frozen=True)
class SourceConfig:
    """Pair source settings.

    ``joint_density`` is sampled over the signal detuning ``f`` (THz) from
    ``nu0``; ``mu`` is the mean pair number per pulse (ignored in cw mode,
    where the bin occupancy follows from ``pair_rate``). ``n_pulses`` counts
    pulses, or bins in cw mode.
    """

    mode: Pulsed | ContinuousWave
    joint_density: SpectralFunction
    nu0: float = 193.4
    mu: float = 0.0
    splitting: object = DETERMINISTIC
    channel_transmissions: tuple = (1.0, 1.0)
    n_pulses: int = 1
    rng_seed: int = 0

    def __post_init__(self):
        if isinstance(self.mode, Pulsed) and not self.mu >= 0:
            raise ConfigError("mu must be nonnegative")
        if int(self.n_pulses) != self.n_pulses or self.n_pulses < 0:
            raise ConfigError("n_pulses must be a nonnegative integer")
        if not 0 <= int(self.rng_seed) < 2 ** 64:
            raise ConfigError("rng_seed must be a 64-bit unsigned integer")
        t = tuple(float(x) for x in self.channel_transmissions)
        if any(not 0.0 <= x <= 1.0 for x in t):
            raise ConfigError("channel transmissions must lie in [0, 1]")
        object.__setattr__(self, "channel_transmissions", t)
        if self.splitting not in (DETERMINISTIC, PROBABILISTIC) and not isinstance(self.splitting, Demux):
            raise ConfigError(f"unknown splitting {self.splitting!r}")
        if len(t) < self.n_channels:
            raise ConfigError(f"need {self.n_channels} channel transmissions, got {len(t)}")
        d = self.joint_density.values
        if self.occupancy > 0 and not np.any(d[1:] + d[:-1] > 0):
            raise ConfigError("joint density has no support")

    @property
    def n_channels(self):
        if isinstance(self.splitting, Demux):
            return 2 * len(self.splitting.channel_filters)
        return 2

    @property
    def occupancy(self):
        """Mean pairs per pulse or bin."""
        if isinstance(self.mode, ContinuousWave):
            return self.mode.pair_rate * self.mode.bin_duration
        return self.mu

    @property
    def duration_ps(self):
        return int(round(self.n_pulses * self.mode.slot_ps))

    @property
    def duration(self):
        return self.n_pulses * self.mode.slot_ps / PS_PER_S


def substream(seed, *key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _n_threads():
    try:
        return max(1, int(os.environ.get("PAIRFORGE_THREADS", "1")))
    except ValueError:
        return 1


class _DetuningSampler:
    """Exact inverse-CDF sampling of a piecewise-linear density."""

    def __init__(self, density):
        f = density.grid.points
        d = density.values
        self.f = f
        self.h = density.grid.spacing
        self.a = d[:-1]
        self.b = d[1:]
        mass = 0.5 * self.h * (self.a + self.b)
        total = mass.sum()
        if total <= 0:
            raise ConfigError("joint density has no support")
        self.cdf = np.concatenate([[0.0], np.cumsum(mass) / total])
        self.cdf[-1] = 1.0

    def __call__(self, rng, n):
        u = rng.random(n)
        cell = np.searchsorted(self.cdf, u, side="right") - 1
        cell = np.clip(cell, 0, self.a.size - 1)
        # skip zero-mass cells that searchsorted can land on at u == cdf edge
        lo, hi = self.cdf[cell], self.cdf[cell + 1]
        w = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.5)
        a, b = self.a[cell], self.b[cell]
        # root of a x + (b - a) x^2 / 2 = w (a + b) / 2 on [0, 1], cancellation-free form
        x = w * (a + b) / (a + np.sqrt(a * a + w * (b * b - a * a)))
        return self.f[cell] + self.h * np.clip(x, 0.0, 1.0)


def _emission_block(config, sampler, block):
    first = block * BLOCK_PULSES
    n_slots = min(BLOCK_PULSES, config.n_pulses - first)
    rng = substream(config.rng_seed, STREAM_EMISSION, block)
    n_pairs = rng.poisson(config.occupancy * n_slots)
    out = np.empty(n_pairs, dtype=EMISSION_DTYPE)
    if n_pairs == 0:
        return out
    # a Poisson total spread uniformly over slots is Poisson per slot
    slots = np.sort(rng.integers(0, n_slots, size=n_pairs)) + first
    width = max(int(config.mode.width_ps), 1)
    offsets = rng.integers(0, width, size=n_pairs)
    f = sampler(rng, n_pairs)
    out["pulse_index"] = slots
    out["emission_time"] = np.rint(slots * config.mode.slot_ps).astype(np.int64) + offsets
    out["signal_frequency"] = config.nu0 + f
    out["idler_frequency"] = config.nu0 - f
    # offsets can reorder pairs of one pulse
    return out[np.argsort(out["emission_time"], kind="stable")]


def iter_emissions(config):
    """Yield time-ordered blocks of :data:`EMISSION_DTYPE` records."""
    if config.occupancy == 0 or config.n_pulses == 0:
        return
    sampler = _DetuningSampler(config.joint_density)
    n_blocks = -(-config.n_pulses // BLOCK_PULSES)
    threads = _n_threads()
    if threads == 1:
        for b in range(n_blocks):
            yield _emission_block(config, sampler, b)
        return
    with ThreadPoolExecutor(threads) as pool:
        # map preserves block order
        yield from pool.map(lambda b: _emission_block(config, sampler, b), range(n_blocks))


def simulate_emissions(config):
    """All emitted pairs of the run, ordered by emission time."""
    blocks = list(iter_emissions(config))
    if not blocks:
        return np.empty(0, dtype=EMISSION_DTYPE)
    return np.concatenate(blocks)


def _channel_weights(splitting, freqs):
    """Per-photon probability of entering each demux channel."""
    filters = splitting.filters
    w = np.zeros((freqs.size, len(filters)))
    for j, flt in enumerate(filters):
        inside = (freqs >= flt.grid.start) & (freqs <= flt.grid.stop)
        # a filter passes nothing outside its sampled band
        w[inside, j] = flt(freqs[inside])
    total = w.sum(axis=1)
    if np.any(total > 1 + 1e-9):
        raise ConfigError("demux channel transmissions sum above 1 at some frequency")
    return w


def route_photons(emissions, config, rng=None, pair_offset=0):
    """Send the photons of each pair into output channels.

    Returns :data:`ARRIVAL_DTYPE` records ordered by time, then channel.
    Photons that are lost (filters, channel transmission) are dropped.
    """
    if rng is None:
        rng = substream(config.rng_seed, STREAM_ROUTING)
    n = emissions.size
    times = np.concatenate([emissions["emission_time"], emissions["emission_time"]])
    freqs = np.concatenate([emissions["signal_frequency"], emissions["idler_frequency"]])
    roles = np.repeat(np.array([SIGNAL, IDLER], dtype=np.uint8), n)
    pairs = np.tile(np.arange(n, dtype=np.int64) + pair_offset, 2)

    split = config.splitting
    if split == DETERMINISTIC:
        channels = roles.astype(np.int64)
        alive = np.ones(2 * n, dtype=bool)
    elif split == PROBABILISTIC:
        channels = (rng.random(2 * n) < 0.5).astype(np.int64)
        alive = np.ones(2 * n, dtype=bool)
    else:
        w = _channel_weights(split, freqs)
        cum = np.cumsum(w, axis=1)
        u = rng.random(2 * n)
        channels = (u[:, None] >= cum).sum(axis=1)
        alive = channels < w.shape[1]
        channels = np.minimum(channels, w.shape[1] - 1)

    trans = np.asarray(config.channel_transmissions)
    alive &= rng.random(2 * n) < trans[channels]

    out = np.empty(int(alive.sum()), dtype=ARRIVAL_DTYPE)
    out["time"] = times[alive]
    out["channel"] = channels[alive]
    out["role"] = roles[alive]
    out["frequency"] = freqs[alive]
    out["pair"] = pairs[alive]
    return out[np.lexsort((out["channel"], out["time"]))]


def beam_split(arrivals, channel, new_channel, rng, ratio=0.5):
    """Pass one channel through a beam splitter; each photon moves to
    ``new_channel`` with probability ``ratio``."""
    out = arrivals.copy()
    sel = np.flatnonzero(out["channel"] == channel)
    moved = sel[rng.random(sel.size) < ratio]
    out["channel"][moved] = new_channel
    return out[np.lexsort((out["channel"], out["time"]))]


def channel_times(arrivals, channel):
    return np.ascontiguousarray(arrivals["time"][arrivals["channel"] == channel])


def flat_density(nu_span, n_points=201):
    """Uniform pair density over detunings ``[-nu_span/2, nu_span/2]``."""
    grid = FrequencyGrid(0.0, nu_span, n_points)
    return SpectralFunction(grid, np.ones(n_points), DENSITY)
