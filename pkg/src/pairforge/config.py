"""Run configuration files (TOML, schema version 1).

Example::

    schema_version = 1
    seed = 1

    [source]
    mode = "pulsed"              # or "cw" with pair_rate / bin_duration
    repetition_rate = 33e6       # Hz
    pulse_duration = 501e-12     # s
    mu = 3e-3
    n_pulses = 10_000_000
    splitting = "deterministic"  # "probabilistic" | "demux"
    channel_transmissions = [1.0, 1.0]

    [source.spectrum]            # pair density over signal detuning
    shape = "flat"               # "gaussian" (fwhm) | "file" (path)
    span = 1.0                   # THz

    [[detectors]]                # one per output channel
    efficiency = 0.106
    dead_time = 5.0              # us
    afterpulse_probability = 0.05
    dark_rate = 1000.0           # 1/s

    [analysis]
    tau_sel = 40.0               # us
    coinc_window = 1000          # ps
    pair = [0, 1]

Demux runs add one ``[[source.demux]]`` table per channel pair with
``signal`` and ``idler`` filter tables (``shape = "gaussian"`` with
``center``/``fwhm``/``peak`` in THz, ``"boxcar"`` with ``lo``/``hi``, or
``"file"`` with ``path``). ``[source.beam_split]`` (``channel``,
``new_channel``, ``ratio``) sends part of one channel to an extra output,
as needed for heralded g2 runs, which also set ``analysis.herald`` and
``analysis.arms``.
"""
from __future__ import annotations

import copy
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .detector import DetectorConfig
from .errors import ConfigError
from .source import (DETERMINISTIC, PROBABILISTIC, ContinuousWave, Demux, Pulsed,
                     SourceConfig)
from .spectral import (DENSITY, FLAT, TRANSMISSION, FrequencyGrid, OverlapFactors,
                       SpectralFunction, boxcar, gaussian_channel, load_spectral_function,
                       overlap_factors)

SCHEMA_VERSION = 1


# ------------------------------------------------------------ locating keys

_TABLE = re.compile(r"^\s*\[(\[)?\s*([^\]]+?)\s*\]?\]\s*(#.*)?$")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-\"'.]+)\s*=")


def _key_lines(text):
    """Map dotted key paths (array tables indexed) to 1-based line numbers."""
    lines = {}
    table = ()
    counts = {}
    for no, ln in enumerate(text.splitlines(), 1):
        m = _TABLE.match(ln)
        if m:
            name = tuple(p.strip().strip("\"'") for p in m.group(2).split("."))
            if m.group(1):  # array of tables
                idx = counts.get(name, -1) + 1
                counts[name] = idx
                table = name[:-1] + (f"{name[-1]}[{idx}]",)
            else:
                # a sub-table of the latest array entry
                parent = name[:-1]
                if parent in counts:
                    parent = parent[:-1] + (f"{parent[-1]}[{counts[parent]}]",)
                table = parent + name[-1:]
            lines.setdefault(".".join(table), no)
            continue
        m = _KEY.match(ln)
        if m:
            key = tuple(p.strip().strip("\"'") for p in m.group(1).split("."))
            lines.setdefault(".".join(table + key), no)
    return lines


class _Ctx:
    """Error helper that reports the line of a dotted key."""

    def __init__(self, path, text):
        self.path = path
        self.lines = _key_lines(text) if text else {}

    def error(self, key, message):
        line = None
        probe = key
        while probe and line is None:
            line = self.lines.get(probe)
            probe = probe.rpartition(".")[0]
        where = f"{self.path}:{line}" if line else str(self.path)
        return ConfigError(f"{where}: {key}: {message}")

    def get(self, table, prefix, key, kind, default=..., check=None, what=""):
        if key not in table:
            if default is ...:
                raise self.error(f"{prefix}{key}", "missing required key")
            return default
        value = table[key]
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is int and isinstance(value, float) and value.is_integer():
            value = int(value)
        if not isinstance(value, kind) or isinstance(value, bool) and kind is not bool:
            raise self.error(f"{prefix}{key}", f"expected {getattr(kind, '__name__', kind)}, "
                                               f"got {type(value).__name__}")
        if check is not None and not check(value):
            raise self.error(f"{prefix}{key}", f"value {value!r} out of range{what}")
        return value


def _unknown(ctx, table, prefix, allowed):
    for k in table:
        if k not in allowed:
            raise ctx.error(f"{prefix}{k}", "unknown key")


# ------------------------------------------------------------ typed configs

@dataclass(frozen=True)
class BeamSplit:
    channel: int
    new_channel: int
    ratio: float = 0.5


@dataclass(frozen=True)
class AnalysisConfig:
    tau_sel: float = 40.0  # us
    coinc_window: int = 1000  # ps
    accidental_offset_periods: int = 1
    accidental_offset_ps: int | None = None
    pair: tuple = (0, 1)
    herald: int | None = None
    arms: tuple | None = None
    overlap: OverlapFactors = FLAT
    gamma: float | None = None
    duration: float | None = None  # s
    pump_power: float | None = None  # mW
    pump_wavelength: float = 775e-9  # m
    delta_lambda: float | None = None  # nm
    herald_eta_t: float | None = None
    mu: float | None = None


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "run"
    format: str = "bin"


@dataclass(frozen=True)
class RunConfig:
    source: SourceConfig
    detectors: tuple
    analysis: AnalysisConfig
    output: OutputConfig = OutputConfig()
    beam_split: BeamSplit | None = None
    seed: int = 0
    resolved: dict = field(default_factory=dict, compare=False)

    @property
    def n_channels(self):
        return self.source.n_channels + (1 if self.beam_split else 0)

    @property
    def duration_ps(self):
        if self.analysis.duration is not None:
            return int(round(self.analysis.duration * 1e12))
        return self.source.duration_ps

    @property
    def gamma(self):
        if self.analysis.gamma is not None:
            return self.analysis.gamma
        return 0.5 if self.source.splitting == PROBABILISTIC else 1.0

    @property
    def accidental_offset(self):
        a = self.analysis
        if a.accidental_offset_ps is not None:
            return int(a.accidental_offset_ps)
        mode = self.source.mode
        if isinstance(mode, Pulsed):
            return int(round(a.accidental_offset_periods * mode.slot_ps))
        # cw: any delay well beyond the window decorrelates the streams
        return int(max(100 * a.coinc_window, 100_000))

    @property
    def repetition_rate(self):
        mode = self.source.mode
        return mode.repetition_rate if isinstance(mode, Pulsed) else None

    def herald_eta_t(self):
        """``eta_S T_S`` of the herald arm implied by the configuration."""
        a = self.analysis
        if a.herald_eta_t is not None:
            return a.herald_eta_t
        h = a.herald if a.herald is not None else a.pair[0]
        t = self.source.channel_transmissions[h] if h < len(self.source.channel_transmissions) else 1.0
        eff = self.detectors[h].efficiency if h < len(self.detectors) else 1.0
        return a.overlap.eta_s * t * eff


# ------------------------------------------------------------ builders

_FILTER_KEYS = {"shape", "center", "fwhm", "peak", "lo", "hi", "level", "path", "n_points", "span"}


def _filter(ctx, table, prefix, base):
    if not isinstance(table, dict):
        raise ctx.error(prefix.rstrip("."), "expected a filter table")
    _unknown(ctx, table, prefix, _FILTER_KEYS)
    shape = ctx.get(table, prefix, "shape", str)
    n = ctx.get(table, prefix, "n_points", int, 2001, lambda v: v >= 2)
    if shape == "gaussian":
        center = ctx.get(table, prefix, "center", float)
        fwhm = ctx.get(table, prefix, "fwhm", float, check=lambda v: v > 0)
        peak = ctx.get(table, prefix, "peak", float, 1.0, lambda v: 0 <= v <= 1)
        span = ctx.get(table, prefix, "span", float, 10 * fwhm, lambda v: v > 0)
        return gaussian_channel(FrequencyGrid(center, span, n), center, fwhm, peak)
    if shape == "boxcar":
        lo = ctx.get(table, prefix, "lo", float)
        hi = ctx.get(table, prefix, "hi", float, check=lambda v: v > lo)
        level = ctx.get(table, prefix, "level", float, 1.0, lambda v: 0 <= v <= 1)
        pad = 0.5 * (hi - lo)
        return boxcar(FrequencyGrid.from_bounds(lo - pad, hi + pad, n), lo, hi, level)
    if shape == "file":
        p = ctx.get(table, prefix, "path", str)
        try:
            return load_spectral_function(base / p, kind=TRANSMISSION)
        except (OSError, ValueError) as exc:
            raise ctx.error(f"{prefix}path", str(exc)) from None
    raise ctx.error(f"{prefix}shape", f"unknown filter shape {shape!r}")


def _spectrum(ctx, table, base):
    prefix = "source.spectrum."
    _unknown(ctx, table, prefix, {"shape", "span", "fwhm", "center", "n_points", "path"})
    shape = ctx.get(table, prefix, "shape", str, "flat")
    n = ctx.get(table, prefix, "n_points", int, 401, lambda v: v >= 2)
    center = ctx.get(table, prefix, "center", float, 0.0)
    if shape == "flat":
        span = ctx.get(table, prefix, "span", float, 1.0, lambda v: v > 0)
        return SpectralFunction(FrequencyGrid(center, span, n), np.ones(n), DENSITY)
    if shape == "gaussian":
        fwhm = ctx.get(table, prefix, "fwhm", float, check=lambda v: v > 0)
        span = ctx.get(table, prefix, "span", float, 6 * fwhm, lambda v: v > 0)
        g = FrequencyGrid(center, span, n)
        sigma = fwhm / (2 * np.sqrt(2 * np.log(2)))
        return SpectralFunction(g, np.exp(-0.5 * ((g.points - center) / sigma) ** 2), DENSITY)
    if shape == "file":
        p = ctx.get(table, prefix, "path", str)
        try:
            return load_spectral_function(base / p, kind=DENSITY)
        except (OSError, ValueError) as exc:
            raise ctx.error(f"{prefix}path", str(exc)) from None
    raise ctx.error(f"{prefix}shape", f"unknown spectrum shape {shape!r}")


_SOURCE_KEYS = {"mode", "repetition_rate", "pulse_duration", "pair_rate", "bin_duration", "mu",
                "n_pulses", "nu0", "splitting", "channel_transmissions", "spectrum", "demux",
                "beam_split"}
_DETECTOR_KEYS = {"efficiency", "dead_time", "afterpulse_probability", "afterpulse_mean",
                  "afterpulse_window", "dark_rate", "jitter_sigma"}
_ANALYSIS_KEYS = {"tau_sel", "coinc_window", "accidental_offset_periods", "accidental_offset_ps",
                  "pair", "herald", "arms", "overlap", "gamma", "duration", "pump_power",
                  "pump_wavelength", "delta_lambda", "herald_eta_t", "mu"}


def _source(ctx, src, seed, base):
    p = "source."
    _unknown(ctx, src, p, _SOURCE_KEYS)
    mode_name = ctx.get(src, p, "mode", str, "pulsed")
    try:
        if mode_name == "pulsed":
            mode = Pulsed(ctx.get(src, p, "repetition_rate", float, check=lambda v: v > 0),
                          ctx.get(src, p, "pulse_duration", float, check=lambda v: v > 0))
        elif mode_name == "cw":
            mode = ContinuousWave(ctx.get(src, p, "pair_rate", float, check=lambda v: v >= 0),
                                  ctx.get(src, p, "bin_duration", float, 1e-9))
        else:
            raise ctx.error(f"{p}mode", f"unknown mode {mode_name!r}")
    except ConfigError as exc:
        if str(exc).startswith(str(ctx.path)):
            raise
        raise ctx.error(f"{p}mode", str(exc)) from None
    density = _spectrum(ctx, src.get("spectrum", {}), base)
    split_name = ctx.get(src, p, "splitting", str, DETERMINISTIC)
    if split_name == "demux":
        entries = src.get("demux")
        if not isinstance(entries, list) or not entries:
            raise ctx.error(f"{p}splitting", "demux splitting needs [[source.demux]] tables")
        pairs = []
        for k, e in enumerate(entries):
            q = f"source.demux[{k}]."
            _unknown(ctx, e, q, {"signal", "idler"})
            if "signal" not in e or "idler" not in e:
                raise ctx.error(q.rstrip("."), "needs signal and idler filters")
            pairs.append((_filter(ctx, e["signal"], q + "signal.", base),
                          _filter(ctx, e["idler"], q + "idler.", base)))
        splitting = Demux(tuple(pairs))
    elif split_name in (DETERMINISTIC, PROBABILISTIC):
        splitting = split_name
    else:
        raise ctx.error(f"{p}splitting", f"unknown splitting {split_name!r}")
    trans = src.get("channel_transmissions", [1.0, 1.0])
    if not isinstance(trans, list) or not all(isinstance(x, (int, float)) for x in trans):
        raise ctx.error(f"{p}channel_transmissions", "expected a list of numbers")
    n_pulses = ctx.get(src, p, "n_pulses", int, check=lambda v: v >= 0)
    try:
        return SourceConfig(
            mode=mode, joint_density=density,
            nu0=ctx.get(src, p, "nu0", float, 193.4),
            mu=ctx.get(src, p, "mu", float, 0.0, lambda v: v >= 0),
            splitting=splitting, channel_transmissions=tuple(trans),
            n_pulses=n_pulses, rng_seed=seed)
    except ConfigError as exc:
        raise ctx.error("source", str(exc)) from None


def _overlap(ctx, a, source):
    val = a.get("overlap", "flat")
    key = "analysis.overlap"
    if val == "flat":
        return FLAT
    if val == "auto":
        if not isinstance(source.splitting, Demux):
            raise ctx.error(key, "'auto' overlap needs demux filters")
        p_s, p_i = source.splitting.channel_filters[0]
        g = source.joint_density.grid
        interval = FrequencyGrid(g.center_frequency, g.span, max(g.n_points, 2001))
        try:
            return overlap_factors(p_s, p_i, interval, source.nu0)
        except ValueError as exc:
            raise ctx.error(key, str(exc)) from None
    if isinstance(val, dict):
        _unknown(ctx, val, key + ".", {"eta_s", "eta_i", "eta_pair"})
        try:
            return OverlapFactors(*(float(ctx.get(val, key + ".", k, float))
                                    for k in ("eta_s", "eta_i", "eta_pair")))
        except ValueError as exc:
            raise ctx.error(key, str(exc)) from None
    raise ctx.error(key, "expected 'flat', 'auto' or a table of eta_s, eta_i, eta_pair")


def _channels(ctx, a, key, n, default):
    v = a.get(key, default)
    if v is None:
        return None
    if not isinstance(v, list) or len(v) != n or not all(isinstance(x, int) and x >= 0 for x in v):
        raise ctx.error(f"analysis.{key}", f"expected a list of {n} channel ids")
    return tuple(v)


def _analysis(ctx, a, source):
    p = "analysis."
    _unknown(ctx, a, p, _ANALYSIS_KEYS)
    pos = lambda v: v > 0  # noqa: E731
    opt = lambda k, kind=float, check=pos: ctx.get(a, p, k, kind, None, check)  # noqa: E731
    herald = ctx.get(a, p, "herald", int, None, lambda v: v >= 0)
    gamma = opt("gamma", float, lambda v: v in (0.5, 1.0))
    return AnalysisConfig(
        tau_sel=ctx.get(a, p, "tau_sel", float, 40.0, lambda v: v >= 0),
        coinc_window=ctx.get(a, p, "coinc_window", int, 1000, lambda v: v >= 0),
        accidental_offset_periods=ctx.get(a, p, "accidental_offset_periods", int, 1, lambda v: v != 0),
        accidental_offset_ps=ctx.get(a, p, "accidental_offset_ps", int, None, lambda v: v != 0),
        pair=_channels(ctx, a, "pair", 2, [0, 1]),
        herald=herald,
        arms=_channels(ctx, a, "arms", 2, None),
        overlap=_overlap(ctx, a, source),
        gamma=gamma,
        duration=opt("duration"),
        pump_power=opt("pump_power"),
        pump_wavelength=ctx.get(a, p, "pump_wavelength", float, 775e-9, pos),
        delta_lambda=opt("delta_lambda"),
        herald_eta_t=opt("herald_eta_t", float, lambda v: v >= 0),
        mu=opt("mu", float, lambda v: v >= 0),
    )


def build_config(data, path="<config>", text="", base=None, seed=None):
    """Validate a parsed TOML document into a :class:`RunConfig`."""
    ctx = _Ctx(path, text)
    base = Path(base) if base is not None else Path(".")
    data = copy.deepcopy(data)
    _unknown(ctx, data, "", {"schema_version", "seed", "source", "detectors", "analysis", "output"})
    version = ctx.get(data, "", "schema_version", int, SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ctx.error("schema_version", f"unsupported schema version {version}")
    if seed is not None:
        data["seed"] = int(seed)
    seed = ctx.get(data, "", "seed", int, 0, lambda v: 0 <= v < 2 ** 64)
    if "source" not in data or not isinstance(data["source"], dict):
        raise ctx.error("source", "missing [source] table")
    source = _source(ctx, data["source"], seed, base)

    bs = data["source"].get("beam_split")
    beam = None
    if bs is not None:
        q = "source.beam_split."
        _unknown(ctx, bs, q, {"channel", "new_channel", "ratio"})
        beam = BeamSplit(ctx.get(bs, q, "channel", int, check=lambda v: 0 <= v < source.n_channels),
                         ctx.get(bs, q, "new_channel", int, source.n_channels,
                                 lambda v: v == source.n_channels),
                         ctx.get(bs, q, "ratio", float, 0.5, lambda v: 0 <= v <= 1))

    dets = data.get("detectors")
    if not isinstance(dets, list) or not dets:
        raise ctx.error("detectors", "need [[detectors]] tables, one per channel")
    detectors = []
    for k, d in enumerate(dets):
        q = f"detectors[{k}]."
        _unknown(ctx, d, q, _DETECTOR_KEYS)
        kw = {key: ctx.get(d, q, key, float) for key in _DETECTOR_KEYS if key in d}
        try:
            detectors.append(DetectorConfig(**kw))
        except ConfigError as exc:
            raise ctx.error(q.rstrip("."), str(exc)) from None
    n_channels = source.n_channels + (1 if beam else 0)
    if len(detectors) < n_channels:
        raise ctx.error("detectors", f"{n_channels} channels need {n_channels} detectors, "
                                     f"got {len(detectors)}")

    analysis = _analysis(ctx, data.get("analysis", {}), source)
    for ch in [*analysis.pair, *(analysis.arms or ()),
               *(() if analysis.herald is None else (analysis.herald,))]:
        if ch >= n_channels:
            raise ctx.error("analysis", f"channel {ch} does not exist ({n_channels} channels)")
    if (analysis.herald is None) != (analysis.arms is None):
        raise ctx.error("analysis", "herald and arms must be given together")

    out = data.get("output", {})
    _unknown(ctx, out, "output.", {"directory", "format"})
    output = OutputConfig(ctx.get(out, "output.", "directory", str, "run"),
                          ctx.get(out, "output.", "format", str, "bin", lambda v: v in ("bin", "csv")))
    return RunConfig(source, tuple(detectors), analysis, output, beam, seed, resolved=data)


def load_config(path, seed=None):
    """Parse and validate a TOML run configuration.

    ``seed`` overrides the file's seed. Errors carry ``file:line`` positions.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from None
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        where = f"{path}:{m.group(1)}" if m else str(path)
        raise ConfigError(f"{where}: {exc}") from None
    return build_config(data, path, text, path.parent, seed)


def with_analysis(run: RunConfig, **changes):
    """Copy of ``run`` with analysis fields replaced (command-line overrides)."""
    from dataclasses import replace
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return run
    resolved = copy.deepcopy(run.resolved)
    resolved.setdefault("analysis", {}).update(changes)
    return replace(run, analysis=replace(run.analysis, **changes), resolved=resolved)
