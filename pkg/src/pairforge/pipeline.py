"""End-to-end runs: simulate detector clicks, stream tags through the
post-selection and counting kernels, and turn the counts into estimates."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from . import estimators as est
from .config import RunConfig
from .detector import detect
from .errors import InsufficientDataError, NegativeRateError
from .source import (Pulsed, beam_split, channel_times, iter_emissions,
                     route_photons, substream)
from .tagproc import CoincidenceCounter, PairSelector, SinglesSelector, TripleCounter

PS_PER_S = 10 ** 12
STREAM_BEAM_SPLIT = 3
STREAM_DETECTOR = 4


# ------------------------------------------------------------ simulation

@dataclass
class Simulation:
    streams: dict  # channel -> click times (int64 ps)
    duration_ps: int
    n_pairs: int
    photons: dict  # channel -> photons reaching the detector
    emission_times: np.ndarray | None = None

    def truth(self, run: RunConfig):
        src = run.source
        out = {
            "n_pulses": src.n_pulses,
            "n_pairs_emitted": self.n_pairs,
            "duration_s": self.duration_ps / PS_PER_S,
            "occupancy": src.occupancy,
            "pair_rate": self.n_pairs / (self.duration_ps / PS_PER_S) if self.duration_ps else 0.0,
            "photons_per_channel": {str(k): int(v) for k, v in sorted(self.photons.items())},
            "clicks_per_channel": {str(k): int(v.size) for k, v in sorted(self.streams.items())},
            "seed": run.seed,
        }
        if isinstance(src.mode, Pulsed):
            out["mu"] = src.mu
            out["mu_gen"] = src.mu * src.mode.repetition_rate
        else:
            out["mu_gen"] = src.mode.pair_rate
        return out


def simulate(run: RunConfig, keep_emissions=False):
    """Generate pairs, route them, and pass every channel through its detector."""
    src = run.source
    n_ch = run.n_channels
    parts = {k: [] for k in range(n_ch)}
    emitted = []
    n_pairs = 0
    for b, block in enumerate(iter_emissions(src)):
        arrivals = route_photons(block, src, substream(run.seed, 2, b), pair_offset=n_pairs)
        if run.beam_split is not None:
            bs = run.beam_split
            arrivals = beam_split(arrivals, bs.channel, bs.new_channel,
                                  substream(run.seed, STREAM_BEAM_SPLIT, b), bs.ratio)
        for k in range(n_ch):
            parts[k].append(channel_times(arrivals, k))
        n_pairs += block.size
        if keep_emissions:
            emitted.append(block["emission_time"])
    duration = src.duration_ps
    streams, photons = {}, {}
    for k in range(n_ch):
        arr = np.concatenate(parts[k]) if parts[k] else np.empty(0, np.int64)
        parts[k] = None
        photons[k] = arr.size
        streams[k] = detect(arr, run.detectors[k], duration, substream(run.seed, STREAM_DETECTOR, k))
    em = np.concatenate(emitted) if emitted else (np.empty(0, np.int64) if keep_emissions else None)
    return Simulation(streams, duration, n_pairs, photons, em)


def iter_stream_chunks(streams, chunk_ps=None):
    """Cut per-channel streams into time slices ``{channel: times}``."""
    last = max((int(t[-1]) for t in streams.values() if t.size), default=-1)
    if last < 0:
        return
    chunk_ps = chunk_ps or max(last + 1, 1)
    pos = {k: 0 for k in streams}
    for lo in range(0, last + 1, chunk_ps):
        hi = lo + chunk_ps
        part = {}
        for k, t in streams.items():
            j = int(np.searchsorted(t, hi, side="left"))
            part[k] = t[pos[k]:j]
            pos[k] = j
        yield part, hi


# ------------------------------------------------------------ analysis

@dataclass
class PairCounts:
    channels: tuple
    n_raw: list
    n_kept: list  # singles post-selection
    coincidences_raw: int
    accidentals_raw: int
    coincidences: int  # joint post-selection, partners
    blocked_ps: int
    accidentals_shifted: int
    blocked_shifted_ps: int


class _PairStats:
    def __init__(self, a, b, tau_sel, window, offset):
        self.channels = (a, b)
        self.singles = [SinglesSelector(tau_sel), SinglesSelector(tau_sel)]
        self.sel = PairSelector(tau_sel, window)
        self.sel_acc = PairSelector(tau_sel, window, offset)
        self.raw = CoincidenceCounter(window)
        self.raw_acc = CoincidenceCounter(window, offset)

    def feed(self, part, horizon):
        a, b = (part.get(c, _EMPTY) for c in self.channels)
        self.singles[0].feed(a)
        self.singles[1].feed(b)
        self.sel.feed(a, b, horizon)
        self.sel_acc.feed(a, b, horizon)
        self.raw.feed(a, b, horizon)
        self.raw_acc.feed(a, b, horizon)

    def finish(self, duration_ps):
        blocked = self.sel.finish(duration_ps)
        blocked_acc = self.sel_acc.finish(duration_ps)
        return PairCounts(
            channels=self.channels,
            n_raw=[s.n_raw for s in self.singles],
            n_kept=[s.n_kept for s in self.singles],
            coincidences_raw=self.raw.finish(),
            accidentals_raw=self.raw_acc.finish(),
            coincidences=self.sel.coincidences,
            blocked_ps=blocked,
            accidentals_shifted=self.sel_acc.coincidences,
            blocked_shifted_ps=blocked_acc,
        )


_EMPTY = np.empty(0, np.int64)


@dataclass
class TripleStats:
    herald: int
    arms: tuple
    c13: int
    c23: int
    c123: int
    r3: int
    c12: int
    n_arm1: int
    n_arm2: int


@dataclass
class StreamCounts:
    duration_ps: int
    n_raw: dict
    pairs: list = field(default_factory=list)
    triples: TripleStats | None = None


class StreamAnalyzer:
    """Single pass over time-ordered tag chunks.

    ``pairs`` lists channel pairs for the pair-rate analysis; ``triple``
    is ``(herald, arm1, arm2)`` for the heralded g2 counts.
    """

    def __init__(self, tau_sel, window_ps, offset_ps, pairs=(), triple=None):
        self.window = int(window_ps)
        self.pairs = [_PairStats(a, b, tau_sel, window_ps, offset_ps) for a, b in pairs]
        self.triple = triple
        if triple is not None:
            self._tc = TripleCounter(window_ps)
            self._c12 = CoincidenceCounter(window_ps)
        self.n_raw = {}

    def feed_streams(self, part, horizon):
        for k, t in part.items():
            self.n_raw[k] = self.n_raw.get(k, 0) + t.size
        for p in self.pairs:
            p.feed(part, horizon)
        if self.triple is not None:
            h, a1, a2 = (part.get(c, _EMPTY) for c in self.triple)
            self._tc.feed(a1, a2, h, horizon)
            self._c12.feed(a1, a2, horizon)

    def feed(self, channels, times):
        """Merged chunk from a tag file."""
        if times.size == 0:
            return
        part = {}
        for ch in np.unique(channels):
            part[int(ch)] = np.ascontiguousarray(times[channels == ch])
        self.feed_streams(part, int(times[-1]))

    def finish(self, duration_ps):
        out = StreamCounts(int(duration_ps), dict(sorted(self.n_raw.items())),
                           [p.finish(duration_ps) for p in self.pairs])
        if self.triple is not None:
            t = self._tc.finish()
            h, a1, a2 = self.triple
            out.triples = TripleStats(h, (a1, a2), t.c13, t.c23, t.c123, t.r3,
                                      self._c12.finish(),
                                      self.n_raw.get(a1, 0), self.n_raw.get(a2, 0))
        return out


def analyzer_for(run: RunConfig, g2=False):
    a = run.analysis
    if g2:
        if a.herald is None:
            raise InsufficientDataError("g2 analysis needs analysis.herald and analysis.arms")
        h, (a1, a2) = a.herald, a.arms
        return StreamAnalyzer(a.tau_sel, a.coinc_window, run.accidental_offset,
                              pairs=[(h, a1), (h, a2)], triple=(h, a1, a2))
    return StreamAnalyzer(a.tau_sel, a.coinc_window, run.accidental_offset, pairs=[a.pair])


def analyze_streams(run: RunConfig, streams, g2=False, chunk_ps=None):
    an = analyzer_for(run, g2)
    for part, horizon in iter_stream_chunks(streams, chunk_ps):
        an.feed_streams(part, horizon)
    return an.finish(run.duration_ps)


def analyze_files(run: RunConfig, chunks, g2=False, duration_ps=None):
    """``chunks`` yields merged ``(channels, times)`` arrays in time order."""
    an = analyzer_for(run, g2)
    last = -1
    for ch, t in chunks:
        an.feed(ch, t)
        if t.size:
            last = int(t[-1])
    if duration_ps is None:
        duration_ps = run.duration_ps if run.duration_ps > 0 else last + 1
    return an.finish(duration_ps)


# ------------------------------------------------------------ estimates

def _try(flags, label, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except (InsufficientDataError, NegativeRateError, ZeroDivisionError) as exc:
        flags.append(f"{label}: insufficient data ({exc})")
        return None


def _ser(x):
    if isinstance(x, est.Estimate):
        return x.as_dict()
    if dataclasses.is_dataclass(x):
        return {k: _ser(v) for k, v in dataclasses.asdict(x).items()}
    if isinstance(x, dict):
        return {str(k): _ser(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_ser(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    return x


def pair_summary(run: RunConfig, pc: PairCounts, duration_ps, tau_sel=None):
    """Inputs of the pair-rate estimator from post-selected counts."""
    a = run.analysis
    tau = a.tau_sel if tau_sel is None else tau_sel
    T = duration_ps / PS_PER_S
    T1 = T - pc.n_kept[0] * tau * 1e-6
    T2 = T - pc.n_kept[1] * tau * 1e-6
    Tc = T - pc.blocked_ps / PS_PER_S
    Tc_s = T - pc.blocked_shifted_ps / PS_PER_S
    if min(T1, T2, Tc, Tc_s) <= 0:
        raise InsufficientDataError("post-selection leaves no ready time")
    n_acc = pc.accidentals_shifted * Tc / Tc_s
    d = run.detectors
    a_ch, b_ch = pc.channels
    return est.CountSummary(
        N1=pc.n_kept[0], N2=pc.n_kept[1], T1=T1, T2=T2, Tc=Tc,
        N_mu=pc.coincidences - n_acc, N_acc=n_acc,
        r1=d[a_ch].dark_rate if a_ch < len(d) else 0.0,
        r2=d[b_ch].dark_rate if b_ch < len(d) else 0.0,
        gamma=run.gamma, overlap=a.overlap)


def raw_summary(run: RunConfig, pc: PairCounts, duration_ps):
    """The same estimator fed with raw counts over the full time."""
    T = duration_ps / PS_PER_S
    d = run.detectors
    a_ch, b_ch = pc.channels
    return est.CountSummary(
        N1=pc.n_raw[0], N2=pc.n_raw[1], T1=T, T2=T, Tc=T,
        N_mu=pc.coincidences_raw - pc.accidentals_raw, N_acc=pc.accidentals_raw,
        r1=d[a_ch].dark_rate if a_ch < len(d) else 0.0,
        r2=d[b_ch].dark_rate if b_ch < len(d) else 0.0,
        gamma=run.gamma, overlap=run.analysis.overlap)


def pair_estimates(run: RunConfig, pc: PairCounts, duration_ps, flags):
    a = run.analysis
    T = duration_ps / PS_PER_S
    out = {}
    s = _try(flags, "post-selection", pair_summary, run, pc, duration_ps)
    if s is not None:
        out["ready_times_s"] = {"T1": s.T1, "T2": s.T2, "Tc": s.Tc}
        out["postselected_rates"] = {"R1": s.N1 / s.T1, "R2": s.N2 / s.T2, "C12": s.N_mu / s.Tc}
        out["mu_gen"] = _try(flags, "mu_gen", est.mu_gen, s)
    raw = _try(flags, "raw counts", raw_summary, run, pc, duration_ps)
    if raw is not None:
        out["mu_gen_raw"] = _try(flags, "mu_gen_raw", est.mu_gen, raw)
    if T > 0:
        out["raw_rates"] = {"R1": pc.n_raw[0] / T, "R2": pc.n_raw[1] / T,
                            "C12": pc.coincidences_raw / T, "accidentals": pc.accidentals_raw / T}
    c_net = pc.coincidences_raw - pc.accidentals_raw
    d = run.detectors
    a_ch, b_ch = pc.channels
    if c_net < 0:
        flags.append("heralding efficiency: accidentals exceed coincidences")
        out["heralding_efficiency"] = {str(a_ch): None, str(b_ch): None}
    else:
        out["heralding_efficiency"] = {
            str(a_ch): _try(flags, "heralding efficiency", est.heralding_efficiency,
                            c_net, pc.n_raw[1], d[a_ch].efficiency),
            str(b_ch): _try(flags, "heralding efficiency", est.heralding_efficiency,
                            c_net, pc.n_raw[0], d[b_ch].efficiency),
        }
    rep = run.repetition_rate
    mu = out.get("mu_gen")
    if mu is not None and rep:
        out["mu_per_pulse"] = est.mu_per_pulse(mu, rep)
    if a.pump_power and a.delta_lambda:
        # singles net of the configured dark counts, coincidences net of accidentals
        n1 = pc.n_raw[0] - d[a_ch].dark_rate * T
        n2 = pc.n_raw[1] - d[b_ch].dark_rate * T
        out["brightness_simple"] = _try(flags, "brightness", est.brightness_simple,
                                        max(n1, 0.0), max(n2, 0.0), c_net, a.pump_power, T,
                                        a.delta_lambda)
        out["brightness_simple_uncorrected"] = _try(
            flags, "brightness", est.brightness_simple,
            pc.n_raw[0], pc.n_raw[1], pc.coincidences_raw, a.pump_power, T, a.delta_lambda)
        if "mu_per_pulse" in out:
            n_pump = est.pump_photons(a.pump_power * 1e-3 / rep, a.pump_wavelength)
            eta = est.conversion_efficiency(out["mu_per_pulse"], n_pump)
            out["pump_photons_per_pulse"] = n_pump
            out["conversion_efficiency"] = eta
            out["brightness_from_conversion"] = est.brightness_from_conversion(
                eta, a.delta_lambda, a.pump_wavelength)
    return out


def g2_estimates(run: RunConfig, counts: StreamCounts, flags):
    a = run.analysis
    t = counts.triples
    T = counts.duration_ps / PS_PER_S
    d = run.detectors
    h, (a1, a2) = t.herald, t.arms
    darks = est.dark_accidentals(
        (d[a1].dark_rate, d[a2].dark_rate, d[h].dark_rate), a.coinc_window,
        t.n_arm1, t.n_arm2, t.r3, t.c12, t.c13, t.c23, T)
    out = {"dark_accidentals": darks}
    out["g2_heralded"] = _try(flags, "g2", est.g2_heralded, t.c123, t.r3, t.c13, t.c23, darks)
    out["g2_heralded_uncorrected"] = _try(flags, "g2", est.g2_heralded, t.c123, t.r3, t.c13, t.c23)

    rep = run.repetition_rate
    if a.mu is not None:
        mu = est.Estimate(a.mu, 0.0)
        out["mu_source"] = "configured"
    else:
        points = []
        for pc in counts.pairs:
            s = _try(flags, "mu", pair_summary, run, pc, counts.duration_ps)
            m = _try(flags, "mu", est.mu_gen, s) if s is not None else None
            if m is not None and m.sigma > 0:
                points.append(est.mu_per_pulse(m, rep) if rep else m)
        mu = est.weighted_average(points) if points else None
        out["mu_source"] = "estimated from herald-arm pairs"
    out["mu"] = mu
    if mu is not None:
        eta_t = run.herald_eta_t()
        exact, approx = est.g2_predicted(mu.value, a.overlap, eta_t)
        k = exact / mu.value if mu.value else 0.0
        out["g2_predicted"] = est.Estimate(exact, abs(k) * mu.sigma)
        out["g2_predicted_approx"] = approx
        out["herald_eta_t"] = eta_t
        out["overlap_ratio"] = a.overlap.ratio
    return out


def describe(run: RunConfig):
    """Fully resolved configuration, defaults included."""
    src = run.source
    mode = dataclasses.asdict(src.mode)
    mode["kind"] = "pulsed" if isinstance(src.mode, Pulsed) else "cw"
    splitting = src.splitting if isinstance(src.splitting, str) else {
        "kind": "demux", "channel_pairs": len(src.splitting.channel_filters)}
    an = dataclasses.asdict(run.analysis)
    an["overlap"] = run.analysis.overlap.as_dict()
    return {
        "seed": run.seed,
        "source": {
            "mode": mode, "mu": src.mu, "nu0": src.nu0, "n_pulses": src.n_pulses,
            "splitting": splitting, "channel_transmissions": list(src.channel_transmissions),
            "spectrum_grid": dataclasses.asdict(src.joint_density.grid),
        },
        "beam_split": dataclasses.asdict(run.beam_split) if run.beam_split else None,
        "detectors": [dataclasses.asdict(d) | {"rng_seed": None} for d in run.detectors],
        "analysis": an | {"gamma_used": run.gamma, "accidental_offset_ps_used": run.accidental_offset},
        "output": dataclasses.asdict(run.output),
        "document": run.resolved,
    }


def report(run: RunConfig, counts: StreamCounts, inputs=None, truth=None):
    flags = []
    out = {
        "configuration": describe(run),
        "seed": run.seed,
        "inputs": inputs or [],
        "duration_s": counts.duration_ps / PS_PER_S,
        "counts": {"singles_raw": counts.n_raw, "pairs": counts.pairs, "triples": counts.triples},
    }
    if counts.duration_ps <= 0 or not any(counts.n_raw.values()):
        flags.append("insufficient data: no tags")
    for ch in counts.n_raw:
        if ch < len(run.detectors) and run.analysis.tau_sel < run.detectors[ch].dead_time:
            flags.append(f"tau_sel {run.analysis.tau_sel} us is shorter than the hardware dead "
                         f"time of channel {ch}; ready times and accidentals are biased")
    if counts.triples is not None:
        out["g2"] = g2_estimates(run, counts, flags)
    elif counts.pairs:
        out["estimates"] = pair_estimates(run, counts.pairs[0], counts.duration_ps, flags)
    if truth is not None:
        out["truth"] = truth
    out["flags"] = flags
    return _ser(out)


def _fmt(e):
    if e is None:
        return "n/a (insufficient data)"
    if isinstance(e, dict) and "value" in e:
        return f"{e['value']:.6g} +- {e['sigma']:.3g}"
    if isinstance(e, float):
        return f"{e:.6g}"
    return str(e)


def format_report(rep):
    """Human-readable summary of a report dict."""
    lines = [f"seed {rep['seed']}, duration {rep['duration_s']:.6g} s"]
    lines.append("singles (raw): " + ", ".join(f"ch{k}={v}" for k, v in rep["counts"]["singles_raw"].items()))
    for section in ("estimates", "g2"):
        for k, v in rep.get(section, {}).items():
            if isinstance(v, dict) and "value" not in v:
                lines.append(f"{k}: " + ", ".join(f"{kk}={_fmt(vv)}" for kk, vv in v.items()))
            else:
                lines.append(f"{k}: {_fmt(v)}")
    if "truth" in rep:
        lines.append("truth: " + ", ".join(f"{k}={_fmt(v)}" for k, v in rep["truth"].items()
                                           if not isinstance(v, dict)))
    for f in rep["flags"]:
        lines.append(f"FLAG {f}")
    return "\n".join(lines)


def run_pair_analysis(run: RunConfig, sim: Simulation = None, chunk_ps=None):
    """Simulate (unless ``sim`` is given) and analyse one channel pair."""
    sim = sim or simulate(run)
    counts = analyze_streams(run, sim.streams, chunk_ps=chunk_ps)
    return report(run, counts, truth=sim.truth(run))


def run_g2_analysis(run: RunConfig, sim: Simulation = None, chunk_ps=None):
    sim = sim or simulate(run)
    counts = analyze_streams(run, sim.streams, g2=True, chunk_ps=chunk_ps)
    return report(run, counts, truth=sim.truth(run))

