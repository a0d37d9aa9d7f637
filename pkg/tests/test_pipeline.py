import json

import numpy as np
import pytest

from pairforge import tagio
from pairforge.config import build_config
from pairforge.pipeline import (analyze_files, analyze_streams, format_report, report,
                                run_g2_analysis, run_pair_analysis, simulate)


def pair_run(mu=0.02, n_pulses=2_000_000, transmissions=(1.0, 1.0), dark=200.0, seed=3,
             afterpulse=0.0, dead_time=0.5):
    det = {"efficiency": 0.2, "dark_rate": dark, "afterpulse_probability": afterpulse,
           "dead_time": dead_time}
    return build_config({
        "seed": seed,
        "source": {"mode": "pulsed", "repetition_rate": 10e6, "pulse_duration": 500e-12, "mu": mu,
                   "n_pulses": n_pulses, "channel_transmissions": list(transmissions)},
        "detectors": [det, det],
        "analysis": {"tau_sel": 1.0, "coinc_window": 1000, "pump_power": 1.0, "delta_lambda": 1.0},
    })


def within(est, truth, k=3.0):
    return abs(est["value"] - truth) <= k * est["sigma"]


def test_pair_rate_round_trip():
    run = pair_run()
    rep = run_pair_analysis(run)
    assert not rep["flags"]
    assert within(rep["estimates"]["mu_per_pulse"], 0.02)
    json.dumps(rep)
    assert "mu_per_pulse" in format_report(rep)


def test_uniform_loss_leaves_pair_rate_unchanged():
    full = run_pair_analysis(pair_run(seed=5))["estimates"]["mu_gen"]
    lossy = run_pair_analysis(pair_run(seed=6, transmissions=(0.5, 0.5)))["estimates"]["mu_gen"]
    assert abs(full["value"] - lossy["value"]) <= 3 * np.hypot(full["sigma"], lossy["sigma"])


def test_dark_counts_only():
    run = pair_run(mu=0.0, dark=5e3, n_pulses=1_000_000)
    sim = simulate(run)
    counts = analyze_streams(run, sim.streams)
    rep = report(run, counts)
    # only accidental dark-dark coincidences; the pair estimate is flagged
    pc = counts.pairs[0]
    assert pc.coincidences_raw == pytest.approx(pc.accidentals_raw, abs=5 * np.sqrt(pc.accidentals_raw + 1))
    assert rep["estimates"]["mu_gen"] is None or rep["estimates"]["mu_gen"]["value"] < 1e3
    assert rep["flags"] or rep["estimates"]["mu_gen"] is not None


def test_empty_input_is_flagged():
    run = pair_run(n_pulses=1000, dark=0.0, mu=0.0)
    counts = analyze_streams(run, {0: np.empty(0, np.int64), 1: np.empty(0, np.int64)})
    rep = report(run, counts)
    assert any("no tags" in f for f in rep["flags"])
    assert rep["estimates"]["mu_gen"] is None


def test_chunking_does_not_change_counts():
    run = pair_run(n_pulses=500_000, afterpulse=0.05)
    sim = simulate(run)
    whole = analyze_streams(run, sim.streams)
    sliced = analyze_streams(run, sim.streams, chunk_ps=7_777_777)
    assert whole == sliced


def test_file_round_trip(tmp_path):
    run = pair_run(n_pulses=500_000)
    sim = simulate(run)
    paths = []
    for k, t in sim.streams.items():
        paths.append(tmp_path / f"ch{k}.ptag")
        tagio.write_streams(paths[-1], {k: t})
    from_files = analyze_files(run, tagio.iter_merged(paths, chunk_records=5000))
    assert from_files == analyze_streams(run, sim.streams)


def test_simulation_is_reproducible():
    a = simulate(pair_run(n_pulses=200_000, afterpulse=0.05))
    b = simulate(pair_run(n_pulses=200_000, afterpulse=0.05))
    for k in a.streams:
        assert np.array_equal(a.streams[k], b.streams[k])


def test_g2_pipeline_small():
    run = build_config({
        "seed": 2,
        "source": {"mode": "pulsed", "repetition_rate": 1e6, "pulse_duration": 500e-12, "mu": 0.05,
                   "n_pulses": 3_000_000, "beam_split": {"channel": 1}},
        "detectors": [{"efficiency": 1.0}] * 3,
        "analysis": {"herald": 0, "arms": [1, 2], "tau_sel": 10.0},
    })
    rep = run_g2_analysis(run)
    g = rep["g2"]
    assert not rep["flags"]
    assert within(g["g2_heralded"], g["g2_predicted"]["value"], k=4)
    # unit-efficiency detectors click once per multi-pair pulse: 1 - exp(-mu)
    assert g["mu"]["value"] == pytest.approx(0.05, rel=0.05)


def test_short_tau_sel_is_flagged():
    run = pair_run(n_pulses=100_000, dead_time=5.0)
    rep = run_pair_analysis(run)
    assert any("shorter than the hardware dead time" in f for f in rep["flags"])


def test_uncorrelated_streams_are_flagged_not_fatal():
    rng = np.random.default_rng(0)
    run = pair_run(n_pulses=1000)
    streams = {k: np.sort(rng.integers(0, 10 ** 10, 20_000)) for k in (0, 1)}
    counts = analyze_streams(run, streams)
    rep = report(run, counts)
    assert rep["flags"]
    json.dumps(rep)
