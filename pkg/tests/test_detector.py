import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from pairforge.detector import DetectorConfig, detect
from pairforge.errors import ConfigError, StreamOrderError

US = 10 ** 6


def test_pass_through():
    arr = np.arange(0, 100 * 50 * US, 50 * US, dtype=np.int64)
    out = detect(arr, DetectorConfig(), duration_ps=int(arr[-1]) + 1)
    assert np.array_equal(out, arr)


def test_dead_time_veto():
    out = detect(np.array([0, 1 * US]), DetectorConfig(dead_time=5.0), duration_ps=10 * US)
    assert out.tolist() == [0]


def test_dead_time_is_not_extended():
    # 4 us spacing: clicks at 0, 8, 16 us (the 4 us arrivals fall into dead time)
    arr = np.arange(0, 20 * US, 4 * US)
    out = detect(arr, DetectorConfig(dead_time=5.0), duration_ps=20 * US)
    assert out.tolist() == [0, 8 * US, 16 * US]


def test_dark_counts_poisson():
    T = 100 * 10 ** 12
    cfg = DetectorConfig(dark_rate=1e3, rng_seed=7)
    out = detect(np.empty(0, np.int64), cfg, T)
    # non-paralysable dead time: observed rate r / (1 + r tau)
    expect = 1e5 / (1 + 1e3 * 5e-6)
    assert abs(out.size - expect) < 3 * np.sqrt(1e5)
    # gaps beyond the dead time are exponential
    gaps = (np.diff(out) - cfg.dead_ps) * 1e-12
    assert stats.kstest(gaps, stats.expon(scale=1e-3).cdf).pvalue > 1e-3


def test_afterpulse_multiplier():
    n, p = 100_000, 0.2
    arr = np.arange(n, dtype=np.int64) * 1000 * US  # isolated primaries
    cfg = DetectorConfig(afterpulse_probability=p, rng_seed=11)
    out = detect(arr, cfg, n * 1000 * US)
    sigma = np.sqrt(n * p) / (1 - p)
    assert abs(out.size - n / (1 - p)) < 3 * sigma


def test_afterpulse_delays_stay_in_window():
    arr = np.arange(20_000, dtype=np.int64) * 1000 * US
    cfg = DetectorConfig(afterpulse_probability=0.5, afterpulse_mean=10.0, afterpulse_window=40.0,
                         rng_seed=5)
    out = detect(arr, cfg, 20_000 * 1000 * US)
    delays = (out % (1000 * US)) / US
    delays = delays[delays > 0]
    # every afterpulse waits out the dead time of the click that caused it
    assert delays.min() >= 5.0
    # clicks are triggered either by a primary or by an afterpulse of a previous click
    assert delays.size == pytest.approx(20_000 * 0.5 / 0.5, rel=0.05)


@given(st.lists(st.integers(0, 10 ** 9), min_size=0, max_size=300), st.integers(0, 2 ** 32))
def test_no_tags_closer_than_dead_time(times, seed):
    arr = np.sort(np.array(times, dtype=np.int64))
    cfg = DetectorConfig(dead_time=1.0, afterpulse_probability=0.3, afterpulse_mean=0.5,
                         afterpulse_window=2.0, dark_rate=1e5, rng_seed=seed)
    out = detect(arr, cfg, 10 ** 9 + 1)
    assert np.all(np.diff(out) >= cfg.dead_ps)
    assert np.all(out < 10 ** 9 + 1)


def test_jitter_respects_allowance():
    arr = np.arange(0, 1000 * 20 * US, 20 * US, dtype=np.int64)
    cfg = DetectorConfig(jitter_sigma=50.0, rng_seed=2)
    out = detect(arr, cfg, int(arr[-1]) + US)
    assert np.all(np.diff(out) >= cfg.dead_ps - 6 * 50.0 * 2)
    assert np.std(out - arr) == pytest.approx(50.0, rel=0.1)


def test_deterministic_under_seed():
    arr = np.sort(np.random.default_rng(0).integers(0, 10 ** 10, 5000))
    cfg = DetectorConfig(efficiency=0.5, afterpulse_probability=0.1, dark_rate=1e3, rng_seed=9)
    assert np.array_equal(detect(arr, cfg, 10 ** 10), detect(arr, cfg, 10 ** 10))


def test_efficiency_thinning():
    arr = np.arange(0, 100_000, dtype=np.int64) * 100 * US
    out = detect(arr, DetectorConfig(efficiency=0.1, rng_seed=4), 100_000 * 100 * US)
    assert abs(out.size - 10_000) < 4 * np.sqrt(9000)


def test_unordered_input():
    with pytest.raises(StreamOrderError):
        detect(np.array([5, 3]), DetectorConfig(), 10)


@pytest.mark.parametrize("kw", [dict(efficiency=1.5), dict(dead_time=0.0),
                                dict(afterpulse_probability=1.0), dict(dark_rate=-1.0)])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        DetectorConfig(**kw)
