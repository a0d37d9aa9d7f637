from pathlib import Path

import pytest

from pairforge.config import build_config, load_config, with_analysis
from pairforge.errors import ConfigError
from pairforge.source import Demux, Pulsed

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

MINIMAL = """\
schema_version = 1
seed = 4
[source]
mode = "pulsed"
repetition_rate = 10e6
pulse_duration = 500e-12
mu = 0.01
n_pulses = 1000
[[detectors]]
efficiency = 0.5
[[detectors]]
efficiency = 0.5
[analysis]
tau_sel = 10.0
"""


def write(tmp_path, text, name="run.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def line_of(text, needle):
    return next(i for i, ln in enumerate(text.splitlines(), 1) if needle in ln)


def test_minimal_config(tmp_path):
    run = load_config(write(tmp_path, MINIMAL))
    assert isinstance(run.source.mode, Pulsed)
    assert run.seed == 4 and run.n_channels == 2
    assert run.analysis.tau_sel == 10.0 and run.analysis.coinc_window == 1000
    assert run.gamma == 1.0
    assert run.accidental_offset == 100_000  # one period at 10 MHz
    assert run.duration_ps == 100_000 * 1000


def test_seed_override(tmp_path):
    assert load_config(write(tmp_path, MINIMAL), seed=9).seed == 9


def test_shipped_configs_load():
    paths = sorted(CONFIGS.glob("*.toml"))
    assert paths
    for p in paths:
        load_config(p)


@pytest.mark.parametrize("needle,replacement,key", [
    ("mu = 0.01", "mu = -1.0", "source.mu"),
    ("mu = 0.01", 'mu = "lots"', "source.mu"),
    ("tau_sel = 10.0", "tau_sel = 10.0\nwindw = 3", "analysis.windw"),
    ("efficiency = 0.5\n[analysis]", "efficiency = 2.0\n[analysis]", "detectors[1]"),
    ('mode = "pulsed"', 'mode = "laser"', "source.mode"),
])
def test_errors_carry_file_and_line(tmp_path, needle, replacement, key):
    text = MINIMAL.replace(needle, replacement, 1)
    p = write(tmp_path, text)
    with pytest.raises(ConfigError) as info:
        load_config(p)
    msg = str(info.value)
    target = replacement.splitlines()[-1].split("=")[0].strip() if "windw" in replacement else None
    expected_line = line_of(text, target) if target else line_of(text, replacement.splitlines()[0])
    if key.startswith("detectors"):
        expected_line = [i for i, ln in enumerate(text.splitlines(), 1) if ln == "[[detectors]]"][1]
    assert f"{p}:{expected_line}:" in msg
    assert key in msg


def test_toml_syntax_error_has_line(tmp_path):
    p = write(tmp_path, MINIMAL + "broken = = 3\n")
    with pytest.raises(ConfigError, match=rf"run.toml:{MINIMAL.count(chr(10)) + 1}"):
        load_config(p)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.toml")


def test_too_few_detectors(tmp_path):
    text = MINIMAL.replace("[[detectors]]\nefficiency = 0.5\n[analysis]", "[analysis]")
    with pytest.raises(ConfigError, match="2 channels need 2 detectors"):
        load_config(write(tmp_path, text))


def test_herald_needs_arms(tmp_path):
    with pytest.raises(ConfigError, match="together"):
        load_config(write(tmp_path, MINIMAL + "herald = 0\n"))


def test_unknown_channel(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(write(tmp_path, MINIMAL + "pair = [0, 5]\n"))


def test_unsupported_schema(tmp_path):
    with pytest.raises(ConfigError, match="schema version"):
        load_config(write(tmp_path, MINIMAL.replace("schema_version = 1", "schema_version = 7")))


def test_demux_and_auto_overlap():
    run = load_config(CONFIGS / "heralded_g2.toml")
    assert isinstance(run.source.splitting, Demux)
    assert run.n_channels == 3
    assert 0.5 < run.analysis.overlap.ratio < 0.8
    assert run.herald_eta_t() == pytest.approx(
        run.analysis.overlap.eta_s * run.source.channel_transmissions[0] * run.detectors[0].efficiency)


def test_auto_overlap_needs_demux(tmp_path):
    with pytest.raises(ConfigError, match="demux"):
        load_config(write(tmp_path, MINIMAL + 'overlap = "auto"\n'))


def test_explicit_overlap(tmp_path):
    run = load_config(write(tmp_path, MINIMAL + "overlap = { eta_s = 0.5, eta_i = 0.5, eta_pair = 0.4 }\n"))
    assert run.analysis.overlap.ratio == pytest.approx(0.625)


def test_with_analysis_overrides(tmp_path):
    run = load_config(write(tmp_path, MINIMAL))
    new = with_analysis(run, tau_sel=40.0, coinc_window=None)
    assert new.analysis.tau_sel == 40.0 and new.analysis.coinc_window == 1000
    assert new.resolved["analysis"]["tau_sel"] == 40.0
    assert run.analysis.tau_sel == 10.0
    assert with_analysis(run) is run


def test_build_config_from_dict():
    run = build_config({"source": {"mode": "cw", "pair_rate": 1e5, "n_pulses": 100},
                        "detectors": [{}, {}]})
    assert run.repetition_rate is None
    assert run.accidental_offset >= 100 * run.analysis.coinc_window
