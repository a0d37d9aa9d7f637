"""Command-line entry point: ``pairforge <command> ...``.

Commands: simulate, analyze, g2, jsa, fit-shg, overlap. Every report is
written as JSON next to a plain-text summary on stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import tagio
from .config import load_config, with_analysis
from .errors import ConfigError, FitError, InsufficientDataError, NegativeRateError
from .estimators import nm_per_thz
from .spectral import FrequencyGrid, load_spectral_function, overlap_factors

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_IO = 4
EXIT_NUMERIC = 5


def _write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    raise TypeError(f"cannot serialise {type(x).__name__}")


def _report_path(out, default_name):
    out = Path(out)
    return out if out.suffix == ".json" else out / default_name


def _load(args):
    run = load_config(args.config, seed=args.seed)
    return with_analysis(run, tau_sel=getattr(args, "tau_sel", None),
                         coinc_window=getattr(args, "window", None))


# ------------------------------------------------------------ commands

def cmd_simulate(args):
    from .pipeline import simulate

    run = _load(args)
    fmt = args.format or run.output.format
    out = Path(args.out or run.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    sim = simulate(run, keep_emissions=args.truth_tags)
    files = []
    for k, times in sorted(sim.streams.items()):
        if fmt == "bin":
            path = out / f"ch{k}.ptag"
            tagio.write_streams(path, {k: times})
        else:
            path = out / f"ch{k}.csv"
            tagio.write_text(path, np.full(times.size, k, np.uint16), times)
        files.append(str(path))
    truth = sim.truth(run)
    if args.truth_tags:
        path = out / "truth.ptag"
        tagio.write_streams(path, {tagio.TRUTH_CHANNEL: np.sort(sim.emission_times)})
        truth["emission_file"] = str(path)
    from .pipeline import describe
    _write_json(out / "truth.json", {"truth": truth, "configuration": describe(run),
                                     "seed": run.seed, "tag_files": files})
    print(f"wrote {len(files)} tag files and truth.json to {out}")
    for k, f in enumerate(files):
        print(f"  {f}: {sim.streams[k].size} tags")
    return EXIT_OK


def _analyze(args, g2):
    from .pipeline import analyze_files, format_report, report

    run = _load(args)
    paths = [str(p) for p in args.tags]
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(p)
    counts = analyze_files(run, tagio.iter_merged(paths), g2=g2)
    inputs = [{"path": p, "binary": tagio.is_binary(p)} for p in paths]
    truth = None
    if args.truth:
        truth = json.loads(Path(args.truth).read_text()).get("truth")
    rep = report(run, counts, inputs=inputs, truth=truth)
    name = "g2_report.json" if g2 else "analysis_report.json"
    path = _report_path(args.out or run.output.directory, name)
    _write_json(path, rep)
    print(format_report(rep))
    print(f"report: {path}")
    return EXIT_OK


def cmd_analyze(args):
    return _analyze(args, g2=False)


def cmd_g2(args):
    return _analyze(args, g2=True)


def cmd_jsa(args):
    from . import jsa

    conv = args.convention
    if args.pump_file:
        data = jsa.load_two_column(args.pump_file)
        if args.pump_kind == "temporal":
            # time (s), intensity; spectrum evaluated on a grid set by the pulse length
            span_t = data[-1, 0] - data[0, 0]
            width = 8 * jsa.GAUSS_TBP / max(span_t / 8, 1e-15) * 1e-12
            grid = FrequencyGrid(0.0, width, 1601)
            pump = jsa.PumpSpectrum.from_temporal(data[:, 0], data[:, 1], grid)
        else:
            grid = FrequencyGrid.from_bounds(data[0, 0], data[-1, 0], data.shape[0])
            inten = np.interp(grid.points, data[:, 0], data[:, 1])
            pump = jsa.PumpSpectrum(grid, np.sqrt(np.clip(inten, 0, None)))

    if args.pm_file:
        spec = load_spectral_function(args.pm_file)
        pm = jsa.PhaseMatching.from_intensity(spec.grid, spec.values)
        signal_fwhm = pm.intensity_fwhm / 2
    else:
        signal_fwhm = args.pm_fwhm_nm / nm_per_thz(args.wavelength * 1e-9)
    span = args.span_factor * signal_fwhm
    if args.pump_file or args.pm_file:
        if not args.pump_file:
            fwhm = jsa.GAUSS_TBP / args.pump_duration * 1e-12
            pump = jsa.PumpSpectrum.gaussian(fwhm, FrequencyGrid(0.0, 16 * fwhm, 4001))
        if not args.pm_file:
            pm = jsa.calibrated_phase_matching(2 * signal_fwhm, convention=conv,
                                               grid=FrequencyGrid(0.0, 40 * signal_fwhm, 200001))
        grid = FrequencyGrid(0.0, span, args.n_points)
        psi = jsa.build_jsa(pump, pm, grid, grid)
        pump_fwhm = pump.intensity_fwhm
    else:
        psi = jsa.pulsed_source_jsa(args.pump_duration, signal_fwhm, conv, args.n_points,
                                    args.span_factor)
        grid = psi.signal_grid
        pump_fwhm = jsa.GAUSS_TBP / args.pump_duration * 1e-12
    spec = jsa.schmidt_decompose(psi)
    K = spec.K
    out = Path(args.out or "jsa")
    out.mkdir(parents=True, exist_ok=True)
    rep = {
        "K": K,
        "K_gram": jsa.schmidt_number(psi),
        "g2_unheralded": jsa.g2_unheralded(K),
        "convention": conv if not args.pm_file else "measured",
        "pump_intensity_fwhm_thz": pump_fwhm,
        "signal_fwhm_thz": signal_fwhm,
        "grid": {"span_thz": span, "n_points": args.n_points},
        "schmidt_coefficients": spec.coefficients[:args.n_modes].tolist(),
    }
    _write_json(out / "jsa_report.json", rep)
    step = max(1, args.n_points // args.table_points)
    sub = psi.intensity[::step, ::step]
    pts = grid.points[::step]
    x, y = np.meshgrid(pts, pts, indexing="ij")
    np.savetxt(out / "jsa_intensity.csv", np.column_stack([x.ravel(), y.ravel(), sub.ravel()]),
               delimiter=",", header="signal_thz,idler_thz,intensity", comments="")
    np.savetxt(out / "schmidt.csv", np.column_stack([np.arange(len(spec)), spec.coefficients]),
               delimiter=",", header="mode,lambda", comments="")
    print(f"K = {K:.4f}, g2_u = {rep['g2_unheralded']:.5f}")
    print(f"report: {out / 'jsa_report.json'}")
    return EXIT_OK


def cmd_fit_shg(args):
    from .shg import PulseTiming, conversion_ratio, fit_shg, load_power_table, peak_from_average

    data = load_power_table(args.table)
    timing = None
    if args.repetition_rate and args.pulse_duration:
        timing = PulseTiming(args.repetition_rate, args.pulse_duration)
    if args.average:
        if timing is None:
            raise ConfigError("--average needs --repetition-rate and --pulse-duration")
        # rectangular pulses: both columns scale with the same duty cycle
        data = data / timing.duty_cycle
    fit = fit_shg(data)
    rep = {
        "coupling_ratio": fit.params.coupling_ratio,
        "bk_efficiency_per_W": fit.params.bk_efficiency,
        "sigma": fit.sigma.tolist(),
        "covariance": fit.covariance.tolist(),
        "residual_rms_relative": fit.residual_norm,
        "n_samples": fit.n_samples,
        "duty_cycle": timing.duty_cycle if timing else None,
    }
    if args.at_average is not None and timing is not None:
        p = peak_from_average(args.at_average, timing)
        rep["at_average_power"] = {"average_W": args.at_average, "peak_W": p,
                                   "conversion": conversion_ratio(fit.params, p)}
    out = Path(args.out or "shg")
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "shg_fit.json", rep)
    p = np.linspace(0, data[:, 0].max() * 1.1, 200)
    np.savetxt(out / "shg_curve.csv", fit.curve(p), delimiter=",",
               header="p_fundamental_peak_W,p_shg_W", comments="")
    print(f"c = {fit.params.coupling_ratio:.6g} +- {fit.sigma[0]:.2g}, "
          f"eta_BK = {fit.params.bk_efficiency:.6g} +- {fit.sigma[1]:.2g} /W")
    return EXIT_OK


def cmd_overlap(args):
    if args.config:
        run = load_config(args.config)
        ov = run.analysis.overlap
        if args.signal is None:
            rep = ov.as_dict() | {"ratio": ov.ratio}
            print(json.dumps(rep, indent=2))
            if args.out:
                _write_json(_report_path(args.out, "overlap.json"), rep)
            return EXIT_OK
    if args.signal is None or args.idler is None or args.interval is None:
        raise ConfigError("overlap needs --signal, --idler and --interval (or --config)")
    p_s = load_spectral_function(args.signal)
    p_i = load_spectral_function(args.idler)
    lo, hi = args.interval
    ov = overlap_factors(p_s, p_i, FrequencyGrid.from_bounds(lo, hi, args.n_points), args.nu0)
    rep = ov.as_dict() | {"ratio": ov.ratio}
    print(json.dumps(rep, indent=2))
    if args.out:
        _write_json(_report_path(args.out, "overlap.json"), rep)
    return EXIT_OK


# ------------------------------------------------------------ parser

def build_parser():
    p = argparse.ArgumentParser(prog="pairforge", description="Photon-pair source simulation and analysis")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required, help="TOML run configuration")
        sp.add_argument("--seed", type=int, help="override the configured seed")
        sp.add_argument("--out", help="output directory (or report .json path)")

    sp = sub.add_parser("simulate", help="simulate detector tag streams")
    common(sp)
    sp.add_argument("--format", choices=("bin", "csv"))
    sp.add_argument("--truth-tags", action="store_true", help="also write pair emission times")
    sp.set_defaults(func=cmd_simulate)

    for name, func, what in (("analyze", cmd_analyze, "pair-rate estimates from tag files"),
                             ("g2", cmd_g2, "heralded g2 from tag files")):
        sp = sub.add_parser(name, help=what)
        common(sp)
        sp.add_argument("tags", nargs="+", help="tag files (binary or channel,time_ps text)")
        sp.add_argument("--tau-sel", type=float, help="post-selection dead time in us")
        sp.add_argument("--window", type=int, help="coincidence window in ps")
        sp.add_argument("--truth", help="truth.json from simulate, copied into the report")
        sp.set_defaults(func=func)

    sp = sub.add_parser("jsa", help="joint spectral amplitude and Schmidt number")
    sp.add_argument("--out")
    sp.add_argument("--pump-duration", type=float, default=400e-12,
                    help="transform-limited Gaussian pulse intensity FWHM in s")
    sp.add_argument("--pump-file", help="two-column pump profile")
    sp.add_argument("--pump-kind", choices=("temporal", "spectrum"), default="temporal",
                    help="pump file holds time_s,intensity or detuning_THz,intensity")
    sp.add_argument("--pm-fwhm-nm", type=float, default=1.2, help="marginal spectrum FWHM in nm")
    sp.add_argument("--pm-file", help="measured |phi|^2 over difference detuning (THz)")
    sp.add_argument("--wavelength", type=float, default=1550.0, help="pair wavelength in nm")
    sp.add_argument("--convention", choices=("sinc", "sinc2"), default="sinc")
    sp.add_argument("--n-points", type=int, default=2400)
    sp.add_argument("--span-factor", type=float, default=8.0,
                    help="grid span in units of the signal FWHM")
    sp.add_argument("--n-modes", type=int, default=200)
    sp.add_argument("--table-points", type=int, default=200)
    sp.set_defaults(func=cmd_jsa)

    sp = sub.add_parser("fit-shg", help="fit the SHG depletion model")
    sp.add_argument("table", help="two columns: fundamental power, SHG power (W)")
    sp.add_argument("--out")
    sp.add_argument("--average", action="store_true", help="table holds average powers")
    sp.add_argument("--repetition-rate", type=float)
    sp.add_argument("--pulse-duration", type=float)
    sp.add_argument("--at-average", type=float, help="report conversion at this average power (W)")
    sp.set_defaults(func=cmd_fit_shg)

    sp = sub.add_parser("overlap", help="spectral overlap factors")
    sp.add_argument("--config")
    sp.add_argument("--signal")
    sp.add_argument("--idler")
    sp.add_argument("--interval", type=float, nargs=2, metavar=("LO", "HI"),
                    help="pair detuning interval in THz")
    sp.add_argument("--nu0", type=float, default=193.4)
    sp.add_argument("--n-points", type=int, default=4001)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_overlap)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, tagio.TagFileError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InsufficientDataError, NegativeRateError, FitError, ArithmeticError, ValueError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
