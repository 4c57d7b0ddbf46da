"""Command-line front end.

Exit codes: 0 success, 1 invalid input (bad flags, config or data files),
2 analysis failure. Diagnostics are single lines on stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, memsim, metrics, qstate, timetags, tomography
from .config import config_hash, load_config
from .errors import AnalysisError, ValidationError
from .mcstats import DEFAULT_RESAMPLES, poisson_resample_metric
from .scenarios import (
    PIPELINES,
    default_pipeline,
    list_fixtures,
    load_fixture,
    run_pipeline,
    run_scenario,
    simulate_stage,
)
from .tables import CoincidenceTable


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _angles(text: str) -> metrics.ChshSettings:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("angles must be four comma-separated numbers in radians") from None
    if len(vals) != 4:
        raise argparse.ArgumentTypeError("need exactly four angles: thetaA,thetaS,thetaA',thetaS'")
    return metrics.ChshSettings(*vals)


def _file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def _fmt(value: float, sigma: float | None) -> str:
    return f"{value:.6g} (exact)" if sigma is None else f"{value:.6g} ± {sigma:.2g}"


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _header(**items) -> list[str]:
    items.setdefault("version", __version__)
    return ["  ".join(f"{k} {v}" for k, v in items.items())]


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _metric_rows(values: dict) -> tuple[list[str], list[list]]:
    lines = [f"{'metric':<22} value"]
    rows = []
    for name, (v, s) in values.items():
        lines.append(f"{name:<22} {_fmt(v, s)}")
        rows.append([name, repr(float(v)), "exact" if s is None else repr(float(s))])
    return lines, rows


# -- subcommands ---------------------------------------------------------------


def _load_cfg(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    pipeline = args.pipeline or default_pipeline(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = simulate_stage(cfg, pipeline, exact=args.exact, workers=args.workers)
    c, aux = stage.counts, stage.aux
    if pipeline == "path":
        for tag in ("input", "output"):
            p = c[tag]["path"]
            _write_csv(out / f"path_{tag}.csv", ["pattern", "count"],
                       [[k, repr(float(v))] for k, v in zip(("00", "10", "01", "11"), p)])
            _fringe_csv(out / f"fringe_{tag}.csv", aux["phases"], {"D": c[tag]["fringe"]})
    elif pipeline == "polarization":
        for tag in ("input", "output"):
            CoincidenceTable(aux["chsh_settings"], c[tag]["chsh"], cfg.trials, cfg.seed).write(out / f"chsh_{tag}.txt")
            tomography.TomographyRecord(c[tag]["tomo"]).write(out / f"tomo_{tag}.txt")
            _fringe_csv(out / f"fringe_{tag}.csv", aux["phases"], c[tag]["fringe"])
    else:
        for tag, cc in (("input", cfg.bypass_memory()), ("retrieved", cfg)):
            memsim.simulate_pair_tags(cc, stream=f"pairs-{tag}").write(out / f"tags_{tag}.txt")
        if "pulse" in c:
            timetags.write_histogram(out / "pulse_histogram.csv", aux["bin_centers"], c["pulse"])
    (out / "run.txt").write_text(
        "\n".join(_header(config_hash=config_hash(cfg), seed=cfg.seed, pipeline=pipeline,
                          mode="exact" if args.exact else "sampled")) + "\n"
    )
    return 0


def _fringe_csv(path: Path, phases, fringes: dict) -> None:
    rows = []
    for ref, counts in fringes.items():
        for ph, n in zip(phases, counts):
            rows.append([ref, repr(float(ph)), f"{np.degrees(ph):.4f}", repr(float(n))])
    _write_csv(path, ["reference", "phase_rad", "phase_deg", "count"], rows)


def cmd_analyze(args) -> int:
    cfg = _load_cfg(args)
    pipeline = args.pipeline or default_pipeline(cfg)
    values = run_pipeline(cfg, pipeline, exact=args.exact, n_resamples=args.resamples, workers=args.workers)
    lines, rows = _metric_rows(values)
    head = _header(config_hash=config_hash(cfg), seed=cfg.seed, pipeline=pipeline)
    _emit("\n".join(head + [""] + lines) + "\n", args.output)
    if args.csv:
        _write_csv(Path(args.csv), ["metric", "value", "sigma"], rows)
    return 0


def cmd_tomo(args) -> int:
    rec = tomography.TomographyRecord.read(args.counts)
    rho = tomography.reconstruct(rec)
    ideal = qstate.bell_state(args.ideal).density()

    def fid(counts):
        r = tomography.TomographyRecord(counts, rec.exposure)
        return metrics.fidelity(tomography.reconstruct(r), ideal)

    def conc(counts):
        return metrics.wootters_concurrence(tomography.reconstruct(tomography.TomographyRecord(counts, rec.exposure)))

    values = {}
    for name, fn in (("fidelity", fid), ("concurrence", conc)):
        if args.exact:
            values[name] = (fn(rec.counts), None)
        else:
            rep = poisson_resample_metric(rec.counts, fn, n=args.resamples, seed=args.seed)
            values[name] = (rep.value, rep.sigma)
    labels = qstate.POL_POL_LABELS
    csv_rows = [[labels[i], labels[j], repr(float(rho[i, j].real)), repr(float(rho[i, j].imag))]
                for i in range(4) for j in range(4)]
    csv_rows += [[f"{name}_vs_{args.ideal}", "", repr(float(v)), "exact" if s is None else repr(float(s))]
                 for name, (v, s) in values.items()]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "real", "imag"])
    w.writerows(csv_rows)
    _emit(buf.getvalue(), args.output)
    lines, _ = _metric_rows(values)
    head = _header(input_hash=_file_hash(args.counts), seed=args.seed)
    print("\n".join(head + lines), file=sys.stderr)
    return 0


def cmd_chsh(args) -> int:
    table = CoincidenceTable.read(args.counts)
    settings = args.angles

    def blocks(counts):
        t = table.with_counts(counts)
        return [[t.count(s, args.atol) for s in metrics.correlator_settings(a, b)]
                for _, a, b in settings.correlator_pairs()]

    def s_value(counts):
        return metrics.chsh_s(table.with_counts(counts), settings, args.atol)

    blocks(table.counts)  # fail early if a setting is missing
    metric_fns = {"S": s_value}
    for k, (sign, a, b) in enumerate(settings.correlator_pairs()):
        metric_fns[f"E({a:.4f},{b:.4f})"] = lambda c, k=k: metrics.e_correlator(*blocks(c)[k])
    values = {}
    counts = np.asarray(table.counts, dtype=float)
    for name, fn in metric_fns.items():
        if args.exact:
            values[name] = (float(fn(counts)), None)
        else:
            rep = poisson_resample_metric(counts, fn, n=args.resamples, seed=args.seed)
            values[name] = (rep.value, rep.sigma)
    angle_lines = [
        f"{label:<8} {val:.6f} rad  {np.degrees(val):8.3f} deg"
        for label, val in zip(("thetaA", "thetaS", "thetaA'", "thetaS'"),
                              (settings.theta_a, settings.theta_s, settings.theta_a2, settings.theta_s2))
    ]
    lines, rows = _metric_rows(values)
    s_val = values["S"][0]
    verdict = [f"local_bound 2  violated {'yes' if s_val > 2 else 'no'}"]
    head = _header(input_hash=_file_hash(args.counts), seed=args.seed)
    _emit("\n".join(head + [""] + angle_lines + [""] + lines + verdict) + "\n", args.output)
    if args.csv:
        _write_csv(Path(args.csv), ["metric", "value", "sigma"], rows)
    return 0


def cmd_correlate(args) -> int:
    if args.what == "pulse":
        centers, counts = timetags.read_histogram(args.input)
        fit = timetags.fit_gaussian_pulse(centers, counts)
        values = {}
        fns = {
            "y0": lambda c: timetags.fit_gaussian_pulse(centers, c).y0,
            "amplitude": lambda c: timetags.fit_gaussian_pulse(centers, c).amplitude,
            "tc_ns": lambda c: timetags.fit_gaussian_pulse(centers, c).tc,
            "w_ns": lambda c: timetags.fit_gaussian_pulse(centers, c).w,
            "fwhm_ns": lambda c: timetags.fit_gaussian_pulse(centers, c).fwhm,
            "bandwidth_mhz": lambda c: metrics.bandwidth_from_fwhm(timetags.fit_gaussian_pulse(centers, c).fwhm),
        }
        for name, fn in fns.items():
            if args.exact:
                values[name] = (float(fn(counts)), None)
            else:
                rep = poisson_resample_metric(counts, fn, n=args.resamples, seed=args.seed)
                values[name] = (rep.value, rep.sigma)
        lines, rows = _metric_rows(values)
        head = _header(input_hash=_file_hash(args.input), seed=args.seed, iterations=fit.iterations)
        _emit("\n".join(head + [""] + lines) + "\n", args.output)
        if args.csv:
            _write_csv(Path(args.csv), ["metric", "value", "sigma"], rows)
        return 0

    stream = timetags.TimeTagStream.read(args.input)
    head = _header(input_hash=_file_hash(args.input), seed=args.seed)
    if args.what == "histogram":
        centers, counts = timetags.delay_histogram(stream, args.a, args.b, args.bin_ns, args.range_ns)
        if not args.output:
            raise ValidationError("histogram needs --output")
        timetags.write_histogram(args.output, centers, counts)
        return 0
    if args.what == "g2":
        if args.duration_ns is None:
            ends = [stream[ch][-1] for ch in (args.a, args.b) if stream[ch].size]
            starts = [stream[ch][0] for ch in (args.a, args.b) if stream[ch].size]
            if not ends:
                raise ValidationError("g2 needs non-empty channels")
            duration = max(ends) - min(starts)
        else:
            duration = args.duration_ns
        n_c = timetags.coincidences(stream, args.a, args.b, args.window_ns)
        n_a, n_b = stream[args.a].size, stream[args.b].size
        if n_a == 0 or n_b == 0:
            raise ValidationError("g2 needs non-empty channels")
        g2 = timetags.g2_cross(stream, args.a, args.b, args.window_ns, duration)
        rep = poisson_resample_metric(
            np.array([n_c, n_a, n_b], dtype=float),
            lambda c: c[0] * duration / (c[1] * c[2] * args.window_ns),
            n=args.resamples, seed=args.seed,
        )
        values = {"coincidences": (float(n_c), float(np.sqrt(n_c))), "g2": (g2, rep.sigma)}
        verdict = [f"classical_bound 2  nonclassical {'yes' if g2 > 2 else 'no'}"]
    else:
        trig = stream[args.trigger]
        alpha = timetags.alpha_heralded(stream, args.trigger, args.a, args.b, args.window_ns)
        half = 0.5 * args.window_ns
        h1 = timetags.trigger_hits(trig, stream[args.a], half)
        h2 = timetags.trigger_hits(trig, stream[args.b], half)
        base = np.array([trig.size, h1.sum(), h2.sum(), (h1 & h2).sum()], dtype=float)

        def alpha_fn(c):
            if c[1] == 0 or c[2] == 0:
                raise ValidationError("no detections")
            return c[0] * c[3] / (c[1] * c[2])

        rep = poisson_resample_metric(base, alpha_fn, n=args.resamples, seed=args.seed)
        values = {"alpha": (alpha, rep.sigma)}
        verdict = []
    lines, rows = _metric_rows(values)
    _emit("\n".join(head + [""] + lines + verdict) + "\n", args.output)
    if args.csv:
        _write_csv(Path(args.csv), ["metric", "value", "sigma"], rows)
    return 0


def cmd_scenario(args) -> int:
    if args.action == "list":
        for name in list_fixtures():
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                f = load_fixture(name)
            print(f"{name:<20} {f.pipeline:<13} {'exact' if f.exact else 'sampled'}  {len(f.expected)} metrics")
        return 0
    if args.action == "tune":
        from .config import dumps_config
        from .scenarios import format_expected
        from .scenarios.tuning import build_fixtures

        out = Path(args.out) if args.out else None
        for name, spec in build_fixtures().items():
            if out is None:
                print(f"[{name}]")
                print(dumps_config(spec.config))
                continue
            d = out / name
            d.mkdir(parents=True, exist_ok=True)
            (d / "config.toml").write_text(dumps_config(spec.config))
            (d / "expected.txt").write_text(format_expected(spec.expected, spec.pipeline, spec.exact))
        return 0
    if not args.name:
        raise _UsageError("scenario run: fixture name required")
    report = run_scenario(args.name, seed=args.seed, exact=True if args.exact else None,
                          n_resamples=args.resamples, workers=args.workers)
    _emit(report.to_text(), args.output)
    if args.csv:
        Path(args.csv).write_text(report.to_csv())
    return 0


def cmd_report(args) -> int:
    """Scenario report plus plot-data CSVs in one directory."""
    f = load_fixture(args.name)
    cfg = f.config if args.seed is None else f.config.replace(seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = run_scenario(f, seed=args.seed, exact=True if args.exact else None,
                          n_resamples=args.resamples, workers=args.workers)
    (out / "report.txt").write_text(report.to_text())
    (out / "report.csv").write_text(report.to_csv())
    stage = simulate_stage(cfg, f.pipeline, exact=report.exact, workers=args.workers)
    c, aux = stage.counts, stage.aux
    if f.pipeline == "path":
        for tag in ("input", "output"):
            _fringe_csv(out / f"fringe_{tag}.csv", aux["phases"], {"D": c[tag]["fringe"]})
    elif f.pipeline == "polarization":
        rows = []
        for tag in ("input", "output"):
            _fringe_csv(out / f"fringe_{tag}.csv", aux["phases"], c[tag]["fringe"])
            rho = tomography.reconstruct(tomography.TomographyRecord(c[tag]["tomo"]))
            labels = qstate.POL_POL_LABELS
            rows += [[tag, labels[i], labels[j], repr(float(rho[i, j].real)), repr(float(rho[i, j].imag))]
                     for i in range(4) for j in range(4)]
        _write_csv(out / "density_matrices.csv", ["stage", "row", "col", "real", "imag"], rows)
    elif "pulse" in c:
        timetags.write_histogram(out / "pulse_histogram.csv", aux["bin_centers"], c["pulse"])
    sys.stdout.write(report.to_text())
    return 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ramanmem", description="Raman quantum-memory entanglement storage toolkit")
    p.add_argument("--version", action="version", version=f"ramanmem {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed_default=None):
        sp.add_argument("--seed", type=int, default=seed_default, help="override the seed")
        sp.add_argument("--exact", action="store_true", help="expected counts instead of sampling")
        sp.add_argument("--resamples", type=int, default=DEFAULT_RESAMPLES, help="Poisson resamples per sigma")

    sp = sub.add_parser("simulate", help="simulate raw data files from a config")
    sp.add_argument("config")
    sp.add_argument("-o", "--out", required=True, help="output directory")
    sp.add_argument("--pipeline", choices=PIPELINES)
    sp.add_argument("--workers", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="simulate and evaluate every metric of a config")
    sp.add_argument("config")
    sp.add_argument("--pipeline", choices=PIPELINES)
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("-o", "--output")
    sp.add_argument("--csv")
    common(sp)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("tomo", help="state tomography")
    tsub = sp.add_subparsers(dest="action", required=True, parser_class=_Parser)
    tp = tsub.add_parser("reconstruct", help="density matrix CSV from 16 counts")
    tp.add_argument("counts")
    tp.add_argument("--ideal", default="psi+", choices=("phi+", "phi-", "psi+", "psi-"))
    tp.add_argument("-o", "--output")
    common(tp, seed_default=0)
    tp.set_defaults(func=cmd_tomo)

    sp = sub.add_parser("chsh", help="CHSH S from a coincidence table")
    sp.add_argument("counts")
    sp.add_argument("--angles", type=_angles, default=metrics.ChshSettings(),
                    help="thetaA,thetaS,thetaA',thetaS' in radians")
    sp.add_argument("--atol", type=float, default=1e-3, help="angle matching tolerance, rad")
    sp.add_argument("-o", "--output")
    sp.add_argument("--csv")
    common(sp, seed_default=0)
    sp.set_defaults(func=cmd_chsh)

    sp = sub.add_parser("correlate", help="time-tag correlations and pulse fits")
    sp.add_argument("what", choices=("g2", "alpha", "histogram", "pulse"))
    sp.add_argument("input", help="time-tag file, or histogram CSV for 'pulse'")
    sp.add_argument("--a", default="stokes", help="first channel")
    sp.add_argument("--b", default="antistokes", help="second channel")
    sp.add_argument("--trigger", default="trigger")
    sp.add_argument("--window-ns", type=float, default=10.0)
    sp.add_argument("--duration-ns", type=float)
    sp.add_argument("--bin-ns", type=float, default=1.0)
    sp.add_argument("--range-ns", type=float, default=100.0)
    sp.add_argument("-o", "--output")
    sp.add_argument("--csv")
    common(sp, seed_default=0)
    sp.set_defaults(func=cmd_correlate)

    sp = sub.add_parser("scenario", help="bundled experiment reproductions")
    sp.add_argument("action", choices=("list", "run", "tune"))
    sp.add_argument("name", nargs="?")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("-o", "--output")
    sp.add_argument("--out", help="directory for 'tune'")
    sp.add_argument("--csv")
    common(sp)
    sp.set_defaults(func=cmd_scenario)

    sp = sub.add_parser("report", help="scenario report with plot-data CSVs")
    sp.add_argument("name")
    sp.add_argument("-o", "--out", required=True)
    sp.add_argument("--workers", type=int, default=1)
    common(sp)
    sp.set_defaults(func=cmd_report)
    return p


def _one_line_warning(message, category, filename, lineno, line=None) -> str:
    return f"warning: {message}\n"


def main(argv=None) -> int:
    parser = build_parser()
    # catch_warnings does not restore formatwarning, so do it here
    previous_format = warnings.formatwarning
    try:
        args = parser.parse_args(argv)
        with warnings.catch_warnings():
            warnings.formatwarning = _one_line_warning
            return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return 1
    except AnalysisError as exc:
        print(f"analysis failed: {exc}", file=sys.stderr)
        return 2
    finally:
        warnings.formatwarning = previous_format


if __name__ == "__main__":
    sys.exit(main())
