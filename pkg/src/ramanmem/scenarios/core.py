"""Fixture loading, analysis pipelines and scenario reports.

A fixture is a directory holding ``config.toml`` and ``expected.txt``. The
expected table has one line per metric::

    # pipeline = polarization
    # mode = sampled
    S_before 2.40 0.12 published

The tolerance column is either a number (pass iff ``|sim - value| <= tol``)
or ``min`` (pass iff ``sim >= value``).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .. import __version__, memsim, metrics, timetags, tomography
from ..config import ScenarioConfig, config_hash, load_config
from ..errors import AnalysisError, ConfigError, ValidationError
from ..mcstats import DEFAULT_RESAMPLES, poisson_resample_metric

FIXTURE_VERSION = "v1"
PIPELINES = ("path", "polarization", "timetag")
PULSE_BIN_NS = 1.0


def fixture_root() -> Path:
    return Path(str(resources.files("ramanmem") / "scenarios" / "data" / FIXTURE_VERSION))


@dataclass(frozen=True)
class Expectation:
    value: float
    tolerance: float | None  # None means a one-sided lower bound
    provenance: str

    def passes(self, simulated: float) -> bool:
        if not math.isfinite(simulated):
            return False
        if self.tolerance is None:
            return simulated >= self.value
        # tiny slack for decimal round-off in the table
        return abs(simulated - self.value) <= self.tolerance * (1 + 1e-12) + 1e-15

    def describe(self) -> str:
        if self.tolerance is None:
            return f">= {self.value:.6g}"
        return f"{self.value:.6g} ± {self.tolerance:.2g}"


@dataclass(frozen=True)
class ScenarioFixture:
    name: str
    config: ScenarioConfig
    expected: dict[str, Expectation]
    pipeline: str
    exact: bool = False

    def __post_init__(self):
        if self.pipeline not in PIPELINES:
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        producible = PIPELINE_METRICS[self.pipeline]
        missing = set(self.expected) - set(producible)
        if missing:
            raise ConfigError(f"fixture {self.name}: pipeline cannot produce {', '.join(sorted(missing))}")


def parse_expected(text: str) -> tuple[dict[str, Expectation], dict[str, str]]:
    expected, directives = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, eq, value = line[1:].partition("=")
            if eq:
                directives[key.strip()] = value.strip()
            continue
        toks = line.split()
        if len(toks) != 4:
            raise ConfigError(f"expected.txt line {lineno}: need 'metric value tolerance provenance'")
        name, value, tol, prov = toks
        if name in expected:
            raise ConfigError(f"expected.txt line {lineno}: duplicate metric {name}")
        try:
            expected[name] = Expectation(float(value), None if tol == "min" else float(tol), prov)
        except ValueError:
            raise ConfigError(f"expected.txt line {lineno}: non-numeric value or tolerance") from None
    return expected, directives


def format_expected(expected: dict[str, Expectation], pipeline: str, exact: bool) -> str:
    lines = [
        f"# pipeline = {pipeline}",
        f"# mode = {'exact' if exact else 'sampled'}",
        "# metric value tolerance provenance",
    ]
    for name, e in expected.items():
        tol = "min" if e.tolerance is None else repr(e.tolerance)
        lines.append(f"{name} {float(e.value)!r} {tol} {e.provenance}")
    return "\n".join(lines) + "\n"


def load_fixture(name_or_path) -> ScenarioFixture:
    """Load a bundled fixture by name, or a fixture directory by path."""
    path = Path(name_or_path)
    if not path.is_dir():
        path = fixture_root() / str(name_or_path)
    if not (path / "config.toml").is_file() or not (path / "expected.txt").is_file():
        raise ConfigError(f"no fixture at {name_or_path!s} (known: {', '.join(list_fixtures())})")
    cfg = load_config(path / "config.toml")
    expected, directives = parse_expected((path / "expected.txt").read_text())
    mode = directives.get("mode", "sampled")
    if mode not in ("exact", "sampled"):
        raise ConfigError(f"unknown mode {mode!r}")
    return ScenarioFixture(path.name, cfg, expected, directives.get("pipeline", ""), mode == "exact")


def list_fixtures() -> list[str]:
    root = fixture_root()
    if not root.is_dir():
        return []
    return sorted(p.name for p in root.iterdir() if (p / "config.toml").is_file())


# -- pipelines ---------------------------------------------------------------
#
# Each pipeline simulates the raw counts once, then evaluates every metric as
# a function of those counts so that the Poisson resampler can attach error
# bars. In exact mode the counts are expectations and no sigma is attached.


@dataclass
class Stage:
    """Simulated raw counts plus the metrics computed from them.

    ``aux`` holds non-count data (phases, bin centres) for plot output.
    """

    counts: dict
    metrics: dict[str, Callable[[dict], float]] = field(default_factory=dict)
    aux: dict = field(default_factory=dict)


def _path_stage(cfg: ScenarioConfig, exact: bool, workers: int) -> Stage:
    def sample(c: ScenarioConfig, tag: str) -> dict:
        if exact:
            path = memsim.path_number_probabilities(c) * c.trials
        else:
            path = memsim.sample_path_counts(c, f"path-{tag}").astype(float)
        fringe = memsim.path_fringe(c, exact=exact, stream=f"fringe-{tag}")
        return {"path": path, "fringe": fringe.counts}

    phases = memsim.fringe_phases()
    trials = cfg.trials
    aux = {"phases": phases}
    counts = {"input": sample(cfg.bypass_memory(), "input"), "output": sample(cfg, "output")}

    def matrix(c, tag) -> metrics.PathNumberMatrix:
        p = np.asarray(c[tag]["path"]) / trials
        v = metrics.fit_fringe(metrics.FringeScan(phases, c[tag]["fringe"])).visibility
        return metrics.PathNumberMatrix(*p, visibility=v)

    def conc(c, tag):
        return metrics.path_concurrence(matrix(c, tag))

    m: dict[str, Callable] = {}
    for tag in ("input", "output"):
        for i, key in enumerate(("p00", "p10", "p01", "p11")):
            m[f"{key}_{tag}"] = lambda c, tag=tag, i=i: float(c[tag]["path"][i]) / trials
        m[f"p1_{tag}"] = lambda c, tag=tag: float(c[tag]["path"][1] + c[tag]["path"][2]) / trials
        m[f"V_{tag}"] = lambda c, tag=tag: matrix(c, tag).visibility
        m[f"V_{tag}_benchmark"] = m[f"V_{tag}"]
        m[f"C_{tag}"] = lambda c, tag=tag: conc(c, tag)
    m["eta"] = lambda c: metrics.transfer_efficiency(conc(c, "input"), conc(c, "output"))
    m["beta"] = lambda c: metrics.contrast_beta(matrix(c, "input").visibility, matrix(c, "output").visibility)
    return Stage(counts, m, aux)


def _visibility_two_photon(fringes: dict) -> float:
    """Mean fitted visibility over the H- and A-referenced fringes."""
    phases = memsim.fringe_phases()
    return float(np.mean([metrics.fit_fringe(metrics.FringeScan(phases, fringes[r])).visibility for r in ("H", "A")]))


def _polarization_stage(cfg: ScenarioConfig, exact: bool, workers: int) -> Stage:
    ideal = memsim.prepare_state(cfg)
    rho_in = memsim.source_state(cfg)
    rho_out, surv = memsim.apply_memory(rho_in, cfg)
    surv_in = memsim.survival(cfg.bypass_memory())
    chsh_settings = metrics.ChshSettings().settings()
    aux = {"phases": memsim.fringe_phases(), "chsh_settings": chsh_settings}

    def sample(rho, surv, tag):
        kw = dict(survival=surv, exact=exact, workers=workers)
        chsh = memsim.simulate_counts(rho, chsh_settings, cfg, stream=f"chsh-{tag}", **kw)
        tomo = memsim.simulate_counts(rho, tomography.SETTINGS, cfg, stream=f"tomo-{tag}", **kw)
        fringes = {
            ref: memsim.simulate_fringe(rho, cfg, reference=ref, stream=f"fringe-{tag}-{ref}", **kw).counts
            for ref in ("H", "A")
        }
        return {"chsh": chsh.counts.astype(float), "tomo": tomo.counts.astype(float), "fringe": fringes}

    counts = {"input": sample(rho_in, surv_in, "input"), "output": sample(rho_out, surv, "output")}

    def rec(c, tag):
        return tomography.reconstruct(tomography.TomographyRecord(c[tag]["tomo"]))

    m = {
        "S_before": lambda c: metrics.chsh_from_counts(c["input"]["chsh"]),
        "S_after": lambda c: metrics.chsh_from_counts(c["output"]["chsh"]),
        "F1": lambda c: metrics.fidelity(rec(c, "input"), ideal),
        "F2": lambda c: metrics.fidelity(rec(c, "output"), rec(c, "input")),
        "V_before": lambda c: _visibility_two_photon(c["input"]["fringe"]),
        "V_after": lambda c: _visibility_two_photon(c["output"]["fringe"]),
        "C_before": lambda c: metrics.wootters_concurrence(rec(c, "input")),
        "C_after": lambda c: metrics.wootters_concurrence(rec(c, "output")),
    }
    m["S_after_bell"] = m["S_after"]
    m["V_before_benchmark"] = m["V_before"]
    m["V_after_benchmark"] = m["V_after"]
    return Stage(counts, m, aux)


def _timetag_stage(cfg: ScenarioConfig, exact: bool, workers: int) -> Stage:
    if exact:
        raise ConfigError("time-tag scenarios have no exact mode")
    det = cfg.detectors
    window = det.coincidence_window_ns
    duration = memsim.duration_ns(cfg)
    counts: dict = {}
    aux: dict = {}
    for tag, c in (("input", cfg.bypass_memory()), ("retrieved", cfg)):
        tags = memsim.simulate_pair_tags(c, stream=f"pairs-{tag}")
        counts[tag] = {
            "coinc": float(timetags.coincidences(tags, "stokes", "antistokes", window)),
            "stokes": float(tags["stokes"].size),
            "antistokes": float(tags["antistokes"].size),
        }

    def g2(c, tag):
        x = c[tag]
        if x["stokes"] == 0 or x["antistokes"] == 0:
            raise ValidationError("g2 needs non-empty channels")
        return x["coinc"] * duration / (x["stokes"] * x["antistokes"] * window)

    def true_coinc(c, tag):
        x = c[tag]
        return x["coinc"] - x["stokes"] * x["antistokes"] * window / duration

    def storage(c):
        denom = true_coinc(c, "input")
        if denom <= 0:
            raise ValidationError("no correlated input coincidences")
        return true_coinc(c, "retrieved") / denom

    m: dict[str, Callable] = {
        "g2_input": lambda c: g2(c, "input"),
        "g2_retrieved": lambda c: g2(c, "retrieved"),
        "storage_efficiency": storage,
    }
    m["g2_benchmark"] = m["g2_retrieved"]

    if cfg.source.pulse.amplitude > 0:
        tags = memsim.simulate_pulse_tags(cfg, PULSE_BIN_NS)
        centers, hist = timetags.delay_histogram(tags, "trigger", "antistokes", PULSE_BIN_NS, det.gate_ns)
        counts["pulse"] = hist.astype(float)
        aux["bin_centers"] = centers

        def fit(c):
            return timetags.fit_gaussian_pulse(centers, c["pulse"])

        m.update(
            pulse_y0=lambda c: fit(c).y0,
            pulse_amplitude=lambda c: fit(c).amplitude,
            pulse_tc=lambda c: fit(c).tc,
            pulse_w=lambda c: fit(c).w,
            pulse_fwhm=lambda c: fit(c).fwhm,
            bandwidth_mhz=lambda c: metrics.bandwidth_from_fwhm(fit(c).fwhm),
        )
    mem = cfg.memory
    if mem.detuning_mhz is not None and mem.absorption_bandwidth_mhz is not None:
        ratio = metrics.far_detuning_ratio(mem.detuning_mhz, mem.absorption_bandwidth_mhz)
        m["far_detuning_ratio"] = lambda c: ratio
    return Stage(counts, m, aux)


_STAGES = {"path": _path_stage, "polarization": _polarization_stage, "timetag": _timetag_stage}

PIPELINE_METRICS = {
    "path": tuple(
        [f"{k}_{t}" for t in ("input", "output") for k in ("p00", "p10", "p01", "p11", "p1", "V", "C")]
        + ["V_input_benchmark", "V_output_benchmark", "eta", "beta"]
    ),
    "polarization": (
        "S_before", "S_after", "S_after_bell", "F1", "F2", "V_before", "V_after",
        "V_before_benchmark", "V_after_benchmark", "C_before", "C_after",
    ),
    "timetag": (
        "g2_input", "g2_retrieved", "g2_benchmark", "storage_efficiency", "pulse_y0", "pulse_amplitude",
        "pulse_tc", "pulse_w", "pulse_fwhm", "bandwidth_mhz", "far_detuning_ratio",
    ),
}


# -- reports -----------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    metric: str
    value: float
    sigma: float | None  # None marks an exact value
    expected: Expectation | None = None

    @property
    def passed(self) -> bool | None:
        return None if self.expected is None else self.expected.passes(self.value)

    def value_text(self) -> str:
        return f"{self.value:.6g} (exact)" if self.sigma is None else f"{self.value:.6g} ± {self.sigma:.2g}"


@dataclass(frozen=True)
class ScenarioReport:
    name: str
    config_hash: str
    seed: int
    version: str
    exact: bool
    rows: tuple[ReportRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)

    def row(self, metric: str) -> ReportRow:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def to_text(self) -> str:
        head = [
            f"scenario {self.name}",
            f"config_hash {self.config_hash}  seed {self.seed}  version {self.version}"
            f"  mode {'exact' if self.exact else 'sampled'}",
            "",
            f"{'metric':<22} {'simulated':<28} {'expected':<24} {'source':<10} result",
        ]
        body = []
        for r in self.rows:
            exp = r.expected.describe() if r.expected else "-"
            prov = r.expected.provenance if r.expected else "-"
            verdict = {True: "PASS", False: "FAIL", None: "-"}[r.passed]
            body.append(f"{r.metric:<22} {r.value_text():<28} {exp:<24} {prov:<10} {verdict}")
        tail = ["", f"overall {'PASS' if self.passed else 'FAIL'}"]
        return "\n".join(head + body + tail) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value", "sigma", "expected", "tolerance", "provenance", "passed",
                    "config_hash", "seed", "version"])
        for r in self.rows:
            e = r.expected
            w.writerow([
                r.metric, repr(r.value), "exact" if r.sigma is None else repr(r.sigma),
                "" if e is None else repr(e.value),
                "" if e is None else ("min" if e.tolerance is None else repr(e.tolerance)),
                "" if e is None else e.provenance,
                "" if r.passed is None else str(r.passed).lower(),
                self.config_hash, self.seed, self.version,
            ])
        return buf.getvalue()


def simulate_stage(cfg: ScenarioConfig, pipeline: str, *, exact: bool = False, workers: int = 1) -> Stage:
    if pipeline not in _STAGES:
        raise ConfigError(f"unknown pipeline {pipeline!r}")
    if cfg.trials <= 0:
        raise ConfigError("scenario needs trials > 0")
    return _STAGES[pipeline](cfg, exact, workers)


def default_pipeline(cfg: ScenarioConfig) -> str:
    if cfg.source.state_kind == "hybrid":
        return "path"
    return "timetag" if cfg.source.pair_rate > 0 else "polarization"


def run_pipeline(
    cfg: ScenarioConfig,
    pipeline: str,
    *,
    exact: bool = False,
    names=None,
    n_resamples: int = DEFAULT_RESAMPLES,
    workers: int = 1,
) -> dict[str, tuple[float, float | None]]:
    """Evaluate pipeline metrics; returns ``name -> (value, sigma or None)``."""
    stage = simulate_stage(cfg, pipeline, exact=exact, workers=workers)
    wanted = list(stage.metrics) if names is None else list(names)
    out = {}
    for name in wanted:
        if name not in stage.metrics:
            raise AnalysisError(f"{name}: not produced by the {pipeline} pipeline for this config")
        fn = stage.metrics[name]
        try:
            if exact:
                out[name] = (float(fn(stage.counts)), None)
            else:
                rep = poisson_resample_metric(stage.counts, fn, n=n_resamples, seed=cfg.seed)
                out[name] = (rep.value, rep.sigma)
        except (ValidationError, AnalysisError, ArithmeticError) as exc:
            raise AnalysisError(f"{name}: {exc}") from exc
    return out


def run_scenario(
    fixture: ScenarioFixture | str,
    *,
    seed: int | None = None,
    exact: bool | None = None,
    n_resamples: int = DEFAULT_RESAMPLES,
    workers: int = 1,
) -> ScenarioReport:
    """Simulate a fixture and compare every expected metric."""
    f = load_fixture(fixture) if isinstance(fixture, (str, Path)) else fixture
    cfg = f.config if seed is None else f.config.replace(seed=int(seed))
    use_exact = f.exact if exact is None else bool(exact)
    values = run_pipeline(
        cfg, f.pipeline, exact=use_exact, names=list(f.expected), n_resamples=n_resamples, workers=workers
    )
    rows = tuple(ReportRow(name, v, s, f.expected[name]) for name, (v, s) in values.items())
    return ScenarioReport(f.name, config_hash(cfg), cfg.seed, __version__, use_exact, rows)
