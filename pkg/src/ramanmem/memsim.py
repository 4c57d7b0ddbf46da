"""Forward model of the storage experiments.

Source state, memory channel, loss chain and detectors turn a
:class:`~ramanmem.config.ScenarioConfig` into coincidence tables, fringe
scans, path-number statistics and time-tag streams.

Qubit order: in the two-photon basis ``[HH, HV, VH, VV]`` the first photon is
the anti-Stokes photon (the one that is stored) and the second is the Stokes
photon. In the hybrid basis ``[UH, UV, DH, DV]`` the memory acts on the
polarisation, i.e. the second factor.

Randomness: every block of draws gets its own ``SeedSequence`` keyed by
``(seed, stream name, setting index)``, so results do not depend on the order
or the parallelism in which settings are simulated.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import qstate
from .config import ScenarioConfig
from .errors import ConfigError, ValidationError
from .metrics import FringeScan, PathNumberMatrix, fit_fringe
from .tables import CoincidenceTable
from .timetags import TimeTagStream

_PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
_PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rng_for(seed: int, stream: str, index: int = 0) -> np.random.Generator:
    """Independent generator for one block of draws."""
    key = zlib.crc32(stream.encode())
    return np.random.default_rng(np.random.SeedSequence([seed, key, index]))


def stored_qubit(cfg: ScenarioConfig) -> int:
    return 1 if cfg.source.state_kind == "hybrid" else 0


def prepare_state(cfg: ScenarioConfig) -> qstate.DensityMatrix:
    """Ideal pure state of the source."""
    src = cfg.source
    if src.state_kind == "hybrid":
        amps = [1.0, 0.0, 0.0, np.exp(1j * src.theta1)]
        return qstate.normalize(amps, qstate.PATH_POL_LABELS).density()
    if src.state_kind == "two_photon":
        amps = [0.0, 1.0, np.exp(1j * src.theta2), 0.0]
        return qstate.normalize(amps, qstate.POL_POL_LABELS).density()
    raise ConfigError(f"unknown state_kind {src.state_kind!r}")


def source_state(cfg: ScenarioConfig) -> np.ndarray:
    """Prepared state mixed with white noise by ``entangled_fraction``."""
    return qstate.werner(cfg.source.entangled_fraction, prepare_state(cfg))


def _on_qubit(op: np.ndarray, qubit: int) -> np.ndarray:
    eye = np.eye(2, dtype=complex)
    return np.kron(op, eye) if qubit == 0 else np.kron(eye, op)


def depolarize(rho: np.ndarray, weight: float, qubit: int) -> np.ndarray:
    """``(1 - w) rho + w * (I/2 on qubit) (x) Tr_qubit rho``."""
    out = (1.0 - 0.75 * weight) * rho
    for p in (_PAULI_X, _PAULI_Y, _PAULI_Z):
        k = _on_qubit(p, qubit)
        out = out + 0.25 * weight * (k @ rho @ k)
    return out


def dephase(rho: np.ndarray, weight: float, qubit: int) -> np.ndarray:
    """Scale the qubit's H/V coherences by ``1 - weight``."""
    k = _on_qubit(_PAULI_Z, qubit)
    return (1.0 - 0.5 * weight) * rho + 0.5 * weight * (k @ rho @ k)


def survival(cfg: ScenarioConfig) -> float:
    """Probability that the stored photon reaches the detectors."""
    return cfg.memory.efficiency * cfg.losses.filter_transmission * cfg.losses.fiber_coupling


def apply_memory(rho, cfg: ScenarioConfig) -> tuple[qstate.DensityMatrix, float]:
    """Post-selected output state and photon survival probability.

    Depolarising then dephasing noise acts on the stored qubit only; loss is
    returned separately as the survival probability.
    """
    r = qstate.as_matrix(rho)
    if r.shape != (4, 4):
        raise ValidationError("memory channel acts on two-qubit states")
    q = stored_qubit(cfg)
    out = dephase(depolarize(r, cfg.memory.depolarizing, q), cfg.memory.dephasing, q)
    return qstate.DensityMatrix(0.5 * (out + out.conj().T)), survival(cfg)


def polarization_projector(cfg: ScenarioConfig) -> Callable:
    """Projector builder for two-photon settings.

    Numeric angles are mirrored by the per-arm analyser frame sign; labels
    name absolute polarisations and are left alone.
    """
    signs = cfg.analyzer_frame_sign

    def build(setting):
        entries = [s if isinstance(s, str) else sign * float(s) for s, sign in zip(setting, signs)]
        return qstate.projector(entries)

    return build


def accidental_mean(cfg: ScenarioConfig, trials: int) -> float:
    """Expected uncorrelated coincidences between two independent detectors."""
    det = cfg.detectors
    return det.dark_rate**2 * det.coincidence_window_ns * 1e-9 * det.gate_ns * 1e-9 * trials


def simulate_counts(
    rho,
    settings: Sequence[tuple],
    cfg: ScenarioConfig,
    *,
    survival: float = 1.0,
    detection: float | None = None,
    accidentals: float | None = None,
    trials: int | None = None,
    exact: bool = False,
    stream: str = "counts",
    projector_fn: Callable | None = None,
    workers: int = 1,
) -> CoincidenceTable:
    """Coincidence counts per setting.

    Each setting gets ``Binomial(trials, P_born * detection)`` true
    coincidences plus ``Poisson(accidentals)``. ``detection`` defaults to
    ``survival * detector_efficiency**2`` and ``accidentals`` to
    :func:`accidental_mean`. With ``exact=True`` the expected counts are
    returned as floats instead.
    """
    r = qstate.as_matrix(rho)
    n = cfg.trials if trials is None else int(trials)
    build = projector_fn or polarization_projector(cfg)
    if detection is None:
        detection = survival * cfg.detectors.efficiency**2
    if accidentals is None:
        accidentals = accidental_mean(cfg, n)
    settings = [tuple(s) for s in settings]
    probs = np.array([qstate.born_probability(r, build(s)) * detection for s in settings])
    probs = np.clip(probs, 0.0, 1.0)
    if exact:
        return CoincidenceTable(tuple(settings), n * probs + accidentals, n, cfg.seed)

    def draw(k: int) -> int:
        rng = rng_for(cfg.seed, stream, k)
        c = rng.binomial(n, probs[k]) + rng.poisson(accidentals)
        return min(int(c), n)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(draw, range(len(settings))))
    else:
        counts = [draw(k) for k in range(len(settings))]
    return CoincidenceTable(tuple(settings), np.array(counts, dtype=np.int64), n, cfg.seed)


# -- fringes -----------------------------------------------------------------


def fringe_phases(n: int = 12) -> np.ndarray:
    return 2 * np.pi * np.arange(n) / n


def simulate_fringe(
    rho,
    cfg: ScenarioConfig,
    phases: Sequence[float] | None = None,
    *,
    reference: str = "D",
    survival: float = 1.0,
    exact: bool = False,
    stream: str = "fringe",
    workers: int = 1,
) -> FringeScan:
    """Coincidences against an interference phase.

    Hybrid state: the two paths are recombined with relative phase ``phase``
    and the polarisation is analysed along ``reference``. Two-photon state:
    the stored photon's linear analyser turns by ``phase / 2`` while the
    partner is projected on ``reference``.
    """
    phases = fringe_phases() if phases is None else np.asarray(phases, dtype=float)
    settings = [(float(p), reference) for p in phases]
    if cfg.source.state_kind == "hybrid":

        def build(setting):
            k = np.kron(qstate.path_ket(setting[0]), qstate.ket(setting[1]))
            return np.outer(k, k.conj())

        # heralded: one detector after the herald, accidentals from its dark counts
        detection = cfg.source.heralding_efficiency * survival * cfg.detectors.efficiency
        n = cfg.trials
        accidentals = cfg.detectors.dark_rate * cfg.detectors.coincidence_window_ns * 1e-9 * n
        table = simulate_counts(
            rho, settings, cfg, detection=detection, accidentals=accidentals,
            exact=exact, stream=stream, projector_fn=build, workers=workers,
        )
    else:
        sign = cfg.analyzer_frame_sign[0]

        def build(setting):
            k = np.kron(qstate.linear_ket(sign * setting[0] / 2), qstate.ket(setting[1]))
            return np.outer(k, k.conj())

        table = simulate_counts(
            rho, settings, cfg, survival=survival, exact=exact, stream=stream,
            projector_fn=build, workers=workers,
        )
    return FringeScan(phases, table.counts)


# -- path-number statistics --------------------------------------------------


def _no_click_generating(cfg: ScenarioConfig, x: float) -> float:
    """E[x**n] for the photon number n entering the interferometer."""
    if cfg.source.pair_rate == 0:
        # no pairs, nothing to herald
        return 1.0
    h = cfg.source.heralding_efficiency
    mu = cfg.source.pair_rate * cfg.detectors.coincidence_window_ns * 1e-9
    return (1.0 - h + h * x) * np.exp(-mu * (1.0 - x))


def path_number_probabilities(cfg: ScenarioConfig) -> np.ndarray:
    """Exact ``[p00, p10, p01, p11]`` for threshold detectors on paths U, D.

    A trial carries the heralded photon with probability
    ``heralding_efficiency`` plus Poisson extra pairs of mean
    ``pair_rate * window``; each photon goes to U with ``path_split`` and is
    detected with ``survival * detector efficiency``. Dark clicks come at
    ``dark_rate * window`` per detector.
    """
    eta = survival(cfg) * cfg.detectors.efficiency
    s = cfg.source.path_split
    d = 1.0 - np.exp(-cfg.detectors.dark_rate * cfg.detectors.coincidence_window_ns * 1e-9)
    none = _no_click_generating(cfg, 1.0 - eta) * (1.0 - d) ** 2
    no_u = _no_click_generating(cfg, 1.0 - s * eta) * (1.0 - d)
    no_d = _no_click_generating(cfg, 1.0 - (1.0 - s) * eta) * (1.0 - d)
    p = np.array([none, no_d - none, no_u - none, 1.0 - no_u - no_d + none])
    return np.clip(p, 0.0, 1.0)


def sample_path_counts(cfg: ScenarioConfig, stream: str = "path-number") -> np.ndarray:
    """Multinomial counts of the four click patterns over ``cfg.trials``."""
    p = path_number_probabilities(cfg)
    return rng_for(cfg.seed, stream).multinomial(cfg.trials, p / p.sum())


def path_fringe(cfg: ScenarioConfig, *, exact: bool = False, stream: str = "path-fringe") -> FringeScan:
    """Interference fringe of the hybrid state after the memory set by ``cfg``."""
    rho, surv = apply_memory(source_state(cfg), cfg)
    return simulate_fringe(rho, cfg, survival=surv, exact=exact, stream=stream)


def simulate_path_number(cfg: ScenarioConfig, *, exact: bool = False, stream: str = "path-number") -> PathNumberMatrix:
    """Path-number matrix with visibility from the simulated fringe."""
    if cfg.source.state_kind != "hybrid":
        raise ConfigError("path-number statistics need the hybrid state")
    if exact:
        p = path_number_probabilities(cfg)
    else:
        if cfg.trials <= 0:
            raise ConfigError("sampling path-number statistics needs trials > 0")
        p = sample_path_counts(cfg, stream) / cfg.trials
    if p[1] == 0 and p[2] == 0:
        return PathNumberMatrix(*p, visibility=0.0)
    fit = fit_fringe(path_fringe(cfg, exact=exact, stream=stream + "-fringe"))
    return PathNumberMatrix(*p, visibility=fit.visibility)


# -- time tags ---------------------------------------------------------------


def duration_ns(cfg: ScenarioConfig) -> float:
    return cfg.trials * cfg.detectors.gate_ns


def simulate_pair_tags(cfg: ScenarioConfig, *, stream: str = "pairs") -> TimeTagStream:
    """Stokes / anti-Stokes detections from a pair source plus noise clicks.

    Pairs arrive as a Poisson process at ``pair_rate`` over
    ``trials * gate_ns``. The Stokes photon is detected with the fixed loss
    chain, the anti-Stokes photon additionally passes the memory. Relative
    timing jitter is the pulse's Gaussian sigma ``w/2``; each channel also
    gets ``dark_rate`` uncorrelated clicks.
    """
    rng = rng_for(cfg.seed, stream)
    total = duration_ns(cfg)
    n_pairs = rng.poisson(cfg.source.pair_rate * total * 1e-9)
    t = rng.uniform(0.0, total, n_pairs)
    eta_s = cfg.losses.transmission * cfg.detectors.efficiency
    eta_as = survival(cfg) * cfg.detectors.efficiency
    keep_s = rng.random(n_pairs) < eta_s
    keep_as = rng.random(n_pairs) < eta_as
    jitter = rng.normal(0.0, cfg.source.pulse.w_ns / 2.0, n_pairs)
    n_dark = rng.poisson(cfg.detectors.dark_rate * total * 1e-9, size=2)
    stokes = np.concatenate([t[keep_s], rng.uniform(0.0, total, n_dark[0])])
    anti = np.concatenate([(t + jitter)[keep_as], rng.uniform(0.0, total, n_dark[1])])
    return TimeTagStream({"stokes": _strict_sort(stokes), "antistokes": _strict_sort(anti)})


def simulate_pulse_tags(
    cfg: ScenarioConfig, bin_ns: float = 1.0, n_triggers: int = 10_000, *, stream: str = "pulse"
) -> TimeTagStream:
    """Trigger and anti-Stokes tags whose delay histogram follows the pulse.

    ``n_triggers`` triggers repeat every ``gate_ns``. The pulse parameters
    are expected counts per ``bin_ns`` bin of the delay histogram
    accumulated over all triggers: ``y0`` flat background plus a Gaussian of
    peak ``amplitude``, centre ``tc_ns`` and width ``w_ns``.
    """
    pulse = cfg.source.pulse
    period = cfg.detectors.gate_ns
    rng = rng_for(cfg.seed, stream)
    triggers = period * np.arange(n_triggers, dtype=float)
    n_sig = rng.poisson(pulse.amplitude * pulse.w_ns * np.sqrt(np.pi / 2) / bin_ns)
    n_bg = rng.poisson(pulse.y0 * period / bin_ns)
    sig = rng.normal(pulse.tc_ns, pulse.w_ns / 2.0, n_sig)
    bg = rng.uniform(0.0, period, n_bg)
    delays = np.concatenate([sig, bg])
    which = rng.integers(0, n_triggers, delays.size)
    # a delay outside [0, period) belongs to no trigger window; drop it
    ok = (delays >= 0) & (delays < period)
    anti = triggers[which[ok]] + delays[ok]
    return TimeTagStream({"trigger": triggers, "antistokes": _strict_sort(anti)})


def simulate_heralded_tags(
    kind: str,
    n_triggers: int,
    mean_photons: float,
    efficiency: float = 1.0,
    period_ns: float = 1000.0,
    seed: int = 0,
) -> TimeTagStream:
    """Trigger plus two detectors behind a 50:50 splitter.

    ``kind`` sets the photon-number statistics per trigger: ``"single"``
    (at most one photon, present with probability ``mean_photons``),
    ``"coherent"`` (Poisson) or ``"thermal"`` (geometric).
    """
    rng = rng_for(seed, f"heralded-{kind}")
    if kind == "single":
        if not 0 <= mean_photons <= 1:
            raise ValidationError("single-photon occupation must lie in [0, 1]")
        n = (rng.random(n_triggers) < mean_photons).astype(np.int64)
    elif kind == "coherent":
        n = rng.poisson(mean_photons, n_triggers)
    elif kind == "thermal":
        n = rng.geometric(1.0 / (1.0 + mean_photons), n_triggers) - 1
    else:
        raise ValidationError(f"unknown photon statistics {kind!r}")
    triggers = period_ns * np.arange(n_triggers, dtype=float)
    owner = np.repeat(np.arange(n_triggers), n)
    detected = rng.random(owner.size) < efficiency
    port = rng.random(owner.size) < 0.5
    offset = rng.uniform(-0.5, 0.5, owner.size)
    times = triggers[owner] + offset
    ch1 = times[detected & port]
    ch2 = times[detected & ~port]
    # threshold detectors: one click per trigger window at most
    return TimeTagStream(
        {"trigger": triggers, "ch1": _one_per_window(ch1, period_ns), "ch2": _one_per_window(ch2, period_ns)}
    )


def _one_per_window(times: np.ndarray, period: float) -> np.ndarray:
    times = np.sort(times)
    idx = np.floor((times + 0.5 * period) / period)
    _, first = np.unique(idx, return_index=True)
    return times[first]


def _strict_sort(t: np.ndarray) -> np.ndarray:
    t = np.sort(t)
    if t.size > 1:
        t = t[np.concatenate([[True], np.diff(t) > 0])]
    return t


def expected_pair_g2(cfg: ScenarioConfig) -> float:
    """Analytic g2 of :func:`simulate_pair_tags` streams (low-rate limit).

    Correlated pairs fall inside the window with probability
    ``erf(window / (2 sqrt2 sigma))`` where sigma is the timing jitter.
    """
    from math import erf, sqrt

    det = cfg.detectors
    rate = cfg.source.pair_rate
    eta_s = cfg.losses.transmission * det.efficiency
    eta_as = survival(cfg) * det.efficiency
    r_s = rate * eta_s + det.dark_rate
    r_as = rate * eta_as + det.dark_rate
    if r_s == 0 or r_as == 0:
        raise ValidationError("g2 needs non-zero singles rates")
    sigma = cfg.source.pulse.w_ns / 2.0
    q = erf(det.coincidence_window_ns / (2.0 * sqrt(2.0) * sigma))
    tau_s = det.coincidence_window_ns * 1e-9
    return 1.0 + rate * eta_s * eta_as * q / (r_s * r_as * tau_s)
