"""Time-tag correlation analysis.

Coincidence counting with one-to-one matching, normalised cross-correlation,
the heralded anticorrelation parameter and a damped least-squares fit of a
Gaussian pulse to a delay histogram.

Stream file format, globally sorted by time::

    stokes 12.5
    antistokes 19.25

Histogram CSV: ``bin_center_ns,count`` with a header line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConvergenceError, DegenerateDataError, ValidationError

CHANNELS = ("stokes", "antistokes", "trigger")


class TimeTagStream:
    """Per-channel strictly ascending float64 timestamps in ns.

    Channel names are free-form; the simulators use ``stokes``,
    ``antistokes`` and ``trigger`` (plus ``ch1``/``ch2`` for splitter set-ups).
    """

    def __init__(self, channels: Mapping[str, np.ndarray]):
        data = {}
        for name, tags in channels.items():
            if not name or any(c.isspace() for c in name):
                raise ValidationError(f"bad channel name {name!r}")
            t = np.asarray(tags, dtype=np.float64)
            if t.ndim != 1 or not np.all(np.isfinite(t)):
                raise ValidationError(f"channel {name}: timestamps must be a finite 1-D array")
            if t.size > 1 and np.any(np.diff(t) <= 0):
                raise ValidationError(f"channel {name}: timestamps must be strictly ascending")
            t = t.copy()
            t.setflags(write=False)
            data[name] = t
        self._channels = data

    @property
    def channels(self) -> dict[str, np.ndarray]:
        return dict(self._channels)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self._channels[name]
        except KeyError:
            raise ValidationError(f"unknown channel {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self._channels

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeTagStream) or set(self._channels) != set(other._channels):
            return False
        return all(np.array_equal(v, other._channels[k]) for k, v in self._channels.items())

    def shifted(self, delta_ns: float) -> "TimeTagStream":
        return TimeTagStream({k: v + delta_ns for k, v in self._channels.items()})

    def to_text(self) -> str:
        names = sorted(self._channels)
        times = np.concatenate([self._channels[n] for n in names]) if names else np.empty(0)
        owner = (np.concatenate([np.full(self._channels[n].size, i) for i, n in enumerate(names)])
                 if names else np.empty(0, int))
        order = np.lexsort((owner, times))
        tl = times.tolist()
        return "".join(f"{names[owner[i]]} {tl[i]!r}\n" for i in order)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "TimeTagStream":
        buckets: dict[str, list[float]] = {}
        last = -np.inf
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) != 2:
                raise ValidationError(f"line {lineno}: expected 'channel_id timestamp_ns'")
            try:
                t = float(toks[1])
            except ValueError:
                raise ValidationError(f"line {lineno}: bad timestamp {toks[1]!r}") from None
            if t < last:
                raise ValidationError(f"line {lineno}: file is not sorted by timestamp")
            last = t
            buckets.setdefault(toks[0], []).append(t)
        return cls({k: np.array(v) for k, v in buckets.items()})

    @classmethod
    def read(cls, path) -> "TimeTagStream":
        return cls.from_text(Path(path).read_text())


def _match(a: np.ndarray, b: np.ndarray, half: float) -> int:
    """Greedy earliest one-to-one matching of two sorted arrays."""
    i = j = n = 0
    la, lb = a.tolist(), b.tolist()
    na, nb = len(la), len(lb)
    while i < na and j < nb:
        d = la[i] - lb[j]
        if d > half:
            j += 1
        elif d < -half:
            i += 1
        else:
            n += 1
            i += 1
            j += 1
    return n


def coincidences(s: TimeTagStream, ch_a: str, ch_b: str, window_ns: float) -> int:
    """Pairs with ``|t_a - t_b| <= window/2``, each tag used at most once."""
    if window_ns <= 0:
        raise ValidationError("coincidence window must be positive")
    return _match(s[ch_a], s[ch_b], 0.5 * window_ns)


def g2_cross(s: TimeTagStream, ch_a: str, ch_b: str, window_ns: float, duration_ns: float) -> float:
    """``N_c * T / (N_a * N_b * window)``; 1 for uncorrelated streams."""
    na, nb = s[ch_a].size, s[ch_b].size
    if na == 0 or nb == 0:
        raise ValidationError("g2 needs non-empty channels")
    if duration_ns <= 0:
        raise ValidationError("duration must be positive")
    return coincidences(s, ch_a, ch_b, window_ns) * duration_ns / (na * nb * window_ns)


def trigger_hits(trig: np.ndarray, tags: np.ndarray, half: float) -> np.ndarray:
    """Per trigger: is there a tag within ``half`` of it."""
    lo = np.searchsorted(tags, trig - half, side="left")
    hi = np.searchsorted(tags, trig + half, side="right")
    return hi > lo


def alpha_heralded(s: TimeTagStream, trigger: str, ch_1: str, ch_2: str, window_ns: float) -> float:
    """Heralded anticorrelation ``N_T * N_T12 / (N_T1 * N_T2)``.

    Counts are over trigger windows of width ``window_ns`` centred on each
    trigger. Ideal single photons give 0, coherent light 1, thermal light
    more than 1.
    """
    trig = s[trigger]
    if trig.size == 0:
        raise ValidationError("no triggers")
    half = 0.5 * window_ns
    h1 = trigger_hits(trig, s[ch_1], half)
    h2 = trigger_hits(trig, s[ch_2], half)
    n1, n2, n12 = int(h1.sum()), int(h2.sum()), int((h1 & h2).sum())
    if n1 == 0 or n2 == 0:
        raise DegenerateDataError("a detector never fired inside a trigger window")
    return trig.size * n12 / (n1 * n2)


def delay_histogram(
    s: TimeTagStream, start: str, stop: str, bin_ns: float = 1.0, range_ns: float = 100.0
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of each stop tag's delay after the latest preceding start tag."""
    starts, stops = s[start], s[stop]
    if bin_ns <= 0 or range_ns <= bin_ns:
        raise ValidationError("need 0 < bin_ns < range_ns")
    k = np.searchsorted(starts, stops, side="right") - 1
    ok = k >= 0
    delays = stops[ok] - starts[k[ok]]
    edges = np.arange(0.0, range_ns + 0.5 * bin_ns, bin_ns)
    counts, _ = np.histogram(delays, edges)
    return 0.5 * (edges[1:] + edges[:-1]), counts


def write_histogram(path, centers, counts) -> None:
    lines = ["bin_center_ns,count"]
    for c, n in zip(map(float, centers), map(float, counts)):
        lines.append(f"{c!r},{int(n) if n.is_integer() else n!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_histogram(path) -> tuple[np.ndarray, np.ndarray]:
    centers, counts = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("bin_center"):
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ValidationError(f"line {lineno}: expected 'bin_center_ns,count'")
        try:
            centers.append(float(parts[0]))
            counts.append(float(parts[1]))
        except ValueError:
            raise ValidationError(f"line {lineno}: non-numeric entry") from None
    return np.array(centers), np.array(counts)


@dataclass(frozen=True)
class PulseFit:
    y0: float
    amplitude: float
    tc: float
    w: float
    iterations: int = 0

    @property
    def fwhm(self) -> float:
        return self.w * np.sqrt(2.0 * np.log(2.0))

    def model(self, t) -> np.ndarray:
        return gaussian_pulse(t, self.y0, self.amplitude, self.tc, self.w)


def gaussian_pulse(t, y0, amplitude, tc, w) -> np.ndarray:
    """``y0 + A exp(-2 ((t - tc) / w)**2)``."""
    t = np.asarray(t, dtype=float)
    return y0 + amplitude * np.exp(-2.0 * ((t - tc) / w) ** 2)


def _jacobian(t, p) -> np.ndarray:
    y0, a, tc, w = p
    x = (t - tc) / w
    e = np.exp(-2.0 * x * x)
    return np.column_stack([np.ones_like(t), e, a * e * 4.0 * x / w, a * e * 4.0 * x * x / w])


def fit_gaussian_pulse(centers, counts, *, max_iter: int = 200, rtol: float = 1e-6) -> PulseFit:
    """Levenberg-Marquardt fit of :func:`gaussian_pulse` to a histogram.

    Starts from ``y0 = min``, ``A = max - min``, ``tc`` at the highest bin
    and ``w`` from the RMS width of the background-subtracted histogram
    (``w = 2 sigma`` in this parametrisation). Stops when an accepted step
    changes every parameter by less than ``rtol`` relative.
    """
    t = np.asarray(centers, dtype=float)
    y = np.asarray(counts, dtype=float)
    if t.shape != y.shape or t.ndim != 1:
        raise ValidationError("bin centres and counts must be 1-D and equally long")
    if t.size < 5:
        raise ValidationError("pulse fit needs at least 5 bins")
    if not np.all(np.isfinite(y)) or not np.all(np.isfinite(t)):
        raise ValidationError("histogram must be finite")
    lo, hi = y.min(), y.max()
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        raise DegenerateDataError("flat histogram has no pulse to fit")

    weights = y - lo
    mean = np.sum(weights * t) / weights.sum()
    rms = np.sqrt(np.sum(weights * (t - mean) ** 2) / weights.sum())
    spacing = np.min(np.diff(np.sort(t))) if t.size > 1 else 1.0
    p = np.array([lo, hi - lo, t[np.argmax(y)], max(2.0 * rms, spacing)])

    def cost(q):
        r = y - gaussian_pulse(t, *q)
        return r @ r

    lam = 1e-3
    c = cost(p)
    for it in range(1, max_iter + 1):
        r = y - gaussian_pulse(t, *p)
        jac = _jacobian(t, p)
        jtj = jac.T @ jac
        g = jac.T @ r
        while True:
            damped = jtj + lam * np.diag(np.diag(jtj) + 1e-12)
            try:
                step = np.linalg.solve(damped, g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                if lam > 1e12:
                    raise ConvergenceError("pulse fit normal equations are singular") from None
                continue
            trial = p + step
            if trial[3] <= 0:
                lam *= 10.0
            else:
                ct = cost(trial)
                if ct <= c:
                    break
                lam *= 10.0
            if lam > 1e12:
                # no downhill step left: the current point is a minimum
                return _finish(p, it)
        p, c = trial, ct
        lam = max(lam / 10.0, 1e-12)
        scale = np.maximum(np.abs(p), 1e-12)
        if np.all(np.abs(step) <= rtol * scale):
            return _finish(p, it)
    raise ConvergenceError(f"pulse fit did not converge in {max_iter} iterations")


def _finish(p, iterations: int) -> PulseFit:
    y0, a, tc, w = (float(x) for x in p)
    if a <= 0:
        raise DegenerateDataError("fitted pulse amplitude is not positive")
    return PulseFit(y0, a, tc, abs(w), iterations)
