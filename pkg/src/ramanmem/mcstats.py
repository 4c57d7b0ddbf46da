"""Poisson Monte-Carlo error bars for metrics computed from counts."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from .errors import AnalysisError, ValidationError

DEFAULT_RESAMPLES = 20
MAX_RETRIES = 10


@dataclass(frozen=True)
class ErrorBarReport:
    value: float
    sigma: float
    n_resamples: int = DEFAULT_RESAMPLES
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValidationError("sigma must be non-negative")
        if self.n_resamples < 2:
            raise ValidationError("need at least 2 resamples")

    def __str__(self) -> str:
        return f"{self.value:.6g} ± {self.sigma:.2g}"


def _leaves(counts: Any) -> list[np.ndarray]:
    if isinstance(counts, dict):
        return [a for k in sorted(counts) for a in _leaves(counts[k])]
    if isinstance(counts, (list, tuple)) and counts and not np.isscalar(counts[0]):
        return [a for c in counts for a in _leaves(c)]
    return [np.asarray(counts, dtype=float)]


def _rebuild(template: Any, leaves: list[np.ndarray]) -> Any:
    if isinstance(template, dict):
        return {k: _rebuild(template[k], leaves) for k in sorted(template)}
    if isinstance(template, (list, tuple)) and template and not np.isscalar(template[0]):
        return type(template)(_rebuild(c, leaves) for c in template)
    arr = leaves.pop(0)
    return arr if np.ndim(arr) else float(arr)


def poisson_resample_metric(
    counts: Any,
    metric: Callable[[Any], float],
    n: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> ErrorBarReport:
    """Error bar of ``metric(counts)`` from Poisson-redrawn copies of the counts.

    ``counts`` may be a number, an array, or nested dicts / lists / tuples of
    them; every resample has the same structure with each entry replaced by
    ``Poisson(entry)``. ``sigma`` is the sample standard deviation of the
    metric over ``n`` resamples. A resample on which the metric raises or is
    not finite is redrawn, up to ten times.
    """
    if n < 2:
        raise ValidationError("need at least 2 resamples")
    leaves = _leaves(counts)
    for leaf in leaves:
        if np.any(leaf < 0) or not np.all(np.isfinite(leaf)):
            raise ValidationError("counts must be finite and non-negative")
    value = float(metric(counts))
    if not np.isfinite(value):
        raise AnalysisError("metric is not finite on the observed counts")
    rng = np.random.default_rng(seed)
    samples = np.empty(n)
    for i in range(n):
        for attempt in range(MAX_RETRIES + 1):
            drawn = [np.asarray(rng.poisson(leaf), dtype=float) for leaf in leaves]
            try:
                v = float(metric(_rebuild(counts, drawn)))
            except (ValidationError, AnalysisError, ArithmeticError):
                v = np.nan
            if np.isfinite(v):
                samples[i] = v
                break
        else:
            raise AnalysisError(f"metric undefined on resample {i} after {MAX_RETRIES} redraws")
    return ErrorBarReport(value, float(np.std(samples, ddof=1)), n, seed)
