"""Coincidence-count tables keyed by analyser settings, with a text format.

A setting is a tuple with one entry per photon; each entry is either a
polarisation label (``"H"``, ``"D"``, ...) or a linear analyser angle in
radians. The text format has one line per setting::

    # trials=100000 seed=7
    0.0 0.39269908169872414 8536
    H V 50012
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError


def _same_entry(x, y, atol: float) -> bool:
    if isinstance(x, str) or isinstance(y, str):
        return x == y
    # analysers at theta and theta + pi are the same projector
    d = (float(x) - float(y)) % np.pi
    return min(d, np.pi - d) <= atol


@dataclass(frozen=True, eq=False)
class CoincidenceTable:
    settings: tuple
    counts: np.ndarray
    trials: int = 0
    seed: int | None = None

    def __post_init__(self):
        settings = tuple(tuple(s) for s in self.settings)
        counts = np.asarray(self.counts)
        if counts.shape != (len(settings),):
            raise ValidationError("one count per setting required")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        if not np.issubdtype(counts.dtype, np.number):
            raise ValidationError("counts must be numeric")
        object.__setattr__(self, "settings", settings)
        object.__setattr__(self, "counts", counts)

    def __len__(self):
        return len(self.settings)

    def index(self, setting: Sequence, atol: float = 1e-9) -> int:
        for i, s in enumerate(self.settings):
            if len(s) == len(setting) and all(_same_entry(a, b, atol) for a, b in zip(s, setting)):
                return i
        raise ValidationError(f"setting {tuple(setting)!r} not in table")

    def count(self, setting: Sequence, atol: float = 1e-9) -> float:
        return self.counts[self.index(setting, atol)]

    def with_counts(self, counts) -> "CoincidenceTable":
        return CoincidenceTable(self.settings, np.asarray(counts), self.trials, self.seed)

    def to_text(self) -> str:
        lines = [f"# trials={self.trials} seed={self.seed}"]
        for setting, c in zip(self.settings, self.counts):
            cols = [s if isinstance(s, str) else repr(float(s)) for s in setting]
            value = repr(float(c)) if np.issubdtype(self.counts.dtype, np.floating) else str(int(c))
            lines.append(" ".join(cols + [value]))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "CoincidenceTable":
        return cls._parse(text.splitlines())

    @classmethod
    def read(cls, path) -> "CoincidenceTable":
        return cls._parse(Path(path).read_text().splitlines())

    @classmethod
    def _parse(cls, lines: Iterable[str]) -> "CoincidenceTable":
        settings, counts = [], []
        trials, seed = 0, None
        for lineno, raw in enumerate(lines, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                for tok in line[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "trials":
                        trials = int(val)
                    elif key == "seed" and val != "None":
                        seed = int(val)
                continue
            toks = line.split()
            if len(toks) < 2:
                raise ValidationError(f"line {lineno}: expected settings followed by a count")
            settings.append(tuple(parse_setting(t) for t in toks[:-1]))
            counts.append(_parse_count(toks[-1], lineno))
        if not settings:
            raise ValidationError("empty coincidence table")
        arr = np.array(counts)
        if all(float(c).is_integer() for c in counts):
            arr = arr.astype(np.int64)
        return cls(tuple(settings), arr, trials, seed)


def parse_setting(tok: str):
    try:
        return float(tok)
    except ValueError:
        return tok


def _parse_count(tok: str, lineno: int) -> float:
    try:
        value = float(tok)
    except ValueError:
        raise ValidationError(f"line {lineno}: bad count {tok!r}") from None
    if value < 0 or not np.isfinite(value):
        raise ValidationError(f"line {lineno}: count must be finite and non-negative")
    return value
