"""Two-qubit polarisation tomography from 16 product projections.

Each photon is projected on H, V, D = (H+V)/sqrt2 and R = (H-iV)/sqrt2.
Counts are inverted linearly onto the Pauli expansion of the state, then the
estimate is made physical by clipping negative eigenvalues.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import qstate
from .errors import ValidationError

LABELS = ("H", "V", "D", "R")
SETTINGS = tuple(itertools.product(LABELS, LABELS))

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)
_PAULI2 = [np.kron(a, b) for a in _PAULI for b in _PAULI]
_PROJECTORS = [qstate.projector(s) for s in SETTINGS]

# row k, column j: Tr(sigma_j Pi_k) / 4, so that probs = DESIGN @ pauli_coefficients
DESIGN = np.array([[np.trace(s @ p).real / 4.0 for s in _PAULI2] for p in _PROJECTORS])
assert np.linalg.cond(DESIGN) < 1e3, "tomography settings are not informationally complete"


@dataclass(frozen=True)
class TomographyRecord:
    """Counts for the 16 settings in fixed row-major order over ``LABELS``.

    ``exposure`` is the per-setting acquisition normaliser (time or trials);
    counts are divided by it before inversion.
    """

    counts: np.ndarray
    exposure: np.ndarray = field(default_factory=lambda: np.ones(16))
    settings: tuple = SETTINGS

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=float)
        exposure = np.broadcast_to(np.asarray(self.exposure, dtype=float), (16,)).copy()
        settings = tuple(tuple(s) for s in self.settings)
        if counts.shape != (16,):
            raise ValidationError("tomography needs exactly 16 counts")
        if len(set(settings)) != 16 or set(settings) != set(SETTINGS):
            raise ValidationError("tomography needs each of the 16 label pairs exactly once")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise ValidationError("counts must be finite and non-negative")
        if np.any(exposure <= 0):
            raise ValidationError("exposure must be positive")
        if settings != SETTINGS:
            order = [settings.index(s) for s in SETTINGS]
            counts, exposure = counts[order], exposure[order]
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "exposure", exposure)
        object.__setattr__(self, "settings", SETTINGS)

    def rates(self) -> np.ndarray:
        return self.counts / self.exposure

    def to_text(self) -> str:
        uniform = np.all(self.exposure == self.exposure[0])
        lines = []
        for (a, b), c, e in zip(self.settings, self.counts, self.exposure):
            count = str(int(c)) if float(c).is_integer() else repr(float(c))
            lines.append(f"{a} {b} {count}" + ("" if uniform else f" {float(e)!r}"))
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "TomographyRecord":
        settings, counts, exposure = [], [], []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            toks = line.split()
            if len(toks) not in (3, 4):
                raise ValidationError(f"line {lineno}: expected 'label_a label_b count [exposure]'")
            if toks[0] not in LABELS or toks[1] not in LABELS:
                raise ValidationError(f"line {lineno}: labels must be one of {LABELS}")
            settings.append((toks[0], toks[1]))
            try:
                counts.append(float(toks[2]))
                exposure.append(float(toks[3]) if len(toks) == 4 else 1.0)
            except ValueError:
                raise ValidationError(f"line {lineno}: non-numeric count") from None
        return cls(np.array(counts), np.array(exposure), tuple(settings))

    @classmethod
    def read(cls, path) -> "TomographyRecord":
        return cls.from_text(Path(path).read_text())


def predicted_probabilities(rho) -> np.ndarray:
    """Born probability of each of the 16 settings, in record order."""
    r = qstate.as_matrix(rho)
    return np.array([qstate.born_probability(r, p) for p in _PROJECTORS])


def linear_inversion(rec: TomographyRecord) -> np.ndarray:
    """Unconstrained trace-one estimate; may have negative eigenvalues."""
    rates = rec.rates()
    if not np.any(rates > 0):
        raise ValidationError("all tomography counts are zero")
    coeffs = np.linalg.solve(DESIGN, rates)
    rho = sum(c * s for c, s in zip(coeffs, _PAULI2)) / 4.0
    tr = np.trace(rho).real
    if tr <= 0:
        raise ValidationError("counts imply a non-positive trace")
    rho = rho / tr
    return 0.5 * (rho + rho.conj().T)


def reconstruct(rec: TomographyRecord) -> np.ndarray:
    return qstate.physicalize(linear_inversion(rec))


def record_from_state(rho, total: float = 1e6) -> TomographyRecord:
    """Noise-free record with expected counts ``total * p`` per setting."""
    return TomographyRecord(total * predicted_probabilities(rho))
