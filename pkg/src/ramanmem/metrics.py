"""Entanglement and quality figures of merit.

Path-number concurrence, Wootters concurrence, Uhlmann fidelity, fringe
visibility, CHSH correlators and the simple efficiency ratios.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qstate
from .errors import DegenerateDataError, ValidationError
from .tables import CoincidenceTable

#: Visibility above which a maximally entangled state with white noise
#: violates CHSH.
VISIBILITY_BENCHMARK = 1.0 / np.sqrt(2.0)
TSIRELSON = 2.0 * np.sqrt(2.0)

_SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_YY = np.kron(_SIGMA_Y, _SIGMA_Y)


@dataclass(frozen=True)
class PathNumberMatrix:
    """Two-mode photon-number state in the |n_U, m_D> basis, n, m in {0, 1}.

    ``visibility`` is the measured U/D interference visibility; the coherence
    between |1,0> and |0,1> is ``visibility * sqrt(p10 * p01)``.
    """

    p00: float
    p10: float
    p01: float
    p11: float
    visibility: float = 1.0

    def __post_init__(self):
        probs = (self.p00, self.p10, self.p01, self.p11)
        if any(p < 0 or not np.isfinite(p) for p in probs):
            raise ValidationError("path-number probabilities must be finite and non-negative")
        if not 0.0 <= self.visibility <= 1.0:
            raise ValidationError("visibility must lie in [0, 1]")

    @property
    def total(self) -> float:
        return self.p00 + self.p10 + self.p01 + self.p11

    @property
    def coherence(self) -> float:
        return self.visibility * np.sqrt(self.p10 * self.p01)

    def density(self) -> np.ndarray:
        """Normalised matrix in the order |00>, |10>, |01>, |11>."""
        if self.total <= 0:
            raise ValidationError("all path-number probabilities are zero")
        d = self.coherence
        m = np.array(
            [
                [self.p00, 0, 0, 0],
                [0, self.p10, d, 0],
                [0, d, self.p01, 0],
                [0, 0, 0, self.p11],
            ],
            dtype=complex,
        )
        return m / self.total


def path_concurrence(m: PathNumberMatrix) -> float:
    if m.total <= 0:
        raise ValidationError("path-number matrix has zero total probability")
    c = 2.0 * abs(m.coherence) - 2.0 * np.sqrt(m.p00 * m.p11)
    return max(0.0, c) / m.total


def wootters_concurrence(rho) -> float:
    r = qstate.as_matrix(rho)
    if r.shape != (4, 4):
        raise ValidationError("Wootters concurrence needs a two-qubit state")
    qstate.check_density(r)
    rt = _YY @ r.conj() @ _YY
    # R = sqrt(sqrt(rho) rho~ sqrt(rho)) has the same spectrum as sqrt(rho rho~)
    s = qstate.matrix_sqrt(r)
    w, _ = qstate.eig_hermitian(_hermitian(s @ rt @ s))
    lam = np.sqrt(np.clip(w, 0.0, None))
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``(Tr sqrt(sqrt(rho) sigma sqrt(rho)))**2``."""
    a = qstate.as_matrix(rho)
    b = qstate.as_matrix(sigma)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    qstate.check_density(a)
    qstate.check_density(b)
    s = qstate.matrix_sqrt(a)
    w, _ = qstate.eig_hermitian(_hermitian(s @ b @ s))
    if w[-1] < -qstate.CLIP_TOL:
        raise ValidationError(f"fidelity kernel has negative eigenvalue {w[-1]:.3g}")
    # round-off eigenvalues near 1e-16 would add ~1e-8 each after the sqrt
    w = np.where(w > 1e-13 * max(w[0], 1e-300), w, 0.0)
    f = float(np.sum(np.sqrt(w))) ** 2
    return min(max(f, 0.0), 1.0)


def _hermitian(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


@dataclass(frozen=True)
class FringeScan:
    phases: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        phases = np.asarray(self.phases, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if phases.shape != counts.shape or phases.ndim != 1:
            raise ValidationError("phases and counts must be 1-D and equally long")
        if np.any(counts < 0):
            raise ValidationError("counts must be non-negative")
        object.__setattr__(self, "phases", phases)
        object.__setattr__(self, "counts", counts)


@dataclass(frozen=True)
class FringeFit:
    c0: float
    visibility: float
    phase: float
    degenerate: bool = False


def fit_fringe(scan: FringeScan) -> FringeFit:
    """Fit ``counts ~ C0 (1 + V cos(phase - phi))`` by linear least squares.

    The model is linear in ``(1, cos, sin)``; amplitude and phase follow in
    closed form. A flat fringe returns ``V = 0, phi = 0`` flagged degenerate.
    """
    th, y = scan.phases, scan.counts
    if th.size < 4:
        raise ValidationError("fringe fit needs at least 4 points")
    if np.ptp(th) <= np.pi:
        raise ValidationError("fringe phases must span more than pi")
    design = np.column_stack([np.ones_like(th), np.cos(th), np.sin(th)])
    (a, b, c), *_ = np.linalg.lstsq(design, y, rcond=None)
    if a <= 0:
        if np.all(y == 0):
            return FringeFit(0.0, 0.0, 0.0, True)
        raise DegenerateDataError("fringe offset is not positive")
    amp = np.hypot(b, c)
    if amp <= 1e-12 * a:
        return FringeFit(float(a), 0.0, 0.0, True)
    phi = float(np.arctan2(c, b) % (2 * np.pi))
    if phi >= 2 * np.pi:
        phi = 0.0
    # (Cmax - Cmin)/(Cmax + Cmin) of the fitted curve is amp/a
    return FringeFit(float(a), float(min(amp / a, 1.0)), phi)


def beats_benchmark(visibility: float) -> bool:
    return visibility >= VISIBILITY_BENCHMARK


@dataclass(frozen=True)
class ChshSettings:
    """Analyser angles (radians) for the two photons, primed and unprimed."""

    theta_a: float = 0.0
    theta_s: float = np.pi / 8
    theta_a2: float = np.pi / 4
    theta_s2: float = 3 * np.pi / 8

    def correlator_pairs(self) -> list[tuple[float, float, float]]:
        """``(sign, a, b)`` for the four correlators in the S combination."""
        return [
            (+1.0, self.theta_a, self.theta_s),
            (-1.0, self.theta_a, self.theta_s2),
            (+1.0, self.theta_a2, self.theta_s),
            (+1.0, self.theta_a2, self.theta_s2),
        ]

    def settings(self) -> list[tuple[float, float]]:
        """The 16 analyser pairs needed for S, four per correlator."""
        out = []
        for _, a, b in self.correlator_pairs():
            out.extend(correlator_settings(a, b))
        return out


def correlator_settings(a: float, b: float) -> list[tuple[float, float]]:
    """Settings in the order ``C(a,b), C(a+,b+), C(a+,b), C(a,b+)``."""
    h = np.pi / 2
    return [(a, b), (a + h, b + h), (a + h, b), (a, b + h)]


def e_correlator(c_ab: float, c_ab_perp: float, c_a_perp_b: float, c_a_b_perp: float) -> float:
    """Correlation from four coincidence counts.

    Arguments are ``C(a, b)``, ``C(a+pi/2, b+pi/2)``, ``C(a+pi/2, b)`` and
    ``C(a, b+pi/2)``.
    """
    total = c_ab + c_ab_perp + c_a_perp_b + c_a_b_perp
    if total <= 0:
        raise ValidationError("correlator denominator is zero")
    return (c_ab + c_ab_perp - c_a_perp_b - c_a_b_perp) / total


def chsh_s(table: CoincidenceTable, settings: ChshSettings = ChshSettings(), atol: float = 1e-9) -> float:
    total = 0.0
    for sign, a, b in settings.correlator_pairs():
        counts = [table.count(s, atol) for s in correlator_settings(a, b)]
        total += sign * e_correlator(*counts)
    return abs(total)


def chsh_from_counts(counts: Sequence[float]) -> float:
    """S from 16 counts laid out as :meth:`ChshSettings.settings`."""
    c = np.asarray(counts, dtype=float)
    if c.shape != (16,):
        raise ValidationError("expected 16 counts")
    signs = (1.0, -1.0, 1.0, 1.0)
    return abs(sum(s * e_correlator(*c[4 * k : 4 * k + 4]) for k, s in enumerate(signs)))


def transfer_efficiency(c_in: float, c_out: float) -> float:
    if c_in == 0:
        raise ValidationError("input concurrence is zero")
    return c_out / c_in


def contrast_beta(v_in: float, v_out: float) -> float:
    if v_in == 0:
        raise ValidationError("input visibility is zero")
    return v_out / v_in


def far_detuning_ratio(detuning_mhz: float, absorption_bw_mhz: float) -> float:
    if absorption_bw_mhz <= 0:
        raise ValidationError("absorption bandwidth must be positive")
    return detuning_mhz / absorption_bw_mhz


def bandwidth_from_fwhm(fwhm_ns: float) -> float:
    """Bandwidth in MHz as the reciprocal of the temporal FWHM in ns."""
    if fwhm_ns <= 0:
        raise ValidationError("FWHM must be positive")
    return 1000.0 / fwhm_ns
