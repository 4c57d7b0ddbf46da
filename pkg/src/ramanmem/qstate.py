"""Dense two-qubit state algebra (dimension <= 4).

Basis orderings are fixed: path (x) polarisation is ``[UH, UV, DH, DV]`` and
polarisation (x) polarisation is ``[HH, HV, VH, VV]``. States are plain
complex ``numpy`` arrays; :class:`StateVector` and :class:`DensityMatrix`
attach basis labels and validate on construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .errors import InvalidStateError, ValidationError

PATH_POL_LABELS = ("UH", "UV", "DH", "DV")
POL_POL_LABELS = ("HH", "HV", "VH", "VV")

MAX_DIM = 16
HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-9
# below this an eigenvalue is numerical noise, above it the input is not a state
CLIP_TOL = 1e-6

_S = 1.0 / np.sqrt(2.0)

#: Single-qubit polarisation kets. ``R`` follows the (H - iV)/sqrt2 convention
#: of the tomography settings.
POL_KETS = {
    "H": np.array([1.0, 0.0], dtype=complex),
    "V": np.array([0.0, 1.0], dtype=complex),
    "D": np.array([_S, _S], dtype=complex),
    "A": np.array([_S, -_S], dtype=complex),
    "R": np.array([_S, -1j * _S], dtype=complex),
    "L": np.array([_S, 1j * _S], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class StateVector:
    """Normalised ket with basis labels."""

    amplitudes: np.ndarray
    labels: tuple[str, ...]

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.ndim != 1 or amps.size not in (2, 4):
            raise ValidationError(f"state vector must have dimension 2 or 4, got shape {amps.shape}")
        if len(self.labels) != amps.size:
            raise ValidationError("one basis label per amplitude required")
        if abs(np.vdot(amps, amps).real - 1.0) > 1e-12:
            raise InvalidStateError("state vector is not normalised; build it with normalize()")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def density(self) -> "DensityMatrix":
        return DensityMatrix(np.outer(self.amplitudes, self.amplitudes.conj()), self.labels)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.amplitudes, dtype=dtype)


def normalize(amplitudes: Sequence[complex], labels: Sequence[str] | None = None) -> StateVector:
    amps = np.asarray(amplitudes, dtype=complex)
    norm = np.sqrt(np.vdot(amps, amps).real)
    if norm == 0.0:
        raise InvalidStateError("cannot normalise the zero vector")
    if labels is None:
        labels = _default_labels(amps.size)
    return StateVector(amps / norm, tuple(labels))


def _default_labels(dim: int) -> tuple[str, ...]:
    if dim == 2:
        return ("H", "V")
    if dim == 4:
        return POL_POL_LABELS
    return tuple(str(i) for i in range(dim))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Validated density matrix: Hermitian, unit trace, positive semidefinite."""

    entries: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        m = np.array(self.entries, dtype=complex)
        check_density(m)
        # store the exactly Hermitian part so downstream algebra stays clean
        object.__setattr__(self, "entries", 0.5 * (m + m.conj().T))
        if self.labels is not None:
            if len(self.labels) != m.shape[0]:
                raise ValidationError("one basis label per row required")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.entries, dtype=dtype)


Operand = Union[np.ndarray, StateVector, DensityMatrix]


def check_density(m: np.ndarray) -> None:
    """Raise :class:`InvalidStateError` unless ``m`` is a density matrix."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1] or m.shape[0] == 0:
        raise InvalidStateError(f"density matrix must be square, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise InvalidStateError(f"dimension {m.shape[0]} exceeds {MAX_DIM}")
    if np.max(np.abs(m - m.conj().T)) > HERMITIAN_TOL:
        raise InvalidStateError("matrix is not Hermitian")
    if abs(np.trace(m).real - 1.0) > TRACE_TOL:
        raise InvalidStateError(f"trace is {np.trace(m).real!r}, expected 1")
    w, _ = eig_hermitian(m)
    if w[-1] < -PSD_TOL:
        raise InvalidStateError(f"matrix has negative eigenvalue {w[-1]:.3g}")


def as_matrix(x: Operand) -> np.ndarray:
    """Density-matrix array for any operand; kets become projectors."""
    if isinstance(x, DensityMatrix):
        return x.entries
    if isinstance(x, StateVector):
        return np.outer(x.amplitudes, x.amplitudes.conj())
    a = np.asarray(x, dtype=complex)
    if a.ndim == 1:
        return np.outer(a, a.conj())
    return a


def kron(a: Operand, b: Operand):
    """Tensor product; the result keeps the kind of the operands.

    Labels of the result are the row-major concatenations of the operand
    labels, so ``kron(H, V)`` is labelled ``[HH, HV, VH, VV]``.
    """
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        _check_dims(a.dim, b.dim)
        labels = tuple(x + y for x in a.labels for y in b.labels)
        return StateVector(np.kron(a.amplitudes, b.amplitudes), labels)
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        _check_dims(a.dim, b.dim)
        labels = None
        if a.labels is not None and b.labels is not None:
            labels = tuple(x + y for x in a.labels for y in b.labels)
        return DensityMatrix(np.kron(a.entries, b.entries), labels)
    x = np.asarray(a, dtype=complex)
    y = np.asarray(b, dtype=complex)
    _check_dims(x.shape[0], y.shape[0])
    return np.kron(x, y)


def _check_dims(da: int, db: int) -> None:
    if da * db > MAX_DIM:
        raise ValidationError(f"tensor product dimension {da * db} exceeds {MAX_DIM}")


def eig_hermitian(m: Operand, tol: float = 1e-8, max_sweeps: int = 64):
    """Eigen-decomposition of a Hermitian matrix by cyclic Jacobi rotations.

    Returns ``(w, v)`` with real eigenvalues ``w`` in descending order and the
    matching orthonormal eigenvectors in the columns of ``v``.
    """
    a = np.array(as_matrix(m), dtype=complex)
    n = a.shape[0]
    if a.shape != (n, n):
        raise ValidationError("eig_hermitian needs a square matrix")
    scale = max(1.0, float(np.max(np.abs(a))) if a.size else 1.0)
    if np.max(np.abs(a - a.conj().T)) > tol * scale:
        raise ValidationError("matrix is not Hermitian within tolerance")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    frob = np.linalg.norm(a)
    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.linalg.norm(a[offdiag])
        if off <= 1e-15 * max(frob, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag <= 1e-300:
                    continue
                phase = apq / mag
                theta = (a[q, q].real - a[p, p].real) / (2.0 * mag)
                t = (1.0 if theta >= 0 else -1.0) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # phase rotation that makes a[p, q] real, then a real Givens rotation
                u = np.eye(n, dtype=complex)
                u[p, p] = c
                u[p, q] = s
                u[q, p] = -s * phase.conjugate()
                u[q, q] = c * phase.conjugate()
                a = u.conj().T @ a @ u
                v = v @ u
    w = np.diag(a).real.copy()
    order = np.argsort(-w, kind="stable")
    return w[order], v[:, order]


def matrix_sqrt(m: Operand) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues down to ``-1e-6`` are treated as numerical noise and clipped
    to zero; anything more negative is rejected.
    """
    w, v = eig_hermitian(m)
    if w[-1] < -CLIP_TOL:
        raise InvalidStateError(f"matrix is not positive semidefinite (eigenvalue {w[-1]:.3g})")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root) @ v.conj().T


def linear_ket(theta: float) -> np.ndarray:
    """Linear polarisation at angle ``theta`` from horizontal."""
    return np.array([np.cos(theta), np.sin(theta)], dtype=complex)


def path_ket(phase: float) -> np.ndarray:
    """Equal superposition (|U> + e^{i phase}|D>)/sqrt2 of the two paths."""
    return np.array([_S, _S * np.exp(1j * phase)], dtype=complex)


def ket(setting) -> np.ndarray:
    """Single-qubit ket for a polarisation label or a linear analyser angle."""
    if isinstance(setting, str):
        try:
            return POL_KETS[setting].copy()
        except KeyError:
            raise ValidationError(f"unknown polarisation label {setting!r}") from None
    return linear_ket(float(setting))


def projector(settings) -> np.ndarray:
    """Rank-1 projector for a label, an angle, or a sequence of them.

    A sequence gives the tensor product of the single-qubit projectors in
    order, e.g. ``projector(("H", np.pi / 8))``.
    """
    if isinstance(settings, (str, int, float, np.floating, np.integer)):
        k = ket(settings)
        return np.outer(k, k.conj())
    k = np.ones(1, dtype=complex)
    for s in settings:
        k = np.kron(k, ket(s))
    if k.size > MAX_DIM:
        raise ValidationError("too many analyser settings")
    return np.outer(k, k.conj())


def born_probability(state: Operand, proj: Operand) -> float:
    rho = as_matrix(state)
    p = as_matrix(proj)
    if rho.shape != p.shape:
        raise ValidationError(f"dimension mismatch: {rho.shape} vs {p.shape}")
    value = float(np.real(np.trace(rho @ p)))
    if value < -PSD_TOL or value > 1.0 + PSD_TOL:
        raise ValidationError(f"Born probability {value!r} outside [0, 1]")
    return min(max(value, 0.0), 1.0)


def bell_state(name: str) -> StateVector:
    """``psi+``, ``psi-``, ``phi+`` or ``phi-`` in the HH/HV/VH/VV basis."""
    amps = {
        "psi+": [0, 1, 1, 0],
        "psi-": [0, 1, -1, 0],
        "phi+": [1, 0, 0, 1],
        "phi-": [1, 0, 0, -1],
    }
    try:
        return normalize(amps[name], POL_POL_LABELS)
    except KeyError:
        raise ValidationError(f"unknown Bell state {name!r}") from None


def maximally_mixed(dim: int = 4) -> np.ndarray:
    return np.eye(dim, dtype=complex) / dim


def werner(p: float, state: Operand | None = None) -> np.ndarray:
    """``p |b><b| + (1 - p) I/d`` for a pure state ``b`` (default psi-)."""
    rho = as_matrix(state if state is not None else bell_state("psi-"))
    d = rho.shape[0]
    return p * rho + (1.0 - p) * np.eye(d, dtype=complex) / d


def partial_trace(rho: np.ndarray, keep: int) -> np.ndarray:
    """Reduced state of qubit ``keep`` (0 or 1) of a two-qubit matrix."""
    r = np.asarray(rho, dtype=complex).reshape(2, 2, 2, 2)
    if keep == 0:
        return np.einsum("ijkj->ik", r)
    if keep == 1:
        return np.einsum("jijk->ik", r)
    raise ValidationError("keep must be 0 or 1")


def physicalize(m: np.ndarray) -> np.ndarray:
    """Nearest-by-spectrum density matrix: clip negative eigenvalues, renormalise."""
    w, v = eig_hermitian(m)
    w = np.clip(w, 0.0, None)
    total = w.sum()
    if total <= 0.0:
        raise InvalidStateError("matrix has no positive spectrum")
    w = w / total
    out = (v * w) @ v.conj().T
    return 0.5 * (out + out.conj().T)
