"""Eigendecomposition of the state matrix and the transformed inertia matrix.

The transformed inertia G = M^T J M (plain transpose, not conjugate) is the
bilinear form that turns modal coordinates back into kinetic energy; all
closed-form energy expressions consume it. Realness of energies then rests
on the conjugate-pair structure of the eigensystem, not on Hermitian forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DefectiveMatrix, DimensionMismatch, ValidationError
from .grid import SystemModel

CONDITION_LIMIT = 1e10


@dataclass(frozen=True)
class ModalDecomposition:
    """Eigenvalues, right/left eigenvectors, and transformed inertia of A."""

    eigenvalues: np.ndarray   # (n,) complex, sorted by (Re asc, Im asc)
    right: np.ndarray         # columns are right eigenvectors v_i
    left: np.ndarray          # rows are left eigenvectors l_i^T; left = right^-1
    inertia: np.ndarray       # G = M^T J M, complex symmetric

    def __post_init__(self):
        for name in ("eigenvalues", "right", "left", "inertia"):
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.eigenvalues.size

    @property
    def stability_margin(self) -> float:
        """max Re(lambda); negative means strictly stable."""
        return float(np.max(self.eigenvalues.real))


def damping_ratio(eigenvalues: np.ndarray) -> np.ndarray:
    """zeta = -Re(lambda) / |lambda| (zero eigenvalues map to zeta = 0)."""
    lam = np.asarray(eigenvalues)
    mag = np.abs(lam)
    return np.divide(-lam.real, mag, out=np.zeros_like(mag), where=mag > 0)


def frequency_hz(eigenvalues: np.ndarray) -> np.ndarray:
    """Oscillation frequency |Im(lambda)| / 2 pi."""
    return np.abs(np.asarray(eigenvalues).imag) / (2.0 * np.pi)


def decompose(model: SystemModel) -> ModalDecomposition:
    """Full complex eigendecomposition of the state matrix.

    Eigenvalues are sorted by (Re, Im) ascending and each right eigenvector
    is rotated so its first non-negligible component is positive real, making
    the decomposition reproducible. Left eigenvectors are the rows of M^-1,
    which enforces the biorthogonal normalization l_i^T v_j = delta_ij.

    Raises:
        DefectiveMatrix: cond(M) exceeds 1e10 (near-defective A).
    """
    a = np.asarray(model.a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValidationError("state matrix contains non-finite entries")
    lam, m = scipy.linalg.eig(a)
    order = np.lexsort((lam.imag, lam.real))
    lam = lam[order]
    m = m[:, order]

    # deterministic phase: first component with non-negligible magnitude
    for i in range(m.shape[1]):
        col = m[:, i]
        idx = np.argmax(np.abs(col) > 1e-8 * np.max(np.abs(col)))
        phase = col[idx] / abs(col[idx])
        m[:, i] = col / phase

    cond = np.linalg.cond(m)
    if cond > CONDITION_LIMIT:
        raise DefectiveMatrix(
            f"eigenvector matrix condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    left = np.linalg.inv(m)
    g = m.T @ model.j @ m
    return ModalDecomposition(eigenvalues=lam, right=m, left=left, inertia=g)


def transform_disturbance(dec: ModalDecomposition, dx0: np.ndarray) -> np.ndarray:
    """Map a physical state deviation into modal coordinates: z0 = L dx0."""
    dx0 = np.asarray(dx0, dtype=float)
    if dx0.shape != (dec.n,):
        raise DimensionMismatch(
            f"disturbance has shape {dx0.shape}, expected ({dec.n},)")
    return dec.left @ dx0
