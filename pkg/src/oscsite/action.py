"""Oscillation energy, closed-form action integrals, and the linear estimator.

The total action is the integral of the deviation kinetic energy over all
time; lower total action means faster-decaying oscillations. For a stable
diagonalizable system it has a closed form in the modal coordinates, and its
derivative with respect to any eigenvalue (beta) combined with eigenvalue
sensitivities to the wind injection yields an affine estimator in the wind
power deviation. That estimator is what makes Monte Carlo siting cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ResonantPair, UnstableSystem
from .grid import NetworkCase, SystemModel, build_system_matrix, solve_power_flow
from .modal import ModalDecomposition

STABILITY_MARGIN = 1e-6   # require max Re(lambda) < -margin for infinite integrals
RESONANCE_TOL = 1e-9      # |lambda_i + lambda_j| guard
RESIDUE_TOL = 1e-9        # relative imaginary-residue guard on real outputs
FD_STEP = 1e-3            # default wind-power step for d(A)/d(P_w), p.u.


def _real_with_residue_check(value: complex, what: str) -> float:
    if abs(value.imag) > RESIDUE_TOL * (1.0 + abs(value.real)):
        raise ValueError(
            f"{what}: imaginary residue {value.imag:.3e} exceeds guard "
            f"(real part {value.real:.3e}); eigensystem lost conjugate pairing")
    return float(value.real)


def _pair_sums(dec: ModalDecomposition) -> np.ndarray:
    lam = dec.eigenvalues
    s = lam[:, None] + lam[None, :]
    if np.min(np.abs(s)) <= RESONANCE_TOL:
        i, j = np.unravel_index(np.argmin(np.abs(s)), s.shape)
        raise ResonantPair(
            f"lambda_{i} + lambda_{j} = {s[i, j]:.3e}; closed form is singular")
    return s


def _require_stable(dec: ModalDecomposition):
    if dec.stability_margin >= -STABILITY_MARGIN:
        raise UnstableSystem(
            f"max Re(lambda) = {dec.stability_margin:.3e} >= -{STABILITY_MARGIN}")


def _check_modal_vector(dec: ModalDecomposition, z0: np.ndarray) -> np.ndarray:
    z0 = np.asarray(z0, dtype=complex)
    if z0.shape != (dec.n,):
        raise DimensionMismatch(f"z0 has shape {z0.shape}, expected ({dec.n},)")
    return z0


def oscillation_energy(model: SystemModel, dx: np.ndarray) -> float:
    """Deviation kinetic energy 1/2 x^T J x, p.u. (J acts on speed states only)."""
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (model.n,):
        raise DimensionMismatch(f"state has shape {dx.shape}, expected ({model.n},)")
    return 0.5 * float(dx @ model.j @ dx)


def action(dec: ModalDecomposition, z0: np.ndarray, tau: float) -> float:
    """Energy integral over [0, tau] evaluated in closed form.

    Evaluates 1/2 sum_ij [exp((l_i+l_j) tau) - 1] / (l_i+l_j) z0_i z0_j g_ij.

    Raises:
        ResonantPair: some |lambda_i + lambda_j| is below the guard.
    """
    if tau < 0:
        raise ValueError("tau must be >= 0")
    z0 = _check_modal_vector(dec, z0)
    s = _pair_sums(dec)
    coeff = np.outer(z0, z0) * dec.inertia
    total = 0.5 * np.sum((np.exp(s * tau) - 1.0) / s * coeff)
    return _real_with_residue_check(total, "action")


def total_action(dec: ModalDecomposition, z0: np.ndarray) -> float:
    """Energy integral over [0, infinity): -1/2 sum_ij z0_i z0_j g_ij / (l_i+l_j).

    Raises:
        UnstableSystem: stability margin violated.
        ResonantPair: some eigenvalue pair sums to (near) zero.
    """
    z0 = _check_modal_vector(dec, z0)
    _require_stable(dec)
    s = _pair_sums(dec)
    total = -0.5 * np.sum(np.outer(z0, z0) * dec.inertia / s)
    return _real_with_residue_check(total, "total_action")


def beta_coefficients(dec: ModalDecomposition, z0: np.ndarray) -> np.ndarray:
    """Sensitivity of the total action to each eigenvalue.

    beta_i = sum_j z0_i z0_j g_ij / (lambda_i + lambda_j)^2, the exact partial
    derivative of the closed-form total action with the eigenvectors frozen.
    """
    z0 = _check_modal_vector(dec, z0)
    _require_stable(dec)
    s = _pair_sums(dec)
    return np.sum(np.outer(z0, z0) * dec.inertia / s**2, axis=1)


def eigen_sensitivity(dec: ModalDecomposition, da_dpw: np.ndarray) -> np.ndarray:
    """First-order eigenvalue movement per unit wind power: l_i^T (dA/dPw) v_i."""
    da_dpw = np.asarray(da_dpw, dtype=float)
    if da_dpw.shape != (dec.n, dec.n):
        raise DimensionMismatch(
            f"dA/dPw has shape {da_dpw.shape}, expected ({dec.n}, {dec.n})")
    return np.einsum("ij,jk,ki->i", dec.left, da_dpw, dec.right)


def fd_system_matrix(case: NetworkCase, p_w: float, placement: int | None,
                     gain: float, h: float = FD_STEP) -> np.ndarray:
    """Finite-difference dA/dPw with re-solved equilibria near P_w.

    Central difference (A(P_w+h) - A(P_w-h)) / 2h when P_w - h stays in the
    feasible domain; at the P_w >= 0 boundary a second-order one-sided
    stencil (-3 A(P_w) + 4 A(P_w+h) - A(P_w+2h)) / 2h is used instead.

    Raises:
        NonConvergence: power flow fails at an evaluation point.
    """
    if h <= 0:
        raise ValueError("step h must be > 0")

    def a_at(pw):
        return build_system_matrix(case, solve_power_flow(case, pw),
                                   placement, gain).a

    if p_w - h >= 0:
        return (a_at(p_w + h) - a_at(p_w - h)) / (2.0 * h)
    return (-3.0 * a_at(p_w) + 4.0 * a_at(p_w + h) - a_at(p_w + 2 * h)) / (2.0 * h)


def gamma(beta: np.ndarray, dlam_dpw: np.ndarray) -> float:
    """Slope of total action with respect to wind power: Re sum_i beta_i dl_i/dPw."""
    beta = np.asarray(beta, dtype=complex)
    dlam_dpw = np.asarray(dlam_dpw, dtype=complex)
    if beta.shape != dlam_dpw.shape:
        raise DimensionMismatch(
            f"beta has shape {beta.shape}, sensitivities {dlam_dpw.shape}")
    return _real_with_residue_check(np.sum(beta * dlam_dpw), "gamma")


@dataclass(frozen=True)
class ActionEstimate:
    """Affine total-action model for one candidate bus.

    total action at wind power P_w ~= base_action + slope * (P_w - base_wind).
    """

    bus: int
    base_action: float
    beta: np.ndarray
    sensitivity: np.ndarray  # d(lambda_i)/d(P_w), complex
    slope: float
    base_wind: float

    def __post_init__(self):
        self.beta.setflags(write=False)
        self.sensitivity.setflags(write=False)


def estimate_total_action(est: ActionEstimate, dp_w: float | np.ndarray):
    """Evaluate the affine estimator at wind-power deviation(s) dP_w.

    Deliberately not clamped at zero: far from the base point the affine
    model may go negative, and only the relative ordering across candidates
    matters to the siting optimizer.
    """
    return est.base_action + est.slope * dp_w
