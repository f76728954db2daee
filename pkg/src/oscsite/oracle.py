"""Brute-force cross-checks for every closed-form quantity.

Everything here deliberately avoids the closed-form modal algebra: the
trajectory comes from fixed-step RK4 integration, the energy integral from
the trapezoid rule, eigenvalue sensitivities from re-decomposing perturbed
systems, and per-sample total actions from re-running the full pipeline.
Fixed steps (rather than adaptive control) keep the oracle reproducible and
easy to audit.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    ModeMatchingAmbiguous,
    OscsiteError,
    StepTooLarge,
    TailNotDecayed,
)
from .grid import NetworkCase, SystemModel, build_system_matrix, solve_power_flow
from .modal import decompose, transform_disturbance
from .action import total_action

DEFAULT_DT = 1e-3         # s
TAIL_ENERGY_RATIO = 1e-8  # terminal / peak energy guard for the integral
MODE_MATCH_TOL = 1e-6


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled solution of dx/dt = A x."""

    time: np.ndarray    # (steps + 1,)
    states: np.ndarray  # (steps + 1, n); first row is the initial deviation
    model: SystemModel

    def __post_init__(self):
        self.time.setflags(write=False)
        self.states.setflags(write=False)

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0])


def default_horizon(model: SystemModel) -> float:
    """10 / |max Re(lambda)| seconds: energy decays to ~e^-20 of its peak."""
    margin = np.max(np.linalg.eigvals(model.a).real)
    if margin >= 0:
        raise ValueError("cannot pick a decay horizon for an unstable system")
    return 10.0 / abs(margin)


def simulate_linear(model: SystemModel, dx0: np.ndarray, t_end: float,
                    dt: float = DEFAULT_DT) -> Trajectory:
    """Classic 4-stage fixed-step RK4 integration of the linear system.

    Raises:
        StepTooLarge: dt > 0.1 / max |lambda| (fastest mode unresolved).
    """
    if not (t_end >= dt > 0):
        raise ValueError("need t_end >= dt > 0")
    dx0 = np.asarray(dx0, dtype=float)
    a = model.a
    lam_max = float(np.max(np.abs(np.linalg.eigvals(a))))
    if lam_max > 0 and dt > 0.1 / lam_max:
        raise StepTooLarge(
            f"dt = {dt} exceeds 0.1/|lambda|_max = {0.1 / lam_max:.3e}")

    steps = int(round(t_end / dt))
    states = np.empty((steps + 1, a.shape[0]))
    states[0] = dx0
    x = dx0.copy()
    for k in range(steps):
        k1 = a @ x
        k2 = a @ (x + 0.5 * dt * k1)
        k3 = a @ (x + 0.5 * dt * k2)
        k4 = a @ (x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states[k + 1] = x
    t = np.arange(steps + 1) * dt
    return Trajectory(time=t, states=states, model=model)


def trajectory_energy(traj: Trajectory) -> np.ndarray:
    """Kinetic-energy deviation 1/2 x^T J x along the trajectory."""
    j = traj.model.j
    return 0.5 * np.einsum("ti,ij,tj->t", traj.states, j, traj.states)


def numeric_total_action(traj: Trajectory, model: SystemModel) -> float:
    """Trapezoid integral of the oscillation energy over the full grid.

    Raises:
        TailNotDecayed: terminal energy above 1e-8 of the peak, so the
            truncated integral would not approximate the infinite one.
    """
    energy = trajectory_energy(traj)
    peak = float(np.max(energy))
    if peak > 0 and energy[-1] > TAIL_ENERGY_RATIO * peak:
        raise TailNotDecayed(
            f"terminal energy {energy[-1]:.3e} > {TAIL_ENERGY_RATIO} * peak {peak:.3e}")
    return float(np.trapezoid(energy, dx=traj.dt))


def _match_modes(reference: np.ndarray, moved: np.ndarray) -> np.ndarray:
    """Pair each reference eigenvalue with its nearest neighbour in `moved`.

    Raises:
        ModeMatchingAmbiguous: the two best matches for some reference mode
            are closer than the tolerance apart, or a target is claimed twice.
    """
    taken: dict[int, int] = {}
    pairing = np.empty(reference.size, dtype=int)
    for i, lam in enumerate(reference):
        dist = np.abs(moved - lam)
        order = np.argsort(dist)
        best = int(order[0])
        if dist.size > 1 and abs(dist[order[1]] - dist[best]) < MODE_MATCH_TOL:
            raise ModeMatchingAmbiguous(
                f"mode {lam:.6f}: two candidates within {MODE_MATCH_TOL} of each other")
        if best in taken:
            raise ModeMatchingAmbiguous(
                f"modes {reference[taken[best]]:.6f} and {lam:.6f} both match "
                f"{moved[best]:.6f}")
        taken[best] = i
        pairing[i] = best
    return pairing


def fd_mode_movement(case: NetworkCase, candidate: int | None, gain: float,
                     p_w: float, h: float = 1e-3) -> np.ndarray:
    """Finite-difference d(lambda)/d(P_w) via re-decomposition near P_w.

    The result is aligned with the eigenvalue order of the decomposition at
    the base wind power, using nearest-neighbour matching in the complex
    plane for each perturbed spectrum. Falls back to a second-order
    one-sided stencil when P_w - h would leave the P_w >= 0 domain.
    """
    def modes_at(pw):
        eq = solve_power_flow(case, pw)
        return decompose(build_system_matrix(case, eq, candidate, gain)).eigenvalues

    base = modes_at(p_w)
    if p_w - h >= 0:
        plus = modes_at(p_w + h)
        minus = modes_at(p_w - h)
        lam_plus = plus[_match_modes(base, plus)]
        lam_minus = minus[_match_modes(base, minus)]
        return (lam_plus - lam_minus) / (2.0 * h)
    plus = modes_at(p_w + h)
    plus2 = modes_at(p_w + 2 * h)
    lam_plus = plus[_match_modes(base, plus)]
    lam_plus2 = plus2[_match_modes(base, plus2)]
    return (-3.0 * base + 4.0 * lam_plus - lam_plus2) / (2.0 * h)


@dataclass(frozen=True)
class ExactActionSamples:
    """Per-sample exact total actions; failed samples carry NaN."""

    values: np.ndarray
    failed: tuple[int, ...]        # sample indices
    errors: tuple[str, ...]        # matching diagnostics
    elapsed_seconds: float

    def __post_init__(self):
        self.values.setflags(write=False)

    @property
    def failure_count(self) -> int:
        return len(self.failed)


def exact_per_sample_action(case: NetworkCase, candidate: int | None, gain: float,
                            speeds: dict[int, float],
                            samples: np.ndarray) -> ExactActionSamples:
    """Full pipeline (power flow -> build -> decompose -> total action) per sample.

    Args:
        speeds: disturbance as generator-bus -> delta-omega p.u.
        samples: wind power values P_w, p.u.

    Per-sample failures (non-convergence, instability) are recorded and
    reported, not fatal.
    """
    samples = np.asarray(samples, dtype=float)
    values = np.full(samples.size, np.nan)
    failed: list[int] = []
    errors: list[str] = []
    t0 = time.perf_counter()
    for i, pw in enumerate(samples):
        try:
            eq = solve_power_flow(case, float(pw))
            model = build_system_matrix(case, eq, candidate, gain)
            dec = decompose(model)
            z0 = transform_disturbance(dec, model.state_vector(speeds))
            values[i] = total_action(dec, z0)
        except OscsiteError as exc:
            failed.append(i)
            errors.append(f"sample {i} (P_w={pw:.6g}): {type(exc).__name__}: {exc}")
    elapsed = time.perf_counter() - t0
    return ExactActionSamples(values=values, failed=tuple(failed),
                              errors=tuple(errors), elapsed_seconds=elapsed)
