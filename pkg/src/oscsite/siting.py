"""Chance-constrained actuator siting and the two benchmark baselines.

The optimizer scores each candidate bus k by the probability that placing
the actuator there yields the minimum total action among all candidates,
aggregated over a discrete disturbance set by total probability. One wind
sample vector is shared by every candidate and disturbance (common random
numbers), so comparisons are paired and the per-sample winner is exact
integer counting: parallel and serial evaluation orders cannot change it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .errors import (
    ModeMatchingAmbiguous,
    NoOscillatoryMode,
    ProbabilityMassError,
    ValidationError,
)
from .grid import (
    DEFAULT_GAIN,
    NetworkCase,
    SystemModel,
    build_system_matrix,
    solve_power_flow,
)
from .modal import (
    ModalDecomposition,
    damping_ratio,
    decompose,
    frequency_hz,
    transform_disturbance,
)
from .action import (
    ActionEstimate,
    FD_STEP,
    beta_coefficients,
    eigen_sensitivity,
    estimate_total_action,
    fd_system_matrix,
    gamma,
    total_action,
)
from .oracle import exact_per_sample_action
from .wind import WindModel, sample_wind_power

PROBABILITY_TOL = 1e-12
EM_BAND_HZ = (0.1, 3.0)  # electromechanical frequency band
HISTOGRAM_BINS = 40


@dataclass(frozen=True)
class Disturbance:
    """Sparse initial condition: per-generator speed deviations, p.u."""

    id: str
    speeds: tuple[tuple[int, float], ...]  # (generator bus, delta-omega)
    probability: float

    def __post_init__(self):
        if not (0.0 < self.probability <= 1.0):
            raise ValidationError(
                f"disturbance {self.id}: probability must be in (0, 1]")
        buses = [b for b, _ in self.speeds]
        if len(set(buses)) != len(buses):
            raise ValidationError(f"disturbance {self.id}: repeated generator bus")
        object.__setattr__(self, "speeds", tuple(sorted(self.speeds)))

    @property
    def speed_map(self) -> dict[int, float]:
        return dict(self.speeds)


def validate_disturbance_set(disturbances) -> tuple[Disturbance, ...]:
    disturbances = tuple(disturbances)
    if not disturbances:
        raise ValidationError("disturbance set is empty")
    total = sum(d.probability for d in disturbances)
    if abs(total - 1.0) > PROBABILITY_TOL:
        raise ProbabilityMassError(
            f"disturbance probabilities sum to {total!r}, not 1")
    return disturbances


@dataclass(frozen=True)
class ActionHistogram:
    """Binned per-candidate total-action samples for one disturbance."""

    disturbance_id: str
    bus: int
    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.bin_edges.setflags(write=False)
        self.counts.setflags(write=False)


@dataclass(frozen=True)
class SitingResult:
    """Output of the chance-constrained siting optimization."""

    candidates: tuple[int, ...]          # ascending bus ids
    disturbance_ids: tuple[str, ...]
    disturbance_probabilities: np.ndarray
    probabilities: np.ndarray            # (disturbances, candidates) P_k | x0
    phi: np.ndarray                      # aggregate objective per candidate
    winner: int
    samples: int
    seed: int
    method: str
    gain: float
    base_wind: float
    histograms: tuple[ActionHistogram, ...]
    base_build_seconds: float
    per_sample_microseconds: float

    def __post_init__(self):
        self.disturbance_probabilities.setflags(write=False)
        self.probabilities.setflags(write=False)
        self.phi.setflags(write=False)


@dataclass(frozen=True)
class BaselineResult:
    """Output of a damping-ratio benchmark baseline."""

    candidates: tuple[int, ...]
    probabilities: np.ndarray  # P(benchmark event) per candidate
    winner: int
    benchmark: float
    mode: str    # "dominant" | "all"
    method: str  # "linear" | "exact"

    def __post_init__(self):
        self.probabilities.setflags(write=False)


@dataclass(frozen=True)
class _CandidateBase:
    """Disturbance-independent quantities for one candidate placement."""

    bus: int
    model: SystemModel
    dec: ModalDecomposition
    dlam_dpw: np.ndarray


def _sorted_candidates(case: NetworkCase, candidates) -> tuple[int, ...]:
    candidates = tuple(sorted(candidates))
    if len(set(candidates)) != len(candidates):
        raise ValidationError("duplicate candidate bus")
    bad = sorted(set(candidates) - set(case.candidate_buses))
    if bad:
        raise ValidationError(f"bus(es) {bad} are not in the case candidate set")
    return candidates


def _candidate_bases(case: NetworkCase, candidates, gain: float, p_w0: float,
                     fd_step: float) -> list[_CandidateBase]:
    eq = solve_power_flow(case, p_w0)
    bases = []
    for bus in candidates:
        try:
            model = build_system_matrix(case, eq, bus, gain)
            dec = decompose(model)
            da = fd_system_matrix(case, p_w0, bus, gain, fd_step)
            dlam = eigen_sensitivity(dec, da)
        except Exception as exc:
            raise type(exc)(f"candidate bus {bus}: {exc}") from exc
        bases.append(_CandidateBase(bus=bus, model=model, dec=dec, dlam_dpw=dlam))
    return bases


def _estimate_from_base(base: _CandidateBase, disturbance: Disturbance,
                        p_w0: float) -> ActionEstimate:
    try:
        dx0 = base.model.state_vector(disturbance.speed_map)
        z0 = transform_disturbance(base.dec, dx0)
        s0 = total_action(base.dec, z0)
        beta = beta_coefficients(base.dec, z0)
        slope = gamma(beta, base.dlam_dpw)
    except Exception as exc:
        raise type(exc)(f"candidate bus {base.bus}: {exc}") from exc
    return ActionEstimate(bus=base.bus, base_action=s0, beta=beta,
                          sensitivity=base.dlam_dpw, slope=slope,
                          base_wind=p_w0)


def prepare_estimates(case: NetworkCase, candidates, gain: float, p_w0: float,
                      disturbance: Disturbance,
                      fd_step: float = FD_STEP) -> list[ActionEstimate]:
    """Affine total-action estimates for every candidate, one disturbance.

    The equilibrium and the finite-difference evaluations are shared across
    candidates (the actuator injects nothing at the equilibrium, so the
    power flow does not depend on the placement).
    """
    candidates = _sorted_candidates(case, candidates)
    bases = _candidate_bases(case, candidates, gain, p_w0, fd_step)
    return [_estimate_from_base(b, disturbance, p_w0) for b in bases]


def win_fractions(actions: np.ndarray) -> np.ndarray:
    """Fraction of columns where each row attains the minimum.

    Ties go to the earliest row, so callers must order rows by ascending
    bus id to realize the lowest-bus tie rule.
    """
    actions = np.asarray(actions)
    if actions.ndim != 2 or actions.size == 0:
        raise ValidationError("need a (candidates, samples) action matrix")
    winners = np.argmin(actions, axis=0)
    counts = np.bincount(winners, minlength=actions.shape[0])
    return counts / actions.shape[1]


def per_disturbance_probability(estimates, samples: np.ndarray) -> np.ndarray:
    """P(candidate k attains the minimum total action) over the sample vector.

    Estimates are sorted by bus id internally; the returned vector follows
    that ascending order.
    """
    estimates = sorted(estimates, key=lambda e: e.bus)
    if not estimates:
        raise ValidationError("no candidate estimates")
    base_winds = {e.base_wind for e in estimates}
    if len(base_winds) != 1:
        raise ValidationError("estimates were built at different base wind powers")
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValidationError("need at least one wind sample")
    dp = samples - estimates[0].base_wind
    actions = np.vstack([estimate_total_action(e, dp) for e in estimates])
    return win_fractions(actions)


def _exact_action_matrix(case, candidates, gain, disturbance, samples):
    rows = []
    for bus in candidates:
        res = exact_per_sample_action(case, bus, gain, disturbance.speed_map, samples)
        if res.failure_count:
            raise ValidationError(
                f"candidate bus {bus}: {res.failure_count} exact sample(s) failed; "
                f"first: {res.errors[0]}")
        rows.append(res.values)
    return np.vstack(rows)


def _histograms(disturbance_id, candidates, actions, bins) -> list[ActionHistogram]:
    lo = float(np.min(actions))
    hi = float(np.max(actions))
    if hi <= lo:
        hi = lo + 1.0
    out = []
    for bus, row in zip(candidates, actions):
        counts, edges = np.histogram(row, bins=bins, range=(lo, hi))
        out.append(ActionHistogram(disturbance_id=disturbance_id, bus=bus,
                                   bin_edges=edges, counts=counts))
    return out


def chance_constrained_site(case: NetworkCase, candidates, disturbances,
                            wind: WindModel, samples: int, seed: int,
                            gain: float = DEFAULT_GAIN, method: str = "linear",
                            fd_step: float = FD_STEP,
                            bins: int = HISTOGRAM_BINS) -> SitingResult:
    """Pick the candidate bus maximizing the win probability over disturbances.

    Args:
        method: "linear" scores samples with the affine estimator; "exact"
            re-runs the full pipeline per sample (slow, for validation).

    The same wind sample vector is reused across candidates and disturbances;
    final ties break to the lowest bus id.
    """
    candidates = _sorted_candidates(case, candidates)
    disturbances = validate_disturbance_set(disturbances)
    if method not in ("linear", "exact"):
        raise ValidationError(f"unknown method {method!r}")
    if samples < 1:
        raise ValidationError("sample count must be >= 1")
    p_w0 = wind.base_power
    pw_samples = sample_wind_power(wind, samples, seed)

    t_build0 = time.perf_counter()
    bases = None
    if method == "linear":
        bases = _candidate_bases(case, candidates, gain, p_w0, fd_step)
    build_seconds = time.perf_counter() - t_build0

    m = len(candidates)
    prob_rows = np.zeros((len(disturbances), m))
    histograms: list[ActionHistogram] = []
    t_eval0 = time.perf_counter()
    for di, dist in enumerate(disturbances):
        if method == "linear":
            estimates = [_estimate_from_base(b, dist, p_w0) for b in bases]
            dp = pw_samples - p_w0
            actions = np.vstack([estimate_total_action(e, dp) for e in estimates])
        else:
            actions = _exact_action_matrix(case, candidates, gain, dist, pw_samples)
        prob_rows[di] = win_fractions(actions)
        histograms.extend(_histograms(dist.id, candidates, actions, bins))
    eval_seconds = time.perf_counter() - t_eval0

    weights = np.array([d.probability for d in disturbances])
    phi = weights @ prob_rows
    winner = candidates[int(np.argmax(phi))]
    return SitingResult(
        candidates=candidates,
        disturbance_ids=tuple(d.id for d in disturbances),
        disturbance_probabilities=weights,
        probabilities=prob_rows,
        phi=phi,
        winner=winner,
        samples=samples,
        seed=seed,
        method=method,
        gain=gain,
        base_wind=p_w0,
        histograms=tuple(histograms),
        base_build_seconds=build_seconds,
        per_sample_microseconds=eval_seconds / samples * 1e6,
    )


def _em_mode_indices(eigenvalues: np.ndarray) -> np.ndarray:
    """Electromechanical modes: one per conjugate pair, 0.1-3 Hz band."""
    freq = frequency_hz(eigenvalues)
    mask = (eigenvalues.imag > 0) & (freq >= EM_BAND_HZ[0]) & (freq <= EM_BAND_HZ[1])
    return np.flatnonzero(mask)


def _nearest_mode(spectrum: np.ndarray, target: complex) -> complex:
    """Track one eigenvalue into a perturbed spectrum by nearest neighbour."""
    dist = np.abs(spectrum - target)
    order = np.argsort(dist)
    if dist.size > 1 and abs(dist[order[1]] - dist[order[0]]) < 1e-6:
        raise ModeMatchingAmbiguous(
            f"mode {target:.6f}: two candidates within 1e-6 of each other")
    return complex(spectrum[order[0]])


def _baseline(case: NetworkCase, candidates, gain: float, p_w0: float,
              samples: np.ndarray, zeta_benchmark: float, mode: str,
              exact: bool, fd_step: float) -> BaselineResult:
    if not (0.0 <= zeta_benchmark <= 1.0):
        raise ValidationError("damping-ratio benchmark must be in [0, 1]")
    candidates = _sorted_candidates(case, candidates)
    samples = np.asarray(samples, dtype=float)
    if samples.size == 0:
        raise ValidationError("need at least one wind sample")

    probs = np.zeros(len(candidates))
    if exact:
        # base-condition dominant mode per candidate, tracked across samples
        base_eq = solve_power_flow(case, p_w0)
        dominant_lam = {}
        for bus in candidates:
            dec = decompose(build_system_matrix(case, base_eq, bus, gain))
            em = _em_mode_indices(dec.eigenvalues)
            if em.size == 0:
                raise NoOscillatoryMode(f"candidate bus {bus}: no mode in band")
            zetas = damping_ratio(dec.eigenvalues[em])
            dominant_lam[bus] = dec.eigenvalues[em[int(np.argmin(zetas))]]
        hits = np.zeros(len(candidates), dtype=int)
        for pw in samples:
            eq = solve_power_flow(case, float(pw))
            for ci, bus in enumerate(candidates):
                dec = decompose(build_system_matrix(case, eq, bus, gain))
                em = _em_mode_indices(dec.eigenvalues)
                if em.size == 0:
                    raise NoOscillatoryMode(f"candidate bus {bus}: no mode in band")
                if mode == "all":
                    value = float(np.min(damping_ratio(dec.eigenvalues[em])))
                else:
                    lam = _nearest_mode(dec.eigenvalues, dominant_lam[bus])
                    value = float(damping_ratio(np.array([lam]))[0])
                hits[ci] += value >= zeta_benchmark
        probs = hits / samples.size
    else:
        bases = _candidate_bases(case, candidates, gain, p_w0, fd_step)
        dp = samples - p_w0
        for ci, base in enumerate(bases):
            lam = base.dec.eigenvalues
            em = _em_mode_indices(lam)
            if em.size == 0:
                raise NoOscillatoryMode(f"candidate bus {base.bus}: no mode in band")
            moved = lam[em, None] + base.dlam_dpw[em, None] * dp[None, :]
            zetas = damping_ratio(moved)  # (em modes, samples)
            if mode == "all":
                ok = np.all(zetas >= zeta_benchmark, axis=0)
            else:
                dominant = int(np.argmin(damping_ratio(lam[em])))
                ok = zetas[dominant] >= zeta_benchmark
            probs[ci] = np.count_nonzero(ok) / samples.size

    winner = candidates[int(np.argmax(probs))]
    return BaselineResult(candidates=candidates, probabilities=probs,
                          winner=winner, benchmark=zeta_benchmark, mode=mode,
                          method="exact" if exact else "linear")


def baseline_dominant_mode(case: NetworkCase, candidates, gain: float, p_w0: float,
                           samples: np.ndarray, zeta_benchmark: float,
                           exact: bool = False,
                           fd_step: float = FD_STEP) -> BaselineResult:
    """Benchmark method (a): P(dominant-mode damping ratio >= benchmark).

    The dominant mode is the electromechanical mode with the lowest damping
    ratio: at the base condition for the linear method, re-identified per
    sample for the exact method.
    """
    return _baseline(case, candidates, gain, p_w0, samples, zeta_benchmark,
                     mode="dominant", exact=exact, fd_step=fd_step)


def baseline_all_modes(case: NetworkCase, candidates, gain: float, p_w0: float,
                       samples: np.ndarray, zeta_benchmark: float,
                       exact: bool = False,
                       fd_step: float = FD_STEP) -> BaselineResult:
    """Benchmark method (b): P(every electromechanical mode >= benchmark)."""
    return _baseline(case, candidates, gain, p_w0, samples, zeta_benchmark,
                     mode="all", exact=exact, fd_step=fd_step)
