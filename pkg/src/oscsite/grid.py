"""Static network model, AC power flow, and swing-dynamics linearization.

The machine model is classical: constant voltage magnitude behind transient
reactance, explicit damping, loads converted to constant admittance at the
solved equilibrium. The network is reduced to the generator internal nodes
plus the wind bus; the wind injection is kept as a constant-power algebraic
constraint and eliminated by the implicit function theorem when linearizing.

State vector convention (n = 2p - 1 for p generators):

    [delta_2 - delta_1, ..., delta_p - delta_1, w_1, ..., w_p]

Relative rotor angles remove the angle-reference zero eigenvalue; all p
per-unit speed deviations are kept so the inertia matrix J = diag(2 H_j)
acts on every machine.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import (
    DimensionMismatch,
    IslandedNetwork,
    NonConvergence,
    SingularReduction,
    ValidationError,
)

BUS_TYPES = ("slack", "PV", "PQ")

DEFAULT_GAIN = 5.0       # damping-control proportional gain, p.u. power per p.u. speed
PF_TOLERANCE = 1e-8      # power-flow mismatch infinity-norm, p.u.
PF_MAX_ITER = 50
KRON_PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class Bus:
    id: int
    type: str
    v_setpoint: float = 1.0
    load_p: float = 0.0
    load_q: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0  # total line charging susceptance, p.u.


@dataclass(frozen=True)
class Generator:
    """Classical machine: inertia H (s, system base), damping D, reactance x'd."""

    bus: int
    h: float
    d: float
    xdp: float
    p: float = 0.0  # dispatched active power, p.u. (ignored at the slack bus)
    q: float = 0.0  # dispatched reactive power, p.u. (used only at PQ buses)


@dataclass(frozen=True)
class NetworkCase:
    """Validated static grid description.

    Invariants enforced at construction: exactly one slack bus, unique bus
    ids, at least two generators (one per bus), strictly positive H/D/x'd,
    candidate buses drawn from the generator buses, and every reference
    resolving to an existing bus.
    """

    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    wind_bus: int
    candidate_buses: tuple[int, ...]
    base_mva: float = 100.0
    frequency_hz: float = 60.0

    def __post_init__(self):
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            dup = sorted(i for i in set(ids) if ids.count(i) > 1)
            raise ValidationError(f"duplicate bus id(s): {dup}")
        known = set(ids)
        for b in self.buses:
            if b.type not in BUS_TYPES:
                raise ValidationError(f"bus {b.id}: unknown type {b.type!r}")
            if b.v_setpoint <= 0:
                raise ValidationError(f"bus {b.id}: voltage setpoint must be > 0")
        slacks = [b.id for b in self.buses if b.type == "slack"]
        if len(slacks) != 1:
            raise ValidationError(f"expected exactly one slack bus, found {len(slacks)}")
        for br in self.branches:
            if br.from_bus not in known or br.to_bus not in known:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus}: unknown bus")
            if br.r == 0 and br.x == 0:
                raise ValidationError(f"branch {br.from_bus}-{br.to_bus}: zero impedance")
        if len(self.generators) < 2:
            raise ValidationError("need at least two generators")
        gen_buses = [g.bus for g in self.generators]
        if len(set(gen_buses)) != len(gen_buses):
            raise ValidationError("multiple generators on one bus are not supported")
        for g in self.generators:
            if g.bus not in known:
                raise ValidationError(f"generator at bus {g.bus}: unknown bus")
            if g.h <= 0:
                raise ValidationError(f"generator at bus {g.bus}: H must be > 0")
            if g.d <= 0:
                raise ValidationError(f"generator at bus {g.bus}: D must be > 0")
            if g.xdp <= 0:
                raise ValidationError(f"generator at bus {g.bus}: x'd must be > 0")
        if slacks[0] not in set(gen_buses):
            raise ValidationError("slack bus must host a generator")
        if self.wind_bus not in known:
            raise ValidationError(f"wind bus {self.wind_bus}: unknown bus")
        if not self.candidate_buses:
            raise ValidationError("candidate bus set is empty")
        if len(set(self.candidate_buses)) != len(self.candidate_buses):
            raise ValidationError("duplicate candidate bus")
        bad = sorted(set(self.candidate_buses) - set(gen_buses))
        if bad:
            raise ValidationError(f"candidate bus(es) {bad} have no generator")
        if self.base_mva <= 0 or self.frequency_hz <= 0:
            raise ValidationError("base MVA and nominal frequency must be > 0")

    def bus_index(self, bus_id: int) -> int:
        for i, b in enumerate(self.buses):
            if b.id == bus_id:
                return i
        raise ValidationError(f"unknown bus id {bus_id}")

    @property
    def slack_bus(self) -> int:
        return next(b.id for b in self.buses if b.type == "slack")

    @property
    def gen_buses(self) -> tuple[int, ...]:
        return tuple(g.bus for g in self.generators)

    @property
    def omega_s(self) -> float:
        """Synchronous electrical speed, rad/s."""
        return 2.0 * math.pi * self.frequency_hz


@dataclass(frozen=True)
class EquilibriumState:
    """Solved operating point underlying a linearization."""

    case: NetworkCase
    v_mag: np.ndarray        # bus voltage magnitudes, p.u. (case bus order)
    v_ang: np.ndarray        # bus voltage angles, rad
    rotor_angle: np.ndarray  # generator internal angles, rad (case gen order)
    gen_power: np.ndarray    # complex generator output S, p.u.
    p_wind: float
    mismatch: float          # final power-flow mismatch infinity-norm

    def __post_init__(self):
        for name in ("v_mag", "v_ang", "rotor_angle", "gen_power"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if np.any(self.v_mag <= 0):
            raise ValidationError("equilibrium has a non-positive voltage magnitude")

    @property
    def v_complex(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


@dataclass(frozen=True)
class SystemModel:
    """Linearized swing dynamics dx/dt = A x around an equilibrium."""

    a: np.ndarray
    j: np.ndarray
    state_labels: tuple[tuple[int, str], ...]  # (generator bus, "angle"|"speed")
    placement: int | None
    gain: float
    equilibrium: EquilibriumState

    def __post_init__(self):
        self.a.setflags(write=False)
        self.j.setflags(write=False)

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def state_vector(self, speeds: dict[int, float] | None = None) -> np.ndarray:
        """Build a state deviation vector from per-generator speed deviations.

        Args:
            speeds: map of generator bus id -> delta-omega in p.u.; buses not
                listed get zero. Angle states are always zero.
        """
        x = np.zeros(self.n)
        speeds = dict(speeds or {})
        for i, (bus, kind) in enumerate(self.state_labels):
            if kind == "speed" and bus in speeds:
                x[i] = speeds.pop(bus)
        if speeds:
            raise DimensionMismatch(f"no speed state for bus(es) {sorted(speeds)}")
        return x


def ybus(case: NetworkCase) -> np.ndarray:
    """Branch-only bus admittance matrix (line charging included, no loads)."""
    n = len(case.buses)
    y = np.zeros((n, n), dtype=complex)
    for br in case.branches:
        f = case.bus_index(br.from_bus)
        t = case.bus_index(br.to_bus)
        ys = 1.0 / complex(br.r, br.x)
        ysh = 0.5j * br.b
        y[f, f] += ys + ysh
        y[t, t] += ys + ysh
        y[f, t] -= ys
        y[t, f] -= ys
    return y


def _check_connected(case: NetworkCase):
    n = len(case.buses)
    adj: list[set[int]] = [set() for _ in range(n)]
    for br in case.branches:
        f, t = case.bus_index(br.from_bus), case.bus_index(br.to_bus)
        adj[f].add(t)
        adj[t].add(f)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    if len(seen) != n:
        missing = sorted(case.buses[i].id for i in range(n) if i not in seen)
        raise IslandedNetwork(f"bus(es) {missing} unreachable from {case.buses[0].id}")


def _injection_specs(case: NetworkCase, p_w: float):
    """Net scheduled P/Q injection per bus (generation + wind - load)."""
    n = len(case.buses)
    p = np.zeros(n)
    q = np.zeros(n)
    for i, b in enumerate(case.buses):
        p[i] -= b.load_p
        q[i] -= b.load_q
    for g in case.generators:
        i = case.bus_index(g.bus)
        if case.buses[i].type != "slack":
            p[i] += g.p
        if case.buses[i].type == "PQ":
            q[i] += g.q
    p[case.bus_index(case.wind_bus)] += p_w
    return p, q


def solve_power_flow(case: NetworkCase, p_w: float,
                     tol: float = PF_TOLERANCE,
                     max_iter: int = PF_MAX_ITER) -> EquilibriumState:
    """Newton-Raphson AC power flow with a static wind injection.

    Args:
        case: validated network description.
        p_w: active power injected at the wind bus, p.u. (Q = 0).
        tol: mismatch infinity-norm convergence threshold, p.u.
        max_iter: Newton iteration cap.

    Raises:
        NonConvergence: iteration cap hit or iterates became non-finite.
        IslandedNetwork: the bus graph is disconnected.
        ValidationError: p_w < 0.
    """
    if p_w < 0:
        raise ValidationError("wind power must be >= 0")
    _check_connected(case)

    y = ybus(case)
    n = len(case.buses)
    types = [b.type for b in case.buses]
    pv = [i for i in range(n) if types[i] == "PV"]
    pq = [i for i in range(n) if types[i] == "PQ"]
    pvpq = pv + pq

    p_spec, q_spec = _injection_specs(case, p_w)
    s_spec = p_spec + 1j * q_spec

    # flat start: setpoint magnitudes where fixed, 1.0 elsewhere, zero angles
    vm = np.array([b.v_setpoint if b.type in ("slack", "PV") else 1.0
                   for b in case.buses])
    va = np.zeros(n)

    mismatch = math.inf
    for _ in range(max_iter + 1):
        v = vm * np.exp(1j * va)
        ibus = y @ v
        s = v * np.conj(ibus)
        f = np.concatenate([(s - s_spec).real[pvpq], (s - s_spec).imag[pq]])
        mismatch = float(np.max(np.abs(f))) if f.size else 0.0
        if not math.isfinite(mismatch):
            raise NonConvergence(f"power flow diverged at P_w={p_w}")
        if mismatch <= tol:
            break
        d_va = 1j * np.diag(v) @ np.conj(np.diag(ibus) - y @ np.diag(v))
        d_vm = (np.diag(v / vm) @ np.conj(np.diag(ibus))
                + np.diag(v) @ np.conj(y @ np.diag(v / vm)))
        jac = np.block([
            [d_va[np.ix_(pvpq, pvpq)].real, d_vm[np.ix_(pvpq, pq)].real],
            [d_va[np.ix_(pq, pvpq)].imag, d_vm[np.ix_(pq, pq)].imag],
        ])
        try:
            dx = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(f"singular power-flow Jacobian: {exc}") from exc
        va[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
    else:
        raise NonConvergence(
            f"power flow did not reach {tol} in {max_iter} iterations "
            f"(P_w={p_w}, mismatch={mismatch:.3e})")

    v = vm * np.exp(1j * va)
    s_inj = v * np.conj(y @ v)
    wind_idx = case.bus_index(case.wind_bus)
    rotor = np.zeros(len(case.generators))
    gen_s = np.zeros(len(case.generators), dtype=complex)
    for k, g in enumerate(case.generators):
        i = case.bus_index(g.bus)
        s_gen = s_inj[i] + complex(case.buses[i].load_p, case.buses[i].load_q)
        if i == wind_idx:
            s_gen -= p_w
        i_gen = np.conj(s_gen / v[i])
        emf = v[i] + 1j * g.xdp * i_gen
        rotor[k] = cmath.phase(emf)
        gen_s[k] = s_gen
    return EquilibriumState(case=case, v_mag=vm, v_ang=va, rotor_angle=rotor,
                            gen_power=gen_s, p_wind=p_w, mismatch=mismatch)


def _kron_reduce(y: np.ndarray, keep: list[int]) -> np.ndarray:
    """Eliminate all nodes not in `keep` from the admittance matrix."""
    elim = [i for i in range(y.shape[0]) if i not in keep]
    if not elim:
        return y[np.ix_(keep, keep)]
    y_kk = y[np.ix_(keep, keep)]
    y_ke = y[np.ix_(keep, elim)]
    y_ek = y[np.ix_(elim, keep)]
    y_ee = y[np.ix_(elim, elim)]
    lu, piv = lu_factor(y_ee)
    if np.min(np.abs(np.diag(lu))) < KRON_PIVOT_TOL:
        raise SingularReduction("node elimination pivot below tolerance")
    return y_kk - y_ke @ lu_solve((lu, piv), y_ek)


@dataclass(frozen=True)
class ReducedNetwork:
    """Generator internal nodes + wind bus after node elimination.

    `y` is ordered [internal node of gen 1, ..., gen p, wind bus]. The wind
    bus carries a constant-power constraint S_w = p_wind + 0j; its voltage is
    the algebraic unknown eliminated when forming the synchronizing Jacobian.
    """

    y: np.ndarray
    e_mag: np.ndarray     # fixed internal EMF magnitudes, p.u.
    delta0: np.ndarray    # equilibrium rotor angles, rad
    v_wind0: complex      # equilibrium wind-bus voltage
    p_wind: float

    def __post_init__(self):
        self.y.setflags(write=False)
        self.e_mag.setflags(write=False)
        self.delta0.setflags(write=False)

    @property
    def p(self) -> int:
        return self.e_mag.size

    def _split(self):
        p = self.p
        return (self.y[:p, :p], self.y[:p, p], self.y[p, :p], self.y[p, p])

    def electrical_power(self, delta: np.ndarray, v_wind: complex) -> np.ndarray:
        """Air-gap active power of each machine at the given angles."""
        ygg, ygw, _, _ = self._split()
        e = self.e_mag * np.exp(1j * delta)
        i_gen = ygg @ e + ygw * v_wind
        return (e * np.conj(i_gen)).real

    def wind_power(self, delta: np.ndarray, v_wind: complex) -> complex:
        """Complex power the wind bus must inject for KCL to hold."""
        _, _, ywg, yww = self._split()
        e = self.e_mag * np.exp(1j * delta)
        return v_wind * np.conj(ywg @ e + yww * v_wind)

    def solve_wind_voltage(self, delta: np.ndarray, v_start: complex | None = None,
                           tol: float = 1e-12, max_iter: int = 40) -> complex:
        """Newton solve of the constant-power wind constraint for V_w."""
        v = self.v_wind0 if v_start is None else v_start
        target = complex(self.p_wind)
        for _ in range(max_iter):
            res = self.wind_power(delta, v) - target
            if abs(res) <= tol:
                return v
            gu = self._wind_jacobian_u(delta, v)
            du = np.linalg.solve(gu, -np.array([res.real, res.imag]))
            v += complex(du[0], du[1])
        raise NonConvergence("wind-bus voltage iteration did not converge")

    def _wind_jacobian_u(self, delta: np.ndarray, v_wind: complex) -> np.ndarray:
        _, _, ywg, yww = self._split()
        e = self.e_mag * np.exp(1j * delta)
        i_w = ywg @ e + yww * v_wind
        ds_du1 = np.conj(i_w) + v_wind * np.conj(yww)
        ds_du2 = 1j * np.conj(i_w) - 1j * v_wind * np.conj(yww)
        return np.array([[ds_du1.real, ds_du2.real],
                         [ds_du1.imag, ds_du2.imag]])

    def synchronizing_jacobian(self) -> np.ndarray:
        """dP_e/d(delta) at the equilibrium, wind constraint eliminated.

        The wind-bus voltage is an implicit function of the rotor angles
        through the constant-power constraint; its contribution enters via
        the implicit function theorem. Rows sum to zero (uniform angle
        shifts leave every power invariant).
        """
        ygg, ygw, ywg, yww = self._split()
        e = self.e_mag * np.exp(1j * self.delta0)
        v_w = self.v_wind0
        i_gen = ygg @ e + ygw * v_w
        i_w = ywg @ e + yww * v_w

        # explicit part: dP_e/d(delta) at fixed V_w
        dp_dth = (e[:, None] * np.conj(1j * e[None, :] * ygg)).real
        dp_dth[np.diag_indices_from(dp_dth)] += (1j * e * np.conj(i_gen)).real

        # dP_e/d(Re V_w, Im V_w)
        dp_du = np.column_stack([
            (e * np.conj(ygw)).real,
            (e * np.conj(1j * ygw)).real,
        ])

        # wind constraint partials
        ds_dth = v_w * np.conj(1j * e * ywg)            # length p, complex
        g_th = np.vstack([ds_dth.real, ds_dth.imag])    # 2 x p
        g_u = self._wind_jacobian_u(self.delta0, v_w)
        du_dth = -np.linalg.solve(g_u, g_th)            # 2 x p

        return dp_dth + dp_du @ du_dth


def reduce_network(case: NetworkCase, eq: EquilibriumState) -> ReducedNetwork:
    """Convert loads to admittances and eliminate all non-essential buses."""
    n = len(case.buses)
    p = len(case.generators)
    v = eq.v_complex

    y_dyn = ybus(case).copy()
    for i, b in enumerate(case.buses):
        y_dyn[i, i] += complex(b.load_p, -b.load_q) / eq.v_mag[i] ** 2

    # augment with generator internal nodes (indices n .. n+p-1)
    y_aug = np.zeros((n + p, n + p), dtype=complex)
    y_aug[:n, :n] = y_dyn
    e_mag = np.zeros(p)
    for k, g in enumerate(case.generators):
        i = case.bus_index(g.bus)
        yg = 1.0 / complex(0.0, g.xdp)
        gi = n + k
        y_aug[gi, gi] += yg
        y_aug[i, i] += yg
        y_aug[gi, i] -= yg
        y_aug[i, gi] -= yg
        i_gen = np.conj(eq.gen_power[k] / v[i])
        e_mag[k] = abs(v[i] + 1j * g.xdp * i_gen)

    wind_idx = case.bus_index(case.wind_bus)
    keep = list(range(n, n + p)) + [wind_idx]
    y_red = _kron_reduce(y_aug, keep)

    red = ReducedNetwork(y=y_red, e_mag=e_mag, delta0=eq.rotor_angle.copy(),
                         v_wind0=complex(v[wind_idx]), p_wind=eq.p_wind)
    # consistency: the reduced model must reproduce the wind injection
    residual = abs(red.wind_power(red.delta0, red.v_wind0) - eq.p_wind)
    if residual > 1e2 * max(PF_TOLERANCE, eq.mismatch):
        raise ValidationError(
            f"reduced network inconsistent with equilibrium (residual {residual:.3e})")
    return red


def build_system_matrix(case: NetworkCase, eq: EquilibriumState,
                        placement: int | None = None,
                        gain: float = DEFAULT_GAIN) -> SystemModel:
    """Linearize the classical swing dynamics at the given equilibrium.

    Args:
        case: network description (must match `eq`).
        eq: solved operating point.
        placement: candidate bus carrying the damping actuator, or None.
        gain: actuator gain K_d; injects -K_d * delta-omega at the collocated
            machine's swing equation. Ignored when placement is None.

    Returns:
        SystemModel in relative-angle coordinates, n = 2p - 1 states.
    """
    if eq.case != case:
        raise ValidationError("equilibrium was solved for a different case")
    if placement is not None:
        if placement not in case.candidate_buses:
            raise ValidationError(f"bus {placement} is not a candidate bus")
        if gain < 0:
            raise ValidationError("actuator gain must be >= 0")

    p = len(case.generators)
    red = reduce_network(case, eq)
    ks = red.synchronizing_jacobian()

    h = np.array([g.h for g in case.generators])
    d = np.diag([g.d for g in case.generators]).astype(float)
    if placement is not None:
        g_idx = list(case.gen_buses).index(placement)
        d[g_idx, g_idx] += gain

    inv_2h = np.diag(1.0 / (2.0 * h))
    omega_s = case.omega_s

    n = 2 * p - 1
    a = np.zeros((n, n))
    # relative-angle rows: d/dt (delta_i - delta_1) = w_s (w_i - w_1)
    for i in range(p - 1):
        a[i, p - 1] = -omega_s
        a[i, p + i] = omega_s
    # speed rows; row sums of ks vanish, so ks @ delta = ks[:, 1:] @ eta
    a[p - 1:, :p - 1] = -inv_2h @ ks[:, 1:]
    a[p - 1:, p - 1:] = -inv_2h @ d

    if not np.all(np.isfinite(a)):
        raise ValidationError("non-finite entries in the state matrix")

    j = np.zeros((n, n))
    j[p - 1:, p - 1:] = np.diag(2.0 * h)

    labels = tuple((g.bus, "angle") for g in case.generators[1:])
    labels += tuple((g.bus, "speed") for g in case.generators)
    return SystemModel(a=a, j=j, state_labels=labels,
                       placement=placement, gain=gain if placement is not None else 0.0,
                       equilibrium=eq)
