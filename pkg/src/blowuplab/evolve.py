"""Moving-mesh evolution of u_tt = u_rr + (d-1)/r u_r - f(u)/r^2 towards blowup.

Nodes r_i(tau) follow a relaxed equidistribution law in a computational
coordinate xi in [0, 1],

    tau_relax * d/dtau (r_xixi) = -(M r_xi)_xi,

advanced implicitly (one tridiagonal solve per step).  The field is advanced
with RK4 along the moving nodes (quasi-Lagrangian form), and physical time
runs on a Sundman clock dt/dtau = g = (1 + max u_r^2)^(-1/2), so a fixed
tau-step shrinks dt in proportion to the blowup scale T - t.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .model import FieldSnapshot, Kind, ModelSpec, SimilarityProfile, nonlinearity_f

log = logging.getLogger(__name__)


class EvolutionError(RuntimeError):
    """Fatal failure of an evolution; ``state`` is the last good MeshState."""

    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass(frozen=True)
class EvolutionConfig:
    model: ModelSpec
    n_nodes: int = 513
    R: float = 5.0
    tau_relax: float = 1e-2
    monitor_floor: float = 1.0
    smoothing_passes: int = 2
    cfl: float = 0.4
    stop_threshold: float = 1e8
    min_cell_ratio: float = 1e-12
    t_max: float = 50.0
    max_steps: int = 2_000_000
    snapshot_stride: int = 20
    # initial data: "gauss" -> A r^p exp(-(r-r0)^2/sigma^2); "selfsimilar" -> phi0(r/T0)
    family: str = "gauss"
    A: float = 10.0
    sigma: float = 0.5
    r0: float = 0.0
    T0: float = 1.0

    def __post_init__(self):
        if self.n_nodes < 129:
            raise ValueError("n_nodes must be >= 129")
        if self.R < 3:
            raise ValueError("R must be >= 3")
        if self.stop_threshold < 1e6:
            raise ValueError("stop_threshold must be >= 1e6")
        if self.family not in ("gauss", "selfsimilar"):
            raise ValueError(f"unknown initial-data family {self.family!r}")
        if self.sigma <= 0 or self.T0 <= 0:
            raise ValueError("sigma and T0 must be positive")

    def with_(self, **kw) -> "EvolutionConfig":
        return replace(self, **kw)


@dataclass
class MeshState:
    xi: np.ndarray
    r: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    t: float = 0.0
    tau: float = 0.0
    step_count: int = 0

    def snapshot(self) -> FieldSnapshot:
        return FieldSnapshot(self.t, self.r.copy(), self.u.copy(), self.ut.copy())

    def copy(self) -> "MeshState":
        return MeshState(self.xi.copy(), self.r.copy(), self.u.copy(), self.ut.copy(),
                         self.t, self.tau, self.step_count)


@dataclass
class Trajectory:
    model: ModelSpec
    snapshots: list[FieldSnapshot] = field(default_factory=list)
    t: list[float] = field(default_factory=list)
    origin: list[float] = field(default_factory=list)
    min_cell: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    tau: list[float] = field(default_factory=list)
    max_ur: list[float] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def blowup(self) -> bool:
        return self.stop_reason in ("stop_threshold", "min_cell")

    def series(self) -> dict[str, np.ndarray]:
        return {k: np.asarray(getattr(self, k)) for k in ("t", "origin", "min_cell", "dt", "tau", "max_ur")}


# ---------------------------------------------------------------- discretization

def derivatives(r, u):
    """Three-point u_r and u_rr at interior nodes of a nonuniform mesh."""
    hm = r[1:-1] - r[:-2]
    hp = r[2:] - r[1:-1]
    s = hm * hp * (hm + hp)
    ur = (hm * hm * u[2:] - hp * hp * u[:-2] + (hp * hp - hm * hm) * u[1:-1]) / s
    urr = 2 * (hm * u[2:] - (hm + hp) * u[1:-1] + hp * u[:-2]) / s
    return ur, urr


def gradient(r, u):
    return np.gradient(u, r, edge_order=2)


def origin_derivative(r, u, parity: int) -> float:
    """u_r(0) (parity 1) or u_rr(0) (parity 2) from the two innermost nodes.

    Uses the parity-respecting local fit u = a r + b r^3 or u = a r^2 + b r^4.
    """
    r1, r2, u1, u2 = r[1], r[2], u[1], u[2]
    if parity == 1:
        return (u1 * r2**3 - u2 * r1**3) / (r1 * r2 * (r2 * r2 - r1 * r1))
    kappa = (u1 * r2**4 - u2 * r1**4) / (r1 * r1 * r2 * r2 * (r2 * r2 - r1 * r1))
    return 2 * kappa


def _smooth(M, passes):
    for _ in range(passes):
        m = np.empty_like(M)
        m[1:-1] = 0.25 * M[:-2] + 0.5 * M[1:-1] + 0.25 * M[2:]
        m[0] = 0.5 * (M[0] + M[1])
        m[-1] = 0.5 * (M[-1] + M[-2])
        M = m
    return M


def monitor(r, u, floor=1.0, passes=2):
    """Smoothed arclength-type monitor sqrt(floor + u_r^2)."""
    ur = gradient(r, u)
    return _smooth(np.sqrt(floor + ur * ur), passes)


def mesh_step(r, M, dtau, tau_relax):
    """One backward-Euler step of tau_relax (r_xixi)_tau = -(M r_xi)_xi.

    End nodes stay fixed.  dtau = inf gives the equidistributed mesh.
    """
    n = len(r) - 1
    Mh = 0.5 * (M[1:] + M[:-1])
    k = 0.0 if math.isinf(dtau) else tau_relax / dtau
    ab = np.zeros((3, n - 1))
    ab[0, 1:] = k + Mh[1:-1]
    ab[1] = -(2 * k + Mh[:-1] + Mh[1:])
    ab[2, :-1] = k + Mh[1:-1]
    rhs = k * (r[2:] - 2 * r[1:-1] + r[:-2])
    rhs[0] -= (k + Mh[0]) * r[0]
    rhs[-1] -= (k + Mh[-1]) * r[-1]
    out = r.copy()
    out[1:-1] = solve_banded((1, 1), ab, rhs)
    return out


def field_rhs(model: ModelSpec, r, rdot, u, v, g):
    """d/dtau of (u, u_t) at moving nodes; origin and outer node held fixed."""
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    ur, urr = derivatives(r, u)
    vr, _ = derivatives(r, v)
    ri = r[1:-1]
    rd = rdot[1:-1]
    du[1:-1] = g * v[1:-1] + ur * rd
    dv[1:-1] = g * (urr + (model.d - 1) / ri * ur - nonlinearity_f(model, u[1:-1]) / (ri * ri)) + vr * rd
    return du, dv


# ---------------------------------------------------------------- initial data

def initial_profile(config: EvolutionConfig, r):
    model = config.model
    if config.family == "selfsimilar":
        prof = SimilarityProfile.of(model)
        T0 = config.T0
        y = r / T0
        return prof.phi(y), (r / T0**2) * prof.dphi(y)
    p = model.parity
    u = config.A * r**p * np.exp(-((r - config.r0) ** 2) / config.sigma**2)
    return u, np.zeros_like(r)


def make_initial_data(config: EvolutionConfig, adapt_iterations: int = 30) -> MeshState:
    """Initial MeshState with the mesh equidistributed for the initial profile."""
    xi = np.linspace(0.0, 1.0, config.n_nodes)
    r = config.R * xi
    for _ in range(adapt_iterations):
        u, _ = initial_profile(config, r)
        r = mesh_step(r, monitor(r, u, config.monitor_floor, config.smoothing_passes), math.inf, config.tau_relax)
    u, ut = initial_profile(config, r)
    u[0] = 0.0
    ut[0] = 0.0
    return MeshState(xi, r, u, ut)


# ---------------------------------------------------------------- time stepping

def sundman_g(max_ur: float) -> float:
    return 1.0 / math.sqrt(1.0 + max_ur * max_ur)


def evolve(state: MeshState, config: EvolutionConfig, t_end: float | None = None):
    """Advance until blowup criterion, ``t_end`` / ``config.t_max``, or failure.

    Returns (Trajectory, final MeshState).  The trajectory records per-step
    series and a FieldSnapshot every ``config.snapshot_stride`` steps (plus
    the first and last state).
    """
    model = config.model
    parity = model.parity
    st = state.copy()
    r, u, v = st.r, st.u, st.ut
    traj = Trajectory(model)
    traj.snapshots.append(st.snapshot())
    t_stop = config.t_max if t_end is None else min(t_end, config.t_max)
    rdot = np.zeros_like(r)
    R = r[-1]

    def record(dt):
        traj.t.append(st.t)
        traj.origin.append(origin_derivative(r, u, parity))
        traj.min_cell.append(float(np.min(np.diff(r))))
        traj.dt.append(dt)
        traj.tau.append(st.tau)
        traj.max_ur.append(float(np.max(np.abs(gradient(r, u)))))

    record(0.0)
    while True:
        max_ur = traj.max_ur[-1]
        if max_ur >= config.stop_threshold:
            traj.stop_reason = "stop_threshold"
            break
        hmin = traj.min_cell[-1]
        if hmin < config.min_cell_ratio * R:
            traj.stop_reason = "min_cell"
            break
        if st.t >= t_stop - 1e-14 * max(1.0, t_stop):
            traj.stop_reason = "t_end"
            break
        if st.step_count >= config.max_steps:
            traj.stop_reason = "max_steps"
            break
        g = sundman_g(max_ur)
        h = np.diff(r)
        speed = g + np.maximum(np.abs(rdot[1:]), np.abs(rdot[:-1]))
        dtau = config.cfl / float(np.max(speed / h))
        if st.t + g * dtau > t_stop:
            dtau = (t_stop - st.t) / g
        if not dtau > 1e-300:
            raise EvolutionError(f"tau step underflow at t={st.t!r}", st.copy())
        M = monitor(r, u, config.monitor_floor, config.smoothing_passes)
        rn = mesh_step(r, M, dtau, config.tau_relax)
        if np.any(np.diff(rn) <= 0) or not np.all(np.isfinite(rn)):
            raise EvolutionError(f"mesh tangling at t={st.t!r}, step {st.step_count}", st.copy())
        rdot = (rn - r) / dtau
        rm = r + 0.5 * dtau * rdot
        k1 = field_rhs(model, r, rdot, u, v, g)
        k2 = field_rhs(model, rm, rdot, u + 0.5 * dtau * k1[0], v + 0.5 * dtau * k1[1], g)
        k3 = field_rhs(model, rm, rdot, u + 0.5 * dtau * k2[0], v + 0.5 * dtau * k2[1], g)
        k4 = field_rhs(model, rn, rdot, u + dtau * k3[0], v + dtau * k3[1], g)
        un = u + dtau / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        vn = v + dtau / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if not (np.all(np.isfinite(un)) and np.all(np.isfinite(vn))):
            raise EvolutionError(f"non-finite field at t={st.t!r}, step {st.step_count}", st.copy())
        r, u, v = rn, un, vn
        st.r, st.u, st.ut = r, u, v
        st.t += g * dtau
        st.tau += dtau
        st.step_count += 1
        record(g * dtau)
        if st.step_count % config.snapshot_stride == 0:
            traj.snapshots.append(st.snapshot())
    if traj.snapshots[-1].t != st.t:
        traj.snapshots.append(st.snapshot())
    log.info("%s: stopped (%s) at t=%.12g after %d steps", model, traj.stop_reason, st.t, st.step_count)
    return traj, st
