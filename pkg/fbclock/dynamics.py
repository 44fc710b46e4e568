# fbclock/dynamics.py
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import solve_ivp

from .errors import StiffnessError
from .models import ClockParams, MeanFieldModel, StateQuad, Trajectory

logger = logging.getLogger("fbclock.dynamics")

ATTRACTOR = "attractor"
REPELLER = "repeller"
SADDLE = "saddle"
NON_HYPERBOLIC = "non_hyperbolic"

INTEGRATORS = ("rk4", "adaptive_rk45")
LINE_SEARCH = (1.0, 0.5, 0.25, 0.125, 0.0625)


# -------- vector field --------
def vector_field(model: MeanFieldModel, z: np.ndarray, drive_phase=None) -> np.ndarray:
    """
    Quadrature form of the mean-field flow for stacked states z[..., (x_a, y_a, x_b, y_b)].
    drive_phase (rad) rotates both drive terms, broadcast against z[..., 0].
    """
    z = np.asarray(z, dtype=float)
    xa, ya, xb, yb = z[..., 0], z[..., 1], z[..., 2], z[..., 3]
    da, db = model.drift_a, model.drift_b
    cab, cba = model.coupling_ab, model.coupling_ba
    Ka, Kb = model.kerr_a, model.kerr_b
    Da, Db = model.drive_a, model.drive_b
    if drive_phase is not None:
        rot = np.exp(1j * np.asarray(drive_phase, dtype=float))
        Da, Db = Da * rot, Db * rot

    ra2 = xa * xa + ya * ya
    rb2 = xb * xb + yb * yb
    out = np.empty(np.broadcast(xa, np.real(Da)).shape + (4,))
    out[..., 0] = (da.real * xa - da.imag * ya + 2.0 * Ka * ra2 * ya
                   - (cab.real * xb - cab.imag * yb) - np.real(Da))
    out[..., 1] = (da.imag * xa + da.real * ya - 2.0 * Ka * ra2 * xa
                   - (cab.imag * xb + cab.real * yb) - np.imag(Da))
    out[..., 2] = (db.real * xb - db.imag * yb + 2.0 * Kb * rb2 * yb
                   - (cba.real * xa - cba.imag * ya) - np.real(Db))
    out[..., 3] = (db.imag * xb + db.real * yb - 2.0 * Kb * rb2 * xb
                   - (cba.imag * xa + cba.real * ya) - np.imag(Db))
    return out


def jacobian_batch(model: MeanFieldModel, z: np.ndarray) -> np.ndarray:
    """Analytic d f_i / d z_j for stacked states, shape (..., 4, 4)."""
    z = np.asarray(z, dtype=float)
    J = np.zeros(z.shape[:-1] + (4, 4))
    for (i, j), d, K, c in (((0, 2), model.drift_a, model.kerr_a, model.coupling_ab),
                            ((2, 0), model.drift_b, model.kerr_b, model.coupling_ba)):
        x, y = z[..., i], z[..., i + 1]
        J[..., i, i] = d.real + 4.0 * K * x * y
        J[..., i, i + 1] = -d.imag + 2.0 * K * (x * x + 3.0 * y * y)
        J[..., i + 1, i] = d.imag - 2.0 * K * (3.0 * x * x + y * y)
        J[..., i + 1, i + 1] = d.real - 4.0 * K * x * y
        # linear cross-coupling block
        J[..., i, j] = -c.real
        J[..., i, j + 1] = c.imag
        J[..., i + 1, j] = -c.imag
        J[..., i + 1, j + 1] = -c.real
    return J


def rhs(model: MeanFieldModel, s: StateQuad) -> StateQuad:
    return StateQuad.from_array(vector_field(model, s.as_array()))


def jacobian(model: MeanFieldModel, s: StateQuad) -> np.ndarray:
    return jacobian_batch(model, s.as_array())


# -------- integrators --------
def rk4_states(model: MeanFieldModel, z0: np.ndarray, dt: float, n_steps: int,
               drive_phase: Optional[np.ndarray] = None, stride: int = 1) -> np.ndarray:
    """
    Fixed-step RK4 over a batch of initial states z0[..., 4].
    drive_phase, if given, is sampled on the step grid (n_steps + 1 leading entries);
    the half-step value is the mean of its neighbours.
    Returns every `stride`-th state including the first, shape (n_out, ..., 4).
    """
    z = np.array(z0, dtype=float)
    n_out = n_steps // stride + 1
    out = np.empty((n_out,) + z.shape)
    out[0] = z
    phase = None if drive_phase is None else np.asarray(drive_phase, dtype=float)
    k_out = 1
    for k in range(n_steps):
        if phase is None:
            p0 = pm = p1 = None
        else:
            p0, p1 = phase[k], phase[k + 1]
            pm = 0.5 * (p0 + p1)
        k1 = vector_field(model, z, p0)
        k2 = vector_field(model, z + 0.5 * dt * k1, pm)
        k3 = vector_field(model, z + 0.5 * dt * k2, pm)
        k4 = vector_field(model, z + dt * k3, p1)
        z = z + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0:
            out[k_out] = z
            k_out += 1
    if not np.all(np.isfinite(out)):
        raise StiffnessError(f"rk4 diverged with dt={dt:.3e}; reduce the step")
    return out


def integrate(model: MeanFieldModel, s0: StateQuad, t_end: float, dt: float,
              method: str = "rk4", atol: float = 1e-10, rtol: float = 1e-8) -> Trajectory:
    if dt <= 0 or t_end <= 0:
        raise ValueError(f"dt and t_end must be positive, got dt={dt}, t_end={t_end}")
    if method not in INTEGRATORS:
        raise ValueError(f"unknown integrator {method!r}; expected one of {INTEGRATORS}")
    n_steps = int(round(t_end / dt))
    t = np.arange(n_steps + 1) * dt

    if method == "rk4":
        states = rk4_states(model, s0.as_array(), dt, n_steps)
        return Trajectory(t, states)

    sol = solve_ivp(lambda _t, y: vector_field(model, y), (0.0, t[-1]), s0.as_array(),
                    method="RK45", t_eval=t, atol=atol, rtol=rtol)
    if sol.status != 0:
        raise StiffnessError(f"adaptive integration stopped at t={sol.t[-1] if sol.t.size else 0.0:.3e}: "
                             f"{sol.message}")
    logger.debug(f"rk45: {sol.nfev} evaluations for {n_steps} output samples")
    return Trajectory(sol.t, sol.y.T)


# -------- fixed points --------
@dataclass
class FixedPointReport:
    state: StateQuad
    eigenvalues: np.ndarray     # 4 complex, sorted by descending real part
    stability: str              # attractor | repeller | saddle | non_hyperbolic
    residual: float

    @property
    def alpha_sq(self) -> float:
        return abs(self.state.alpha) ** 2

    @property
    def beta_sq(self) -> float:
        return abs(self.state.beta) ** 2


def default_hyperbolic_tol(model: MeanFieldModel) -> float:
    return 1e-6 * max(model.kappa_a, model.kappa_b, 1e-300)


def classify(eigenvalues: Sequence[complex], hyperbolic_tol: float) -> str:
    re = np.real(np.asarray(eigenvalues, dtype=complex))
    if np.any(np.abs(re) <= hyperbolic_tol):
        return NON_HYPERBOLIC
    if np.all(re > 0):
        return REPELLER
    if np.all(re < 0):
        return ATTRACTOR
    return SADDLE


def _start_grid(model: MeanFieldModel, n_starts: int) -> np.ndarray:
    kappa_min = max(min(model.kappa_a, model.kappa_b), 1e-300)
    kappa_max = max(model.kappa_a, model.kappa_b)
    drive = max(abs(model.drive_a), abs(model.drive_b))
    coupling = max(abs(model.coupling_ab), abs(model.coupling_ba))
    kerr = max(abs(model.kerr_a), abs(model.kerr_b))
    half_width = max(2.0 * drive / kappa_min, math.sqrt(drive / kappa_min), 1.0)
    if kerr > 0:
        detuning = max(abs(model.drift_a.imag), abs(model.drift_b.imag))
        half_width = max(half_width, math.sqrt((detuning + kappa_max + coupling) / (2.0 * kerr)))
    axis = np.linspace(-half_width, half_width, n_starts) if n_starts > 1 else np.zeros(1)
    mesh = np.meshgrid(axis, axis, axis, axis, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _newton_step(J: np.ndarray, F: np.ndarray) -> np.ndarray:
    try:
        return -np.linalg.solve(J, F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        return -(np.linalg.pinv(J) @ F[..., None])[..., 0]


def _scaled_residual(model: MeanFieldModel, z: np.ndarray) -> np.ndarray:
    F = vector_field(model, z)
    return np.linalg.norm(F, axis=-1) / (model.rate_scale * (1.0 + np.linalg.norm(z, axis=-1)))


def find_fixed_points(model: MeanFieldModel, n_starts: int = 8, tol: float = 1e-9,
                      seeds: Optional[np.ndarray] = None, max_iter: int = 80,
                      dedup_tol: float = 1e-6,
                      hyperbolic_tol: Optional[float] = None) -> List[FixedPointReport]:
    """
    Damped Newton from an n_starts^4 grid plus optional continuation seeds.
    Converged roots are deduplicated and classified by their Jacobian spectrum.
    """
    if n_starts < 1:
        raise ValueError("n_starts must be at least 1")
    starts = _start_grid(model, n_starts)
    if seeds is not None and len(seeds):
        starts = np.vstack([np.asarray(seeds, dtype=float).reshape(-1, 4), starts])

    z = starts.copy()
    res = _scaled_residual(model, z)
    active = np.isfinite(res) & (res >= tol)
    for it in range(max_iter):
        if not np.any(active):
            break
        za = z[active]
        ra = res[active]
        step = _newton_step(jacobian_batch(model, za), vector_field(model, za))
        accepted = np.zeros(za.shape[0], dtype=bool)
        new_z, new_r = za.copy(), ra.copy()
        for scale in LINE_SEARCH:
            cand = za + scale * step
            rc = _scaled_residual(model, cand)
            better = ~accepted & np.isfinite(rc) & (rc < ra)
            new_z[better], new_r[better] = cand[better], rc[better]
            accepted |= better
        # stalled starts take the shortest step and keep iterating
        stalled = ~accepted
        cand = za[stalled] + LINE_SEARCH[-1] * step[stalled]
        new_z[stalled], new_r[stalled] = cand, _scaled_residual(model, cand)
        z[active], res[active] = new_z, new_r
        active = np.isfinite(res) & (res >= tol)
    logger.debug(f"newton: {starts.shape[0]} starts, {int(np.sum(res < tol))} converged")

    roots: List[np.ndarray] = []
    for zk in z[np.isfinite(res) & (res < tol)]:
        scale = max(1.0, float(np.linalg.norm(zk)))
        if all(np.linalg.norm(zk - r) > dedup_tol * scale for r in roots):
            roots.append(zk)

    tol_h = default_hyperbolic_tol(model) if hyperbolic_tol is None else hyperbolic_tol
    reports = []
    for zk in roots:
        eig = np.linalg.eigvals(jacobian_batch(model, zk))
        eig = eig[np.argsort(-eig.real, kind="stable")]
        reports.append(FixedPointReport(StateQuad.from_array(zk), eig, classify(eig, tol_h),
                                        float(_scaled_residual(model, zk))))
    reports.sort(key=lambda r: (r.beta_sq, r.alpha_sq))
    return reports


# -------- drive sweep --------
@dataclass
class BifurcationRow:
    eps_sq: float
    branch_id: int
    alpha_sq: float
    beta_sq: float
    stability: str
    eigenvalues: np.ndarray


CSV_HEADER = (["eps_sq", "branch_id", "alpha_sq", "beta_sq", "class"]
              + [f"re_l{i}" for i in range(1, 5)] + [f"im_l{i}" for i in range(1, 5)])


@dataclass
class BifurcationDiagram:
    rows: List[BifurcationRow] = field(default_factory=list)

    @property
    def eps_sq_grid(self) -> np.ndarray:
        return np.array(sorted({r.eps_sq for r in self.rows}))

    def classes_at(self, eps_sq: float) -> List[str]:
        return sorted(r.stability for r in self.rows if r.eps_sq == eps_sq)

    def transitions(self) -> List[Tuple[float, float]]:
        """Grid cells across which the multiset of stability classes changes."""
        grid = self.eps_sq_grid
        out = []
        for lo, hi in zip(grid[:-1], grid[1:]):
            if self.classes_at(lo) != self.classes_at(hi):
                out.append((float(lo), float(hi)))
        return out

    def csv_rows(self) -> List[List]:
        out = []
        for r in self.rows:
            eig = np.asarray(r.eigenvalues, dtype=complex)
            out.append([repr(r.eps_sq), r.branch_id, repr(r.alpha_sq), repr(r.beta_sq), r.stability]
                       + [repr(float(v)) for v in eig.real] + [repr(float(v)) for v in eig.imag])
        return out

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            writer.writerows(self.csv_rows())


def sweep_drive(template: MeanFieldModel, eps_sq_grid: Sequence[float], n_starts: int = 8,
                continuation_starts: int = 4, tol: float = 1e-9,
                branch_tol: float = 0.2) -> BifurcationDiagram:
    """
    template carries the drive of unit amplitude; each grid point scales it by sqrt(eps_sq).
    The first grid point uses the full start grid, later points a coarser grid seeded
    with the previous roots.
    """
    grid = np.asarray(eps_sq_grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ValueError("eps_sq grid must be a non-empty 1-d sequence")
    if np.any(grid < 0):
        raise ValueError("eps_sq grid must be non-negative")
    steps = np.diff(grid)
    if grid.size > 1 and not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("eps_sq grid must be strictly monotone")

    diagram = BifurcationDiagram()
    prev: List[Tuple[int, np.ndarray]] = []
    next_branch = 0
    for k, eps_sq in enumerate(grid):
        model = template.scaled_drive(math.sqrt(eps_sq))
        seeds = np.array([z for _, z in prev]) if prev else None
        reports = find_fixed_points(model, n_starts if k == 0 else continuation_starts,
                                    tol=tol, seeds=seeds)
        # greedy nearest-neighbour continuation of branch labels
        taken = set()
        current = []
        for rep in reports:
            z = rep.state.as_array()
            best, best_d = None, math.inf
            for bid, zp in prev:
                d = float(np.linalg.norm(z - zp))
                if bid not in taken and d < best_d:
                    best, best_d = bid, d
            if best is not None and best_d <= branch_tol * (1.0 + float(np.linalg.norm(z))):
                bid = best
            else:
                bid = next_branch
                next_branch += 1
            taken.add(bid)
            current.append((bid, z))
            diagram.rows.append(BifurcationRow(float(eps_sq), bid, rep.alpha_sq, rep.beta_sq,
                                               rep.stability, rep.eigenvalues))
        prev = current
    logger.info(f"sweep: {grid.size} drive points, {next_branch} branches, "
                f"{len(diagram.transitions())} class changes")
    return diagram


# -------- limit cycles --------
@dataclass
class LimitCycleInfo:
    period: float           # s
    frequency: float        # Hz
    amplitude_a: float      # peak-to-peak of |alpha|
    amplitude_b: float      # peak-to-peak of |beta|
    mean_point: StateQuad


def rising_crossings(t: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Linearly interpolated times where s goes from negative to non-negative."""
    idx = np.nonzero((s[:-1] < 0) & (s[1:] >= 0))[0]
    frac = -s[idx] / (s[idx + 1] - s[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def detect_limit_cycle(traj: Trajectory, transient: Optional[float] = None,
                       rel_thresh: float = 1e-3, spread_tol: float = 0.01,
                       model: Optional[MeanFieldModel] = None) -> Optional[LimitCycleInfo]:
    if transient is None:
        transient = 20.0 / min(model.kappa_a, model.kappa_b) if model is not None else 0.0
    tail = traj.after(traj.t[0] + transient)
    if tail.t.size < 16:
        return None
    amp = np.abs(tail.alpha)
    peak = float(np.max(amp))
    p2p = float(np.ptp(amp))
    if peak == 0.0 or p2p <= rel_thresh * peak:
        return None
    half = amp.size // 2
    if np.ptp(amp[half:]) < 0.5 * np.ptp(amp[:half]):
        logger.debug("oscillation decays over the analysed window")
        return None

    ticks = rising_crossings(tail.t, amp - np.mean(amp))
    if ticks.size < 3:
        return None
    intervals = np.diff(ticks)
    period = float(np.mean(intervals))
    if period <= 0 or np.std(intervals) / period >= spread_tol:
        return None
    return LimitCycleInfo(
        period=period,
        frequency=1.0 / period,
        amplitude_a=p2p,
        amplitude_b=float(np.ptp(np.abs(tail.beta))),
        mean_point=StateQuad.from_array(np.mean(tail.states, axis=0)),
    )


# -------- reduced symmetric model --------
@dataclass
class ReducedCycle:
    exists: bool
    r_sq: float = 0.0
    sin_phi: float = 0.0    # magnitude
    phi: float = 0.0        # signed relative phase theta_a - theta_b


def reduced_limit_cycle(g: float, kappa: float, kerr_a: float, kerr_b: float) -> ReducedCycle:
    """Synchronised cycle of the equal-rate two-mode model with r_a = r_b."""
    if kappa <= 0:
        raise ValueError(f"kappa must be positive, got {kappa}")
    if g <= kappa / 2.0 or kerr_a == kerr_b:
        return ReducedCycle(exists=False)
    root = math.sqrt(g * g - kappa * kappa / 4.0)
    sin_phi = math.sqrt(1.0 - kappa * kappa / (4.0 * g * g))
    # stationary phase balance picks the sign of sin(phi) from K_a - K_b
    sign = 1.0 if kerr_a > kerr_b else -1.0
    return ReducedCycle(True, root / abs(kerr_b - kerr_a), sin_phi,
                        math.atan2(sign * sin_phi, -kappa / (2.0 * g)))


def reduced_model(g: float, kappa: float, kerr_a: float, kerr_b: float) -> MeanFieldModel:
    return MeanFieldModel(drift_a=complex(-kappa / 2.0), drift_b=complex(-kappa / 2.0),
                          coupling_ab=complex(g), coupling_ba=complex(g),
                          kerr_a=kerr_a, kerr_b=kerr_b)


@dataclass
class ReducedSteadyState:
    r_a: float
    r_b: float
    sin_phi: float
    trajectory: Trajectory

    @property
    def r_sq(self) -> float:
        return self.r_a * self.r_b


def integrate_reduced_model(g: float, kappa: float, kerr_a: float, kerr_b: float,
                            s0: StateQuad, t_end: float, dt: Optional[float] = None,
                            settle_fraction: float = 0.2) -> ReducedSteadyState:
    """Integrate the reduced model and average radii and relative phase over the final window."""
    model = reduced_model(g, kappa, kerr_a, kerr_b)
    if dt is None:
        r0 = max(abs(s0.alpha), abs(s0.beta), 1.0)
        fastest = max(kappa, g, 2.0 * max(abs(kerr_a), abs(kerr_b)) * r0 * r0)
        dt = 0.02 / fastest
    traj = integrate(model, s0, t_end, dt, method="rk4")
    tail = traj.after(traj.t[-1] * (1.0 - settle_fraction))
    rel = tail.alpha * np.conj(tail.beta)
    return ReducedSteadyState(
        r_a=float(np.mean(np.abs(tail.alpha))),
        r_b=float(np.mean(np.abs(tail.beta))),
        sin_phi=float(np.mean(np.sin(np.angle(rel)))),
        trajectory=traj,
    )


# -------- measurement-based feedback twin --------
def mbf_mean_field(p: ClockParams, lambda_fb: float, phi_fb: float) -> MeanFieldModel:
    """
    Mean-field flow of the clock with the coherent loop replaced by heterodyne
    measurement and IQ modulation of the drive on mode a.
    """
    if not 0.0 <= phi_fb < 2.0 * math.pi:
        raise ValueError(f"phi_fb must lie in [0, 2pi), got {phi_fb}")
    # kappa_b is the loop-dressed total; with ideal circulators and no propagation
    # phase delta_b_eff == delta_b, and at lambda_fb = 1/2, phi_fb = 3pi/2 the undriven twin is the coherent flow
    return MeanFieldModel(
        drift_a=-(1j * p.delta_a + p.kappa_a / 2.0),
        drift_b=-(1j * p.delta_b + p.kappa_b / 2.0),
        coupling_ab=complex(2j * lambda_fb * math.sqrt(p.kappa_a1 * p.kappa_b2) * np.exp(1j * phi_fb)),
        coupling_ba=complex(math.sqrt(p.kappa_a1 * p.kappa_b1)),
        kerr_a=p.kerr_a,
        kerr_b=p.kerr_b,
        drive_b=0j,
        drive_a=1j * p.eps,
    )
