# fbclock/stochastic.py
"""
Noisy phase oscillator, Hopf normal form and additive-noise mean-field ensembles.

Every path draws from its own counter-based Philox stream keyed by
(seed, path index), so ensembles are identical whatever the thread count.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from .dynamics import rising_crossings, vector_field
from .errors import NeverCrossesError
from .models import MeanFieldModel, StateQuad, TickSeries, Trajectory

logger = logging.getLogger("fbclock.stochastic")

BLOCK_STEPS = 1 << 16


@dataclass(frozen=True)
class PhaseOscillatorParams:
    omega: float    # rad/s
    mu: float       # amplification rate, 1/s
    sigma: float    # sigma / mu in rad / sqrt(s)

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {self.sigma}")

    @property
    def phase_diffusion(self) -> float:
        """(sigma/mu)^2, rad^2/s."""
        return (self.sigma / self.mu) ** 2

    @property
    def period(self) -> float:
        return 2.0 * math.pi / self.omega

    @property
    def tick_variance(self) -> float:
        return 2.0 * math.pi * self.sigma ** 2 / (self.omega ** 3 * self.mu ** 2)

    @property
    def wald_lambda(self) -> float:
        if self.sigma == 0:
            return math.inf
        return 4.0 * math.pi ** 2 * self.mu ** 2 / self.sigma ** 2

    @property
    def linewidth_rad_s(self) -> float:
        """Lorentzian FWHM of e^{i theta}, angular units."""
        return self.phase_diffusion

    @property
    def linewidth_hz(self) -> float:
        return self.phase_diffusion / (2.0 * math.pi)


@dataclass(frozen=True)
class SdeConfig:
    dt: float               # s
    seed: int = 0
    n_paths: int = 1
    threads: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.n_paths < 1:
            raise ValueError("n_paths must be at least 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")


@dataclass(frozen=True)
class DiffusionSpec:
    gamma: float = 0.0      # classical diffusion rate on the mode-a quadratures, 1/s

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"diffusion rate must be non-negative, got {self.gamma}")


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, path_index])))


def _map_paths(fn: Callable[[int], object], n_paths: int, threads: int) -> List:
    if threads <= 1 or n_paths == 1:
        return [fn(i) for i in range(n_paths)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_paths)))


def feedback_diffusion_rate(kappa_a1: float, kappa_b2: float, lambda_fb: float,
                            rate_unit: float = 1.0) -> float:
    """
    Diffusion added by measurement-based feedback, lambda_fb^2 kappa_a1 kappa_b2.
    The product of two rates is divided by rate_unit to give a rate.
    """
    if rate_unit <= 0:
        raise ValueError("rate_unit must be positive")
    return lambda_fb ** 2 * kappa_a1 * kappa_b2 / rate_unit


# -------- phase oscillator --------
@dataclass
class PhasePaths:
    t: np.ndarray       # (n,)
    theta: np.ndarray   # (n_paths, n)


def simulate_phase(p: PhaseOscillatorParams, cfg: SdeConfig, t_end: float) -> PhasePaths:
    """Euler-Maruyama for d theta = omega dt + (sigma/mu) dW."""
    n_steps = int(round(t_end / cfg.dt))
    t = np.arange(n_steps + 1) * cfg.dt
    noise = math.sqrt(p.phase_diffusion * cfg.dt)

    def one(path_index: int) -> np.ndarray:
        theta = np.empty(n_steps + 1)
        theta[0] = 0.0
        if p.sigma == 0:
            theta[1:] = p.omega * t[1:]
            return theta
        incr = p.omega * cfg.dt + noise * path_generator(cfg.seed, path_index).standard_normal(n_steps)
        theta[1:] = np.cumsum(incr)
        return theta

    return PhasePaths(t, np.array(_map_paths(one, cfg.n_paths, cfg.threads)))


def first_passage_times(t: np.ndarray, theta: np.ndarray, levels: np.ndarray) -> np.ndarray:
    """
    First times the sampled path reaches each (ascending) level, linearly
    interpolated inside the step. Levels never reached are dropped.
    """
    running = np.maximum.accumulate(theta)
    idx = np.searchsorted(running, levels, side="left")
    idx = idx[idx < theta.size]
    levels = levels[: idx.size]
    out = t[idx].astype(float)
    inner = idx > 0
    i = idx[inner]
    frac = (levels[inner] - theta[i - 1]) / (theta[i] - theta[i - 1])
    out[inner] = t[i - 1] + frac * (t[i] - t[i - 1])
    return out


def _phase_ticks_one(p: PhaseOscillatorParams, cfg: SdeConfig, n_ticks: int, path_index: int,
                     max_steps: int) -> np.ndarray:
    rng = path_generator(cfg.seed, path_index)
    noise = math.sqrt(p.phase_diffusion * cfg.dt)
    crossings: List[np.ndarray] = []
    found = 0
    theta0, step0 = 0.0, 0
    while found < n_ticks:
        if step0 >= max_steps:
            raise NeverCrossesError(f"only {found} of {n_ticks} phase crossings within {max_steps} steps")
        incr = np.full(BLOCK_STEPS, p.omega * cfg.dt)
        if p.sigma > 0:
            incr += noise * rng.standard_normal(BLOCK_STEPS)
        theta = np.concatenate([[theta0], theta0 + np.cumsum(incr)])
        t = (step0 + np.arange(BLOCK_STEPS + 1)) * cfg.dt
        levels = 2.0 * math.pi * np.arange(found + 1, n_ticks + 1)
        hits = first_passage_times(t, theta, levels)
        crossings.append(hits)
        found += hits.size
        # remaining levels lie above every earlier sample
        theta0 = float(theta[-1])
        step0 += BLOCK_STEPS
    times = np.concatenate(crossings)[:n_ticks]
    return np.diff(np.concatenate([[0.0], times]))


def first_passage_ticks(p: PhaseOscillatorParams, cfg: SdeConfig, n_ticks: int,
                        max_steps: Optional[int] = None) -> TickSeries:
    """
    Periods between first passages of theta through successive multiples of 2 pi.
    With n_paths > 1 each path contributes n_ticks periods, concatenated in path order.
    """
    if n_ticks < 1:
        raise ValueError("n_ticks must be at least 1")
    if p.omega <= 0 and p.sigma == 0:
        raise NeverCrossesError(f"deterministic phase with omega={p.omega} never advances")
    if max_steps is None:
        expected = n_ticks * 2.0 * math.pi / max(p.omega, 1e-300) / cfg.dt
        max_steps = int(min(max(100.0 * expected, 10 * BLOCK_STEPS), 1e12))
    periods = _map_paths(lambda i: _phase_ticks_one(p, cfg, n_ticks, i, max_steps),
                         cfg.n_paths, cfg.threads)
    return TickSeries(np.concatenate(periods))


# -------- Hopf normal form --------
@dataclass
class NormalFormPaths:
    t: np.ndarray   # (n,)
    x: np.ndarray   # (n_paths, n)
    y: np.ndarray

    @property
    def radius(self) -> np.ndarray:
        return np.hypot(self.x, self.y)

    @property
    def phase(self) -> np.ndarray:
        return np.unwrap(np.arctan2(self.y, self.x), axis=-1)


def _hopf_drift(mu: float, omega: float, x: np.ndarray, y: np.ndarray):
    r2 = x * x + y * y
    return mu * x - omega * y - r2 * x, omega * x + mu * y - r2 * y


def simulate_normal_form(mu: float, omega: float, sigma: float, cfg: SdeConfig, t_end: float,
                         x0: Optional[float] = None, y0: float = 0.0,
                         stride: int = 1) -> NormalFormPaths:
    """
    Stochastic Heun integration of the supercritical Hopf normal form
        dx = (mu x - omega y - r^2 x) dt
        dy = (omega x + mu y - r^2 y) dt + sigma dW
    with noise on y only. The noiseless amplitude relaxes to sqrt(mu).
    """
    if mu <= 0:
        raise ValueError(f"mu must be positive, got {mu}")
    dt = cfg.dt
    n_steps = int(round(t_end / dt))
    n_out = n_steps // stride + 1
    gens = [path_generator(cfg.seed, i) for i in range(cfg.n_paths)]
    x = np.full(cfg.n_paths, math.sqrt(mu) if x0 is None else float(x0))
    y = np.full(cfg.n_paths, float(y0))
    xs = np.empty((cfg.n_paths, n_out))
    ys = np.empty((cfg.n_paths, n_out))
    xs[:, 0], ys[:, 0] = x, y
    amp = sigma * math.sqrt(dt)

    k_out, done = 1, 0
    while done < n_steps:
        block = min(BLOCK_STEPS, n_steps - done)
        if sigma > 0:
            dw = np.stack([g.standard_normal(block) for g in gens], axis=1) * amp
        else:
            dw = np.zeros((block, cfg.n_paths))
        for k in range(block):
            fx, fy = _hopf_drift(mu, omega, x, y)
            xp, yp = x + dt * fx, y + dt * fy + dw[k]
            gx, gy = _hopf_drift(mu, omega, xp, yp)
            x = x + 0.5 * dt * (fx + gx)
            y = y + 0.5 * dt * (fy + gy) + dw[k]
            if (done + k + 1) % stride == 0:
                xs[:, k_out], ys[:, k_out] = x, y
                k_out += 1
        done += block
    t = np.arange(n_out) * dt * stride
    return NormalFormPaths(t, xs, ys)


def reduced_phase_params(mu: float, omega: float, sigma: float) -> PhaseOscillatorParams:
    """
    Phase oscillator equivalent to the normal form near its cycle of radius sqrt(mu).
    Noise on y alone projects onto the phase with mean intensity sigma^2 / (2 mu).
    """
    return PhaseOscillatorParams(omega=omega, mu=mu, sigma=sigma * math.sqrt(mu / 2.0))


def phase_path_ticks(t: np.ndarray, theta: np.ndarray) -> TickSeries:
    """Periods between first passages of an unwrapped phase through multiples of 2 pi."""
    theta = np.asarray(theta, dtype=float) - float(theta[0])
    top = int(np.floor(np.max(theta) / (2.0 * math.pi)))
    if top < 1:
        return TickSeries(np.zeros(0))
    times = first_passage_times(np.asarray(t, dtype=float), theta,
                                2.0 * math.pi * np.arange(1, top + 1))
    return TickSeries(np.diff(np.concatenate([[t[0]], times])))


# -------- mean-field SDE --------
@dataclass
class SdeEnsemble:
    t: np.ndarray           # (n,)
    states: np.ndarray      # (n_paths, n, 4)

    def __len__(self) -> int:
        return int(self.states.shape[0])

    def path(self, index: int) -> Trajectory:
        return Trajectory(self.t, self.states[index])


def _sde_chunk(model: MeanFieldModel, gamma: float, cfg: SdeConfig, z0: np.ndarray,
               n_steps: int, stride: int, paths: Sequence[int]) -> np.ndarray:
    dt = cfg.dt
    gens = [path_generator(cfg.seed, i) for i in paths]
    z = np.tile(z0, (len(paths), 1))
    n_out = n_steps // stride + 1
    out = np.empty((len(paths), n_out, 4))
    out[:, 0] = z
    amp = math.sqrt(2.0 * gamma * dt)
    k_out, done = 1, 0
    while done < n_steps:
        block = min(BLOCK_STEPS, n_steps - done)
        dw = np.zeros((block, len(paths), 4))
        if gamma > 0:
            dw[..., :2] = amp * np.stack([g.standard_normal((block, 2)) for g in gens], axis=1)
        for k in range(block):
            f = vector_field(model, z)
            g = vector_field(model, z + dt * f + dw[k])
            z = z + 0.5 * dt * (f + g) + dw[k]
            if (done + k + 1) % stride == 0:
                out[:, k_out] = z
                k_out += 1
        done += block
    return out


def simulate_meanfield_sde(model: MeanFieldModel, d: DiffusionSpec, cfg: SdeConfig, t_end: float,
                           s0: StateQuad, stride: int = 1) -> SdeEnsemble:
    """
    Mean-field flow with independent additive noise of intensity 2 gamma on x_a and y_a,
    integrated with a stochastic Heun step. Paths are split across cfg.threads workers.
    """
    n_steps = int(round(t_end / cfg.dt))
    workers = max(1, min(cfg.threads, cfg.n_paths))
    chunks = [list(c) for c in np.array_split(np.arange(cfg.n_paths), workers) if c.size]
    z0 = s0.as_array()

    def run(paths):
        return _sde_chunk(model, d.gamma, cfg, z0, n_steps, stride, paths)

    if workers == 1:
        parts = [run(c) for c in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, chunks))
    states = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(states)):
        logger.warning(f"SDE ensemble produced non-finite states at dt={cfg.dt:.3e}")
    t = np.arange(states.shape[1]) * cfg.dt * stride
    return SdeEnsemble(t, states)


def trajectory_ticks(traj: Trajectory, transient: float = 0.0) -> TickSeries:
    """Periods between rising crossings of |alpha| through its mean after the transient."""
    tail = traj.after(traj.t[0] + transient)
    amp = np.abs(tail.alpha)
    ticks = rising_crossings(tail.t, amp - np.mean(amp))
    return TickSeries(np.diff(ticks))


# -------- Wald law --------
def _check_wald(alpha: float, lam: float) -> None:
    if not (alpha > 0 and lam > 0):
        raise ValueError(f"Wald parameters must be positive, got alpha={alpha}, lambda={lam}")


def wald_distribution(alpha: float, lam: float):
    """Frozen scipy inverse Gaussian with mean alpha and shape lam."""
    _check_wald(alpha, lam)
    return stats.invgauss(mu=alpha / lam, scale=lam)


def wald_pdf(T, alpha: float, lam: float):
    T = np.asarray(T, dtype=float)
    if np.any(T <= 0):
        raise ValueError("Wald density is defined for positive periods only")
    _check_wald(alpha, lam)
    dens = np.sqrt(lam / (2.0 * math.pi)) * T ** -1.5 * np.exp(-lam * (T - alpha) ** 2 / (2.0 * alpha ** 2 * T))
    return float(dens) if dens.ndim == 0 else dens


def wald_mode(alpha: float, lam: float) -> float:
    _check_wald(alpha, lam)
    ratio = alpha / lam
    return alpha * (math.sqrt(1.0 + 2.25 * ratio ** 2) - 1.5 * ratio)


def wald_moments(alpha: float, lam: float) -> Dict[str, float]:
    _check_wald(alpha, lam)
    return {
        "mean": alpha,
        "variance": alpha ** 3 / lam,
        "accuracy": lam / alpha,
        "frequency_mean": 1.0 / alpha + 1.0 / lam,
        "frequency_variance": 1.0 / (alpha * lam) + 2.0 / lam ** 2,
    }


def summarize_ticks(ticks: TickSeries) -> Dict[str, float]:
    n = len(ticks)
    return {
        "n": n,
        "mean": ticks.mean if n else math.nan,
        "variance": ticks.variance,
        "accuracy": ticks.accuracy if n > 1 else math.nan,
    }
