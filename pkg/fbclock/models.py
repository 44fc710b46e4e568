# fbclock/models.py
import math
from dataclasses import dataclass, field, replace

import numpy as np


def _check_rate(name: str, value: float) -> None:
    if not math.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be a finite non-negative rate, got {value}")


@dataclass(frozen=True)
class ClockParams:
    """
    Physical parameters of the two-resonator feedback clock.
    Rates, detunings and Kerr coefficients are angular (rad/s);
    eps is the drive amplitude in sqrt(photons/s).
    """
    kappa_a1: float
    kappa_a_int: float
    kappa_b1: float
    kappa_b2: float
    kappa_b_int: float
    delta_a: float
    delta_b: float
    kerr_a: float
    kerr_b: float
    eta_1: float = 0.0      # circulator insertion loss (amplitude)
    eta_2: float = 0.0
    phi_1: float = 0.0      # propagation phase A -> B
    phi_2: float = 0.0      # propagation phase B -> A
    eps: float = 0.0

    def __post_init__(self):
        for name in ("kappa_a1", "kappa_a_int", "kappa_b1", "kappa_b2", "kappa_b_int"):
            _check_rate(name, getattr(self, name))
        for name in ("eta_1", "eta_2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")

    @property
    def t_1(self) -> float:
        return math.sqrt(1.0 - self.eta_1 ** 2)

    @property
    def t_2(self) -> float:
        return math.sqrt(1.0 - self.eta_2 ** 2)

    @property
    def kappa_a(self) -> float:
        return self.kappa_a1 + self.kappa_a_int

    @property
    def kappa_b(self) -> float:
        cross = 2.0 * math.sqrt(self.kappa_b1 * self.kappa_b2) * self.t_1 * self.t_2
        return (self.kappa_b1 + self.kappa_b2 + self.kappa_b_int
                + cross * math.cos(self.phi_1 + self.phi_2))

    @property
    def delta_b_eff(self) -> float:
        cross = math.sqrt(self.kappa_b1 * self.kappa_b2) * self.t_1 * self.t_2
        return self.delta_b + cross * math.sin(self.phi_1 + self.phi_2)

    @property
    def g_a(self) -> float:
        return self.t_2 * math.sqrt(self.kappa_a1 * self.kappa_b2)

    @property
    def g_b(self) -> float:
        return self.t_1 * math.sqrt(self.kappa_a1 * self.kappa_b1)

    @property
    def eps_bar(self) -> float:
        return self.t_1 * math.sqrt(self.kappa_b1) * self.eps

    def with_drive(self, eps: float) -> "ClockParams":
        return replace(self, eps=eps)

    def with_port_drive(self, eps_port: float) -> "ClockParams":
        """Source amplitude that delivers eps_port (sqrt photons/s) at port b1, past the first splitter."""
        if self.t_1 == 0:
            raise ValueError("eta_1 = 1 reflects the whole drive; no port amplitude is reachable")
        return replace(self, eps=eps_port / self.t_1)


@dataclass(frozen=True)
class MeanFieldModel:
    """
    Coefficients of the two-mode semiclassical flow

        d alpha = drift_a alpha - 2i kerr_a |alpha|^2 alpha - coupling_ab beta - drive_a
        d beta  = drift_b beta  - 2i kerr_b |beta|^2 beta   - coupling_ba alpha - drive_b

    drive_b is the effective drive eps_bar of the coherent clock; drive_a is
    only non-zero for the measurement-feedback twin.
    """
    drift_a: complex
    drift_b: complex
    coupling_ab: complex
    coupling_ba: complex
    kerr_a: float
    kerr_b: float
    drive_b: complex = 0j
    drive_a: complex = 0j

    @property
    def drive(self) -> complex:
        return self.drive_b

    @property
    def kappa_a(self) -> float:
        return -2.0 * self.drift_a.real

    @property
    def kappa_b(self) -> float:
        return -2.0 * self.drift_b.real

    @property
    def rate_scale(self) -> float:
        return max(abs(self.drift_a), abs(self.drift_b),
                   abs(self.coupling_ab), abs(self.coupling_ba), 1e-300)

    def is_physical(self) -> bool:
        return self.drift_a.real <= 0 and self.drift_b.real <= 0

    def scaled_drive(self, factor: float) -> "MeanFieldModel":
        return replace(self, drive_a=self.drive_a * factor, drive_b=self.drive_b * factor)

    def coefficients(self) -> np.ndarray:
        return np.array([self.drift_a, self.drift_b, self.coupling_ab, self.coupling_ba,
                         self.kerr_a, self.kerr_b, self.drive_a, self.drive_b], dtype=complex)


@dataclass(frozen=True)
class StateQuad:
    x_a: float
    y_a: float
    x_b: float
    y_b: float

    @classmethod
    def from_array(cls, z) -> "StateQuad":
        z = np.asarray(z, dtype=float)
        return cls(float(z[0]), float(z[1]), float(z[2]), float(z[3]))

    @classmethod
    def from_complex(cls, alpha: complex, beta: complex) -> "StateQuad":
        return cls(alpha.real, alpha.imag, beta.real, beta.imag)

    def as_array(self) -> np.ndarray:
        return np.array([self.x_a, self.y_a, self.x_b, self.y_b], dtype=float)

    @property
    def alpha(self) -> complex:
        return complex(self.x_a, self.y_a)

    @property
    def beta(self) -> complex:
        return complex(self.x_b, self.y_b)


ORIGIN = StateQuad(0.0, 0.0, 0.0, 0.0)


@dataclass
class Trajectory:
    t: np.ndarray           # (n,) seconds
    states: np.ndarray      # (n, 4) quadratures x_a, y_a, x_b, y_b

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.shape != (self.t.size, 4):
            raise ValueError(f"states shape {self.states.shape} does not match {self.t.size} times")

    @property
    def alpha(self) -> np.ndarray:
        return self.states[:, 0] + 1j * self.states[:, 1]

    @property
    def beta(self) -> np.ndarray:
        return self.states[:, 2] + 1j * self.states[:, 3]

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0]) if self.t.size > 1 else 0.0

    @property
    def final(self) -> StateQuad:
        return StateQuad.from_array(self.states[-1])

    def after(self, t_start: float) -> "Trajectory":
        keep = self.t >= t_start
        return Trajectory(self.t[keep], self.states[keep])


@dataclass
class TickSeries:
    periods: np.ndarray = field(default_factory=lambda: np.zeros(0))  # seconds

    def __post_init__(self):
        self.periods = np.asarray(self.periods, dtype=float)
        if np.any(self.periods <= 0):
            raise ValueError("tick periods must be positive")

    def __len__(self) -> int:
        return int(self.periods.size)

    @property
    def mean(self) -> float:
        return float(np.mean(self.periods))

    @property
    def variance(self) -> float:
        return float(np.var(self.periods, ddof=1)) if self.periods.size > 1 else 0.0

    @property
    def accuracy(self) -> float:
        var = self.variance
        return self.mean ** 2 / var if var > 0 else math.inf

    def tick_times(self, t0: float = 0.0) -> np.ndarray:
        return t0 + np.concatenate([[0.0], np.cumsum(self.periods)])
