# fbclock/device.py
"""
Circuit parameters -> clock model parameters.

Resonator A is a quarter-wave line shorted through one junction, resonator B a
half-wave line intersected by a SQUID whose Josephson inductance scales as
1/|cos F| with F = pi Phi / Phi_0.
"""
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.constants as sc
from scipy.optimize import brentq, newton

from .errors import DeviceError
from .models import ClockParams

logger = logging.getLogger("fbclock.device")

PARTICIPATION_WARN = 0.1
FLUX_COS_MIN = 1e-6
GAMMA_BRACKET = (1e-6, 0.5)


@dataclass(frozen=True)
class PhysicalConstants:
    hbar: float = sc.hbar
    e: float = sc.e

    @property
    def phi0(self) -> float:
        """Reduced flux quantum hbar / 2e."""
        return self.hbar / (2.0 * self.e)


CODATA = PhysicalConstants()


@dataclass(frozen=True)
class CircuitGeometry:
    L0: float           # H/m
    C0: float           # F/m
    d_a: float          # m
    d_b: float
    LJa: float          # H, 0 for a linear resonator
    LJb: float
    kappa0_a1: float    # rad/s
    kappa0_b1: float
    kappa0_b2: float
    omega0_a: float     # rad/s
    omega0_b: float

    def __post_init__(self):
        for name in ("L0", "C0", "d_a", "d_b", "kappa0_a1", "kappa0_b1", "kappa0_b2",
                     "omega0_a", "omega0_b"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive, got {value}")
        for name in ("LJa", "LJb"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"{name} must be non-negative, got {value}")
        for mode, gamma in (("a", self.gamma_a), ("b", self.gamma_b)):
            if gamma > PARTICIPATION_WARN:
                logger.warning(f"participation ratio gamma_{mode}={gamma:.3f} exceeds "
                               f"{PARTICIPATION_WARN}; the small-junction expansion is poor")

    @property
    def gamma_a(self) -> float:
        return self.LJa / (self.L0 * self.d_a)

    @property
    def gamma_b(self) -> float:
        return self.LJb / (self.L0 * self.d_b)


def _flux_cos(F: float) -> float:
    c = abs(math.cos(F))
    if c <= FLUX_COS_MIN:
        raise DeviceError(f"flux F={F} sits at a half-integer flux quantum; the SQUID inductance diverges")
    return c


@dataclass(frozen=True)
class FluxPoint:
    F: float    # pi Phi / Phi_0

    def __post_init__(self):
        _flux_cos(self.F)

    @classmethod
    def from_flux(cls, flux: float, constants: PhysicalConstants = CODATA) -> "FluxPoint":
        """From the external flux in Wb; Phi_0 = h / 2e = 2 pi phi0."""
        return cls(math.pi * flux / (2.0 * math.pi * constants.phi0))

    @property
    def cos(self) -> float:
        return abs(math.cos(self.F))


@dataclass(frozen=True)
class EffectiveParams:
    omega_a: float
    omega_b: float
    kappa_a1: float
    kappa_b1: float
    kappa_b2: float


@dataclass(frozen=True)
class KerrCoefficients:
    kerr_a: float
    kerr_b: float


def effective_params(geom: CircuitGeometry, F: float) -> EffectiveParams:
    gb = geom.gamma_b / _flux_cos(F)
    ga = geom.gamma_a
    return EffectiveParams(
        omega_a=geom.omega0_a / (1.0 + ga),
        omega_b=geom.omega0_b / (1.0 + gb),
        kappa_a1=geom.kappa0_a1 / (1.0 + 4.0 * ga),
        kappa_b1=geom.kappa0_b1 / (1.0 + 4.0 * gb),
        kappa_b2=geom.kappa0_b2 / (1.0 + 4.0 * gb),
    )


def _kerr(E_J: float, prefactor: float, omega0: float, d: float, gamma_eff: float,
          geom: CircuitGeometry, constants: PhysicalConstants) -> float:
    phi_zpf_sq = constants.hbar / (2.0 * omega0 * geom.C0 * d)
    ratio4 = (phi_zpf_sq / constants.phi0 ** 2) ** 2
    return -prefactor * E_J / constants.hbar * ratio4 * math.cos(math.pi / (2.0 * (1.0 + gamma_eff)))


def kerr_coefficients(geom: CircuitGeometry, F: float,
                      constants: PhysicalConstants = CODATA) -> KerrCoefficients:
    """Self-Kerr rates (rad/s); a mode without a junction has none."""
    c = _flux_cos(F)
    kerr_a = kerr_b = 0.0
    if geom.LJa > 0:
        kerr_a = _kerr(constants.phi0 ** 2 / geom.LJa, 0.25, geom.omega0_a, geom.d_a,
                       geom.gamma_a, geom, constants)
    if geom.LJb > 0:
        kerr_b = _kerr(constants.phi0 ** 2 / geom.LJb, 0.5, geom.omega0_b, geom.d_b,
                       geom.gamma_b / c, geom, constants)
    return KerrCoefficients(kerr_a, kerr_b)


def solve_josephson_energy(target_K: float, geom: CircuitGeometry, mode: str = "a", F: float = 0.0,
                           constants: PhysicalConstants = CODATA) -> float:
    """
    Josephson energy (J) of mode `mode` giving self-Kerr target_K (rad/s).
    E_J enters the prefactor and the participation ratio phi0^2 / (E_J L0 d);
    the root is bracketed in the participation ratio and polished in E_J.
    """
    if mode not in ("a", "b"):
        raise ValueError(f"mode must be 'a' or 'b', got {mode!r}")
    if not target_K < 0:
        raise DeviceError(f"self-Kerr target {target_K} is unreachable; only negative shifts occur")
    d = geom.d_a if mode == "a" else geom.d_b
    c = 1.0 if mode == "a" else _flux_cos(F)

    prefactor, omega0 = (0.25, geom.omega0_a) if mode == "a" else (0.5, geom.omega0_b)

    def kerr_of_energy(E_J: float) -> float:
        gamma = constants.phi0 ** 2 / (E_J * geom.L0 * d)
        return _kerr(E_J, prefactor, omega0, d, gamma / c, geom, constants)

    def energy_of_gamma(gamma: float) -> float:
        return constants.phi0 ** 2 / (gamma * geom.L0 * d)

    # participation ratio of the flux-dressed junction is gamma / c
    lo, hi = GAMMA_BRACKET[0] * c, GAMMA_BRACKET[1] * c
    f_lo = kerr_of_energy(energy_of_gamma(lo)) - target_K
    f_hi = kerr_of_energy(energy_of_gamma(hi)) - target_K
    if f_lo * f_hi > 0:
        raise DeviceError(f"no Josephson energy in the physical range reaches K={target_K:.4e} rad/s "
                          f"(range {f_lo + target_K:.4e} .. {f_hi + target_K:.4e})")
    gamma = brentq(lambda x: kerr_of_energy(energy_of_gamma(x)) - target_K, lo, hi,
                   xtol=1e-16, rtol=4 * np.finfo(float).eps, maxiter=200)
    E_J = energy_of_gamma(gamma)
    try:
        E_J = float(newton(lambda e: kerr_of_energy(e) / target_K - 1.0, E_J, tol=1e-14 * E_J, maxiter=20))
    except RuntimeError as exc:
        logger.debug(f"newton polish skipped: {exc}")
    residual = abs(kerr_of_energy(E_J) / target_K - 1.0)
    if residual > 1e-10:
        raise DeviceError(f"Josephson energy solve left relative residual {residual:.2e}")
    return E_J


def josephson_inductance(E_J: float, constants: PhysicalConstants = CODATA) -> float:
    return constants.phi0 ** 2 / E_J


def dbm_to_rate(power_dbm: float, omega_drive: float, constants: PhysicalConstants = CODATA) -> float:
    """Photon flux eps^2 (1/s) of a tone of power_dbm at angular frequency omega_drive."""
    if not omega_drive > 0:
        raise ValueError(f"drive frequency must be positive, got {omega_drive}")
    return 10.0 ** ((power_dbm - 30.0) / 10.0) / (constants.hbar * omega_drive)


def rate_to_dbm(eps_sq: float, omega_drive: float, constants: PhysicalConstants = CODATA) -> float:
    if not (omega_drive > 0 and eps_sq > 0):
        raise ValueError("photon flux and drive frequency must be positive")
    return 10.0 * math.log10(constants.hbar * omega_drive * eps_sq) + 30.0


def invert_flux_two_point(omega_b0: float, omega_bF: float, F: float) -> Tuple[float, float]:
    """
    (gamma_b, omega0_b) from the dressed frequency at zero flux and at flux F.
    """
    c = _flux_cos(F)
    if c >= 1.0 - 1e-12:
        raise DeviceError("the second flux point must differ from an integer flux quantum")
    r = omega_b0 / omega_bF
    gamma = (r - 1.0) / (1.0 / c - r)
    if not gamma > 0:
        raise DeviceError(f"frequencies {omega_b0:.6e}, {omega_bF:.6e} give non-physical gamma={gamma:.3e}")
    return gamma, omega_b0 * (1.0 + gamma)


@dataclass(frozen=True)
class FluxSweepRow:
    F: float
    omega_b: float
    kappa_b1: float
    kappa_b2: float
    kerr_b: float


def flux_sweep(geom: CircuitGeometry, flux_grid: Sequence[float],
               constants: PhysicalConstants = CODATA) -> List[FluxSweepRow]:
    rows = []
    for point in (FluxPoint(float(F)) for F in flux_grid):
        eff = effective_params(geom, point.F)
        K = kerr_coefficients(geom, point.F, constants)
        rows.append(FluxSweepRow(point.F, eff.omega_b, eff.kappa_b1, eff.kappa_b2, K.kerr_b))
    return rows


def clock_params(geom: CircuitGeometry, F: float, omega_drive: float, kappa_a_int: float,
                 kappa_b_int: float, eps: float = 0.0, eta_1: float = 0.0, eta_2: float = 0.0,
                 phi_1: float = 0.0, phi_2: float = 0.0,
                 constants: PhysicalConstants = CODATA) -> ClockParams:
    """Model parameters in the frame rotating at the drive frequency."""
    eff = effective_params(geom, F)
    K = kerr_coefficients(geom, F, constants)
    return ClockParams(
        kappa_a1=eff.kappa_a1, kappa_a_int=kappa_a_int,
        kappa_b1=eff.kappa_b1, kappa_b2=eff.kappa_b2, kappa_b_int=kappa_b_int,
        delta_a=eff.omega_a - omega_drive, delta_b=eff.omega_b - omega_drive,
        kerr_a=K.kerr_a, kerr_b=K.kerr_b,
        eta_1=eta_1, eta_2=eta_2, phi_1=phi_1, phi_2=phi_2, eps=eps,
    )
