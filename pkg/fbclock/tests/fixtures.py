# fbclock/tests/fixtures.py
import math

from ..models import ClockParams

TWO_PI = 2.0 * math.pi


def operating_point(eps: float = 0.0, **overrides) -> ClockParams:
    """Measured operating point of the flux-tuned device (all values nu = omega / 2 pi)."""
    values = dict(
        kappa_a1=TWO_PI * 3.21e6,
        kappa_a_int=TWO_PI * 0.11e6,
        kappa_b1=TWO_PI * 2.52e6,
        kappa_b2=TWO_PI * 2.52e6,
        kappa_b_int=TWO_PI * 1.64e6,
        delta_a=TWO_PI * 1.8e6,
        delta_b=TWO_PI * 1.8e6,
        kerr_a=-TWO_PI * 0.01e6,
        kerr_b=-TWO_PI * 0.03e6,
        eta_1=math.sqrt(0.18),
        eta_2=math.sqrt(0.03),
        phi_1=0.0,
        phi_2=0.39 * math.pi,
        eps=eps,
    )
    values.update(overrides)
    return ClockParams(**values)


def lossless_point(**overrides) -> ClockParams:
    """Same device with ideal circulators and no propagation phase."""
    return operating_point(eta_1=0.0, eta_2=0.0, phi_2=0.0, **overrides)


OPERATING_POINT_JSON = {
    "kappa_a1_hz": 3.21e6,
    "kappa_a_int_hz": 0.11e6,
    "kappa_b1_hz": 2.52e6,
    "kappa_b2_hz": 2.52e6,
    "kappa_b_int_hz": 1.64e6,
    "delta_a_hz": 1.8e6,
    "delta_b_hz": 1.8e6,
    "kerr_a_hz": -0.01e6,
    "kerr_b_hz": -0.03e6,
    "eta_1": math.sqrt(0.18),
    "eta_2": math.sqrt(0.03),
    "phi_1_rad": 0.0,
    "phi_2_rad": 0.39 * math.pi,
    "eps_sq_per_s": 0.5e10,
}
