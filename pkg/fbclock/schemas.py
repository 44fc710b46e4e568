# fbclock/schemas.py
import math
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, confloat, conint, model_validator

from .device import CircuitGeometry
from .models import ClockParams, StateQuad
from .stochastic import PhaseOscillatorParams

TWO_PI = 2.0 * math.pi

Rate = confloat(ge=0, allow_inf_nan=False)
Positive = confloat(gt=0, allow_inf_nan=False)
Finite = confloat(allow_inf_nan=False)
Amplitude = confloat(ge=0, le=1)
Seed = conint(ge=0, lt=2 ** 64)
Count = conint(ge=1)

EXPERIMENTS = ("compose", "stability", "sweep", "simulate", "sde", "ticks", "esd", "device", "noisy-drive")


class Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ClockParamsBlock(Strict):
    # all frequencies are nu = omega / 2 pi
    kappa_a1_hz: Rate
    kappa_a_int_hz: Rate
    kappa_b1_hz: Rate
    kappa_b2_hz: Rate
    kappa_b_int_hz: Rate
    delta_a_hz: Finite
    delta_b_hz: Finite
    kerr_a_hz: Finite
    kerr_b_hz: Finite
    eta_1: Amplitude = 0.0
    eta_2: Amplitude = 0.0
    phi_1_rad: Finite = 0.0
    phi_2_rad: Finite = 0.0
    eps_sq_per_s: Rate = 0.0    # photon flux |eps|^2

    def to_params(self) -> ClockParams:
        return ClockParams(
            kappa_a1=TWO_PI * self.kappa_a1_hz,
            kappa_a_int=TWO_PI * self.kappa_a_int_hz,
            kappa_b1=TWO_PI * self.kappa_b1_hz,
            kappa_b2=TWO_PI * self.kappa_b2_hz,
            kappa_b_int=TWO_PI * self.kappa_b_int_hz,
            delta_a=TWO_PI * self.delta_a_hz,
            delta_b=TWO_PI * self.delta_b_hz,
            kerr_a=TWO_PI * self.kerr_a_hz,
            kerr_b=TWO_PI * self.kerr_b_hz,
            eta_1=self.eta_1,
            eta_2=self.eta_2,
            phi_1=self.phi_1_rad,
            phi_2=self.phi_2_rad,
            eps=math.sqrt(self.eps_sq_per_s),
        )


class MbfBlock(Strict):
    lambda_fb: Finite = 0.5
    phi_fb_rad: confloat(ge=0, lt=TWO_PI) = 1.5 * math.pi


class SolverBlock(Strict):
    method: Literal["rk4", "adaptive_rk45"] = "rk4"
    dt_s: Positive = 1e-9
    t_end_s: Positive = 30e-6
    atol: Positive = 1e-10
    rtol: Positive = 1e-8
    n_starts: Count = 8
    newton_tol: Positive = 1e-9


class RngBlock(Strict):
    seed: Seed = 0
    n_paths: Count = 1


class OutputBlock(Strict):
    directory: Optional[str] = None
    formats: Literal["csv", "json", "both"] = "both"


class SweepBlock(Strict):
    eps_sq_min_per_s: Rate = 0.0
    eps_sq_max_per_s: Positive
    n_points: conint(ge=2) = 61
    continuation_starts: Count = 4
    # "port": eps^2 is the flux reaching port b1; "source": eps^2 is the generator flux before BS1
    drive_reference: Literal["port", "source"] = "port"

    @model_validator(mode="after")
    def _ordered(self):
        if self.eps_sq_max_per_s <= self.eps_sq_min_per_s:
            raise ValueError("eps_sq_max_per_s must exceed eps_sq_min_per_s")
        return self


class InitialState(Strict):
    x_a: Finite = 0.0
    y_a: Finite = 0.0
    x_b: Finite = 0.0
    y_b: Finite = 0.0

    def to_state(self) -> StateQuad:
        return StateQuad(self.x_a, self.y_a, self.x_b, self.y_b)


class SimulateBlock(Strict):
    initial: InitialState = InitialState()
    transient_s: Optional[Rate] = None


class SdeBlock(Strict):
    gamma_per_s: Optional[Rate] = None
    lambda_fb: Optional[Finite] = None
    rate_unit_per_s: Positive = 1.0
    dt_s: Positive = 1e-9
    t_end_s: Positive = 30e-6
    transient_s: Rate = 5e-6
    stride: Count = 1
    initial: InitialState = InitialState()

    @model_validator(mode="after")
    def _one_source(self):
        if self.gamma_per_s is not None and self.lambda_fb is not None:
            raise ValueError("give either gamma_per_s or lambda_fb, not both")
        return self


class TicksBlock(Strict):
    source: Literal["phase", "normal_form"] = "phase"
    omega_hz: Positive            # nu of the oscillator
    mu_per_s: Positive
    sigma: Rate
    n_ticks: Count = 10000
    dt_s: Optional[Positive] = None

    def to_phase_params(self) -> PhaseOscillatorParams:
        return PhaseOscillatorParams(omega=TWO_PI * self.omega_hz, mu=self.mu_per_s, sigma=self.sigma)


class EsdBlock(Strict):
    sample_rate_hz: Positive = 125e6
    n_samples: conint(ge=2) = 4800
    n_records: Count = 100
    noise_floor: Rate = 0.0
    window: Optional[str] = None
    lp_cutoff_hz: Positive = 4e6
    band: Literal["full", "positive"] = "full"
    transient_s: Rate = 10e-6
    sideband_guard_hz: Rate = 0.3e6
    sideband_window_hz: Positive = 1e6
    initial: InitialState = InitialState()


class GeometryBlock(Strict):
    L0_h_per_m: Positive
    C0_f_per_m: Positive
    d_a_m: Positive
    d_b_m: Positive
    LJa_h: Rate
    LJb_h: Rate
    kappa0_a1_hz: Positive
    kappa0_b1_hz: Positive
    kappa0_b2_hz: Positive
    omega0_a_hz: Positive
    omega0_b_hz: Positive

    def to_geometry(self) -> CircuitGeometry:
        return CircuitGeometry(
            L0=self.L0_h_per_m, C0=self.C0_f_per_m, d_a=self.d_a_m, d_b=self.d_b_m,
            LJa=self.LJa_h, LJb=self.LJb_h,
            kappa0_a1=TWO_PI * self.kappa0_a1_hz, kappa0_b1=TWO_PI * self.kappa0_b1_hz,
            kappa0_b2=TWO_PI * self.kappa0_b2_hz,
            omega0_a=TWO_PI * self.omega0_a_hz, omega0_b=TWO_PI * self.omega0_b_hz,
        )


class DeviceBlock(Strict):
    geometry: GeometryBlock
    flux_grid_f: List[Finite]
    drive_power_dbm: Optional[Finite] = None
    drive_freq_hz: Optional[Positive] = None

    @model_validator(mode="after")
    def _drive_pair(self):
        if (self.drive_power_dbm is None) != (self.drive_freq_hz is None):
            raise ValueError("drive_power_dbm and drive_freq_hz go together")
        if not self.flux_grid_f:
            raise ValueError("flux_grid_f must not be empty")
        return self


class NoisyDriveBlock(Strict):
    deviations_hz: List[Rate]
    fm_cutoff_hz: Positive = 500e3
    n_records: Count = 20
    sample_rate_hz: Positive = 125e6
    n_samples: conint(ge=2) = 4800
    substeps: Count = 4
    transient_s: Rate = 5e-6
    noise_floor: Rate = 0.0
    drive_window_hz: Positive = 2e6
    sideband_guard_hz: Rate = 0.3e6
    sideband_window_hz: Positive = 1e6

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.deviations_hz:
            raise ValueError("deviations_hz must not be empty")
        return self


NEEDS_PARAMETERS = ("compose", "stability", "sweep", "simulate", "sde", "esd", "noisy-drive")
NEEDS_BLOCK = {"sweep": "sweep", "ticks": "ticks", "device": "device", "noisy-drive": "noisy_drive"}


class RunConfig(Strict):
    experiment: Literal["compose", "stability", "sweep", "simulate", "sde", "ticks", "esd",
                        "device", "noisy-drive"]
    parameters: Optional[ClockParamsBlock] = None
    mbf: Optional[MbfBlock] = None
    solver: SolverBlock = SolverBlock()
    rng: RngBlock = RngBlock()
    output: OutputBlock = OutputBlock()
    sweep: Optional[SweepBlock] = None
    simulate: SimulateBlock = SimulateBlock()
    sde: SdeBlock = SdeBlock()
    ticks: Optional[TicksBlock] = None
    esd: EsdBlock = EsdBlock()
    device: Optional[DeviceBlock] = None
    noisy_drive: Optional[NoisyDriveBlock] = None

    @model_validator(mode="after")
    def _required_blocks(self):
        if self.experiment in NEEDS_PARAMETERS and self.parameters is None:
            raise ValueError(f"experiment '{self.experiment}' needs a 'parameters' block")
        block = NEEDS_BLOCK.get(self.experiment)
        if block and getattr(self, block) is None:
            raise ValueError(f"experiment '{self.experiment}' needs a '{block}' block")
        return self


# -------- service requests --------
class StabilityRequest(Strict):
    parameters: ClockParamsBlock
    mbf: Optional[MbfBlock] = None
    n_starts: conint(ge=1, le=12) = 8
    newton_tol: Positive = 1e-9


class ReducedCycleRequest(Strict):
    g_hz: Rate
    kappa_hz: Positive
    kerr_a_hz: Finite
    kerr_b_hz: Finite


class DeviceRequest(Strict):
    geometry: GeometryBlock
    flux_f: Finite = 0.0
