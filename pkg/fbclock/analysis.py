# fbclock/analysis.py
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from lmfit import Minimizer, Parameters
from scipy import signal

from .dynamics import rising_crossings, rk4_states
from .errors import DegenerateDistributionError, FitError, RecordError
from .models import ClockParams, MeanFieldModel, TickSeries, Trajectory
from .slh import AffineModeOperator, build_clock_network, readout_operator
from .stochastic import path_generator, wald_distribution, wald_moments

logger = logging.getLogger("fbclock.analysis")

SAMPLE_RATE = 125e6         # Hz
RECORD_SAMPLES = 4800
TICK_CUTOFF = 4e6           # Hz
FIR_TAPS = 127
BANDS = ("full", "positive")


@dataclass
class IQRecord:
    sample_rate: float              # Hz
    samples: np.ndarray             # complex I + iQ

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim != 1 or self.samples.size < 2:
            raise RecordError("an IQ record needs at least two samples")
        if not self.sample_rate > 0:
            raise RecordError(f"sample rate must be positive, got {self.sample_rate}")

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.samples)

    @property
    def energy(self) -> float:
        return float(np.sum(np.abs(self.samples) ** 2) * self.dt)


def clock_readout(p: ClockParams) -> AffineModeOperator:
    return readout_operator(build_clock_network(p))


def synthesize_heterodyne(traj: Trajectory, readout: AffineModeOperator, noise_floor: float = 0.0,
                          sample_rate: float = SAMPLE_RATE, n_samples: int = RECORD_SAMPLES,
                          t_start: Optional[float] = None,
                          rng: Optional[np.random.Generator] = None) -> IQRecord:
    """
    Output-field mean of the readout port sampled from the trajectory, plus complex
    white noise of variance noise_floor per sample. t_start defaults to the latest
    start that still fits the record.

    Samples are I + iQ of the downconverted signal, the conjugate of the rotating-frame
    amplitude, so a tone above the drive frequency lands at positive frequency.
    """
    if noise_floor < 0:
        raise ValueError("noise floor must be non-negative")
    duration = (n_samples - 1) / sample_rate
    if t_start is None:
        t_start = traj.t[-1] - duration
    if t_start < traj.t[0] - 1e-15 or t_start + duration > traj.t[-1] * (1 + 1e-12) + 1e-15:
        raise RecordError(f"trajectory [{traj.t[0]:.3e}, {traj.t[-1]:.3e}] s does not cover a "
                          f"{duration:.3e} s record starting at {t_start:.3e} s")
    t = t_start + np.arange(n_samples) / sample_rate
    states = np.column_stack([np.interp(t, traj.t, traj.states[:, k]) for k in range(4)])
    amps = np.column_stack([states[:, 0] + 1j * states[:, 1], states[:, 2] + 1j * states[:, 3]])
    s = np.conj(readout.expectation(amps))
    if noise_floor > 0:
        rng = rng if rng is not None else np.random.default_rng()
        s = s + math.sqrt(noise_floor / 2.0) * (rng.standard_normal(n_samples)
                                                 + 1j * rng.standard_normal(n_samples))
    return IQRecord(sample_rate, s)


# -------- spectra --------
@dataclass
class EsdResult:
    freq_axis: np.ndarray       # Hz, two-sided, ascending
    esd: np.ndarray
    n_averages: int

    @property
    def df(self) -> float:
        return float(self.freq_axis[1] - self.freq_axis[0])

    @property
    def energy(self) -> float:
        return float(np.sum(self.esd) * self.df)

    def band(self, f_lo: float, f_hi: float) -> Tuple[np.ndarray, np.ndarray]:
        keep = (self.freq_axis >= f_lo) & (self.freq_axis <= f_hi)
        return self.freq_axis[keep], self.esd[keep]


def compute_esd(records: Sequence[IQRecord], window: Optional[str] = None) -> EsdResult:
    """Averaged dt^2 |FFT|^2, centred on zero frequency. Rectangular unless `window` is named."""
    if not records:
        raise RecordError("no records to average")
    rate, n = records[0].sample_rate, len(records[0])
    for rec in records[1:]:
        if rec.sample_rate != rate:
            raise RecordError(f"mixed sample rates {rate} and {rec.sample_rate}")
        if len(rec) != n:
            raise RecordError(f"mixed record lengths {n} and {len(rec)}")
    dt = 1.0 / rate
    taper = np.ones(n) if window is None else signal.get_window(window, n)
    acc = np.zeros(n)
    for rec in records:
        acc += np.abs(np.fft.fft(rec.samples * taper)) ** 2
    esd = np.fft.fftshift(acc / len(records)) * dt ** 2
    freq = np.fft.fftshift(np.fft.fftfreq(n, dt))
    return EsdResult(freq, esd, len(records))


# -------- Lorentzian fits --------
def lorentzian(f, amplitude: float, center: float, fwhm: float, offset: float = 0.0):
    half = 0.5 * fwhm
    return amplitude * half ** 2 / ((np.asarray(f) - center) ** 2 + half ** 2) + offset


@dataclass
class LorentzianFit:
    center: float       # Hz
    fwhm: float         # Hz
    amplitude: float
    offset: float
    stderr: Dict[str, float] = field(default_factory=dict)
    n_points: int = 0


def _residual(pars, f, y):
    v = pars.valuesdict()
    return lorentzian(f, v["amplitude"], v["center"], v["fwhm"], v["offset"]) - y


def fit_lorentzian(esd: EsdResult, window_hint: Optional[Tuple[float, float]] = None,
                   max_nfev: int = 2000) -> LorentzianFit:
    f, y = (esd.freq_axis, esd.esd) if window_hint is None else esd.band(*window_hint)
    if f.size < 5:
        raise FitError("fit window holds fewer than five bins", {"bins": int(f.size)})
    df = esd.df
    peak = int(np.argmax(y))
    floor = float(np.min(y))
    height = float(y[peak]) - floor
    above = np.count_nonzero(y - floor >= 0.5 * height)
    width0 = max(above * df, 2.0 * df)

    pars = Parameters()
    pars.add("amplitude", value=height, min=0.0)
    pars.add("center", value=float(f[peak]), min=float(f[0]), max=float(f[-1]))
    pars.add("fwhm", value=width0, min=1e-3 * df, max=float(f[-1] - f[0]) * 10.0)
    pars.add("offset", value=floor)

    # rescale to O(1) so the optimiser tolerances are meaningful
    scale = height if height > 0 else 1.0
    pars["amplitude"].set(value=height / scale)
    pars["offset"].set(value=floor / scale)
    out = Minimizer(_residual, pars, fcn_args=(f, y / scale)).leastsq(max_nfev=max_nfev)

    diagnostics = {"nfev": int(out.nfev), "message": str(out.message), "window": window_hint,
                   "chisqr": float(out.chisqr)}
    if not out.success:
        raise FitError(f"Lorentzian fit did not converge: {out.message}", diagnostics)
    v = out.params
    stderr = {name: (float(v[name].stderr) if v[name].stderr is not None else math.nan)
              for name in ("amplitude", "center", "fwhm", "offset")}
    for name in ("amplitude", "offset"):
        stderr[name] *= scale
    fit = LorentzianFit(center=float(v["center"].value), fwhm=abs(float(v["fwhm"].value)),
                        amplitude=float(v["amplitude"].value) * scale,
                        offset=float(v["offset"].value) * scale,
                        stderr=stderr, n_points=int(f.size))
    if not fit.fwhm > 0:
        raise FitError("fitted linewidth collapsed to zero", diagnostics)
    logger.debug(f"lorentzian: center={fit.center:.4e} Hz fwhm={fit.fwhm:.4e} Hz ({out.nfev} evals)")
    return fit


# -------- tick extraction --------
def lowpass(x: np.ndarray, cutoff: float, sample_rate: float, numtaps: int = FIR_TAPS) -> np.ndarray:
    """Linear-phase Hamming FIR; centred convolution removes the group delay."""
    if not 0 < cutoff < sample_rate / 2.0:
        raise ValueError(f"cutoff {cutoff} Hz must lie below Nyquist {sample_rate / 2.0} Hz")
    taps = signal.firwin(numtaps, cutoff, fs=sample_rate, window="hamming")
    return np.convolve(x, taps, mode="same")


def positive_sideband(rec: IQRecord) -> np.ndarray:
    """Analytic tone of the positive-frequency content, drive bin excluded."""
    spec = np.fft.fft(rec.samples)
    freq = np.fft.fftfreq(len(rec), rec.dt)
    spec[freq <= 0] = 0.0
    return np.fft.ifft(spec)


def extract_ticks(rec: IQRecord, lp_cutoff: float = TICK_CUTOFF, band: str = "full",
                  numtaps: int = FIR_TAPS) -> TickSeries:
    if band not in BANDS:
        raise ValueError(f"band must be one of {BANDS}, got {band!r}")
    if len(rec) < numtaps:
        raise RecordError(f"record of {len(rec)} samples is shorter than the {numtaps}-tap tick filter")
    raw = rec.amplitude if band == "full" else positive_sideband(rec).real
    filtered = lowpass(raw, lp_cutoff, rec.sample_rate, numtaps)
    edge = (numtaps - 1) // 2
    t = rec.t[edge: len(rec) - edge]
    wave = filtered[edge: len(rec) - edge]
    wave = wave - np.mean(wave)
    peak = np.max(np.abs(wave))
    if peak <= 1e-12 * max(float(np.max(np.abs(filtered))), 1e-300):
        raise RecordError("filtered record is flat; no ticks")
    wave = wave / peak
    # rising edges of sign(wave), timed on the normalised waveform
    ticks = rising_crossings(t, wave)
    if ticks.size < 3:
        raise RecordError(f"only {ticks.size} ticks found; need at least 3")
    return TickSeries(np.diff(ticks))


# -------- Wald fit --------
@dataclass
class WaldFit:
    alpha: float        # mean period, s
    lam: float          # spread, s
    n_ticks: int
    r_squared: float

    @property
    def accuracy(self) -> float:
        return self.lam / self.alpha

    @property
    def beats_random_clock(self) -> bool:
        return self.accuracy > 2.0

    def frequency_moments(self) -> Tuple[float, float]:
        m = wald_moments(self.alpha, self.lam)
        return m["frequency_mean"], m["frequency_variance"]


def fit_wald(ticks: TickSeries, n_bins: int = 50) -> WaldFit:
    T = ticks.periods
    if T.size < 10:
        raise ValueError(f"Wald fit needs at least 10 ticks, got {T.size}")
    mean = float(np.mean(T))
    spread = float(np.sum(1.0 / T - 1.0 / mean))
    if ticks.variance <= 0 or spread <= 1e-14 * T.size / mean:
        raise DegenerateDistributionError("tick periods have no spread; the clock is deterministic")
    lam = T.size / spread

    density, edges = np.histogram(T, bins=n_bins, density=True)
    centers = 0.5 * (edges[1:] + edges[:-1])
    model = wald_distribution(mean, lam).pdf(centers)
    ss_tot = float(np.sum((density - density.mean()) ** 2))
    r2 = 1.0 - float(np.sum((density - model) ** 2)) / ss_tot if ss_tot > 0 else math.nan
    return WaldFit(alpha=mean, lam=lam, n_ticks=int(T.size), r_squared=r2)


def linewidth_from_ticks(fit: WaldFit, lc_freq: Optional[float] = None) -> float:
    """
    Sideband FWHM (Hz) predicted from tick statistics via the phase-oscillator
    period variance 2 pi sigma^2 / (omega^3 mu^2).
    """
    if math.isinf(fit.lam):
        return 0.0
    freq = 1.0 / fit.alpha if lc_freq is None else lc_freq
    omega = 2.0 * math.pi * freq
    variance = fit.alpha ** 3 / fit.lam
    diffusion = variance * omega ** 3 / (2.0 * math.pi)     # sigma^2 / mu^2, rad^2/s
    return diffusion / (2.0 * math.pi)


# -------- noisy drive --------
def fm_noise_phase(n_samples: int, sample_rate: float, deviation_hz: float, cutoff_hz: float,
                   rng: np.random.Generator, order: int = 4) -> np.ndarray:
    """Drive phase (rad) from white frequency noise low-passed at cutoff_hz with rms deviation_hz."""
    if deviation_hz == 0:
        return np.zeros(n_samples)
    sos = signal.butter(order, cutoff_hz, btype="low", fs=sample_rate, output="sos")
    freq = signal.sosfilt(sos, rng.standard_normal(n_samples))
    freq *= deviation_hz / np.sqrt(np.mean(freq ** 2))
    return 2.0 * math.pi * np.concatenate([[0.0], np.cumsum(freq[:-1])]) / sample_rate


@dataclass
class NoisyDriveConfig:
    sample_rate: float = SAMPLE_RATE
    n_samples: int = RECORD_SAMPLES
    n_records: int = 20
    substeps: int = 4
    transient: float = 5e-6         # s
    noise_floor: float = 0.0
    drive_window: float = 2e6       # Hz half-width around the drive
    sideband_guard: float = 0.3e6   # Hz excluded around the drive when locating the sideband
    sideband_window: float = 1e6    # Hz half-width around the sideband
    seed: int = 0


@dataclass
class NoisyDrivePoint:
    deviation_hz: float
    drive_fwhm: float = math.nan
    sideband_center: float = math.nan
    sideband_fwhm: float = math.nan
    error: Optional[str] = None


@dataclass
class CrossoverReport:
    points: List[NoisyDrivePoint]
    crossover_hz: Optional[float]

    def drive_monotone(self) -> bool:
        widths = [p.drive_fwhm for p in self.points if p.error is None]
        return all(b >= a for a, b in zip(widths[:-1], widths[1:]))


def noisy_drive_records(model: MeanFieldModel, readout: AffineModeOperator, deviation_hz: float,
                        fm_cutoff: float, cfg: NoisyDriveConfig, grid_index: int = 0) -> List[IQRecord]:
    dt = 1.0 / (cfg.sample_rate * cfg.substeps)
    n_transient = int(math.ceil(cfg.transient / dt / cfg.substeps)) * cfg.substeps
    n_steps = n_transient + (cfg.n_samples - 1) * cfg.substeps
    phases = np.stack([fm_noise_phase(n_steps + 1, 1.0 / dt, deviation_hz, fm_cutoff,
                                      path_generator(cfg.seed, grid_index * cfg.n_records + r))
                       for r in range(cfg.n_records)], axis=1)
    z0 = np.zeros((cfg.n_records, 4))
    states = rk4_states(model, z0, dt, n_steps, drive_phase=phases, stride=cfg.substeps)
    start = n_transient // cfg.substeps
    records = []
    noise_rng = path_generator(cfg.seed + 1, grid_index)
    for r in range(cfg.n_records):
        z = states[start:, r]
        amps = np.column_stack([z[:, 0] + 1j * z[:, 1], z[:, 2] + 1j * z[:, 3]])
        theta = phases[n_transient::cfg.substeps, r]
        s = np.conj(amps @ readout.coeffs + readout.scalar * np.exp(1j * theta))
        if cfg.noise_floor > 0:
            s = s + math.sqrt(cfg.noise_floor / 2.0) * (noise_rng.standard_normal(s.size)
                                                         + 1j * noise_rng.standard_normal(s.size))
        records.append(IQRecord(cfg.sample_rate, s))
    return records


def noisy_drive_experiment(model: MeanFieldModel, readout: AffineModeOperator,
                           deviations_hz: Sequence[float], fm_cutoff: float = 500e3,
                           cfg: Optional[NoisyDriveConfig] = None) -> CrossoverReport:
    """
    Sweep the rms frequency deviation of the drive and compare the fitted drive-peak
    and positive-sideband linewidths. The crossover is the first deviation at which
    the sideband is narrower than the drive; it is None if that never happens.
    """
    cfg = cfg or NoisyDriveConfig()
    if any(d < 0 for d in deviations_hz):
        raise ValueError("frequency deviations must be non-negative")
    points: List[NoisyDrivePoint] = []
    crossover = None
    for k, dev in enumerate(deviations_hz):
        point = NoisyDrivePoint(float(dev))
        esd = compute_esd(noisy_drive_records(model, readout, dev, fm_cutoff, cfg, k))
        try:
            if dev == 0:
                # a noiseless drive is a single-bin tone; its width is the zero-deviation limit
                point.drive_fwhm = 0.0
            else:
                point.drive_fwhm = fit_lorentzian(esd, (-cfg.drive_window, cfg.drive_window)).fwhm
            f, y = esd.band(cfg.sideband_guard, esd.freq_axis[-1])
            f_sb = float(f[np.argmax(y)])
            sb = fit_lorentzian(esd, (f_sb - cfg.sideband_window, f_sb + cfg.sideband_window))
            point.sideband_center, point.sideband_fwhm = sb.center, sb.fwhm
        except FitError as exc:
            point.error = str(exc)
            logger.warning(f"noisy drive at {dev:.3e} Hz: {exc}")
        points.append(point)
        if crossover is None and point.error is None and dev > 0 \
                and point.sideband_fwhm < point.drive_fwhm:
            crossover = float(dev)
    logger.info(f"noisy drive: {len(points)} deviations, crossover={crossover}")
    return CrossoverReport(points, crossover)
