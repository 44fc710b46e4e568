# fbclock/runner.py
import hashlib
import json
import logging
import math
import time
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import lmfit
import numpy as np
import pydantic
import scipy
from scipy import stats

from . import __version__
from .analysis import (NoisyDriveConfig, IQRecord, clock_readout, compute_esd, extract_ticks,
                       fit_lorentzian, fit_wald, linewidth_from_ticks, noisy_drive_experiment,
                       synthesize_heterodyne)
from .device import dbm_to_rate, effective_params, flux_sweep, kerr_coefficients
from .dynamics import (CSV_HEADER, default_hyperbolic_tol, detect_limit_cycle, find_fixed_points,
                       integrate, mbf_mean_field, sweep_drive)
from .errors import ClockError, FitError
from .models import MeanFieldModel, TickSeries
from .records import (write_esd_csv, write_flux_csv, write_iq_binary, write_iq_csv, write_json,
                      write_rows_csv, write_ticks_csv)
from .schemas import RunConfig
from .slh import build_clock_network, clock_mean_field, mean_field_coefficients
from .stochastic import (DiffusionSpec, SdeConfig, feedback_diffusion_rate, first_passage_ticks,
                         path_generator, phase_path_ticks, simulate_meanfield_sde,
                         simulate_normal_form, summarize_ticks, trajectory_ticks, wald_distribution)

logger = logging.getLogger("fbclock.runner")


def load_config(path: str) -> RunConfig:
    """Read and validate a JSON run configuration."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return RunConfig.model_validate(raw)


def config_hash(config: RunConfig) -> str:
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def versions() -> Dict[str, str]:
    return {"fbclock": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "lmfit": lmfit.__version__, "pydantic": pydantic.VERSION}


class RunContext:
    """Output directory, format switch and the list of files written by one run."""

    def __init__(self, config: RunConfig, out_dir: Path, seed: int, threads: int, fmt: str):
        self.config = config
        self.out_dir = out_dir
        self.seed = seed
        self.threads = threads
        self.fmt = fmt
        self.outputs: List[str] = []

    @property
    def csv(self) -> bool:
        return self.fmt in ("csv", "both")

    @property
    def json(self) -> bool:
        return self.fmt in ("json", "both")

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out_dir / name

    def clock_model(self) -> MeanFieldModel:
        p = self.config.parameters.to_params()
        if self.config.mbf is not None:
            return mbf_mean_field(p, self.config.mbf.lambda_fb, self.config.mbf.phi_fb_rad)
        return clock_mean_field(p)


# -------- experiments --------
def _fixed_point_rows(reports) -> List[List[Any]]:
    rows = []
    for r in reports:
        rows.append([repr(r.alpha_sq), repr(r.beta_sq), r.stability, repr(r.residual)]
                    + [repr(float(v)) for v in r.eigenvalues.real]
                    + [repr(float(v)) for v in r.eigenvalues.imag])
    return rows


def _compose(ctx: RunContext) -> Dict[str, Any]:
    p = ctx.config.parameters.to_params()
    network = build_clock_network(p)
    coeffs = mean_field_coefficients(network)
    doc = {
        "network": network.to_dict(),
        "mean_field": {"modes": list(coeffs.modes), "drift": coeffs.drift, "kerr": coeffs.kerr,
                       "drive": coeffs.drive},
        "derived": {"kappa_a": p.kappa_a, "kappa_b": p.kappa_b, "delta_b_eff": p.delta_b_eff,
                    "g_a": p.g_a, "g_b": p.g_b, "eps_bar": p.eps_bar},
    }
    write_json(doc, ctx.path("compose.json"))
    return {"modes": list(network.modes), "n_ports": network.n_ports}


def _stability(ctx: RunContext) -> Dict[str, Any]:
    model = ctx.clock_model()
    solver = ctx.config.solver
    reports = find_fixed_points(model, solver.n_starts, tol=solver.newton_tol)
    if ctx.csv:
        write_rows_csv(["alpha_sq", "beta_sq", "class", "residual"] + CSV_HEADER[5:],
                       _fixed_point_rows(reports), ctx.path("fixed_points.csv"))
    summary = {"n_fixed_points": len(reports), "classes": [r.stability for r in reports],
               "hyperbolic_tol": default_hyperbolic_tol(model)}
    if ctx.json:
        write_json({**summary, "fixed_points": [
            {"state": [r.state.x_a, r.state.y_a, r.state.x_b, r.state.y_b],
             "eigenvalues": r.eigenvalues, "class": r.stability, "residual": r.residual}
            for r in reports]}, ctx.path("fixed_points.json"))
    return summary


def _sweep(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.sweep
    p = ctx.config.parameters.to_params()
    p = p.with_port_drive(1.0) if block.drive_reference == "port" else p.with_drive(1.0)
    template = (mbf_mean_field(p, ctx.config.mbf.lambda_fb, ctx.config.mbf.phi_fb_rad)
                if ctx.config.mbf is not None else clock_mean_field(p))
    grid = np.linspace(block.eps_sq_min_per_s, block.eps_sq_max_per_s, block.n_points)
    diagram = sweep_drive(template, grid, n_starts=ctx.config.solver.n_starts,
                          continuation_starts=block.continuation_starts, tol=ctx.config.solver.newton_tol)
    if ctx.csv:
        diagram.to_csv(ctx.path("bifurcation.csv"))
    summary = {"n_points": int(grid.size), "n_rows": len(diagram.rows), "drive_reference": block.drive_reference,
               "transitions": [list(t) for t in diagram.transitions()]}
    if ctx.json:
        write_json(summary, ctx.path("bifurcation.json"))
    return summary


def _simulate(ctx: RunContext) -> Dict[str, Any]:
    model = ctx.clock_model()
    solver = ctx.config.solver
    traj = integrate(model, ctx.config.simulate.initial.to_state(), solver.t_end_s, solver.dt_s,
                     method=solver.method, atol=solver.atol, rtol=solver.rtol)
    cycle = detect_limit_cycle(traj, ctx.config.simulate.transient_s, model=model)
    if ctx.csv:
        write_rows_csv(["t", "x_a", "y_a", "x_b", "y_b"],
                       ([repr(float(t))] + [repr(float(v)) for v in z] for t, z in zip(traj.t, traj.states)),
                       ctx.path("trajectory.csv"))
    summary: Dict[str, Any] = {"limit_cycle": None, "final_state": list(traj.final.as_array())}
    if cycle is not None:
        summary["limit_cycle"] = {"period_s": cycle.period, "frequency_hz": cycle.frequency,
                                  "amplitude_a": cycle.amplitude_a, "amplitude_b": cycle.amplitude_b}
    if ctx.json:
        write_json(summary, ctx.path("simulate.json"))
    return summary


def _sde(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.sde
    p = ctx.config.parameters.to_params()
    model = ctx.clock_model()
    if block.lambda_fb is not None:
        gamma = feedback_diffusion_rate(p.kappa_a1, p.kappa_b2, block.lambda_fb, block.rate_unit_per_s)
    else:
        gamma = block.gamma_per_s or 0.0
    cfg = SdeConfig(dt=block.dt_s, seed=ctx.seed, n_paths=ctx.config.rng.n_paths, threads=ctx.threads)
    ensemble = simulate_meanfield_sde(model, DiffusionSpec(gamma), cfg, block.t_end_s,
                                      block.initial.to_state(), stride=block.stride)
    per_path = [trajectory_ticks(ensemble.path(i), block.transient_s) for i in range(len(ensemble))]
    ticks = TickSeries(np.concatenate([t.periods for t in per_path]))
    if ctx.csv:
        write_ticks_csv(ticks, ctx.path("ticks.csv"))
    summary = {"gamma_per_s": gamma, "ticks": summarize_ticks(ticks),
               "per_path_variance": [t.variance for t in per_path]}
    if ctx.json:
        write_json(summary, ctx.path("sde.json"))
    return summary


def _ticks(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.ticks
    pp = block.to_phase_params()
    dt = block.dt_s or 1e-3 * pp.period
    cfg = SdeConfig(dt=dt, seed=ctx.seed, n_paths=ctx.config.rng.n_paths, threads=ctx.threads)
    if block.source == "phase":
        ticks = first_passage_ticks(pp, cfg, block.n_ticks)
    else:
        t_end = 1.05 * block.n_ticks * pp.period
        paths = simulate_normal_form(pp.mu, pp.omega, pp.sigma, cfg, t_end)
        ticks = TickSeries(np.concatenate([phase_path_ticks(paths.t, th).periods for th in paths.phase]))
    if ctx.csv:
        write_ticks_csv(ticks, ctx.path("ticks.csv"))
    summary: Dict[str, Any] = {"ticks": summarize_ticks(ticks), "expected_variance": pp.tick_variance}
    if ticks.variance > 0 and len(ticks) >= 10:
        fit = fit_wald(ticks)
        summary["wald"] = {"alpha_s": fit.alpha, "lambda_s": fit.lam, "accuracy": fit.accuracy,
                           "r_squared": fit.r_squared, "linewidth_hz": linewidth_from_ticks(fit)}
        if pp.sigma > 0:
            ks = stats.kstest(ticks.periods, wald_distribution(pp.period, pp.wald_lambda).cdf)
            summary["ks"] = {"statistic": float(ks.statistic), "pvalue": float(ks.pvalue)}
    if ctx.json:
        write_json(summary, ctx.path("ticks.json"))
    return summary


def _locate_sideband(esd, guard: float, half_width: float):
    f, y = esd.band(guard, esd.freq_axis[-1])
    center = float(f[np.argmax(y)])
    return center - half_width, center + half_width


def _esd(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.esd
    solver = ctx.config.solver
    p = ctx.config.parameters.to_params()
    model = ctx.clock_model()
    readout = clock_readout(p)
    duration = block.n_samples / block.sample_rate_hz
    t_end = block.transient_s + block.n_records * duration
    traj = integrate(model, block.initial.to_state(), t_end, solver.dt_s,
                     method=solver.method, atol=solver.atol, rtol=solver.rtol)
    records: List[IQRecord] = []
    for r in range(block.n_records):
        records.append(synthesize_heterodyne(traj, readout, block.noise_floor, block.sample_rate_hz,
                                             block.n_samples, t_start=block.transient_s + r * duration,
                                             rng=path_generator(ctx.seed, r)))
    esd = compute_esd(records, block.window)
    summary: Dict[str, Any] = {"n_records": len(records), "parseval": {
        "records": float(np.mean([rec.energy for rec in records])), "esd": esd.energy}}
    try:
        sb = fit_lorentzian(esd, _locate_sideband(esd, block.sideband_guard_hz, block.sideband_window_hz))
        summary["sideband"] = {"center_hz": sb.center, "fwhm_hz": sb.fwhm, "stderr": sb.stderr}
    except FitError as exc:
        logger.warning(f"❌ sideband fit failed: {exc}")
        summary["sideband_error"] = {"message": str(exc), "diagnostics": exc.diagnostics}
    periods = []
    for rec in records:
        try:
            periods.append(extract_ticks(rec, block.lp_cutoff_hz, block.band).periods)
        except ClockError as exc:
            logger.debug(f"no ticks in record: {exc}")
    ticks = TickSeries(np.concatenate(periods) if periods else np.zeros(0))
    summary["ticks"] = summarize_ticks(ticks)
    if len(ticks) >= 10 and ticks.variance > 0:
        fit = fit_wald(ticks)
        summary["wald"] = {"alpha_s": fit.alpha, "lambda_s": fit.lam, "accuracy": fit.accuracy,
                           "linewidth_hz": linewidth_from_ticks(fit)}
    if ctx.csv:
        write_esd_csv(esd, ctx.path("esd.csv"))
        write_iq_csv(records[0], ctx.path("iq_000.csv"))
        write_ticks_csv(ticks, ctx.path("ticks.csv"))
    write_iq_binary(records[0], ctx.path("iq_000.bin"))
    if ctx.json:
        write_json(summary, ctx.path("esd.json"))
    return summary


def _device(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.device
    geom = block.geometry.to_geometry()
    rows = flux_sweep(geom, block.flux_grid_f)
    if ctx.csv:
        write_flux_csv(rows, ctx.path("flux_sweep.csv"))
    eff = effective_params(geom, block.flux_grid_f[0])
    kerr = kerr_coefficients(geom, block.flux_grid_f[0])
    summary: Dict[str, Any] = {"gamma_a": geom.gamma_a, "gamma_b": geom.gamma_b,
                               "omega_a": eff.omega_a, "kappa_a1": eff.kappa_a1, "kerr_a": kerr.kerr_a,
                               "n_flux_points": len(rows)}
    if block.drive_power_dbm is not None:
        summary["eps_sq_per_s"] = dbm_to_rate(block.drive_power_dbm, 2.0 * math.pi * block.drive_freq_hz)
    if ctx.json:
        write_json(summary, ctx.path("device.json"))
    return summary


def _noisy_drive(ctx: RunContext) -> Dict[str, Any]:
    block = ctx.config.noisy_drive
    p = ctx.config.parameters.to_params()
    cfg = NoisyDriveConfig(sample_rate=block.sample_rate_hz, n_samples=block.n_samples,
                           n_records=block.n_records, substeps=block.substeps,
                           transient=block.transient_s, noise_floor=block.noise_floor,
                           drive_window=block.drive_window_hz, sideband_guard=block.sideband_guard_hz,
                           sideband_window=block.sideband_window_hz, seed=ctx.seed)
    report = noisy_drive_experiment(clock_mean_field(p), clock_readout(p), block.deviations_hz,
                                    block.fm_cutoff_hz, cfg)
    if ctx.csv:
        write_rows_csv(["deviation_hz", "drive_fwhm_hz", "sideband_center_hz", "sideband_fwhm_hz", "error"],
                       ([repr(pt.deviation_hz), repr(pt.drive_fwhm), repr(pt.sideband_center),
                         repr(pt.sideband_fwhm), pt.error or ""] for pt in report.points),
                       ctx.path("noisy_drive.csv"))
    summary = {"crossover_hz": report.crossover_hz, "drive_monotone": report.drive_monotone(),
               "failed_points": sum(1 for pt in report.points if pt.error)}
    if ctx.json:
        write_json(summary, ctx.path("noisy_drive.json"))
    return summary


EXPERIMENTS: Dict[str, Callable[[RunContext], Dict[str, Any]]] = {
    "compose": _compose,
    "stability": _stability,
    "sweep": _sweep,
    "simulate": _simulate,
    "sde": _sde,
    "ticks": _ticks,
    "esd": _esd,
    "device": _device,
    "noisy-drive": _noisy_drive,
}


def run(config: RunConfig, out_dir: str, seed: Optional[int] = None, threads: int = 1,
        fmt: Optional[str] = None) -> Dict[str, Any]:
    """Execute one configured experiment and write its artifacts plus manifest.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = config.rng.seed if seed is None else seed
    ctx = RunContext(config, out, seed, max(1, threads), fmt or config.output.formats)

    started = datetime.now(timezone.utc)
    t0 = time.perf_counter()
    logger.info(f"📥 {config.experiment} run, seed={seed}, threads={ctx.threads}, out={out}")
    summary = EXPERIMENTS[config.experiment](ctx)
    wall = time.perf_counter() - t0

    manifest = {
        "experiment": config.experiment,
        "config_sha256": config_hash(config),
        "seed": seed,
        "threads": ctx.threads,
        "versions": versions(),
        "started_at": started.isoformat(),
        "wall_time_s": wall,
        "outputs": list(ctx.outputs),
        "summary": summary,
    }
    write_json(manifest, out / "manifest.json")
    logger.info(f"✅ {config.experiment} finished in {wall:.2f} s, {len(ctx.outputs)} artifacts")
    return manifest
