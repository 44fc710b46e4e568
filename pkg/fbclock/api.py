# fbclock/api.py
import logging
import math
import os
import tempfile
from typing import Any, Optional

from fastapi import APIRouter, HTTPException

from . import settings
from .device import effective_params, kerr_coefficients
from .dynamics import default_hyperbolic_tol, find_fixed_points, mbf_mean_field, reduced_limit_cycle
from .errors import ClockError
from .records import jsonable
from .runner import run
from .schemas import ClockParamsBlock, DeviceRequest, ReducedCycleRequest, RunConfig, StabilityRequest
from .slh import build_clock_network, clock_mean_field, extract_mean_field

router = APIRouter()
logger = logging.getLogger("fbclock.api")

TWO_PI = 2.0 * math.pi


def _numeric_failure(exc: Exception) -> HTTPException:
    logger.warning(f"❌ {type(exc).__name__}: {exc}")
    detail = {"error": type(exc).__name__, "message": str(exc)}
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        detail["diagnostics"] = jsonable(diagnostics)
    return HTTPException(status_code=400, detail=detail)


@router.get("/health", tags=["internal"])
def health() -> Any:
    return {"status": "ok"}


@router.post("/compose", tags=["network"])
def compose(block: ClockParamsBlock):
    """SLH triple of the clock network and its mean-field coefficients."""
    try:
        network = build_clock_network(block.to_params())
        model = extract_mean_field(network)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except ClockError as exc:
        raise _numeric_failure(exc)
    return jsonable({"network": network.to_dict(), "mean_field": model.__dict__})


@router.post("/stability", tags=["dynamics"])
def stability(req: StabilityRequest):
    try:
        p = req.parameters.to_params()
        model = (mbf_mean_field(p, req.mbf.lambda_fb, req.mbf.phi_fb_rad)
                 if req.mbf is not None else clock_mean_field(p))
        reports = find_fixed_points(model, req.n_starts, tol=req.newton_tol)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except ClockError as exc:
        raise _numeric_failure(exc)
    return jsonable({
        "hyperbolic_tol": default_hyperbolic_tol(model),
        "fixed_points": [{"alpha_sq": r.alpha_sq, "beta_sq": r.beta_sq, "class": r.stability,
                          "eigenvalues": r.eigenvalues, "residual": r.residual} for r in reports],
    })


@router.post("/reduced-limit-cycle", tags=["dynamics"])
def reduced_cycle(req: ReducedCycleRequest):
    cycle = reduced_limit_cycle(TWO_PI * req.g_hz, TWO_PI * req.kappa_hz,
                                TWO_PI * req.kerr_a_hz, TWO_PI * req.kerr_b_hz)
    return jsonable(cycle.__dict__)


@router.post("/device/effective", tags=["device"])
def device_effective(req: DeviceRequest):
    try:
        geom = req.geometry.to_geometry()
        eff = effective_params(geom, req.flux_f)
        kerr = kerr_coefficients(geom, req.flux_f)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    except ClockError as exc:
        raise _numeric_failure(exc)
    doc = {name + "_hz": value / TWO_PI for name, value in {**eff.__dict__, **kerr.__dict__}.items()}
    doc.update({"gamma_a": geom.gamma_a, "gamma_b": geom.gamma_b})
    return jsonable(doc)


def _run_directory(requested: Optional[str]) -> str:
    """Scratch directory under OUT_DIR; a requested directory must resolve inside it."""
    root = os.path.realpath(settings.OUT_DIR)
    os.makedirs(root, exist_ok=True)
    if not requested:
        return tempfile.mkdtemp(prefix="run-", dir=root)
    out = os.path.realpath(os.path.join(root, requested))
    if os.path.commonpath([root, out]) != root:
        raise HTTPException(status_code=422, detail=f"output.directory must stay inside {settings.OUT_DIR}")
    return out


@router.post("/run", tags=["runs"])
def run_config(config: RunConfig):
    """Run a configuration into a directory under OUT_DIR and return its manifest."""
    out = _run_directory(config.output.directory)
    try:
        manifest = run(config, out, threads=settings.THREADS)
    except ClockError as exc:
        raise _numeric_failure(exc)
    except ValueError as exc:
        raise HTTPException(status_code=422, detail=str(exc))
    return jsonable({"out": out, **manifest})
