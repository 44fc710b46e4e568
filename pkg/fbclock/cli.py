# fbclock/cli.py
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
import pydantic

from . import settings
from .device import flux_sweep
from .errors import ClockError
from .records import jsonable, write_flux_csv, write_json
from .runner import load_config, run
from .schemas import DeviceBlock

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_NUMERIC = 3

logger = logging.getLogger("fbclock.cli")


def _configure_logging() -> None:
    logging.basicConfig(level=settings.LOG_LEVEL, format=settings.LOG_FORMAT)


def _fail(code: int, kind: str, exc: Exception, out: Optional[str]) -> None:
    doc: Dict[str, Any] = {"status": kind, "exit_code": code, "error": type(exc).__name__,
                           "message": str(exc)}
    if isinstance(exc, pydantic.ValidationError):
        doc["errors"] = json.loads(exc.json())
    diagnostics = getattr(exc, "diagnostics", None)
    if diagnostics:
        doc["diagnostics"] = diagnostics
    click.echo(json.dumps(jsonable(doc), indent=2, sort_keys=True))
    if out:
        try:
            Path(out).mkdir(parents=True, exist_ok=True)
            write_json(doc, Path(out) / "error.json")
        except OSError:
            pass
    logger.error(f"❌ {kind}: {exc}")
    sys.exit(code)


@click.group()
def main():
    """fbclock: coherent-feedback Kerr clock simulator."""
    _configure_logging()


@main.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="JSON run configuration.")
@click.option("--seed", type=click.IntRange(0, 2 ** 64 - 1), default=None, help="Override rng.seed.")
@click.option("--threads", type=click.IntRange(1), default=None, help="Worker threads for ensembles.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--format", "fmt", type=click.Choice(["csv", "json", "both"]), default=None)
def run_command(config_path, seed, threads, out_dir, fmt):
    """Run one configured experiment."""
    try:
        config = load_config(config_path)
    except (pydantic.ValidationError, json.JSONDecodeError, ValueError, OSError) as exc:
        _fail(EXIT_SCHEMA, "schema_error", exc, out_dir)
        return
    out = out_dir or config.output.directory or settings.OUT_DIR
    try:
        manifest = run(config, out, seed=seed, threads=threads or settings.THREADS, fmt=fmt)
    except ClockError as exc:
        _fail(EXIT_NUMERIC, "numeric_error", exc, out)
        return
    except ValueError as exc:
        _fail(EXIT_SCHEMA, "schema_error", exc, out)
        return
    click.echo(json.dumps(jsonable({"status": "ok", "out": str(out), "outputs": manifest["outputs"]}),
                          sort_keys=True))


@main.command("device")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False),
              help="JSON with 'geometry' and 'flux_grid_f'.")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="CSV destination; stdout when omitted.")
def device_command(config_path, out_path):
    """Flux sweep of resonator B: F, omega_b, kappa_b1, kappa_b2, K_b."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            block = DeviceBlock.model_validate(json.load(fh))
        geom = block.geometry.to_geometry()
    except (pydantic.ValidationError, json.JSONDecodeError, ValueError, OSError) as exc:
        _fail(EXIT_SCHEMA, "schema_error", exc, None)
        return
    try:
        rows = flux_sweep(geom, block.flux_grid_f)
    except ClockError as exc:
        _fail(EXIT_NUMERIC, "numeric_error", exc, None)
        return
    if out_path:
        write_flux_csv(rows, out_path)
        logger.info(f"✅ wrote {len(rows)} flux points to {out_path}")
    else:
        click.echo("F,omega_b,kappa_b1,kappa_b2,kerr_b")
        for r in rows:
            click.echo(f"{r.F!r},{r.omega_b!r},{r.kappa_b1!r},{r.kappa_b2!r},{r.kerr_b!r}")


if __name__ == "__main__":
    main()
