# fbclock/records.py
"""Artifact writers: IQ records, tick series, flux sweeps and JSON documents."""
import csv
import json
import math
import struct
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .analysis import EsdResult, IQRecord
from .device import FluxSweepRow
from .errors import RecordError
from .models import TickSeries

IQ_MAGIC = b"CFCIQ001"
_IQ_HEADER = struct.Struct("<8sQd")

PathLike = Union[str, Path]


def write_iq_binary(rec: IQRecord, path: PathLike) -> None:
    """Magic, u64 sample count, f64 sample rate, then interleaved little-endian float64 I, Q."""
    body = np.empty(2 * len(rec), dtype="<f8")
    body[0::2] = rec.samples.real
    body[1::2] = rec.samples.imag
    with open(path, "wb") as fh:
        fh.write(_IQ_HEADER.pack(IQ_MAGIC, len(rec), float(rec.sample_rate)))
        fh.write(body.tobytes())


def read_iq_binary(path: PathLike) -> IQRecord:
    raw = Path(path).read_bytes()
    if len(raw) < _IQ_HEADER.size:
        raise RecordError(f"{path}: truncated header")
    magic, count, rate = _IQ_HEADER.unpack_from(raw)
    if magic != IQ_MAGIC:
        raise RecordError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw, dtype="<f8", offset=_IQ_HEADER.size)
    if body.size != 2 * count:
        raise RecordError(f"{path}: header announces {count} samples, file holds {body.size // 2}")
    return IQRecord(rate, body[0::2] + 1j * body[1::2])


def write_iq_csv(rec: IQRecord, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "I", "Q"])
        for t, s in zip(rec.t, rec.samples):
            writer.writerow([repr(float(t)), repr(float(s.real)), repr(float(s.imag))])


def write_ticks_csv(ticks: TickSeries, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["period_s"])
        writer.writerows([[repr(float(p))] for p in ticks.periods])


def write_esd_csv(esd: EsdResult, path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["freq_hz", "esd"])
        writer.writerows([[repr(float(f)), repr(float(v))] for f, v in zip(esd.freq_axis, esd.esd)])


FLUX_HEADER = ["F", "omega_b", "kappa_b1", "kappa_b2", "kerr_b"]


def write_flux_csv(rows: Sequence[FluxSweepRow], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FLUX_HEADER)
        for r in rows:
            writer.writerow([repr(r.F), repr(r.omega_b), repr(r.kappa_b1), repr(r.kappa_b2), repr(r.kerr_b)])


def write_rows_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], path: PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        writer.writerows(rows)


def jsonable(value: Any) -> Any:
    """Plain-JSON view of numpy scalars/arrays, complex numbers and non-finite floats."""
    if isinstance(value, dict):
        return {str(k): jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return jsonable(value.tolist())
    if isinstance(value, (complex, np.complexfloating)):
        return {"re": jsonable(float(value.real)), "im": jsonable(float(value.imag))}
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def write_json(doc: Any, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")
