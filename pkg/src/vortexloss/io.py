"""CSV + sidecar JSON readers and writers.

Every table is a CSV with a fixed unit-bearing header and a JSON sidecar
of the same stem holding the per-file metadata. Floats are written with
``repr`` so files round-trip without loss.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .exceptions import DataError
from .pipeline import DecayTrace, QDataset, SensitivityCurve

DECAY_COLUMNS = ("time_s", "power_w")
QDATASET_COLUMNS = (
    "temperature_k", "field_v_per_m", "photon_n", "q0", "q0_err", "f0_hz", "f0_err",
)
CURVE_COLUMNS = (
    "temperature_k", "field_v_per_m", "s_ohm_per_t", "s_err", "sprime_ohm_per_t", "sprime_err",
)


def sidecar_path(path):
    return Path(path).with_suffix(".json")


def _fmt(x):
    x = float(x)
    return repr(x) if np.isfinite(x) else str(x)


def write_table(path, columns, data):
    """Write ``data`` (sequence of equal-length columns) under ``columns``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in zip(*data):
            writer.writerow([_fmt(v) for v in row])


def read_table(path, columns):
    """Read a CSV and return a dict of float arrays for ``columns``."""
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            header = [h.strip() for h in header]
            missing = [c for c in columns if c not in header]
            if missing:
                raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
            idx = [header.index(c) for c in columns]
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append([float(row[i]) for i in idx])
                except (ValueError, IndexError) as exc:
                    raise DataError(f"{path}:{lineno}: malformed row ({exc})") from None
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    arr = np.array(rows, dtype=float).reshape(-1, len(columns))
    return {c: arr[:, k] for k, c in enumerate(columns)}


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False)
        fh.write("\n")


def read_json(path, required=()):
    path = Path(path)
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise DataError(f"{path}: cannot read ({exc.strerror})") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise DataError(f"{path}: expected a JSON object")
    missing = [k for k in required if k not in obj]
    if missing:
        raise DataError(f"{path}: missing key(s) {', '.join(missing)}")
    return obj


def write_decay_trace(path, trace):
    write_table(path, DECAY_COLUMNS, (trace.time, trace.power))
    meta = {"f0_hz": trace.f0, "temperature_k": trace.temperature}
    meta.update(trace.label)
    meta.setdefault("label", "")
    write_json(sidecar_path(path), meta)


def read_decay_trace(path):
    cols = read_table(path, DECAY_COLUMNS)
    meta = read_json(sidecar_path(path), ("f0_hz", "temperature_k"))
    f0 = float(meta.pop("f0_hz"))
    temperature = float(meta.pop("temperature_k"))
    try:
        return DecayTrace(cols["time_s"], cols["power_w"], f0, temperature, meta)
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_qdataset(path, ds, extra=None):
    write_table(
        path,
        QDATASET_COLUMNS,
        (ds.temperature, ds.field, ds.photon_n, ds.q0, ds.q0_err, ds.f0, ds.f0_err),
    )
    meta = {
        "cooldown_id": ds.cooldown_id,
        "b_trap_tesla": ds.b_trap,
        "b_trap_err_tesla": ds.b_trap_err,
    }
    meta.update(extra or {})
    write_json(sidecar_path(path), meta)


def read_qdataset(path):
    cols = read_table(path, QDATASET_COLUMNS)
    meta = read_json(sidecar_path(path), ("cooldown_id", "b_trap_tesla"))
    try:
        return QDataset(
            str(meta["cooldown_id"]),
            float(meta["b_trap_tesla"]),
            float(meta.get("b_trap_err_tesla", 0.0)),
            *(cols[c] for c in QDATASET_COLUMNS),
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_sensitivity_curve(path, curve, extra=None):
    write_table(
        path,
        CURVE_COLUMNS,
        (curve.temperature, curve.field, curve.s, curve.s_err, curve.s_prime, curve.s_prime_err),
    )
    meta = {"cooldown_id": curve.cooldown_id, "b_trap_tesla": curve.b_trap}
    meta.update(curve.meta)
    meta.update(extra or {})
    write_json(sidecar_path(path), meta)


def read_sensitivity_curve(path):
    """Read a curve; the sidecar is optional (id falls back to the file stem)."""
    path = Path(path)
    cols = read_table(path, CURVE_COLUMNS)
    side = sidecar_path(path)
    meta = read_json(side) if side.exists() else {}
    cooldown_id = str(meta.pop("cooldown_id", path.stem))
    b_trap = float(meta.pop("b_trap_tesla", 0.0))
    try:
        return SensitivityCurve(
            cooldown_id, b_trap, *(cols[c] for c in CURVE_COLUMNS), meta=meta
        )
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None
