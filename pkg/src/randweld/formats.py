"""File formats.

Realization files
    ``<stem>.json`` header plus ``<stem>.bin`` (little-endian float64, C order)
    or ``<stem>.csv`` holding the coefficient block.

Binary grids (``.rwg``)
    8-byte magic ``RWGRID01``, little-endian uint32 header length, UTF-8 JSON
    header ``{version, chart, kind, dims: [ny, nx], dx, dy, x0, y0, ...}`` and
    then ``ny * nx`` complex values stored as interleaved float64 ``(re, im)``
    pairs in row-major order (row index = y).

Results JSON
    ``{schema_version, estimate, stderr, reps, seed, config, config_hash, ...}``.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .ba_extension import DilatationField
from .field_sampler import FORMAT_VERSION, FieldRealization

GRID_MAGIC = b"RWGRID01"
GRID_VERSION = 1
RESULTS_SCHEMA_VERSION = 1


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj) -> str:
    """Canonical JSON text (sorted keys) so identical content gives identical bytes."""
    return json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"


def config_hash(config: dict) -> str:
    text = json.dumps(_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(obj))
    return path


# ---------------------------------------------------------------------------
# realizations


def save_realization(r: FieldRealization, stem, block: str = "bin", extra: dict | None = None) -> Path:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    coeffs = np.ascontiguousarray(r.coefficients, dtype="<f8")
    if block == "bin":
        data = stem.with_suffix(".bin")
        data.write_bytes(coeffs.tobytes())
    elif block == "csv":
        data = stem.with_suffix(".csv")
        np.savetxt(data, coeffs.reshape(coeffs.shape[0], -1), delimiter=",", fmt="%.17g")
    else:
        raise ValueError("block must be 'bin' or 'csv'")
    header = {
        "format": "randweld-realization",
        "version": FORMAT_VERSION,
        "backend": r.backend,
        "n_modes": r.n_modes,
        "levels": r.levels,
        "n_grid": r.n_grid,
        "scale_ratio": r.scale_ratio,
        "top": r.top,
        "seed": r.seed,
        "replicate": r.replicate,
        "shape": list(coeffs.shape),
        "dtype": "<f8",
        "block": data.name,
        "meta": r.meta,
    }
    header.update(extra or {})
    return write_json(stem.with_suffix(".json"), header)


def load_realization(header_path) -> FieldRealization:
    header_path = Path(header_path)
    h = json.loads(header_path.read_text())
    if h.get("format") != "randweld-realization":
        raise ValueError("not a realization header")
    if h["version"] > FORMAT_VERSION:
        raise ValueError(f"realization format {h['version']} is newer than supported {FORMAT_VERSION}")
    data = header_path.parent / h["block"]
    shape = tuple(h["shape"])
    if data.suffix == ".bin":
        coeffs = np.frombuffer(data.read_bytes(), dtype="<f8").reshape(shape).copy()
    else:
        coeffs = np.loadtxt(data, delimiter=",", ndmin=2).reshape(shape)
    return FieldRealization(
        backend=h["backend"],
        coefficients=coeffs,
        seed=h["seed"],
        replicate=h["replicate"],
        n_modes=h["n_modes"],
        levels=h["levels"],
        n_grid=h["n_grid"],
        scale_ratio=h["scale_ratio"],
        top=h["top"],
        meta=h.get("meta", {}),
    )


# ---------------------------------------------------------------------------
# binary grids


def write_grid(path, chart: str, xs, ys, values, kind: str = "mu", extra: dict | None = None) -> Path:
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    values = np.asarray(values, dtype=complex)
    if values.shape != (ys.size, xs.size):
        raise ValueError("values must have shape (len(ys), len(xs))")
    header = {
        "version": GRID_VERSION,
        "chart": chart,
        "kind": kind,
        "dims": [int(ys.size), int(xs.size)],
        "dx": float(xs[1] - xs[0]) if xs.size > 1 else 0.0,
        "dy": float(ys[1] - ys[0]) if ys.size > 1 else 0.0,
        "x0": float(xs[0]),
        "y0": float(ys[0]),
    }
    if extra:
        header.update(_jsonable(extra))
    text = json.dumps(header, sort_keys=True).encode()
    payload = np.ascontiguousarray(values, dtype="<c16").tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(GRID_MAGIC + struct.pack("<I", len(text)) + text + payload)
    return path


def read_grid(path):
    """Returns ``(header, xs, ys, values)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != GRID_MAGIC:
        raise ValueError("bad grid magic")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12 : 12 + n])
    if header["version"] > GRID_VERSION:
        raise ValueError("grid format version not supported")
    ny, nx = header["dims"]
    vals = np.frombuffer(raw[12 + n :], dtype="<c16")
    if vals.size != ny * nx:
        raise ValueError("grid payload size does not match header dims")
    xs = header["x0"] + header["dx"] * np.arange(nx)
    ys = header["y0"] + header["dy"] * np.arange(ny)
    return header, xs, ys, vals.reshape(ny, nx).copy()


def save_dilatation(mu: DilatationField, path) -> Path:
    return write_grid(path, mu.chart, mu.xs, mu.ys, mu.mu, kind="mu", extra={"provenance": mu.provenance})


def load_dilatation(path) -> DilatationField:
    header, xs, ys, vals = read_grid(path)
    if header["kind"] != "mu":
        raise ValueError("grid does not hold a dilatation")
    return DilatationField(header["chart"], xs, ys, vals, header.get("provenance", "file"))


# ---------------------------------------------------------------------------
# CSV


def write_csv(path, columns: dict, comment: str | None = None) -> Path:
    """Numeric CSV with a column-name row; ``comment`` becomes a leading ``# ...`` line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    names = list(columns)
    data = np.column_stack([np.asarray(columns[k], float) for k in names])
    header = ",".join(names)
    if comment:
        header = f"# {comment}\n{header}"
    np.savetxt(path, data, delimiter=",", header=header, comments="", fmt="%.17g")
    return path


def read_csv(path) -> dict:
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    names = lines[0].split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return {k: data[:, i] for i, k in enumerate(names)}


def grid_csv(path, xs, ys, values, comment: str | None = None) -> Path:
    X, Y = np.meshgrid(xs, ys)
    v = np.asarray(values, complex)
    return write_csv(path, {"x": X.ravel(), "y": Y.ravel(), "re": v.real.ravel(), "im": v.imag.ravel()}, comment)


def curve_csv(path, theta, points, comment: str | None = None) -> Path:
    p = np.asarray(points, complex)
    return write_csv(path, {"theta": theta, "re": p.real, "im": p.imag}, comment)


def knots_csv(path, knots, values, comment: str | None = None) -> Path:
    return write_csv(path, {"knot": knots, "value": values}, comment)


# ---------------------------------------------------------------------------
# results


def results_record(estimate, stderr, reps, seed, config: dict, **extra) -> dict:
    rec = {
        "schema_version": RESULTS_SCHEMA_VERSION,
        "estimate": estimate,
        "stderr": stderr,
        "reps": reps,
        "seed": seed,
        "config": config,
        "config_hash": config_hash(config),
    }
    rec.update(extra)
    return _jsonable(rec)
