"""Plain-text writers: CSV, PGM and JSON with 17-significant-digit numbers."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return FLOAT_FMT % float(v)


def _jsonable(v):
    """Convert numbers to JSON-safe values; non-finite floats become strings."""
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (complex, np.complexfloating)):
        return {"re": _jsonable(v.real), "im": _jsonable(v.imag)}
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isfinite(f):
            return float(FLOAT_FMT % f)
        return "nan" if math.isnan(f) else ("inf" if f > 0 else "-inf")
    return v


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(dumps(obj))
    return path


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return path


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sha256_json(obj) -> str:
    return hashlib.sha256(json.dumps(_jsonable(obj), sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------------------


def write_raster_csv(path, raster) -> Path:
    """One row per cell, imaginary axis outer, real axis inner."""
    re, im, vals, mask = raster.re, raster.im, raster.values, raster.stable_mask
    rows = (
        (re[j], im[i], vals[i, j], mask[i, j]) for i in range(raster.ny) for j in range(raster.nx)
    )
    return write_csv(path, ["re", "im", "rho", "stable"], rows)


def write_raster_pgm(path, raster) -> Path:
    """Binary PGM: stable cells white, top row = largest imaginary part."""
    img = np.where(raster.stable_mask, 255, 0).astype(np.uint8)[::-1]
    path = Path(path)
    header = f"P5\n{raster.nx} {raster.ny}\n255\n".encode()
    path.write_bytes(header + img.tobytes())
    return path


def write_trajectory_csv(path, result) -> Path:
    nu, mu = result.X.shape[0], result.Y.shape[0]
    header = ["t"] + [f"x{i + 1}" for i in range(nu)] + [f"y{i + 1}" for i in range(mu)]
    data = np.vstack([result.t[None, :], result.X, result.Y]).T
    return write_csv(path, header, data)


def write_spectrum_csv(path, spectrum) -> Path:
    from .pencil import damping_ratio

    rows = (
        (s.real, s.imag, damping_ratio(s), spectrum.domain, r)
        for s, r in zip(spectrum.roots, spectrum.residuals)
    )
    return write_csv(path, ["re", "im", "damping", "domain", "residual"], rows)


def write_pairs_csv(path, report) -> Path:
    header = ["re_exact", "im_exact", "re_deformed", "im_deformed", "zeta", "zeta_hat",
              "distance", "frequency_drift", "damping_drift"]
    rows = (
        (p.exact.real, p.exact.imag, p.deformed.real, p.deformed.imag, p.zeta, p.zeta_hat,
         p.distance, p.frequency_drift, p.damping_drift)
        for p in report.pairs
    )
    return write_csv(path, header, rows)
