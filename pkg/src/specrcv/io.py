"""File formats: headered CSV for data, JSON for spectra and manifests.

Every CSV starts with one ``#`` metadata line of ``key=value`` pairs followed
by a column header row. Floats are written with ``repr`` so values round-trip
bit-exactly through text; together with fixed newlines this makes outputs
byte-identical across re-runs of the same configuration.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .covmodel import SpectralDistribution
from .diffusion import IncrementMatrix, ObservationGrid
from .errors import BadConfigError
from .mpsolve import PopulationSpectrum
from .spectra import DensityCurve


def format_float(x: float) -> str:
    """Shortest decimal string that parses back to the same IEEE double."""
    return repr(float(x))


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _meta_line(meta: dict) -> str:
    parts = []
    for key, val in meta.items():
        if isinstance(val, float):
            text = format_float(val)
        else:
            text = str(val)
        if "," in text or "=" in text or "\n" in text:
            raise ValueError(f"metadata value for {key!r} not representable: {text!r}")
        parts.append(f"{key}={text}")
    return "# " + ",".join(parts)


def _parse_meta(line: str, path) -> dict:
    if not line.startswith("#"):
        raise BadConfigError(f"{path}: missing metadata line")
    meta = {}
    body = line[1:].strip()
    if body:
        for part in body.split(","):
            key, _, val = part.partition("=")
            meta[key.strip()] = val
    return meta


def _format_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format_float(v)


def _write_table(path, meta: dict, header: list[str], rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(_meta_line(meta) + "\n")
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_format_cell(v) for v in row) + "\n")


def _read_table(path):
    with open(path, "r", encoding="utf-8") as handle:
        meta = _parse_meta(handle.readline().rstrip("\n"), path)
        header = handle.readline().rstrip("\n").split(",")
        body = handle.read()
    if body.strip():
        data = np.array(
            [[float(v) for v in line.split(",")] for line in body.splitlines() if line],
            dtype=float,
        )
    else:
        data = np.empty((0, len(header)))
    return meta, header, data


# ---------------------------------------------------------------------------
# increments


def write_increments_csv(path, incr: IncrementMatrix) -> None:
    """One row per interval: right endpoint tau, then the p increment entries."""
    n, p = incr.increments.shape
    meta = {"kind": "increments", "p": p, "n": n, "digest": incr.spec_digest}
    header = ["tau"] + [f"x{j + 1}" for j in range(p)]
    taus = incr.grid.times[1:]
    rows = np.column_stack([taus, incr.increments])
    _write_table(path, meta, header, rows)


def read_increments_csv(path) -> IncrementMatrix:
    meta, header, data = _read_table(path)
    if meta.get("kind") != "increments" or not header or header[0] != "tau":
        raise BadConfigError(f"{path}: not an increments file")
    if data.shape[0] == 0 or data.shape[1] < 2:
        raise BadConfigError(f"{path}: no increment rows")
    grid = ObservationGrid(np.concatenate([[0.0], data[:, 0]]))
    return IncrementMatrix(data[:, 1:], grid, spec_digest=meta.get("digest", ""))


# ---------------------------------------------------------------------------
# eigenvalues


def write_eigenvalues_csv(path, dist: SpectralDistribution, meta: dict) -> None:
    full = {"kind": "eigenvalues", **meta, "p": dist.dim}
    rows = dist.eigenvalues[:, None]
    _write_table(path, full, ["eigenvalue"], rows)


def read_eigenvalues_csv(path):
    meta, header, data = _read_table(path)
    if meta.get("kind") != "eigenvalues" or header != ["eigenvalue"]:
        raise BadConfigError(f"{path}: not an eigenvalue file")
    if data.shape[0] == 0:
        raise BadConfigError(f"{path}: no eigenvalues")
    return SpectralDistribution(data[:, 0]), meta


# ---------------------------------------------------------------------------
# densities


def write_density_csv(path, curve: DensityCurve, meta: dict) -> None:
    full = {"kind": "density", **meta, "mass_at_zero": float(curve.mass_at_zero)}
    rows = np.column_stack([curve.xs, curve.ys])
    _write_table(path, full, ["x", "density"], rows)


def read_density_csv(path):
    meta, header, data = _read_table(path)
    if meta.get("kind") != "density" or header != ["x", "density"]:
        raise BadConfigError(f"{path}: not a density file")
    if data.shape[0] < 2:
        raise BadConfigError(f"{path}: need at least two density rows")
    mass0 = float(meta.get("mass_at_zero", "0.0"))
    return DensityCurve(data[:, 0], data[:, 1], mass_at_zero=mass0), meta


# ---------------------------------------------------------------------------
# solver traces and objective traces


def write_solver_trace_csv(path, zs, values, residuals, iterations, meta: dict) -> None:
    zs = np.asarray(zs, dtype=complex).ravel()
    values = np.asarray(values, dtype=complex).ravel()
    res = np.asarray(residuals, dtype=float).ravel()
    iters = np.asarray(iterations, dtype=int).ravel()
    full = {"kind": "solver_trace", **meta}
    header = ["re_z", "im_z", "re_m", "im_m", "residual", "iterations"]
    rows = [
        (z.real, z.imag, m.real, m.imag, r, int(k))
        for z, m, r, k in zip(zs, values, res, iters)
    ]
    _write_table(path, full, header, rows)


def write_objective_csv(path, trace, meta: dict) -> None:
    trace = np.asarray(trace, dtype=float).ravel()
    full = {"kind": "objective_trace", **meta}
    rows = list(enumerate(trace.tolist()))
    _write_table(path, full, ["iteration", "objective"], rows)


# ---------------------------------------------------------------------------
# spectra (JSON)


def write_spectrum_json(path, spectrum: PopulationSpectrum, extra: dict | None = None) -> None:
    payload = dict(extra or {})
    payload["atoms"] = [
        {"location": float(loc), "weight": float(wt)}
        for loc, wt in zip(spectrum.locations, spectrum.weights)
    ]
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_spectrum_json(path) -> PopulationSpectrum:
    with open(path, "r", encoding="utf-8") as handle:
        payload = json.load(handle)
    atoms = payload.get("atoms")
    if not atoms:
        raise BadConfigError(f"{path}: no atoms in spectrum file")
    locs = np.array([a["location"] for a in atoms], dtype=float)
    wts = np.array([a["weight"] for a in atoms], dtype=float)
    return PopulationSpectrum(locs, wts)


# ---------------------------------------------------------------------------
# manifests


def write_manifest(path, manifest: dict) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise BadConfigError(f"manifest not found: {path}")
    with open(path, "r", encoding="utf-8") as handle:
        manifest = json.load(handle)
    if "command" not in manifest or "config" not in manifest:
        raise BadConfigError(f"{path}: not a run manifest")
    return manifest
