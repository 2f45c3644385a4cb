"""Self-describing binary container for snapshots, models and run records.

Layout (all integers little-endian):

    magic "DDET" | version u32 | kind (16 bytes, NUL-padded ascii)
    | descriptor length u32 | descriptor JSON (utf-8)
    | array count u32
    | per array: name length u32, name utf-8, rows u64, cols u64,
      rows*cols float64 payload (C order, little-endian)

Writers go through a temporary file and an atomic rename.  Complex arrays
are stored as two float64 arrays with ":re" / ":im" name suffixes.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DDET"
VERSION = 1
KINDS = ("snapshot-set", "pod-model", "dmd-model", "run-record", "results")

_U32 = struct.Struct("<I")
_DIMS = struct.Struct("<QQ")


class FormatError(ValueError):
    """Corrupt or incompatible container file."""


def write_container(path, kind: str, descriptor: dict, arrays: dict) -> None:
    """Write named float64 arrays with a JSON descriptor, atomically."""
    if kind not in KINDS:
        raise ValueError(f"unknown container kind '{kind}'")
    path = Path(path)
    desc = json.dumps(descriptor, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U32.pack(VERSION))
        fh.write(kind.encode("ascii").ljust(16, b"\0"))
        fh.write(_U32.pack(len(desc)))
        fh.write(desc)
        fh.write(_U32.pack(len(arrays)))
        for name, arr in arrays.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            if arr.ndim == 1:
                arr = arr[None, :]
            if arr.ndim != 2:
                raise ValueError(f"array '{name}' must be 1-D or 2-D")
            encoded = name.encode("utf-8")
            fh.write(_U32.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_DIMS.pack(arr.shape[0], arr.shape[1]))
            fh.write(arr.tobytes())
    os.replace(tmp, path)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise FormatError(f"truncated container while reading {what}")
    return buf


def read_container(path):
    """Read (kind, descriptor, arrays) back; validates sizes exactly."""
    path = Path(path)
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise FormatError(f"{path}: bad magic bytes")
        version = _U32.unpack(_read_exact(fh, 4, "version"))[0]
        if version != VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        kind = _read_exact(fh, 16, "kind").rstrip(b"\0").decode("ascii")
        if kind not in KINDS:
            raise FormatError(f"{path}: unknown payload kind '{kind}'")
        desc_len = _U32.unpack(_read_exact(fh, 4, "descriptor length"))[0]
        try:
            descriptor = json.loads(_read_exact(fh, desc_len, "descriptor"))
        except json.JSONDecodeError as err:
            raise FormatError(f"{path}: bad descriptor JSON: {err}") from err
        count = _U32.unpack(_read_exact(fh, 4, "array count"))[0]
        arrays = {}
        for _ in range(count):
            nlen = _U32.unpack(_read_exact(fh, 4, "name length"))[0]
            name = _read_exact(fh, nlen, "name").decode("utf-8")
            rows, cols = _DIMS.unpack(_read_exact(fh, 16, "dims"))
            payload = _read_exact(fh, rows * cols * 8, f"payload of '{name}'")
            arrays[name] = np.frombuffer(payload, dtype="<f8").reshape(rows, cols).copy()
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after declared payload")
    return kind, descriptor, arrays


# ---------------------------------------------------------------------------
# typed save/load helpers
# ---------------------------------------------------------------------------

def save_snapshot_set(path, matrices: dict, config_meta: dict) -> None:
    from .drivers import SNAPSHOT_NAMES
    first = matrices[SNAPSHOT_NAMES[0]]
    descriptor = {
        "config": config_meta,
        "layouts": {k: matrices[k].layout for k in SNAPSHOT_NAMES},
        "t0": first.t0, "dt": first.dt, "n_steps": first.n_steps,
        "uniform": first.uniform,
    }
    write_container(path, "snapshot-set", descriptor,
                    {k: matrices[k].data for k in SNAPSHOT_NAMES})


def load_snapshot_set(path):
    from .drivers import SNAPSHOT_NAMES
    from .lowrank import SnapshotMatrix
    kind, desc, arrays = read_container(path)
    if kind != "snapshot-set":
        raise FormatError(f"{path}: expected snapshot-set, found {kind}")
    out = {}
    for name in SNAPSHOT_NAMES:
        if name not in arrays:
            raise FormatError(f"{path}: snapshot matrix '{name}' missing")
        out[name] = SnapshotMatrix(name, arrays[name], desc["layouts"][name],
                                   t0=desc["t0"], dt=desc["dt"],
                                   uniform=desc.get("uniform", True))
    return out, desc.get("config", {})


def save_model(path, model) -> None:
    from .lowrank import DmdModel, PodModel
    if isinstance(model, PodModel):
        descriptor = {
            "model": "pod", "name": model.name, "layout": model.layout,
            "xi_rel": model.xi_rel, "rank": model.rank,
            "t0": model.t0, "dt": model.dt,
        }
        arrays = {
            "mean": model.mean, "modes": model.modes,
            "coefficients": model.coefficients,
            "singular_values": model.singular_values,
        }
        write_container(path, "pod-model", descriptor, arrays)
        return
    if isinstance(model, DmdModel):
        descriptor = {
            "model": "dmd", "name": model.name, "layout": model.layout,
            "xi_rel": model.xi_rel, "rank": model.rank, "variant": model.variant,
            "n_steps": model.n_steps, "t0": model.t0, "dt": model.dt,
            "has_equilibrium": model.equilibrium is not None,
        }
        arrays = {
            "modes:re": model.modes.real, "modes:im": model.modes.imag,
            "eigenvalues:re": model.eigenvalues.real,
            "eigenvalues:im": model.eigenvalues.imag,
            "amplitudes:re": model.amplitudes.real,
            "amplitudes:im": model.amplitudes.imag,
            "singular_values": model.singular_values,
        }
        if model.equilibrium is not None:
            arrays["equilibrium"] = model.equilibrium
        write_container(path, "dmd-model", descriptor, arrays)
        return
    raise TypeError(f"unsupported model type {type(model)!r}")


def load_model(path):
    from .lowrank import DmdModel, PodModel
    kind, desc, arrays = read_container(path)
    if kind == "pod-model":
        return PodModel(
            name=desc["name"], mean=arrays["mean"][0],
            modes=arrays["modes"], coefficients=arrays["coefficients"],
            singular_values=arrays["singular_values"][0],
            xi_rel=desc["xi_rel"], layout=desc["layout"],
            t0=desc["t0"], dt=desc["dt"],
        )
    if kind == "dmd-model":
        eq = arrays["equilibrium"][0] if desc.get("has_equilibrium") else None
        return DmdModel(
            name=desc["name"],
            modes=arrays["modes:re"] + 1j * arrays["modes:im"],
            eigenvalues=(arrays["eigenvalues:re"] + 1j * arrays["eigenvalues:im"])[0],
            amplitudes=(arrays["amplitudes:re"] + 1j * arrays["amplitudes:im"])[0],
            variant=desc["variant"], equilibrium=eq,
            singular_values=arrays["singular_values"][0],
            xi_rel=desc["xi_rel"], n_steps=desc["n_steps"],
            layout=desc["layout"], t0=desc["t0"], dt=desc["dt"],
        )
    raise FormatError(f"{path}: expected a model container, found {kind}")


def save_run_record(path, run) -> None:
    descriptor = {
        "mode": run.mode, "config": run.config_meta,
        "t0": run.time.t0, "dt": run.time.dt, "n_steps": run.time.n_steps,
    }
    nt = run.time.n_steps
    arrays = {
        "temperature": run.temperature.reshape(nt, -1),
        "e_cell": run.e_cell.reshape(nt, -1),
        "e_vface": run.e_vface.reshape(nt, -1),
        "e_hface": run.e_hface.reshape(nt, -1),
        "f_vface": run.f_vface.reshape(nt, -1),
        "f_hface": run.f_hface.reshape(nt, -1),
        "iterations": run.iterations.astype(float),
        "final_change": run.final_change,
        "negative_corners": run.negative_corners.astype(float),
        "closure_violations": run.closure_violations.astype(float),
    }
    write_container(path, "run-record", descriptor, arrays)


def load_run_record(path):
    from .config import RunConfig
    from .drivers import RunRecord, TimeGrid
    kind, desc, arrays = read_container(path)
    if kind != "run-record":
        raise FormatError(f"{path}: expected run-record, found {kind}")
    cfg = RunConfig.from_dict(desc["config"])
    nt, ny, nx = desc["n_steps"], cfg.ny, cfg.nx
    return RunRecord(
        time=TimeGrid(desc["t0"], desc["dt"], nt), mode=desc["mode"],
        config_meta=desc["config"],
        temperature=arrays["temperature"].reshape(nt, ny, nx),
        e_cell=arrays["e_cell"].reshape(nt, ny, nx),
        e_vface=arrays["e_vface"].reshape(nt, ny, nx + 1),
        e_hface=arrays["e_hface"].reshape(nt, ny + 1, nx),
        f_vface=arrays["f_vface"].reshape(nt, ny, nx + 1),
        f_hface=arrays["f_hface"].reshape(nt, ny + 1, nx),
        iterations=arrays["iterations"][0].astype(int),
        final_change=arrays["final_change"][0],
        negative_corners=arrays["negative_corners"][0].astype(int),
        closure_violations=arrays["closure_violations"][0].astype(int),
    )


def save_error_fields(path, field_maps: dict, config_meta: dict) -> None:
    """Cell-wise error maps keyed by step, as a results container."""
    descriptor = {"config": config_meta, "steps": sorted(field_maps)}
    arrays = {}
    for step, maps in field_maps.items():
        for field_name, arr in maps.items():
            arrays[f"{field_name}:{step}"] = arr
    write_container(path, "results", descriptor, arrays)
