"""File formats: binary cube files, canonical JSON, and run configuration.

Cube file layout (little-endian): magic ``HYPC`` (4 bytes), version u16 (=1),
rows/cols/bands u32, then rows*cols*bands float64 values in band-major order
(all of band 1, then band 2, ...), pixels in row-major grid order.

JSON output uses a canonical writer (sorted keys, floats at 17 significant
digits) so identical inputs yield byte-identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import fields
from typing import Tuple

import numpy as np

from .core import HsiCube, OutlierDensity
from .errors import ConfigError, DataError

_MAGIC = b"HYPC"
_VERSION = 1
_HEADER = struct.Struct("<4sHIII")


# ---------------------------------------------------------------------------
# cube files
# ---------------------------------------------------------------------------

def write_cube(cube: HsiCube, path) -> None:
    payload = np.ascontiguousarray(cube.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, cube.rows, cube.cols, cube.bands))
        fh.write(payload.tobytes())


def read_cube(path) -> HsiCube:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise DataError(f"truncated cube header at byte offset {len(header)}")
        magic, version, rows, cols, bands = _HEADER.unpack(header)
        if magic != _MAGIC:
            raise DataError("bad cube magic at byte offset 0")
        if version != _VERSION:
            raise DataError(f"unsupported cube version {version} at byte offset 4")
        count = rows * cols * bands
        if count > 2 ** 40:
            raise DataError(f"cube size overflow in header at byte offset 6")
        payload = fh.read(count * 8)
        if len(payload) < count * 8:
            raise DataError(
                f"truncated cube payload at byte offset {_HEADER.size + len(payload)}"
                f" (expected {count * 8} payload bytes)")
        if fh.read(1):
            raise DataError(
                f"trailing data after cube payload at byte offset"
                f" {_HEADER.size + count * 8}")
    values = np.frombuffer(payload, dtype="<f8").reshape(bands, rows * cols)
    return HsiCube(rows=rows, cols=cols, bands=bands, values=values.copy())


# ---------------------------------------------------------------------------
# canonical JSON
# ---------------------------------------------------------------------------

def _canonical(obj) -> str:
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if v != v or v in (float("inf"), float("-inf")):
            raise ValueError("non-finite float in JSON output")
        return "%.17g" % v
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=True)
    if isinstance(obj, np.ndarray):
        return _canonical(obj.tolist())
    if isinstance(obj, (list, tuple)):
        return "[" + ",".join(_canonical(v) for v in obj) + "]"
    if isinstance(obj, dict):
        items = sorted(obj.items())
        return "{" + ",".join(
            json.dumps(str(k), ensure_ascii=True) + ":" + _canonical(v)
            for k, v in items) + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_canonical(obj) -> str:
    """Deterministic JSON: sorted keys, 17-significant-digit floats."""
    return _canonical(obj) + "\n"


def write_json(obj, path) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_canonical(obj))


def read_json(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"invalid JSON in {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------

def _dataclass_keys(cls):
    return {f.name for f in fields(cls)}


def load_config(path) -> dict:
    """Load a flat JSON run configuration, rejecting unknown keys."""
    from .apg import ApgConfig
    from .engine import EngineConfig, InitSpec
    from .synth import SynthConfig

    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be a JSON object")
    allowed = (_dataclass_keys(EngineConfig) | _dataclass_keys(SynthConfig))
    unknown = set(doc) - allowed
    if unknown:
        raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
    return doc


def engine_config_from(doc: dict):
    """Build an EngineConfig from a (validated) configuration document."""
    from .apg import ApgConfig
    from .engine import EngineConfig, InitSpec

    keys = _dataclass_keys(EngineConfig)
    kwargs = {k: v for k, v in doc.items() if k in keys}
    if "prior_family" not in kwargs or "n_endmembers" not in kwargs:
        raise ConfigError("configuration requires prior_family and n_endmembers")
    try:
        if isinstance(kwargs.get("apg"), dict):
            kwargs["apg"] = ApgConfig(**kwargs["apg"])
        if isinstance(kwargs.get("outlier"), dict):
            kwargs["outlier"] = OutlierDensity(**kwargs["outlier"])
        if isinstance(kwargs.get("init"), dict):
            init = dict(kwargs["init"])
            if init.get("endmembers") is not None:
                init["endmembers"] = np.asarray(init["endmembers"], dtype=float)
            kwargs["init"] = InitSpec(**init)
        return EngineConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid engine configuration: {exc}") from exc


def synth_config_from(doc: dict):
    """Build a SynthConfig from a (validated) configuration document."""
    from .synth import SynthConfig

    keys = _dataclass_keys(SynthConfig)
    kwargs = {k: v for k, v in doc.items() if k in keys}
    for pair_key in ("outlier_range", "ev_scale_range"):
        if pair_key in kwargs:
            kwargs[pair_key] = tuple(kwargs[pair_key])
    if kwargs.get("base_endmembers") is not None:
        kwargs["base_endmembers"] = np.asarray(kwargs["base_endmembers"], dtype=float)
    if isinstance(kwargs.get("snr_db"), str):
        if kwargs["snr_db"].lower() not in ("inf", "infinity"):
            raise ConfigError(f"invalid snr_db: {kwargs['snr_db']}")
        kwargs["snr_db"] = float("inf")
    try:
        return SynthConfig(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid synthesis configuration: {exc}") from exc


# ---------------------------------------------------------------------------
# result/truth documents
# ---------------------------------------------------------------------------

def result_to_dict(result) -> dict:
    model = result.model
    prior = {
        "family": model.prior.family,
        "first": None if model.prior.first is None else model.prior.first,
        "second": None if model.prior.second is None else model.prior.second,
    }
    return {
        "endmembers": result.endmembers,
        "abundances": result.abundances,
        "outlier_scores": result.outlier_scores,
        "elbo_trace": result.elbo_trace,
        "iterations": int(result.iterations),
        "grid": {
            "rows": int(result.grid.rows),
            "cols": int(result.grid.cols),
            "patch_rows": int(result.grid.patch_rows),
            "patch_cols": int(result.grid.patch_cols),
        },
        "model": {
            "prior": prior,
            "noise_var": float(model.noise_var),
            "outlier_rate": float(model.outlier_rate),
            "outlier_density": {
                "mean": float(model.outlier_density.mean),
                "variance": float(model.outlier_density.variance),
            },
        },
    }


def truth_to_dict(truth) -> dict:
    return {
        "abundances": truth.abundances,
        "outlier_mask": [bool(v) for v in truth.outlier_mask],
        "noise_var": float(truth.noise_var),
        "per_pixel_endmembers": truth.per_pixel_endmembers,
        "rows": int(truth.cube.rows),
        "cols": int(truth.cube.cols),
    }


def write_endmember_csv(endmembers: np.ndarray, path) -> None:
    """Plot-ready CSV: header ``band,em1,...,emN``, one row per band."""
    endmembers = np.asarray(endmembers, dtype=float)
    n = endmembers.shape[1]
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("band," + ",".join(f"em{j + 1}" for j in range(n)) + "\n")
        for b in range(endmembers.shape[0]):
            fh.write(str(b) + ","
                     + ",".join("%.17g" % v for v in endmembers[b]) + "\n")
