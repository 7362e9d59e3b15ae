"""Plain-text persistence: matrices, row tables, traces and key=value configs.

Matrix files are comma-separated, row-major, with a ``# rows cols`` header
line and 17 significant digits so values round-trip exactly.
"""
from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path

import numpy as np

from .core import ConfigError, GroundTruth, RealizationSet

FMT = "%.17g"


def write_matrix(path, A):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    np.savetxt(path, A, fmt=FMT, delimiter=",", header=f"{A.shape[0]} {A.shape[1]}", comments="# ")


def read_matrix(path):
    with open(path) as fh:
        header = fh.readline()
    if not header.startswith("#"):
        raise ConfigError(f"{path}: missing '# rows cols' header")
    rows, cols = (int(x) for x in header[1:].split())
    A = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if A.size == 0:
        A = A.reshape(rows, cols)
    if A.shape != (rows, cols):
        raise ConfigError(f"{path}: header says {rows}x{cols}, found {A.shape}")
    return A


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FMT % v
    return str(v)


def write_rows(path, rows, fields=None):
    """Write a list of dataclass rows (or tuples with ``fields``) as CSV."""
    rows = list(rows)
    if fields is None:
        if not rows:
            raise ValueError("fields are required for an empty table")
        fields = [f.name for f in dataclasses.fields(rows[0])]
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(fields) + "\n")
        for r in rows:
            vals = dataclasses.astuple(r) if dataclasses.is_dataclass(r) else tuple(r)
            fh.write(",".join(_fmt(v) for v in vals) + "\n")


def read_rows(path):
    """Read a CSV written by :func:`write_rows` into a list of dicts of strings."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    keys = lines[0].split(",")
    return [dict(zip(keys, line.split(","))) for line in lines[1:] if line]


def write_trace(path, trace):
    write_rows(path, [(p.iter, p.C, p.L, p.I) for p in trace], fields=["iter", "C", "L", "I"])


def _jsonable(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = str(v)
        elif isinstance(v, np.generic):
            v = v.item()
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def write_bundle(directory, data: RealizationSet, truth: GroundTruth | None = None, spec=None):
    """One CSV per matrix plus ``manifest.json`` listing files and spec fields."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = {"Y": []}
    for s in range(data.S):
        name = f"Y_{s:05d}.csv"
        write_matrix(d / name, data.data[s])
        files["Y"].append(name)
    if truth is not None:
        for key in ("phi_bar", "w_bar", "h_bar"):
            write_matrix(d / f"{key}.csv", getattr(truth, key))
            files[key] = f"{key}.csv"
        files["sigmas_true"] = []
        for n, sig in enumerate(truth.sigmas_true):
            name = f"sigma_{n:05d}.csv"
            write_matrix(d / name, sig)
            files["sigmas_true"].append(name)
    spec_fields = dataclasses.asdict(spec) if dataclasses.is_dataclass(spec) else dict(data.meta)
    manifest = {"S": data.S, "M": data.M, "N": data.N, "files": files, "spec": _jsonable(spec_fields)}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return d / "manifest.json"


def read_bundle(directory):
    """Inverse of :func:`write_bundle`; returns ``(data, truth_or_None)``."""
    d = Path(directory)
    try:
        manifest = json.loads((d / "manifest.json").read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"no manifest.json in {d}") from exc
    files = manifest["files"]
    Y = np.stack([read_matrix(d / f) for f in files["Y"]])
    data = RealizationSet(Y, meta=manifest.get("spec", {}))
    truth = None
    if "phi_bar" in files:
        truth = GroundTruth(
            phi_bar=read_matrix(d / files["phi_bar"]),
            w_bar=read_matrix(d / files["w_bar"]),
            h_bar=read_matrix(d / files["h_bar"]),
            sigmas_true=np.stack([read_matrix(d / f) for f in files["sigmas_true"]]),
        )
    return data, truth


def write_result(directory, result, prefix=""):
    """Matrices of a SolveResult plus its trace."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_matrix(d / f"{prefix}phi.csv", result.phi)
    write_matrix(d / f"{prefix}W.csv", result.factors.W)
    write_matrix(d / f"{prefix}H.csv", result.factors.H)
    write_trace(d / f"{prefix}trace.csv", result.trace)


def _coerce(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if "," in text:
        return tuple(_coerce(x.strip()) for x in text.split(",") if x.strip())
    return text


def parse_config_text(text):
    """Flat ``key = value`` lines; ``#`` starts a comment. Values become int,
    float, tuple (comma lists) or str."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if not key:
            raise ConfigError(f"config line {lineno}: empty key")
        out[key] = _coerce(value)
    return out


def parse_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)
