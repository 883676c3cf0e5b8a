"""CSV sink, binary checkpoints, and summary persistence.

CSV: fixed header, decimals with 17 significant digits (full float64
round-trip, so resumed accumulators are bit-exact).  Checkpoint layout:
magic ``DGMC``, version u32, dim u32, n u32, eps f64, t f64, then n^dim
f64 cell values, all little-endian.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct

import numpy as np

from ..allen_cahn import DiffuseState
from ..errors import ConfigurationError
from ..grid import GridSpec, ScalarField

CSV_HEADER = "t,E_eps,mass,dissipV,dissipVac,dissipH,discL1,discMax,volume,dgSlack,ediRes,Erel,Ebulk,tilt,rhoDefect"

_MAGIC = b"DGMC"
_CKPT_VERSION = 1
_HDR = struct.Struct("<4sIIIdd")


def fmt(x: float) -> str:
    return f"{float(x):.17g}"


class CsvSink:
    """Append-only CSV writer with the fixed diagnostics header."""

    def __init__(self, path: str, preamble_rows: list | None = None):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(CSV_HEADER + "\n")
        for row in preamble_rows or []:
            self._fh.write(row.rstrip("\n") + "\n")

    def write_row(self, values):
        self._fh.write(",".join(fmt(v) for v in values) + "\n")

    def close(self):
        self._fh.close()


def read_csv_rows(path: str) -> list:
    """Raw data lines (header stripped); used verbatim on resume."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != CSV_HEADER:
        raise ConfigurationError(f"{path} is not a diagnostics CSV")
    return lines[1:]


def parse_csv_row(row: str) -> dict:
    vals = [float(tok) for tok in row.split(",")]
    keys = CSV_HEADER.split(",")
    if len(vals) != len(keys):
        raise ConfigurationError("malformed CSV row")
    return dict(zip(keys, vals))


def write_checkpoint(path: str, state: DiffuseState):
    with open(path, "wb") as fh:
        fh.write(_HDR.pack(_MAGIC, _CKPT_VERSION, state.spec.dim, state.spec.n, state.eps, state.time))
        fh.write(np.ascontiguousarray(state.u.data, dtype="<f8").tobytes())


def read_checkpoint(path: str, extent: float) -> DiffuseState:
    with open(path, "rb") as fh:
        hdr = fh.read(_HDR.size)
        if len(hdr) != _HDR.size:
            raise ConfigurationError(f"{path}: truncated checkpoint header")
        magic, version, dim, n, eps, t = _HDR.unpack(hdr)
        if magic != _MAGIC:
            raise ConfigurationError(f"{path}: bad checkpoint magic {magic!r}")
        if version != _CKPT_VERSION:
            raise ConfigurationError(f"{path}: unsupported checkpoint version {version}")
        payload = fh.read()
    spec = GridSpec(dim, extent, n)
    count = n**dim
    data = np.frombuffer(payload, dtype="<f8", count=count).reshape(spec.shape).copy()
    return DiffuseState(ScalarField(spec, data), eps, t)


def write_summary(path: str, summary: dict):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_summary(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def content_hash(config_text: str, state0: DiffuseState) -> str:
    h = hashlib.sha256()
    h.update(config_text.encode("utf-8"))
    h.update(np.ascontiguousarray(state0.u.data, dtype="<f8").tobytes())
    return h.hexdigest()


def ensure_dir(path: str):
    os.makedirs(path, exist_ok=True)
