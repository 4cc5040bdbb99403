"""Persistence: particle snapshots, grid-density files, CSV writers, and
the run manifest.

Grid densities are stored as raw little-endian float64 in row-major order
next to a JSON sidecar carrying (L, M, gamma); particle snapshots are a
raw velocity block plus a sidecar with the seed lineage.  Both round-trip
exactly.  Every emitted file is listed in the manifest with a checksum.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .grid import GridDensity, VelocityGrid
from .particles import ParticleState

__all__ = [
    "write_grid_density",
    "read_grid_density",
    "write_snapshot",
    "read_snapshot",
    "write_csv",
    "RunManifest",
]

CSV_SCHEMAS = {
    "conservation": ["t", "replica", "px", "py", "pz", "energy"],
    "pde_diagnostics": ["t", "mass", "px", "py", "pz", "energy", "entropy",
                        "fisher", "clipped_mass"],
    "chaos": ["N", "R", "k", "t", "phi_label", "u_stat_mean", "reference",
              "gap", "stderr", "w2"],
    "inequalities": ["functional", "parameters", "value", "stderr", "margin"],
}


def write_grid_density(path: str, f: GridDensity, gamma: float):
    """Binary values + textual sidecar; lossless round trip."""
    data = np.ascontiguousarray(f.values, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {
        "format": "landaulab.grid_density.v1",
        "half_width": f.grid.half_width,
        "points_per_axis": f.grid.points_per_axis,
        "gamma": gamma,
        "order": "row-major",
        "dtype": "<f8",
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def read_grid_density(path: str):
    """Returns (GridDensity, gamma)."""
    with open(path + ".json") as fh:
        meta = json.load(fh)
    m = int(meta["points_per_axis"])
    vals = np.fromfile(path, dtype="<f8").reshape((m, m, m))
    grid = VelocityGrid(float(meta["half_width"]), m)
    return GridDensity(grid, vals), float(meta["gamma"])


def write_snapshot(path: str, state: ParticleState, gamma: float,
                   epsilon: float, seed_lineage):
    data = np.ascontiguousarray(state.velocities, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(data.tobytes())
    sidecar = {
        "format": "landaulab.snapshot.v1",
        "n": state.n,
        "gamma": gamma,
        "epsilon": epsilon,
        "time": state.time,
        "step_index": state.step_index,
        "seed_lineage": list(seed_lineage),
        "dtype": "<f8",
    }
    with open(path + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=2)


def read_snapshot(path: str):
    """Returns (ParticleState, sidecar dict)."""
    with open(path + ".json") as fh:
        meta = json.load(fh)
    v = np.fromfile(path, dtype="<f8").reshape((int(meta["n"]), 3))
    state = ParticleState(velocities=v, time=float(meta["time"]),
                          step_index=int(meta["step_index"]))
    return state, meta


def write_csv(path: str, schema: str, rows):
    header = CSV_SCHEMAS[schema]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k)) for k in header})


def _fmt(x):
    if isinstance(x, float):
        return repr(x)  # full precision, reproducible
    return x


def _checksum(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    code_version: str = __version__
    started: float = field(default_factory=time.time)
    wall_time: float = 0.0
    files: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    schemas_version: str = "1"

    def add_file(self, path: str):
        self.files[os.path.basename(path)] = _checksum(path)

    def add_failure(self, message: str):
        self.failures.append(message)

    def finish(self, directory: str):
        self.wall_time = time.time() - self.started
        out = os.path.join(directory, "manifest.json")
        with open(out, "w") as fh:
            json.dump(asdict(self), fh, indent=2)
        return out
