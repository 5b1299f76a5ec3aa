"""Density profiles on a uniform periodic grid over the unit ring.

A profile stores one positive density value per cell, located at the nodes
x_i = i*h with h = 1/N. All index arithmetic is cyclic, so a profile
represents a 1-periodic function. This module provides sampling,
piecewise-linear interpolation, basic statistics, the L2 deviation used by
the decay diagnostics, and the snapshot CSV round trip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

__all__ = [
    "DensityProfile",
    "ProfileStats",
    "sample",
    "interpolate",
    "interpolate_many",
    "stats",
    "l2_deviation",
    "write_snapshot_csv",
    "read_snapshot_csv",
]


@dataclass(frozen=True)
class DensityProfile:
    """N positive cell densities on the uniform ring grid."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1:
            raise ValueError("profile values must be a one-dimensional array")
        if vals.size < 3:
            raise ValueError("profile needs at least 3 cells")
        if not np.all(np.isfinite(vals)):
            raise ValueError("profile values must be finite")
        if np.any(vals <= 0.0):
            raise ValueError("cell densities must be strictly positive")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size

    @property
    def cell_width(self) -> float:
        return 1.0 / self.values.size

    @property
    def nodes(self) -> np.ndarray:
        """Node positions i*h for i = 0..N-1."""
        n = self.values.size
        return np.arange(n) / n


@dataclass(frozen=True)
class ProfileStats:
    """Extremes and mean of a profile. mass equals mean on the unit ring."""

    min: float
    max: float
    mass: float
    mean: float


def sample(ic: Callable[[float], float], n_cells: int) -> DensityProfile:
    """Evaluate an initial condition at the grid nodes i/n_cells."""
    if n_cells < 3:
        raise ValueError("n_cells must be at least 3")
    h = 1.0 / n_cells
    vals = np.array([float(ic(i * h)) for i in range(n_cells)])
    return DensityProfile(vals)


def _interp_core(vals: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = vals.size
    xr = x - np.floor(x)
    pos = xr * n
    i = np.minimum(pos.astype(int), n - 1)
    frac = pos - i
    return vals[i] * (1.0 - frac) + vals[(i + 1) % n] * frac


def interpolate(profile: DensityProfile, x: float) -> float:
    """Piecewise-linear interpolant of the profile at x, 1-periodic.

    On the wrap cell [(N-1)h, 1] the interpolant connects the last node
    value to the first, so node values are reproduced exactly and the
    result is continuous across x = 1.
    """
    out = _interp_core(profile.values, np.asarray([x - math.floor(x)], dtype=float))
    return float(out[0])


def interpolate_many(profile: DensityProfile, x: np.ndarray) -> np.ndarray:
    """Vectorized interpolate for an array of positions."""
    return _interp_core(profile.values, np.asarray(x, dtype=float))


def stats(profile: DensityProfile) -> ProfileStats:
    vals = profile.values
    mass = float(vals.sum() / vals.size)
    return ProfileStats(
        min=float(vals.min()),
        max=float(vals.max()),
        mass=mass,
        mean=mass,
    )


def l2_deviation(profile: DensityProfile, ref_density: float) -> float:
    """Grid L2 norm of (rho - ref): sqrt(h * sum_i (rho_i - ref)^2)."""
    if ref_density <= 0.0:
        raise ValueError("reference density must be positive")
    vals = profile.values
    return float(np.sqrt(np.sum((vals - ref_density) ** 2) / vals.size))


def write_snapshot_csv(
    path: str | Path,
    t: float,
    profile: DensityProfile,
    velocity: np.ndarray,
) -> None:
    """Write one snapshot as rows t,x,rho,v with full float precision."""
    vals = profile.values
    v = np.asarray(velocity, dtype=float)
    if v.shape != vals.shape:
        raise ValueError("velocity array must match the profile size")
    n = vals.size
    lines = ["t,x,rho,v"]
    for i in range(n):
        lines.append(f"{float(t)!r},{(i / n)!r},{float(vals[i])!r},{float(v[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_snapshot_csv(path: str | Path) -> tuple[float, DensityProfile, np.ndarray]:
    """Read a snapshot CSV back into (t, profile, velocity array)."""
    lines = Path(path).read_text().strip().split("\n")
    if not lines or lines[0].strip() != "t,x,rho,v":
        raise ValueError(f"{path}: expected header 't,x,rho,v'")
    rows = [line.split(",") for line in lines[1:]]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    t = float(rows[0][0])
    rho = np.array([float(r[2]) for r in rows])
    v = np.array([float(r[3]) for r in rows])
    return t, DensityProfile(rho), v
