"""Exact travelling-wave solutions of the un-nudged model.

When the look-ahead window is uniform and its length eta is rational with
the wave period, a sinusoidal profile advects unchanged at the speed of
the free-flow factor at the mean density: the perceived look-ahead
average is constantly the mean, so every cell moves at the same speed.
These closed-form solutions are the reference for the convergence and
damping checks of the scheme.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .grid import l2_deviation
from .solver import SimulationResult
from .speedlaws import SpeedLaw

__all__ = [
    "TravellingWave",
    "WaveComparison",
    "wave_density",
    "perceived_density_identity",
    "compare_to_wave",
    "write_wave_csv",
    "read_wave_csv",
]


@dataclass(frozen=True)
class TravellingWave:
    """rho(t, x) = rho_star + amplitude * sin(2 k q pi (x - speed t)).

    k and q are positive integers; the wave is exact for a uniform
    look-ahead window of length eta = p/q (p integer) because the window
    then spans whole wave periods. speed must equal the free-flow factor
    at rho_star.
    """

    rho_star: float
    amplitude: float
    k: int
    q: int
    speed: float

    def __post_init__(self) -> None:
        if self.rho_star <= 0.0:
            raise ValueError("rho_star must be positive")
        if abs(self.amplitude) >= self.rho_star:
            raise ValueError("|amplitude| must stay below rho_star")
        if self.k < 1 or self.q < 1:
            raise ValueError("k and q must be positive integers")
        if self.speed < 0.0:
            raise ValueError("speed must be non-negative")

    @classmethod
    def for_law(
        cls, law: SpeedLaw, rho_star: float, amplitude: float, k: int, q: int
    ) -> "TravellingWave":
        """Build the wave whose speed matches the law at rho_star."""
        return cls(
            rho_star=rho_star,
            amplitude=amplitude,
            k=k,
            q=q,
            speed=float(law.f.value(rho_star)),
        )


def wave_density(wave: TravellingWave, t: float, x) -> np.ndarray | float:
    """Evaluate the wave at time t and position(s) x."""
    xx = np.asarray(x, dtype=float)
    nu = 2.0 * math.pi * wave.k * wave.q
    out = wave.rho_star + wave.amplitude * np.sin(nu * (xx - wave.speed * t))
    return float(out) if np.ndim(x) == 0 else out


def perceived_density_identity(
    wave: TravellingWave, eta: float, t: float, x: float
) -> float:
    """Closed-form look-ahead average of the wave over [x, x + eta].

    Equals rho_star whenever eta * k * q is an integer (the window spans
    whole periods), which is exactly when the wave solves the model.
    Rejects windows that are not commensurate with the wave.
    """
    if not (0.0 < eta <= 1.0):
        raise ValueError("eta must lie in (0, 1]")
    periods = eta * wave.k * wave.q
    if abs(periods - round(periods)) > 1e-9:
        raise ValueError(
            f"eta*k*q = {periods!r} is not an integer; the window does not "
            "span whole wave periods and the wave is not a solution"
        )
    nu = 2.0 * math.pi * wave.k * wave.q
    a = nu * (x - wave.speed * t)
    b = nu * (x + eta - wave.speed * t)
    return wave.rho_star + wave.amplitude * (math.cos(a) - math.cos(b)) / (nu * eta)


@dataclass(frozen=True)
class WaveComparison:
    """Per-snapshot errors of a run against the exact wave."""

    t: np.ndarray
    l2_error: np.ndarray
    sup_error: np.ndarray
    l2_deviation_from_rho_star: np.ndarray


def compare_to_wave(result: SimulationResult, wave: TravellingWave) -> WaveComparison:
    """Errors of every snapshot against the advected exact wave.

    The wave solves the un-nudged non-local model only; comparing a nudged
    or Godunov run raises a warning but still reports the errors.
    """
    if result.nudged or result.config.mode != "nonlocal":
        warnings.warn(
            "run does not match the wave's model (nudging or local scheme "
            "active); errors are reported against a non-solution",
            stacklevel=2,
        )
    ts = []
    l2s = []
    sups = []
    devs = []
    for t, profile in zip(result.times, result.profiles):
        exact = wave_density(wave, float(t), profile.nodes)
        err = profile.values - exact
        n = profile.n_cells
        ts.append(float(t))
        l2s.append(float(np.sqrt(np.sum(err**2) / n)))
        sups.append(float(np.abs(err).max()))
        devs.append(l2_deviation(profile, wave.rho_star))
    return WaveComparison(
        t=np.asarray(ts),
        l2_error=np.asarray(l2s),
        sup_error=np.asarray(sups),
        l2_deviation_from_rho_star=np.asarray(devs),
    )


def write_wave_csv(path: str | Path, cmp: WaveComparison) -> None:
    """Write rows t,l2_error,sup_error,l2_deviation_from_rho_star."""
    lines = ["t,l2_error,sup_error,l2_deviation_from_rho_star"]
    for k in range(cmp.t.size):
        lines.append(
            f"{float(cmp.t[k])!r},{float(cmp.l2_error[k])!r},"
            f"{float(cmp.sup_error[k])!r},"
            f"{float(cmp.l2_deviation_from_rho_star[k])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_wave_csv(path: str | Path) -> WaveComparison:
    lines = Path(path).read_text().strip().split("\n")
    header = "t,l2_error,sup_error,l2_deviation_from_rho_star"
    if not lines or lines[0].strip() != header:
        raise ValueError(f"{path}: expected header {header!r}")
    data = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError(f"{path}: malformed comparison rows")
    return WaveComparison(
        t=data[:, 0],
        l2_error=data[:, 1],
        sup_error=data[:, 2],
        l2_deviation_from_rho_star=data[:, 3],
    )
