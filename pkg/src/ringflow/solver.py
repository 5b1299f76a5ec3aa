"""Time steppers for the ring road: non-local upwind and local Godunov.

The non-local scheme moves mass with the speed of the receiving cell's
look-ahead/nudging average, which conserves mass to rounding and keeps
densities inside the initial envelope under the CFL restriction. The
Godunov scheme for the local law is the classical reference the non-local
model is compared against. A run records per-step norm series and sparse
profile snapshots.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import DensityProfile
from .kernels import DiscreteWeights, correlate_ring
from .speedlaws import LawComponent, SpeedLaw, VelocityField

__all__ = [
    "CFLViolation",
    "SchemeConfig",
    "LambdaCheck",
    "NormSeries",
    "SimulationResult",
    "lambda_check",
    "step_nonlocal",
    "godunov_flux",
    "godunov_step",
    "run",
    "write_series_csv",
    "read_series_csv",
]

_MODES = ("nonlocal", "lwr_godunov")


class CFLViolation(RuntimeError):
    """Raised when a step would violate lambda * max(v) <= 1."""


@dataclass(frozen=True)
class SchemeConfig:
    """Grid size, time-step ratio, horizon, and scheme selection.

    lam is the ratio delta/h of time step to cell width. The horizon is
    rounded to a whole number of steps. snapshot_every = None picks a
    cadence of about eight snapshots per run.
    """

    n_cells: int
    lam: float
    horizon: float
    snapshot_every: int | None = None
    mode: str = "nonlocal"

    def __post_init__(self) -> None:
        if self.n_cells < 3:
            raise ValueError("n_cells must be at least 3")
        if not (self.lam > 0.0):
            raise ValueError("lam must be positive")
        if self.horizon < 0.0:
            raise ValueError("horizon must be non-negative")
        if self.snapshot_every is not None and self.snapshot_every < 1:
            raise ValueError("snapshot_every must be a positive integer")
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}")

    @property
    def cell_width(self) -> float:
        return 1.0 / self.n_cells

    @property
    def delta(self) -> float:
        return self.lam / self.n_cells

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.delta))

    @property
    def realized_horizon(self) -> float:
        return self.n_steps * self.delta


@dataclass(frozen=True)
class LambdaCheck:
    """Admissibility of a time-step ratio against a velocity ceiling."""

    admissible: bool
    max_lambda: float
    margin: float
    v_max: float


def lambda_check(lam: float, v_max: float, margin: float = 0.05) -> LambdaCheck:
    """Check lam * v_max <= 1 - margin and report the largest safe lam."""
    if v_max <= 0.0 or not math.isfinite(v_max):
        raise ValueError("v_max must be finite and positive")
    if not (0.0 <= margin < 1.0):
        raise ValueError("margin must lie in [0, 1)")
    return LambdaCheck(
        admissible=(lam > 0.0) and (lam * v_max <= 1.0 - margin),
        max_lambda=(1.0 - margin) / v_max,
        margin=margin,
        v_max=v_max,
    )


def _upwind_step(vals: np.ndarray, v: np.ndarray, lam: float) -> np.ndarray:
    # rho_i <- (1 - lam*v_{i+1}) rho_i + lam*v_i rho_{i-1}
    return (1.0 - lam * np.roll(v, -1)) * vals + lam * v * np.roll(vals, 1)


def step_nonlocal(
    profile: DensityProfile, velocity: VelocityField, lam: float
) -> DensityProfile:
    """One upwind step; refuses time steps with lam * max(v) > 1."""
    if velocity.n_cells != profile.n_cells:
        raise ValueError("velocity must match the profile size")
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    vmax = float(velocity.values.max())
    if lam * vmax > 1.0:
        raise CFLViolation(
            f"lam * max(v) = {lam * vmax!r} exceeds 1; reduce the time step"
        )
    return DensityProfile(_upwind_step(profile.values, velocity.values, lam))


class _GodunovScheme:
    """Godunov flux for the local flow q(rho) = rho * f(rho).

    The flux must be unimodal on the scanned density range; its critical
    density is refined to high accuracy at construction.
    """

    def __init__(self, f: LawComponent, scan_max: float = 10.0) -> None:
        self.f = f
        rho = np.linspace(0.0, scan_max, 10001)
        q = rho * f.value(rho)
        k = int(np.argmax(q))
        scale = float(np.abs(q).max()) or 1.0
        dq = np.diff(q)
        if np.any(dq[:k] < -1e-12 * scale) or np.any(dq[k:] > 1e-12 * scale):
            raise ValueError("flow rho*f(rho) must be unimodal for Godunov")
        lo = rho[max(k - 1, 0)]
        hi = rho[min(k + 1, rho.size - 1)]
        res = minimize_scalar(
            lambda r: -r * float(f.value(r)),
            bounds=(lo, hi),
            method="bounded",
            options={"xatol": 1e-12},
        )
        cand = float(res.x)
        self.rho_crit = cand if -res.fun >= q[k] else float(rho[k])
        self.q_crit = self.rho_crit * float(f.value(self.rho_crit))
        qp = f.value(rho) + rho * f.d1(rho)
        self.cfl_speed = float(np.abs(qp).max())

    def q(self, rho: np.ndarray) -> np.ndarray:
        rho = np.asarray(rho, dtype=float)
        return rho * self.f.value(rho)

    def flux(self, rho_left, rho_right) -> np.ndarray:
        rl = np.asarray(rho_left, dtype=float)
        rr = np.asarray(rho_right, dtype=float)
        ql = self.q(rl)
        qr = self.q(rr)
        crit_between = (rr <= self.rho_crit) & (self.rho_crit <= rl)
        return np.where(
            rl <= rr,
            np.minimum(ql, qr),
            np.where(crit_between, self.q_crit, np.maximum(ql, qr)),
        )

    def step(self, vals: np.ndarray, lam: float) -> np.ndarray:
        fr = self.flux(vals, np.roll(vals, -1))
        return vals - lam * (fr - np.roll(fr, 1))


def godunov_flux(f: LawComponent, rho_left, rho_right):
    """Godunov interface flux for the local law, vectorized."""
    scheme = _GodunovScheme(f)
    out = scheme.flux(rho_left, rho_right)
    return float(out) if np.ndim(rho_left) == 0 and np.ndim(rho_right) == 0 else out


def godunov_step(profile: DensityProfile, f: LawComponent, lam: float) -> DensityProfile:
    """One Godunov step for the local law; enforces lam * max|q'| <= 1."""
    if lam <= 0.0:
        raise ValueError("lam must be positive")
    scheme = _GodunovScheme(f)
    if lam * scheme.cfl_speed > 1.0:
        raise CFLViolation(
            f"lam * max|q'| = {lam * scheme.cfl_speed!r} exceeds 1"
        )
    return DensityProfile(scheme.step(profile.values, lam))


@dataclass(frozen=True)
class NormSeries:
    """Per-step diagnostics: mass, extremes, L2 deviation, Lyapunov value."""

    t: np.ndarray
    mass: np.ndarray
    min: np.ndarray
    max: np.ndarray
    l2: np.ndarray
    lyapunov_v: np.ndarray


@dataclass(frozen=True)
class SimulationResult:
    """Everything a run produced: snapshots, per-step series, and metadata.

    rho_star is the conserved mean density of the initial profile, the
    equilibrium every decay diagnostic measures against. nudged records
    whether an upstream kernel was active.
    """

    config: SchemeConfig
    rho_star: float
    nudged: bool
    times: np.ndarray
    profiles: tuple[DensityProfile, ...]
    velocities: tuple[VelocityField, ...]
    series: NormSeries
    n_steps: int
    realized_horizon: float


def run(
    config: SchemeConfig,
    ic: DensityProfile | np.ndarray,
    law: SpeedLaw,
    down: DiscreteWeights | None = None,
    up: DiscreteWeights | None = None,
) -> SimulationResult:
    """March the scheme from the initial profile over the whole horizon.

    The horizon is realized as n_steps = round(horizon/delta) steps of
    size delta = lam/n_cells. Norm series are recorded at every step
    including t = 0 and the final time; snapshots at the configured
    cadence plus the final state. A raw array of cell densities is
    accepted in place of a DensityProfile.
    """
    n = config.n_cells
    if not isinstance(ic, DensityProfile):
        ic = DensityProfile(ic)
    if ic.n_cells != n:
        raise ValueError("initial profile size must match config.n_cells")
    lam = config.lam
    m = config.n_steps
    delta = config.delta

    scheme = None
    if config.mode == "nonlocal":
        if down is None:
            raise ValueError("nonlocal mode needs downstream weights")
        if down.direction != "downstream" or down.n_cells != n:
            raise ValueError("down must be downstream weights of matching size")
        if up is not None and (up.direction != "upstream" or up.n_cells != n):
            raise ValueError("up must be upstream weights of matching size")
        if lam * law.v_max > 1.0:
            raise ValueError(
                f"lam * v_max = {lam * law.v_max!r} exceeds 1; "
                "the scheme would move mass across more than one cell"
            )
        w_down = down.weights
        w_up = up.weights if up is not None else None

        def velocity(vals: np.ndarray) -> np.ndarray:
            v = law.f.value(correlate_ring(w_down, vals))
            if w_up is not None:
                v = v * law.g.value(correlate_ring(w_up, vals))
            return v

    else:
        if down is not None or up is not None:
            raise ValueError("lwr_godunov mode takes no kernels")
        scheme = _GodunovScheme(law.f)
        if lam * scheme.cfl_speed > 1.0:
            raise ValueError(
                f"lam * max|q'| = {lam * scheme.cfl_speed!r} exceeds 1"
            )

        def velocity(vals: np.ndarray) -> np.ndarray:
            return law.f.value(vals)

    cadence = config.snapshot_every or max(1, m // 8)
    snap_steps = sorted(set(range(0, m + 1, cadence)) | {m})

    vals = ic.values.copy()
    rho_star = float(vals.sum() / n)

    t_arr = np.arange(m + 1) * delta
    mass_arr = np.empty(m + 1)
    min_arr = np.empty(m + 1)
    max_arr = np.empty(m + 1)
    l2_arr = np.empty(m + 1)
    v_arr = np.empty(m + 1)

    profiles: list[DensityProfile] = []
    velocities: list[VelocityField] = []
    times: list[float] = []
    snap_iter = iter(snap_steps)
    next_snap = next(snap_iter)

    for k in range(m + 1):
        mass_arr[k] = vals.sum() / n
        min_arr[k] = vals.min()
        max_arr[k] = vals.max()
        l2_arr[k] = np.sqrt(np.sum((vals - rho_star) ** 2) / n)
        v_arr[k] = np.sum(vals * np.log(vals / rho_star)) / n + rho_star - mass_arr[k]

        need_snap = k == next_snap
        if config.mode == "nonlocal" or need_snap:
            v = velocity(vals)
        if need_snap:
            profiles.append(DensityProfile(vals))
            velocities.append(VelocityField(v))
            times.append(float(t_arr[k]))
            next_snap = next(snap_iter, -1)

        if k == m:
            break
        if config.mode == "nonlocal":
            if lam * v.max() > 1.0:
                raise CFLViolation(
                    f"lam * max(v) exceeds 1 at step {k}; the law's v_max "
                    "declaration does not bound the realized speeds"
                )
            vals = _upwind_step(vals, v, lam)
        else:
            vals = scheme.step(vals, lam)
        if not np.all(vals > 0.0):
            raise RuntimeError(f"positivity lost at step {k + 1}")

    series = NormSeries(
        t=t_arr, mass=mass_arr, min=min_arr, max=max_arr, l2=l2_arr, lyapunov_v=v_arr
    )
    return SimulationResult(
        config=config,
        rho_star=rho_star,
        nudged=up is not None,
        times=np.asarray(times),
        profiles=tuple(profiles),
        velocities=tuple(velocities),
        series=series,
        n_steps=m,
        realized_horizon=config.realized_horizon,
    )


def write_series_csv(path: str | Path, series: NormSeries) -> None:
    """Write the per-step series as t,mass,min,max,l2,log_l2,V rows."""
    with np.errstate(divide="ignore"):
        log_l2 = np.log(series.l2)
    lines = ["t,mass,min,max,l2,log_l2,V"]
    for k in range(series.t.size):
        lines.append(
            f"{float(series.t[k])!r},{float(series.mass[k])!r},"
            f"{float(series.min[k])!r},{float(series.max[k])!r},"
            f"{float(series.l2[k])!r},{float(log_l2[k])!r},"
            f"{float(series.lyapunov_v[k])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_series_csv(path: str | Path) -> NormSeries:
    """Read a series CSV back into arrays (log_l2 column is derived)."""
    lines = Path(path).read_text().strip().split("\n")
    if not lines or lines[0].strip() != "t,mass,min,max,l2,log_l2,V":
        raise ValueError(f"{path}: expected header 't,mass,min,max,l2,log_l2,V'")
    data = np.array(
        [[float(c) for c in line.split(",")] for line in lines[1:]]
    )
    if data.ndim != 2 or data.shape[1] != 7:
        raise ValueError(f"{path}: malformed series rows")
    return NormSeries(
        t=data[:, 0],
        mass=data[:, 1],
        min=data[:, 2],
        max=data[:, 3],
        l2=data[:, 4],
        lyapunov_v=data[:, 6],
    )
