"""Stability certificates, Lyapunov diagnostics, and decay-rate fitting.

The exponential-stability certificate evaluates extrema of the speed-law
factors over density brackets around the equilibrium and compares the
destabilizing spread of the look-ahead factor against the restoring
strength of the nudging factor. It applies to the unit-window nudging
model (upstream shape 1 - x on [0, 1] with a uniform look-ahead window).
Also here: the fundamental diagram of uniform states and least-squares
decay rates from the recorded norm series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .grid import DensityProfile
from .speedlaws import SpeedLaw, equilibrium_flow

__all__ = [
    "StabilityReport",
    "DecayFit",
    "BoundCheck",
    "FundamentalDiagram",
    "lyapunov_V",
    "stability_condition",
    "feasible_halfwidth",
    "fit_decay_rate",
    "decay_bound_check",
    "fundamental_diagram",
    "write_fd_csv",
    "read_fd_csv",
]


@dataclass(frozen=True)
class StabilityReport:
    """Certificate inputs and outcome for one equilibrium bracket.

    lhs collects the destabilizing terms, rhs the restoring ones; the
    certificate holds when lhs < rhs. margin = rhs - lhs and the decay
    constant c_bar = rho_min * margin / eta apply to the squared L2
    deviation of the density from the equilibrium.
    """

    eta: float
    rho_min: float
    rho_max: float
    rho_star: float
    F_max: float
    F_min: float
    f_min: float
    g_max: float
    g_min: float
    G_min: float
    lhs: float
    rhs: float
    feasible: bool
    margin: float
    c_bar: float


def lyapunov_V(profile: DensityProfile, rho_star: float) -> float:
    """Relative-entropy Lyapunov value h * sum(rho ln(rho/rho*) + rho* - rho)."""
    if rho_star <= 0.0:
        raise ValueError("rho_star must be positive")
    vals = profile.values
    n = vals.size
    return float(np.sum(vals * np.log(vals / rho_star)) / n + rho_star - vals.sum() / n)


def _refine(fn: Callable[[float], float], lo: float, hi: float, maximize: bool) -> float:
    obj = (lambda s: -fn(s)) if maximize else fn
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    best = -res.fun if maximize else res.fun
    return float(best)


def _extremum(fn: Callable[[np.ndarray], np.ndarray], lo: float, hi: float, maximize: bool) -> float:
    """Extremum of fn over [lo, hi]: dense scan plus local refinement."""
    if hi < lo:
        raise ValueError("empty interval")
    if hi == lo:
        return float(fn(np.asarray([lo]))[0])
    xs = np.linspace(lo, hi, 10001)
    ys = fn(xs)
    k = int(np.argmax(ys)) if maximize else int(np.argmin(ys))
    scalar = lambda s: float(fn(np.asarray([s]))[0])
    refined = _refine(scalar, xs[max(k - 1, 0)], xs[min(k + 1, xs.size - 1)], maximize)
    return max(float(ys[k]), refined) if maximize else min(float(ys[k]), refined)


def stability_condition(
    law: SpeedLaw,
    eta: float,
    rho_min: float,
    rho_max: float,
    rho_star: float,
) -> StabilityReport:
    """Exponential-stability certificate for densities in [rho_min, rho_max].

    The look-ahead factor is probed for the extrema of |f'| and its value
    at the largest perceived density; the nudging factor for its extremes
    and the smallest slope over the reachable upstream averages. Endpoint
    formulas are used for the built-in families whose relevant derivative
    is monotone or unimodal; custom components fall back to a scanned
    extremum. The certificate is proved for the unit upstream window, so
    c_bar certifies the nudged model with zeta = 1.
    """
    if not (0.0 < eta <= 1.0):
        raise ValueError("eta must lie in (0, 1]")
    if not (0.0 < rho_min <= rho_star <= rho_max):
        raise ValueError("need 0 < rho_min <= rho_star <= rho_max")

    f, g = law.f, law.g
    s_hi = min(rho_star / eta, rho_max)
    abs_f1 = lambda s: np.abs(f.d1(np.asarray(s, dtype=float)))
    if f.name == "exp":
        # |f'| = A b exp(-b s) is decreasing, so endpoints are exact
        F_max = float(abs_f1(rho_min))
        F_min = float(abs_f1(s_hi))
    else:
        F_max = _extremum(abs_f1, rho_min, s_hi, maximize=True)
        F_min = _extremum(abs_f1, rho_min, s_hi, maximize=False)
    f_min = float(f.value(s_hi))

    a_g = 0.5 * max(2.0 * rho_star - rho_max, rho_min)
    b_g = 0.5 * min(2.0 * rho_star - rho_min, rho_max)
    g_max = float(g.value(b_g))
    g_min = float(g.value(a_g))
    g1 = lambda s: g.d1(np.asarray(s, dtype=float))
    if g.name in ("rational", "logistic", "none"):
        # g' is monotone (rational, none) or has a single interior maximum
        # (logistic), so the minimum over an interval sits at an endpoint
        G_min = min(float(g1(a_g)), float(g1(b_g)))
    else:
        G_min = _extremum(g1, a_g, b_g, maximize=False)

    lhs = F_max * g_max - F_min * g_min
    rhs = 2.0 * eta * f_min * G_min
    margin = rhs - lhs
    feasible = margin > 0.0
    c_bar = rho_min * margin / eta
    return StabilityReport(
        eta=eta,
        rho_min=rho_min,
        rho_max=rho_max,
        rho_star=rho_star,
        F_max=F_max,
        F_min=F_min,
        f_min=f_min,
        g_max=g_max,
        g_min=g_min,
        G_min=G_min,
        lhs=lhs,
        rhs=rhs,
        feasible=feasible,
        margin=margin,
        c_bar=c_bar,
    )


def feasible_halfwidth(
    law: SpeedLaw, eta: float, rho_star: float, tol: float = 1e-10
) -> float:
    """Largest R with a feasible certificate on [rho* - R, rho* + R].

    Bisects on the margin, which shrinks as the bracket widens. Returns a
    value just below rho_star when the certificate survives up to the
    positivity limit, and 0.0 when even the degenerate bracket fails.
    """
    if rho_star <= 0.0:
        raise ValueError("rho_star must be positive")

    def margin_at(r: float) -> float:
        return stability_condition(
            law, eta, rho_star - r, rho_star + r, rho_star
        ).margin

    if margin_at(0.0) <= 0.0:
        return 0.0
    hi = rho_star * (1.0 - 1e-12)
    if margin_at(hi) > 0.0:
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if margin_at(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class DecayFit:
    """Least-squares exponential decay rate of an L2 deviation series."""

    rate: float
    r_squared: float
    window: tuple[float, float]
    n_points: int
    truncated: bool


def fit_decay_rate(
    t: np.ndarray,
    l2: np.ndarray,
    window: tuple[float, float] | None = None,
    min_points: int = 10,
) -> DecayFit:
    """Fit l2 ~ C exp(-rate t) by linear regression on log(l2).

    The default window is the last 60 percent of the time range, past the
    initial transient. Records with l2 = 0 end the usable data; the fit
    then uses the prefix before the first zero and flags truncation.
    """
    t = np.asarray(t, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    if t.shape != l2.shape or t.ndim != 1:
        raise ValueError("t and l2 must be equal-length vectors")
    if window is None:
        window = (t[0] + 0.6 * (t[-1] - t[0]), float(t[-1]))
    wa, wb = window
    mask = (t >= wa - 1e-12) & (t <= wb + 1e-12)
    ts = t[mask]
    ys = l2[mask]
    truncated = False
    nonpos = np.flatnonzero(ys <= 0.0)
    if nonpos.size:
        ts = ts[: nonpos[0]]
        ys = ys[: nonpos[0]]
        truncated = True
    if ts.size < min_points:
        raise ValueError(
            f"window holds {ts.size} usable records; need at least {min_points}"
        )
    logy = np.log(ys)
    slope, intercept = np.polyfit(ts, logy, 1)
    fitted = slope * ts + intercept
    ss_res = float(np.sum((logy - fitted) ** 2))
    ss_tot = float(np.sum((logy - logy.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return DecayFit(
        rate=float(-slope),
        r_squared=r2,
        window=(float(wa), float(wb)),
        n_points=int(ts.size),
        truncated=truncated,
    )


@dataclass(frozen=True)
class BoundCheck:
    """Outcome of the a-posteriori decay-bound comparison."""

    ok: bool
    max_ratio: float
    t_worst: float


def decay_bound_check(
    t: np.ndarray,
    l2: np.ndarray,
    report: StabilityReport,
    rho_min: float,
    rho_max: float,
    slack: float = 0.1,
) -> BoundCheck:
    """Check l2(t)^2 <= (1+slack) * (rho_max/rho_min) exp(-c_bar t) l2(0)^2.

    rho_min and rho_max bracket the initial profile. The worst ratio of
    measured to predicted squared deviation is reported; ok means it never
    exceeded 1 + slack.
    """
    if not report.feasible:
        raise ValueError("decay bound needs a feasible certificate")
    if not (0.0 < rho_min <= rho_max):
        raise ValueError("need 0 < rho_min <= rho_max")
    t = np.asarray(t, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    if l2[0] == 0.0:
        ok = bool(np.all(l2 == 0.0))
        return BoundCheck(ok=ok, max_ratio=0.0 if ok else math.inf, t_worst=float(t[0]))
    bound = (rho_max / rho_min) * np.exp(-report.c_bar * t) * l2[0] ** 2
    ratio = l2**2 / bound
    k = int(np.argmax(ratio))
    return BoundCheck(
        ok=bool(ratio[k] <= 1.0 + slack),
        max_ratio=float(ratio[k]),
        t_worst=float(t[k]),
    )


@dataclass(frozen=True)
class FundamentalDiagram:
    """Uniform-state flow and speed over a density grid.

    q_nudge is the flow of the nudged law, q_base the flow with the
    nudging factor removed. critical_* are the grid densities where each
    flow peaks.
    """

    rho: np.ndarray
    q_nudge: np.ndarray
    q_base: np.ndarray
    v_nudge: np.ndarray
    critical_nudge: float
    critical_base: float


def fundamental_diagram(
    law: SpeedLaw, sigma: float, rho_grid: np.ndarray
) -> FundamentalDiagram:
    """Evaluate uniform-state flows on a density grid."""
    rho = np.asarray(rho_grid, dtype=float)
    if rho.ndim != 1 or rho.size < 2:
        raise ValueError("rho_grid must be a vector of at least 2 densities")
    if np.any(rho < 0.0) or np.any(np.diff(rho) <= 0.0):
        raise ValueError("rho_grid must be non-negative and strictly increasing")
    q_nudge = np.asarray(equilibrium_flow(law, sigma, rho))
    q_base = rho * law.f.value(rho)
    v_nudge = law.f.value(rho) * law.g.value(sigma * rho)
    return FundamentalDiagram(
        rho=rho,
        q_nudge=q_nudge,
        q_base=q_base,
        v_nudge=v_nudge,
        critical_nudge=float(rho[int(np.argmax(q_nudge))]),
        critical_base=float(rho[int(np.argmax(q_base))]),
    )


def write_fd_csv(path: str | Path, fd: FundamentalDiagram) -> None:
    """Write the diagram as rho,q_nudge,q_base,v_nudge rows."""
    lines = ["rho,q_nudge,q_base,v_nudge"]
    for k in range(fd.rho.size):
        lines.append(
            f"{float(fd.rho[k])!r},{float(fd.q_nudge[k])!r},"
            f"{float(fd.q_base[k])!r},{float(fd.v_nudge[k])!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n")


def read_fd_csv(path: str | Path) -> FundamentalDiagram:
    """Read a diagram CSV back (criticals recomputed from the rows)."""
    lines = Path(path).read_text().strip().split("\n")
    if not lines or lines[0].strip() != "rho,q_nudge,q_base,v_nudge":
        raise ValueError(f"{path}: expected header 'rho,q_nudge,q_base,v_nudge'")
    data = np.array([[float(c) for c in line.split(",")] for line in lines[1:]])
    if data.ndim != 2 or data.shape[1] != 4:
        raise ValueError(f"{path}: malformed diagram rows")
    rho = data[:, 0]
    q_nudge = data[:, 1]
    return FundamentalDiagram(
        rho=rho,
        q_nudge=q_nudge,
        q_base=data[:, 2],
        v_nudge=data[:, 3],
        critical_nudge=float(rho[int(np.argmax(q_nudge))]),
        critical_base=float(rho[int(np.argmax(data[:, 2]))]),
    )
