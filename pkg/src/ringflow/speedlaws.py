"""Speed laws v = f(look-ahead density) * g(look-behind density).

f is a positive non-increasing free-flow factor, g a non-decreasing
nudging factor with g >= 1. Components carry closed-form derivatives up
to third order, which the stability certificate and the smoothness bound
need. The discrete velocity map evaluates both windowed averages by
direct cyclic summation; a piecewise continuum oracle provides reference
values for convergence checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import DensityProfile, interpolate_many
from .kernels import DiscreteWeights, KernelSpec, _gauss_rule, correlate_ring

__all__ = [
    "LawComponent",
    "SpeedLaw",
    "VelocityField",
    "builtin_exp_f",
    "builtin_logistic_g",
    "builtin_rational_g",
    "constant_one_g",
    "make_speed_law",
    "discrete_velocity",
    "continuum_velocity_oracle",
    "equilibrium_flow",
    "multi_term_velocity",
]


@dataclass(frozen=True)
class LawComponent:
    """One factor of a speed law with derivatives to third order.

    name identifies the family ("exp", "logistic", "rational", "none",
    or "custom") and drives closed-form dispatch in the stability
    analysis. sup_value bounds the factor from above on [0, inf).
    """

    name: str
    params: tuple
    value: Callable[[np.ndarray], np.ndarray]
    d1: Callable[[np.ndarray], np.ndarray]
    d2: Callable[[np.ndarray], np.ndarray]
    d3: Callable[[np.ndarray], np.ndarray]
    sup_value: float

    def __call__(self, s: np.ndarray) -> np.ndarray:
        return self.value(np.asarray(s, dtype=float))


def builtin_exp_f(A: float, b: float) -> LawComponent:
    """Exponential free-flow factor A * exp(-b * s)."""
    if A <= 0.0 or b <= 0.0:
        raise ValueError("exp factor needs A > 0 and b > 0")

    def value(s):
        return A * np.exp(-b * np.asarray(s, dtype=float))

    return LawComponent(
        name="exp",
        params=(A, b),
        value=value,
        d1=lambda s: -b * value(s),
        d2=lambda s: b * b * value(s),
        d3=lambda s: -(b**3) * value(s),
        sup_value=A,
    )


def builtin_logistic_g(kappa: float, a: float) -> LawComponent:
    """Logistic nudging factor (1 + kappa) * exp(a s) / (kappa + exp(a s)).

    Equals 1 at s = 0, increases to 1 + kappa, and is smooth with
    closed-form derivatives in u = kappa * exp(-a s).
    """
    if kappa <= 0.0 or a <= 0.0:
        raise ValueError("logistic factor needs kappa > 0 and a > 0")
    c = 1.0 + kappa

    def _u(s):
        return kappa * np.exp(-a * np.asarray(s, dtype=float))

    def value(s):
        return c / (1.0 + _u(s))

    def d1(s):
        u = _u(s)
        return c * a * u / (1.0 + u) ** 2

    def d2(s):
        u = _u(s)
        return c * a * a * u * (u - 1.0) / (1.0 + u) ** 3

    def d3(s):
        u = _u(s)
        return c * a**3 * u * (u * u - 4.0 * u + 1.0) / (1.0 + u) ** 4

    return LawComponent(
        name="logistic",
        params=(kappa, a),
        value=value,
        d1=d1,
        d2=d2,
        d3=d3,
        sup_value=c,
    )


def builtin_rational_g(a: float, gamma: float) -> LawComponent:
    """Rational nudging factor (1 + a s) / (1 + gamma s) with a > gamma >= 0."""
    if gamma < 0.0 or a <= gamma:
        raise ValueError("rational factor needs a > gamma >= 0")

    def value(s):
        s = np.asarray(s, dtype=float)
        return (1.0 + a * s) / (1.0 + gamma * s)

    def d1(s):
        s = np.asarray(s, dtype=float)
        return (a - gamma) / (1.0 + gamma * s) ** 2

    def d2(s):
        s = np.asarray(s, dtype=float)
        return -2.0 * gamma * (a - gamma) / (1.0 + gamma * s) ** 3

    def d3(s):
        s = np.asarray(s, dtype=float)
        return 6.0 * gamma * gamma * (a - gamma) / (1.0 + gamma * s) ** 4

    sup = a / gamma if gamma > 0.0 else math.inf
    return LawComponent(
        name="rational",
        params=(a, gamma),
        value=value,
        d1=d1,
        d2=d2,
        d3=d3,
        sup_value=sup,
    )


def constant_one_g() -> LawComponent:
    """The trivial nudging factor g = 1 (nudging disabled)."""

    def zero(s):
        return np.zeros_like(np.asarray(s, dtype=float))

    return LawComponent(
        name="none",
        params=(),
        value=lambda s: np.ones_like(np.asarray(s, dtype=float)),
        d1=zero,
        d2=zero,
        d3=zero,
        sup_value=1.0,
    )


@dataclass(frozen=True)
class SpeedLaw:
    """A speed law with its smoothness bound and velocity ceiling."""

    f: LawComponent
    g: LawComponent
    bound_M: float
    v_max: float


def _component_smoothness_sup(comp: LawComponent, scan_to: float = 60.0) -> float:
    """Supremum of |c| + |c'| + |c''| + |c'''| over s >= 0, by dense scan."""
    if comp.name == "exp":
        A, b = comp.params
        return A * (1.0 + b + b * b + b**3)
    s = np.linspace(0.0, scan_to, 20001)
    total = (
        np.abs(comp.value(s))
        + np.abs(comp.d1(s))
        + np.abs(comp.d2(s))
        + np.abs(comp.d3(s))
    )
    return max(float(total.max()), comp.sup_value)


def make_speed_law(
    f: LawComponent,
    g: LawComponent | None = None,
    v_max: float | None = None,
) -> SpeedLaw:
    """Combine factors into a speed law, checking the shape hypotheses.

    f must be positive and non-increasing, g at least 1 and non-decreasing
    (checked on a sample of [0, 60]). v_max defaults to the product of the
    factor suprema; custom components with unbounded factors must declare
    it explicitly.
    """
    if g is None:
        g = constant_one_g()
    s = np.linspace(0.0, 60.0, 2001)
    fv = f.value(s)
    if np.any(fv <= 0.0):
        raise ValueError("f must be strictly positive")
    if np.any(f.d1(s) > 1e-12):
        raise ValueError("f must be non-increasing")
    gv = g.value(s)
    if np.any(gv < 1.0 - 1e-12):
        raise ValueError("g must be at least 1")
    if np.any(g.d1(s) < -1e-12):
        raise ValueError("g must be non-decreasing")
    if v_max is None:
        v_max = f.sup_value * g.sup_value
    if not (v_max > 0.0) or not math.isfinite(v_max):
        raise ValueError("speed law needs a finite positive v_max; declare it")
    bound_m = _component_smoothness_sup(f) + _component_smoothness_sup(g)
    return SpeedLaw(f=f, g=g, bound_M=bound_m, v_max=float(v_max))


@dataclass(frozen=True)
class VelocityField:
    """Per-cell speeds produced by a speed law on a profile."""

    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=float, copy=True)
        if vals.ndim != 1 or vals.size < 3:
            raise ValueError("velocity field must be a vector of at least 3 cells")
        if not np.all(np.isfinite(vals)) or np.any(vals < 0.0):
            raise ValueError("speeds must be finite and non-negative")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def n_cells(self) -> int:
        return self.values.size


def _uniform_block_length(weights: np.ndarray) -> int | None:
    """Length K when weights are a constant block w_0..w_{K-1}, else None."""
    nz = np.flatnonzero(weights)
    if nz.size == 0 or nz[0] != 0:
        return None
    k = int(nz[-1]) + 1
    if nz.size != k:
        return None
    block = weights[:k]
    if np.all(np.abs(block - block[0]) <= 1e-12 * abs(block[0])):
        return k
    return None


def _windowed_prefix(weights: np.ndarray, vals: np.ndarray, k: int) -> np.ndarray:
    """Uniform-block fast path: running window sums via a prefix sum."""
    n = vals.size
    ext = np.concatenate([vals, vals[: k - 1]]) if k > 1 else vals
    prefix = np.concatenate([[0.0], np.cumsum(ext)])
    return weights[0] * (prefix[k : k + n] - prefix[:n])


def discrete_velocity(
    law: SpeedLaw,
    down: DiscreteWeights,
    up: DiscreteWeights | None,
    profile: DensityProfile,
    fast_uniform: bool = False,
) -> VelocityField:
    """Speeds v_i = f(downstream average at i) * g(upstream average at i).

    With up = None the g factor is 1 (nudging disabled). fast_uniform
    switches the downstream sum to a prefix-sum window when the weights
    form a uniform block; results agree with the direct sum to 1e-13.
    """
    vals = profile.values
    if down.direction != "downstream":
        raise ValueError("down must be downstream weights")
    if down.n_cells != vals.size:
        raise ValueError("down weights must match the profile size")
    if fast_uniform:
        k = _uniform_block_length(down.weights)
        if k is None:
            raise ValueError("fast_uniform needs a uniform downstream block")
        ahead = _windowed_prefix(down.weights, vals, k)
    else:
        ahead = correlate_ring(down.weights, vals)
    v = law.f.value(ahead)
    if up is not None:
        if up.direction != "upstream":
            raise ValueError("up must be upstream weights")
        if up.n_cells != vals.size:
            raise ValueError("up weights must match the profile size")
        behind = correlate_ring(up.weights, vals)
        v = v * law.g.value(behind)
    return VelocityField(v)


def _piece_breaks(x0: float, support: float, sign: int, n: int) -> np.ndarray:
    """Offsets u in [0, support] where x0 + sign*u crosses a grid node."""
    h = 1.0 / n
    if sign > 0:
        m_lo = math.floor(x0 / h) + 1
        m_hi = math.ceil((x0 + support) / h) - 1
        ms = np.arange(m_lo, m_hi + 1)
        inner = ms * h - x0
    else:
        m_hi = math.ceil(x0 / h) - 1
        m_lo = math.floor((x0 - support) / h) + 1
        ms = np.arange(m_lo, m_hi + 1)
        inner = x0 - ms * h
    inner = inner[(inner > 1e-15) & (inner < support - 1e-15)]
    breaks = np.unique(np.concatenate([[0.0, support], inner]))
    return np.sort(breaks)


def _window_integral(
    kernel: KernelSpec,
    profile: DensityProfile,
    x: float,
    sign: int,
    tol: float,
) -> float:
    """Integral of shape(u) * P(x + sign*u) over u in [0, support].

    P is the piecewise-linear interpolant of the profile. The integrand is
    smooth between interpolant breakpoints, so each piece is integrated
    with Gauss panels refined adaptively to the per-piece tolerance.
    """
    breaks = _piece_breaks(x, kernel.support, sign, profile.n_cells)

    def integrand(u: np.ndarray) -> np.ndarray:
        return kernel(u) * interpolate_many(profile, x + sign * u)

    piece_tol = tol / max(1, len(breaks))
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        total += _adaptive_panel(integrand, float(a), float(b), piece_tol)
    return total


def _adaptive_panel(fn, a: float, b: float, tol: float, depth: int = 0) -> float:
    if b <= a:
        return 0.0
    xs10, ws10 = _gauss_rule(10)
    xs21, ws21 = _gauss_rule(21)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    coarse = half * float(np.dot(ws10, fn(mid + half * xs10)))
    fine = half * float(np.dot(ws21, fn(mid + half * xs21)))
    if abs(fine - coarse) <= tol or depth >= 30:
        return fine
    return _adaptive_panel(fn, a, mid, tol / 2, depth + 1) + _adaptive_panel(
        fn, mid, b, tol / 2, depth + 1
    )


def continuum_velocity_oracle(
    law: SpeedLaw,
    down_kernel: KernelSpec,
    up_kernel: KernelSpec | None,
    profile: DensityProfile,
    x: float,
    tol: float = 1e-12,
) -> float:
    """Continuum speed of the interpolated profile at position x.

    Evaluates the exact windowed integrals of the piecewise-linear
    interpolant, so it is an independent reference for the discrete
    velocity map (which uses cell averages instead). Absolute quadrature
    error is held below tol; for the built-in kernels the per-piece
    integrand is polynomial and the panels are exact.
    """
    if down_kernel.direction != "downstream":
        raise ValueError("down_kernel must be downstream")
    ahead = _window_integral(down_kernel, profile, float(x), +1, tol)
    v = float(law.f.value(ahead))
    if up_kernel is not None:
        if up_kernel.direction != "upstream":
            raise ValueError("up_kernel must be upstream")
        behind = _window_integral(up_kernel, profile, float(x), -1, tol)
        v *= float(law.g.value(behind))
    return v


def equilibrium_flow(law: SpeedLaw, sigma: float, rho) -> np.ndarray | float:
    """Uniform-state flow rho * f(rho) * g(sigma * rho)."""
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0.0):
        raise ValueError("density must be non-negative")
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    q = r * law.f.value(r) * law.g.value(sigma * r)
    return float(q) if np.ndim(rho) == 0 else q


def multi_term_velocity(
    terms: Sequence[tuple[SpeedLaw, DiscreteWeights, DiscreteWeights | None]],
    profile: DensityProfile,
) -> VelocityField:
    """Sum of several look-ahead/nudging products on one profile."""
    if not terms:
        raise ValueError("multi_term_velocity needs at least one term")
    total = np.zeros(profile.n_cells)
    for law, down, up in terms:
        total = total + discrete_velocity(law, down, up, profile).values
    return VelocityField(total)
