"""Look-ahead and look-behind convolution kernels and their cell weights.

A kernel is a non-negative, non-increasing shape on [0, support] that
vanishes beyond the support. Downstream kernels weight traffic ahead of a
cell, upstream kernels weight traffic behind it. Discretization integrates
the shape exactly over grid cells (antiderivative when available, adaptive
Gauss quadrature otherwise), which makes a family of cyclic-shift
summation identities hold to rounding error; those identities are exposed
here as a self-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "KernelSpec",
    "DiscreteWeights",
    "builtin_uniform_downstream",
    "builtin_linear_upstream",
    "sigma",
    "discretize",
    "apply_weights",
    "correlate_ring",
    "shift_identity_residuals",
]

_VALID_DIRECTIONS = ("downstream", "upstream")
_GAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _GAUSS_CACHE:
        _GAUSS_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GAUSS_CACHE[n]


def _gauss_panel(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, n: int) -> float:
    x, w = _gauss_rule(n)
    mid = 0.5 * (a + b)
    half = 0.5 * (b - a)
    return float(half * np.dot(w, fn(mid + half * x)))


def _adaptive_gauss(
    fn: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    tol: float,
    depth: int = 0,
) -> float:
    """Integrate fn over [a, b] to absolute tolerance tol."""
    if b <= a:
        return 0.0
    coarse = _gauss_panel(fn, a, b, 10)
    fine = _gauss_panel(fn, a, b, 20)
    if abs(fine - coarse) <= tol or depth >= 40:
        return fine
    mid = 0.5 * (a + b)
    return _adaptive_gauss(fn, a, mid, tol / 2, depth + 1) + _adaptive_gauss(
        fn, mid, b, tol / 2, depth + 1
    )


@dataclass(frozen=True)
class KernelSpec:
    """A windowed kernel shape with optional exact antiderivative.

    shape maps x >= 0 to the kernel value; it must be non-negative and
    non-increasing on [0, support] and zero beyond. antiderivative, when
    given, must return the integral of shape from 0 to x (clipped to the
    support) and is used for exact cell weights. normalized declares that
    the shape integrates to 1 over its support.
    """

    direction: str
    support: float
    shape: Callable[[np.ndarray], np.ndarray]
    antiderivative: Callable[[np.ndarray], np.ndarray] | None = None
    normalized: bool = False
    _eval: Callable[[np.ndarray], np.ndarray] = field(
        init=False, repr=False, compare=False, default=None
    )

    def __post_init__(self) -> None:
        if self.direction not in _VALID_DIRECTIONS:
            raise ValueError(f"direction must be one of {_VALID_DIRECTIONS}")
        if not (0.0 < self.support <= 1.0):
            raise ValueError("support must lie in (0, 1]")
        object.__setattr__(self, "_eval", _vectorized(self.shape))
        self._validate_shape()

    def _validate_shape(self) -> None:
        xs = np.linspace(0.0, self.support, 10001)
        ys = self._eval(xs)
        if not np.all(np.isfinite(ys)):
            raise ValueError("kernel shape must be finite on its support")
        if np.any(ys < -1e-12):
            raise ValueError("kernel shape must be non-negative on its support")
        if np.any(np.diff(ys) > 1e-12):
            raise ValueError("kernel shape must be non-increasing on its support")
        if self.support < 1.0:
            beyond = np.linspace(self.support * (1 + 1e-9) + 1e-15, 1.0, 64)
            if np.any(np.abs(self._eval(beyond)) > 1e-12):
                raise ValueError("kernel shape must vanish beyond its support")
        if self.normalized:
            total = self.integral(0.0, self.support)
            if abs(total - 1.0) > 1e-10:
                raise ValueError(
                    f"kernel declared normalized but integrates to {total!r}"
                )

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self._eval(np.asarray(x, dtype=float))

    def integral(self, a: float, b: float) -> float:
        """Integral of the shape over [a, b] intersected with the support."""
        a = max(0.0, a)
        b = min(b, self.support)
        if b <= a:
            return 0.0
        if self.antiderivative is not None:
            return float(self.antiderivative(b) - self.antiderivative(a))
        return _adaptive_gauss(self._eval, a, b, 1e-14)


def _vectorized(shape: Callable) -> Callable[[np.ndarray], np.ndarray]:
    probe = np.array([0.0, 0.25, 0.5])
    try:
        out = np.asarray(shape(probe), dtype=float)
        if out.shape == probe.shape:
            return lambda x: np.asarray(shape(x), dtype=float)
    except Exception:
        pass
    vec = np.vectorize(shape, otypes=[float])
    return lambda x: vec(x)


@dataclass(frozen=True)
class DiscreteWeights:
    """Per-cell integrals of a kernel on an N-cell grid.

    Downstream weights w_j integrate the shape over [j*h, (j+1)*h] for
    j = 0..N-1. Upstream weights are stored as a length-N array with
    index 0 fixed at zero; entry j integrates the shape over
    [1-j*h, 1-(j-1)*h] for j = 1..N-1, so the own cell is excluded.
    """

    direction: str
    n_cells: int
    weights: np.ndarray

    def __post_init__(self) -> None:
        if self.direction not in _VALID_DIRECTIONS:
            raise ValueError(f"direction must be one of {_VALID_DIRECTIONS}")
        w = np.array(self.weights, dtype=float, copy=True)
        if w.ndim != 1 or w.size != self.n_cells:
            raise ValueError("weights must be a length n_cells vector")
        if np.any(w < -1e-12):
            raise ValueError("weights must be non-negative")
        np.maximum(w, 0.0, out=w)
        if self.direction == "upstream" and w[0] != 0.0:
            raise ValueError("upstream weights must have weights[0] == 0")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def builtin_uniform_downstream(eta: float) -> KernelSpec:
    """Uniform look-ahead kernel of height 1/eta on [0, eta]."""
    if not (0.0 < eta <= 1.0):
        raise ValueError("eta must lie in (0, 1]")
    inv = 1.0 / eta

    def shape(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= eta), inv, 0.0)

    def antiderivative(x):
        return np.clip(np.asarray(x, dtype=float), 0.0, eta) * inv

    return KernelSpec(
        direction="downstream",
        support=eta,
        shape=shape,
        antiderivative=antiderivative,
        normalized=True,
    )


def builtin_linear_upstream(zeta: float) -> KernelSpec:
    """Linear look-behind kernel 1 - x on [0, zeta], zero beyond."""
    if not (0.0 < zeta <= 1.0):
        raise ValueError("zeta must lie in (0, 1]")

    def shape(x):
        x = np.asarray(x, dtype=float)
        return np.where((x >= 0.0) & (x <= zeta), 1.0 - x, 0.0)

    def antiderivative(x):
        xc = np.clip(np.asarray(x, dtype=float), 0.0, zeta)
        return xc - 0.5 * xc * xc

    return KernelSpec(
        direction="upstream",
        support=zeta,
        shape=shape,
        antiderivative=antiderivative,
        normalized=False,
    )


def sigma(kernel: KernelSpec) -> float:
    """Total mass of an upstream kernel; the nudging argument at uniform
    density rho is sigma * rho."""
    if kernel.direction != "upstream":
        raise ValueError("sigma is defined for upstream kernels")
    return kernel.integral(0.0, kernel.support)


def discretize(kernel: KernelSpec, n_cells: int) -> DiscreteWeights:
    """Exact per-cell weights of a kernel on an n_cells grid."""
    if n_cells < 3:
        raise ValueError("n_cells must be at least 3")
    edges = np.linspace(0.0, 1.0, n_cells + 1)
    cell = np.array(
        [kernel.integral(edges[i], edges[i + 1]) for i in range(n_cells)]
    )
    if kernel.direction == "downstream":
        weights = cell
    else:
        weights = np.zeros(n_cells)
        # upstream entry j covers the cell [(N-j)h, (N-j+1)h]
        weights[1:] = cell[n_cells - 1 : 0 : -1]
    return DiscreteWeights(direction=kernel.direction, n_cells=n_cells, weights=weights)


def apply_weights(weights: DiscreteWeights, profile, base_cell: int) -> float:
    """Weighted cyclic sum sum_j w_j * rho_{(base_cell + j) mod N}."""
    vals = np.asarray(getattr(profile, "values", profile), dtype=float)
    n = weights.n_cells
    if vals.size != n:
        raise ValueError("profile size must match the weights")
    idx = (int(base_cell) + np.arange(n)) % n
    return float(np.dot(weights.weights, vals[idx]))


def correlate_ring(weights: np.ndarray, values: np.ndarray) -> np.ndarray:
    """out[i] = sum_j weights[j] * values[(i + j) mod N] for every i.

    Direct summation over the taps (trailing zero weights trimmed). Every
    output element accumulates in the same tap order, so cyclically
    shifting the input shifts the output bitwise exactly.
    """
    w = np.asarray(weights, dtype=float)
    vals = np.asarray(values, dtype=float)
    n = vals.size
    if w.size != n:
        raise ValueError("weights and values must have equal length")
    nz = np.flatnonzero(w)
    if nz.size == 0:
        return np.zeros(n)
    k = int(nz[-1]) + 1
    ext = np.concatenate([vals, vals[: k - 1]]) if k > 1 else vals
    return np.correlate(ext, w[:k], mode="valid")


def shift_identity_residuals(weights: DiscreteWeights, rho: np.ndarray) -> np.ndarray:
    """Six |LHS - RHS| residuals of the cyclic-shift summation identities.

    The identities relate weighted sums of shifted profiles to first and
    second difference quotients of the profile. Three use the downstream
    indexing convention (all N weights), three the upstream convention
    (weight index 0 ignored). They are exact in real arithmetic for any
    weight sequence, so the residuals measure rounding only.
    """
    rho = np.asarray(rho, dtype=float)
    n = rho.size
    if n < 5:
        raise ValueError("identities need at least 5 cells")
    if weights.n_cells != n:
        raise ValueError("weights and rho must have equal length")
    if np.any(rho <= 0.0):
        raise ValueError("rho must be strictly positive")
    w = weights.weights
    h = 1.0 / n

    def shifted(v: np.ndarray, k: int) -> np.ndarray:
        return np.roll(v, -k)

    def b_down(v: np.ndarray) -> float:
        return float(np.dot(w, v))

    def b_up(v: np.ndarray) -> float:
        return float(np.dot(w[1:], v[1:]))

    y = (shifted(rho, 1) - rho) / h
    phi = (shifted(rho, 2) - 2.0 * shifted(rho, 1) + rho) / h**2

    r = [b_down(shifted(rho, k)) for k in range(4)]
    rb = [b_up(shifted(rho, k)) for k in range(4)]

    dw = w[:-1] - w[1:]          # dw[i-1] = w_{i-1} - w_i for i = 1..N-1
    du = w[2:] - w[1:-1]         # du[i-2] = w_i - w_{i-1} for i = 2..N-1

    res = np.empty(6)
    # first shift difference, downstream convention
    rhs = float(np.dot(rho[1:], dw)) - rho[0] * (w[0] - w[-1])
    res[0] = abs((r[1] - r[0]) - rhs)
    # first shift difference, upstream convention
    rhs = rho[0] * w[-1] - float(np.dot(rho[2:], du)) - rho[1] * w[1]
    res[1] = abs((rb[1] - rb[0]) - rhs)
    # second shift difference, downstream convention
    rhs = h * y[0] * (w[0] - w[-1]) - h * float(np.dot(y[1:], dw))
    res[2] = abs((2.0 * r[1] - r[0] - r[2]) - rhs)
    # second shift difference, upstream convention
    rhs = h * float(np.dot(y[2:], du)) + h * y[1] * w[1] - h * y[0] * w[-1]
    res[3] = abs((2.0 * rb[1] - rb[0] - rb[2]) - rhs)
    # third shift difference, downstream convention
    rhs = h**2 * float(np.dot(phi[1:], dw)) - h**2 * phi[0] * (w[0] - w[-1])
    res[4] = abs((3.0 * r[1] + r[3] - r[0] - 3.0 * r[2]) - rhs)
    # third shift difference, upstream convention
    rhs = h**2 * phi[0] * w[-1] - h**2 * phi[1] * w[1] - h**2 * float(np.dot(phi[2:], du))
    res[5] = abs((3.0 * rb[1] + rb[3] - rb[0] - 3.0 * rb[2]) - rhs)
    return res
