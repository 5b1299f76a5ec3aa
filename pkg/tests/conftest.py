"""Shared builders for the test suite."""

from __future__ import annotations

import math

import ringflow as rf


def step41_ic(x: float) -> float:
    return 2.35 if (0.5 - 1e-12) <= x <= (0.75 + 1e-12) else 0.55


def sine_ic(amplitude: float, frequency: int, mean: float = 1.0):
    def ic(x: float) -> float:
        return mean + amplitude * math.sin(2.0 * math.pi * frequency * x)

    return ic


def model3_law(zeta: float = 1.0) -> rf.SpeedLaw:
    a = 1.8 / (zeta * (2.0 - zeta))
    return rf.make_speed_law(rf.builtin_exp_f(0.75, 1.0), rf.builtin_logistic_g(0.6, a))


def model2_law() -> rf.SpeedLaw:
    return rf.make_speed_law(rf.builtin_exp_f(0.96, 1.0))
