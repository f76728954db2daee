"""Stochastic wind injection: Weibull speed, power curve, seeded sampling.

The injected power distribution is mixed: point masses at zero (speeds below
cut-in or at/above cut-out) and at rated power (the plateau between rated
speed and cut-out), with a continuous part in between. Sampling goes through
the speed domain by inverse CDF, so the transformed density never has to be
constructed explicitly.

Default curve breakpoints and Weibull parameters are plain configuration
placeholders, not measured turbine data.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class WindModel:
    """Weibull wind-speed model plus a cut-in/rated/cut-out power curve."""

    shape: float = 2.0        # Weibull shape k
    scale: float = 9.0        # Weibull scale, m/s
    cut_in: float = 3.0       # m/s
    rated_speed: float = 12.0  # m/s
    cut_out: float = 25.0     # m/s
    rated_power: float = 1.0  # p.u.
    base_power: float = 0.0   # operating-point wind injection P_w0, p.u.

    def __post_init__(self):
        if not (0 < self.cut_in < self.rated_speed < self.cut_out):
            raise ValidationError(
                "power curve needs 0 < cut_in < rated_speed < cut_out")
        if self.rated_power <= 0:
            raise ValidationError("rated power must be > 0")
        if self.shape <= 0 or self.scale <= 0:
            raise ValidationError("Weibull shape and scale must be > 0")
        if self.base_power < 0:
            raise ValidationError("base wind power must be >= 0")


def power_curve(v, model: WindModel):
    """Deterministic speed-to-power map, p.u.

    Zero below cut-in and at/above cut-out, rated on [rated_speed, cut_out),
    cubic interpolation P_r (v^3 - v_ci^3) / (v_r^3 - v_ci^3) in between.
    """
    v = np.asarray(v, dtype=float)
    ci, vr, co = model.cut_in, model.rated_speed, model.cut_out
    ramp = model.rated_power * (v**3 - ci**3) / (vr**3 - ci**3)
    p = np.where(v < ci, 0.0,
                 np.where(v < vr, ramp,
                          np.where(v < co, model.rated_power, 0.0)))
    return float(p) if p.ndim == 0 else p


def sample_wind_speed(model: WindModel, n: int, seed: int) -> np.ndarray:
    """Weibull speeds by inverse-CDF transform of a seeded uniform stream."""
    if n < 1:
        raise ValidationError("sample count must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random(n)
    return model.scale * (-np.log1p(-u)) ** (1.0 / model.shape)


def sample_wind_power(model: WindModel, n: int, seed: int) -> np.ndarray:
    """Injected-power samples: Weibull speeds mapped through the power curve.

    Deterministic: the same (model, n, seed) always yields the same vector.
    """
    return power_curve(sample_wind_speed(model, n, seed), model)
