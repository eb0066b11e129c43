"""Approximate AoI moments from the (mean, temporal variance) of a delivery process.

Interdelivery times are modelled as first-hitting times of level 1 by a
Brownian motion with drift ``m`` and variance ``v2``, i.e. inverse-Gaussian
``IG(1/m, 1/v2)``.  The z-th AoI moment then follows from the renewal-reward
identity combined with Faulhaber's power-sum polynomial.
"""

from __future__ import annotations

import math
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .core import Z_MAX, Objective, SecondOrderPoint
from .errors import ParameterError

__all__ = [
    "bernoulli_numbers",
    "ig_moment",
    "approx_aoi_moment",
    "objective",
    "power_sum",
]


@lru_cache(maxsize=None)
def _bernoulli(n: int) -> tuple[Fraction, ...]:
    # B_m = -1/(m+1) * sum_{k<m} C(m+1, k) B_k, which yields B_1 = -1/2
    table = [Fraction(1)]
    for m in range(1, n + 1):
        acc = sum(math.comb(m + 1, k) * table[k] for k in range(m))
        table.append(-acc / (m + 1))
    return tuple(table)


def bernoulli_numbers(z_max: int) -> tuple[Fraction, ...]:
    """Exact Bernoulli numbers ``B_0 .. B_{z_max}`` (with ``B_1 = -1/2``)."""
    if int(z_max) != z_max or not 1 <= z_max <= Z_MAX:
        raise ParameterError(f"z_max must be an integer in [1, {Z_MAX}], got {z_max!r}")
    return _bernoulli(int(z_max))


def ig_moment(p: SecondOrderPoint, kappa: int) -> float:
    """kappa-th raw moment of the inverse-Gaussian interdelivery time."""
    p.validate()
    if int(kappa) != kappa or kappa < 1:
        raise ParameterError(f"kappa must be a positive integer, got {kappa!r}")
    kappa = int(kappa)
    # (2m/v2)^-zeta == (v2/2m)^zeta; v2 = 0 leaves only the zeta = 0 term
    ratio = p.v2 / (2.0 * p.m)
    total = 0.0
    for zeta in range(kappa):
        coef = math.factorial(kappa - 1 + zeta) / (
            math.factorial(zeta) * math.factorial(kappa - 1 - zeta)
        )
        total += coef * ratio**zeta
    return total / p.m**kappa


def approx_aoi_moment(p: SecondOrderPoint, z: int) -> float:
    """Second-order approximation of ``E[AoI^z]``."""
    if int(z) != z or not 1 <= z <= Z_MAX:
        raise ParameterError(f"z must be an integer in [1, {Z_MAX}], got {z!r}")
    z = int(z)
    bern = _bernoulli(z)
    moments = [None] + [ig_moment(p, k) for k in range(1, z + 2)]
    acc = moments[z + 1] / (z + 1) + moments[z] / 2.0
    for kappa in range(2, z + 1):
        if bern[kappa] == 0:
            continue
        coef = float(bern[kappa]) / math.factorial(kappa)
        coef *= math.factorial(z) / math.factorial(z - kappa + 1)
        acc += coef * moments[z - kappa + 1]
    return acc / moments[1]


def objective(
    active: SecondOrderPoint | None,
    passive: SecondOrderPoint | None,
    obj: Objective,
) -> float:
    """Approximate objective ``w * E[AoI_a^z]^(1/z) + (1-w) * E[AoI_p^z]^(1/z)``.

    A side whose weight is exactly zero is skipped and may be ``None`` or
    degenerate.
    """
    f = 0.0
    if obj.w > 0.0:
        f += obj.w * approx_aoi_moment(active, obj.z) ** (1.0 / obj.z)
    if obj.w < 1.0:
        f += (1.0 - obj.w) * approx_aoi_moment(passive, obj.z) ** (1.0 / obj.z)
    return f


@lru_cache(maxsize=None)
def _power_sum_coefficients(z: int) -> tuple[float, ...]:
    # sum_{k=1}^n k^z = 1/(z+1) sum_j C(z+1, j) B+_j n^(z+1-j), B+_1 = +1/2
    bern = list(_bernoulli(max(z, 1)))
    bern[1] = Fraction(1, 2)
    coefs = [Fraction(0)] * (z + 2)  # coefs[d] multiplies n^d
    for j in range(z + 1):
        coefs[z + 1 - j] += Fraction(math.comb(z + 1, j)) * bern[j] / (z + 1)
    return tuple(float(c) for c in coefs)


def power_sum(n, z: int):
    """Faulhaber power sum ``1^z + 2^z + ... + n^z`` evaluated elementwise."""
    coefs = _power_sum_coefficients(int(z))
    n = np.asarray(n, dtype=np.float64)
    out = np.zeros_like(n)
    for c in reversed(coefs):
        out = out * n + c
    return out
