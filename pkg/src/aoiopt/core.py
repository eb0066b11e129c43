"""Small value types shared across modules."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DegenerateProcessError, ParameterError

Z_MAX = 10


@dataclass(frozen=True)
class SecondOrderPoint:
    """Mean ``m`` and temporal variance ``v2`` of a 0/1 delivery process.

    Construction does not validate so that an unused (e.g. zero-weight)
    side of the objective can still be carried around; call
    :meth:`validate` before using it.
    """

    m: float
    v2: float

    def validate(self) -> None:
        if not math.isfinite(self.m) or self.m <= 0.0:
            raise DegenerateProcessError(f"mean must be in (0, 1], got {self.m!r}")
        if self.m > 1.0 + 1e-12:
            raise ParameterError(f"mean must be in (0, 1], got {self.m!r}")
        if not math.isfinite(self.v2) or self.v2 < 0.0:
            raise ParameterError(f"temporal variance must be >= 0, got {self.v2!r}")


@dataclass(frozen=True)
class Objective:
    """Weighted z-th-root objective: w for active users, 1 - w for passive."""

    w: float
    z: int

    def __post_init__(self):
        if not 0.0 <= self.w <= 1.0:
            raise ParameterError(f"w must be in [0, 1], got {self.w!r}")
        if int(self.z) != self.z or not 1 <= self.z <= Z_MAX:
            raise ParameterError(f"z must be an integer in [1, {Z_MAX}], got {self.z!r}")
        object.__setattr__(self, "z", int(self.z))


@dataclass(frozen=True)
class NetworkShape:
    """C clusters of N mutually interfering active users."""

    C: int
    N: int

    def __post_init__(self):
        for name in ("C", "N"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ParameterError(f"{name} must be a positive integer, got {val!r}")
            object.__setattr__(self, name, int(val))

    @property
    def users(self) -> int:
        return self.C * self.N
