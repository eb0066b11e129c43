"""Wait-and-Go policy: Idle -(r)-> TX -> H Wait slots -> Idle.

States are numbered 0 (Idle), 1 (TX) and 2..H+1 (Wait), so Wait state i is
i-1 slots after the transmission.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gammaln

from .core import NetworkShape, Objective
from .errors import DegenerateProcessError, ParameterError
from .twostate import K_TRUNC, moments_from_points


@dataclass(frozen=True)
class WagParams:
    r: float
    H: int

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ParameterError(f"r must lie in (0, 1), got {self.r}")
        if int(self.H) != self.H or self.H < 0:
            raise ParameterError(f"H must be a non-negative integer, got {self.H}")
        object.__setattr__(self, "H", int(self.H))


@dataclass(frozen=True)
class WagStationary:
    q0: float
    q1: float


def wag_stationary(params: WagParams) -> WagStationary:
    r, H = params.r, params.H
    denom = (H + 1) * r + 1.0
    return WagStationary(1.0 / denom, r / denom)


@lru_cache(maxsize=64)
def _log_binomials(k_max: int, H: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flattened (k, eps, log C(k-1-(H+1)eps, eps)) over 1 <= eps <= (k-1)//(H+2)."""
    ks, eps = [], []
    for k in range(H + 3, k_max + 1):
        e = np.arange(1, (k - 1) // (H + 2) + 1)
        ks.append(np.full(e.shape, k))
        eps.append(e)
    if not ks:
        empty = np.zeros(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty
    k = np.concatenate(ks)
    e = np.concatenate(eps)
    top = k - 1 - (H + 1) * e
    logc = gammaln(top + 1.0) - gammaln(e + 1.0) - gammaln(top - e + 1.0)
    for arr in (k, e, logc):
        arr.setflags(write=False)
    return k, e, logc


@lru_cache(maxsize=256)
def _phi_cached(r: float, H: int, k_max: int) -> np.ndarray:
    out = np.zeros(k_max + 1)
    k = np.arange(1, k_max + 1)
    log1mr = math.log1p(-r)
    out[1:] = np.exp((k - 1) * log1mr)
    kk, ee, logc = _log_binomials(k_max, H)
    if kk.size:
        terms = np.exp(logc + ee * math.log(r) + (kk - 1 - (H + 2) * ee) * log1mr)
        out += np.bincount(kk, weights=terms, minlength=k_max + 1)
    out.setflags(write=False)
    return out


def wag_phi_array(k_max: int, params: WagParams) -> np.ndarray:
    """``phi(0..k_max)`` where ``phi(k) = P(Idle at slot k | Idle at slot 1)``."""
    return _phi_cached(float(params.r), params.H, int(k_max))


def wag_phi(k: int, params: WagParams) -> float:
    if k <= 0:
        return 0.0
    return float(wag_phi_array(int(k), params)[k])


def wag_tx_return(k: np.ndarray, params: WagParams, phi: np.ndarray) -> np.ndarray:
    """``P(TX at k+1 | TX at 1) = r * phi(k - H - 1)``; zero for k <= H+1."""
    idx = k - params.H - 1
    return np.where(idx >= 1, params.r * phi[np.clip(idx, 0, None)], 0.0)


def wag_not_tx_return(
    k: np.ndarray, params: WagParams, phi: np.ndarray, printed: bool = False
) -> np.ndarray:
    """``P(not TX at k+1 | not TX at 1)`` for an array of lags ``k >= 1``.

    The start state is Idle with probability 1/(Hr+1) or one of the Wait
    states with probability r/(Hr+1) each; the target ranges over Idle and
    the Wait states.  ``printed=True`` reproduces the published expression,
    which also weights the Idle target by ``r`` as if it were a Wait state;
    it does not converge to ``1 - q1`` and is kept only for diagnostics.
    """
    r, H = params.r, params.H
    k = np.asarray(k, dtype=np.int64)
    # prefix[n + off] = sum_{m <= n} phi(m), phi(m <= 0) = 0
    off = 2 * H + 2
    prefix = np.concatenate([np.zeros(off), np.cumsum(phi)])

    def window(hi):  # sum of phi(hi-H+1 .. hi)
        return prefix[hi + off] - prefix[hi - H + off]

    def at(n):
        return np.where(n >= 1, phi[np.clip(n, 0, len(phi) - 1)], 0.0)

    # no visit to Idle: Wait j at slot 1 shifts to Wait j+k
    total = r * np.maximum(H - k, 0)
    # target Idle
    if printed:
        total = total + r * at(k + 1) + r * r * window(k)
    else:
        total = total + at(k + 1) + r * window(k)
    # target Wait state i
    for i in range(2, H + 2):
        total = total + r * at(k + 1 - i) + r * r * window(k - i)
    return total / (H * r + 1.0)


def wag_means(params: WagParams, shape: NetworkShape) -> tuple[float, float]:
    q1 = wag_stationary(params).q1
    return q1 * (1.0 - q1) ** (shape.N - 1), (1.0 - q1) ** shape.users


def wag_variances(
    params: WagParams,
    shape: NetworkShape,
    k_trunc: int = K_TRUNC,
    printed: bool = False,
) -> tuple[float, float]:
    """Temporal variances with the CLT factor 2 on the covariance sum."""
    if k_trunc < 1:
        raise ParameterError("k_trunc must be >= 1")
    m_a, m_p = wag_means(params, shape)
    phi = wag_phi_array(k_trunc + 1, params)
    k = np.arange(1, k_trunc + 1)
    stay = wag_not_tx_return(k, params, phi, printed=printed)
    tx = wag_tx_return(k, params, phi)
    v_a2 = m_a - m_a**2 + 2.0 * m_a * np.sum(tx * stay ** (shape.N - 1) - m_a)
    v_p2 = m_p - m_p**2 + 2.0 * m_p * np.sum(stay**shape.users - m_p)
    out = []
    for label, v in (("active", float(v_a2)), ("passive", float(v_p2))):
        if v < 0.0:
            warnings.warn(f"{label} truncated variance {v:.3e} < 0 clamped to 0", stacklevel=2)
            v = 0.0
        out.append(v)
    return out[0], out[1]


def wag_moments(
    params: WagParams,
    shape: NetworkShape,
    obj: Objective,
    k_trunc: int = K_TRUNC,
) -> tuple[float, float, float]:
    m_a, m_p = wag_means(params, shape)
    if m_a <= 0.0 and obj.w > 0.0:
        raise DegenerateProcessError(f"active delivery mean is zero for {params}")
    v_a2, v_p2 = wag_variances(params, shape, k_trunc)
    return moments_from_points(m_a, v_a2, m_p, v_p2, obj)


def r_grid(step: float = 0.01) -> np.ndarray:
    if step <= 0.0 or step >= 1.0:
        raise ParameterError("r_step must lie in (0, 1)")
    n = int(math.floor(1.0 / step - 1e-9))
    return np.round(step * np.arange(1, n + 1), 12)


def optimize_wag(
    shape: NetworkShape,
    obj: Objective,
    r_step: float = 0.01,
    h_max: int = 15,
    k_trunc: int = K_TRUNC,
    h_min: int = 1,
) -> tuple[WagParams, float]:
    """Exhaustive (r, H) grid search; ties go to smaller H, then smaller r."""
    if h_max < h_min:
        raise ParameterError("h_max must be >= h_min")
    best, f_best = None, math.inf
    for H in range(h_min, h_max + 1):
        for r in r_grid(r_step):
            params = WagParams(float(r), H)
            f = wag_moments(params, shape, obj, k_trunc)[2]
            if f < f_best:
                best, f_best = params, f
    return best, f_best
