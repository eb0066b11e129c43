"""Two-state (Idle/TX) transmission policy: moments, optimizer and lemma checks."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .core import NetworkShape, Objective, SecondOrderPoint
from .errors import DegenerateChainError, DegenerateProcessError, ParameterError
from .secondorder import approx_aoi_moment

K_TRUNC = 1000
ROOT_TOL = 1e-12


@dataclass(frozen=True)
class TwoStateParams:
    """Idle -> TX probability ``r`` and TX -> Idle probability ``s``."""

    r: float
    s: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.s <= 1.0):
            raise ParameterError(f"r and s must lie in [0, 1], got r={self.r}, s={self.s}")
        if self.r + self.s <= 0.0:
            raise DegenerateChainError("r + s must be positive")

    def to_lambda_theta(self) -> "LambdaTheta":
        return LambdaTheta(self.r / (self.r + self.s), 1.0 - self.r - self.s)


@dataclass(frozen=True)
class LambdaTheta:
    """Stationary TX probability ``lam`` and second eigenvalue ``theta``."""

    lam: float
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        lo = theta_lower_bound(self.lam)
        if not (lo - 1e-12 <= self.theta <= 1.0):
            raise ParameterError(
                f"theta={self.theta} outside feasible range [{lo}, 1] for lambda={self.lam}"
            )

    def to_params(self) -> TwoStateParams:
        r = self.lam * (1.0 - self.theta)
        s = (1.0 - self.lam) * (1.0 - self.theta)
        return TwoStateParams(min(max(r, 0.0), 1.0), min(max(s, 0.0), 1.0))


def theta_lower_bound(lam: float) -> float:
    """Smallest theta for which both r and s stay within [0, 1]."""
    if lam <= 0.0 or lam >= 1.0:
        return 0.0
    return max((lam - 1.0) / lam, -lam / (1.0 - lam))


def two_state_means(lt: LambdaTheta, shape: NetworkShape) -> tuple[float, float]:
    m_a = lt.lam * (1.0 - lt.lam) ** (shape.N - 1)
    m_p = (1.0 - lt.lam) ** shape.users
    return m_a, m_p


def _clamp(v2: float, label: str) -> float:
    if v2 < 0.0:
        warnings.warn(f"{label} truncated variance {v2:.3e} < 0 clamped to 0", stacklevel=3)
        return 0.0
    return v2


def two_state_variances(
    lt: LambdaTheta, shape: NetworkShape, k_trunc: int = K_TRUNC
) -> tuple[float, float]:
    """Temporal variances (v_a^2, v_p^2), summing covariances up to ``k_trunc``."""
    if abs(lt.theta) >= 1.0:
        raise DegenerateChainError(f"|theta| must be < 1, got {lt.theta}")
    if k_trunc < 1:
        raise ParameterError("k_trunc must be >= 1")
    lam, theta = lt.lam, lt.theta
    m_a, m_p = two_state_means(lt, shape)
    th = theta ** np.arange(1, k_trunc + 1, dtype=np.float64)
    g = lam + (1.0 - lam) * th  # P(TX at k+1 | TX at 1)
    gbar = 1.0 - lam + lam * th  # P(Idle at k+1 | Idle at 1)
    v_a2 = m_a - m_a**2 + 2.0 * m_a * np.sum(g * gbar ** (shape.N - 1) - m_a)
    v_p2 = m_p - m_p**2 + 2.0 * m_p * np.sum(gbar**shape.users - m_p)
    return _clamp(float(v_a2), "active"), _clamp(float(v_p2), "passive")


def _side_moment(m: float, v2: float, z: int, weight: float) -> float:
    try:
        return approx_aoi_moment(SecondOrderPoint(m, v2), z) ** (1.0 / z)
    except DegenerateProcessError:
        if weight == 0.0:
            return math.nan
        raise


def moments_from_points(
    m_a: float, v_a2: float, m_p: float, v_p2: float, obj: Objective
) -> tuple[float, float, float]:
    """z-th roots of both approximate moments plus the weighted objective."""
    aoi_a = _side_moment(m_a, v_a2, obj.z, obj.w)
    aoi_p = _side_moment(m_p, v_p2, obj.z, 1.0 - obj.w)
    f = 0.0
    if obj.w > 0.0:
        f += obj.w * aoi_a
    if obj.w < 1.0:
        f += (1.0 - obj.w) * aoi_p
    return aoi_a, aoi_p, f


def two_state_moments(
    params: TwoStateParams,
    shape: NetworkShape,
    obj: Objective,
    k_trunc: int = K_TRUNC,
) -> tuple[float, float, float]:
    lt = params.to_lambda_theta()
    m_a, m_p = two_state_means(lt, shape)
    if m_a <= 0.0 and obj.w > 0.0:
        raise DegenerateProcessError(f"active delivery mean is zero for {params}")
    if m_p <= 0.0 and obj.w < 1.0:
        raise DegenerateProcessError(f"passive detection mean is zero for {params}")
    v_a2, v_p2 = two_state_variances(lt, shape, k_trunc)
    return moments_from_points(m_a, v_a2, m_p, v_p2, obj)


def lambda_grid(shape: NetworkShape, step: float = 0.01) -> np.ndarray:
    """Optimizer grid over lambda in (0, 1/N], kept below 1/2 so r <= 1 and theta > -1."""
    if step <= 0.0:
        raise ParameterError("step must be positive")
    upper = 1.0 / shape.N
    n = int(math.floor(upper / step + 1e-9))
    lams = step * np.arange(1, n + 1)
    return lams[lams < 0.5 - 1e-12]


def optimize_two_state(
    shape: NetworkShape,
    obj: Objective,
    r_step: float = 0.01,
    k_trunc: int = K_TRUNC,
) -> tuple[TwoStateParams, float]:
    """Line search over lambda with s = 1 (r = lambda / (1 - lambda)).

    Ties go to the smaller r; r increases with lambda so the first grid
    minimum wins.
    """
    best, f_best = None, math.inf
    for lam in lambda_grid(shape, r_step):
        params = TwoStateParams(lam / (1.0 - lam), 1.0)
        f = two_state_moments(params, shape, obj, k_trunc)[2]
        if f < f_best:
            best, f_best = params, f
    return best, f_best


# ---------------------------------------------------------------------------
# Cubic polynomials bounding the range where s = 1 is optimal
# ---------------------------------------------------------------------------


def h_active(y, N: int):
    return -(N + 8) * y**3 - (N - 13) * y**2 - 6 * y + 1


def h_passive(y, CN: int):
    return (CN - 10) * y**3 - (CN - 13) * y**2 - 6 * y + 1


def bisect_root(f, lo: float = 0.0, hi: float = 1.0, tol: float = ROOT_TOL) -> float:
    """Root of ``f`` on ``[lo, hi]`` by bisection; requires a sign change."""
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0.0:
        raise ValueError(f"no sign change on [{lo}, {hi}]")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm) < tol or hi - lo < 1e-15:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class CubicRootsReport:
    alpha: float
    beta: float
    residual_alpha: float
    residual_beta: float


def cubic_roots(shape: NetworkShape) -> CubicRootsReport:
    N, CN = shape.N, shape.users
    fa = lambda y: h_active(y, N)  # noqa: E731
    fb = lambda y: h_passive(y, CN)  # noqa: E731
    alpha = bisect_root(fa)
    beta = bisect_root(fb)
    return CubicRootsReport(alpha, beta, abs(fa(alpha)), abs(fb(beta)))


# ---------------------------------------------------------------------------
# Numerical lemma checks
# ---------------------------------------------------------------------------


@dataclass
class GridSpec:
    lambdas: tuple[float, ...] = tuple(np.round(np.arange(0.01, 1.0, 0.01), 10))
    thetas: tuple[float, ...] = tuple(np.round(np.arange(-0.95, 0.96, 0.05), 10))
    alpha_N: tuple[int, int] = (5, 200)
    beta_C: tuple[int, int] = (1, 8)
    beta_N_max: int = 200


@dataclass
class ClaimResult:
    name: str
    passed: bool
    checked: int
    worst_margin: float
    detail: str = ""


@dataclass
class LemmaReport:
    claims: list[ClaimResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.claims)


def _f_tilde(lam: float, theta: float, shape: NetworkShape, obj: Objective, k_trunc: int) -> float:
    lt = LambdaTheta(lam, theta)
    m_a, m_p = two_state_means(lt, shape)
    v_a2, v_p2 = two_state_variances(lt, shape, k_trunc)
    return moments_from_points(m_a, v_a2, m_p, v_p2, obj)[2]


def lemma_checks(
    shape: NetworkShape,
    obj: Objective,
    grid: GridSpec | None = None,
    k_trunc: int = K_TRUNC,
    rel_tol: float = 1e-12,
) -> LemmaReport:
    """Check on a grid: (a) theta > 0 never beats theta = 0; (b) F is
    non-decreasing in lambda beyond 1/N for fixed theta <= 0; (c) alpha and
    beta exceed 1/N in the stated (C, N) ranges.

    Margins are reported so that a negative worst margin shows by how much
    a claim fails.
    """
    grid = grid or GridSpec()
    report = LemmaReport()

    # (a)
    worst, count = math.inf, 0
    for lam in grid.lambdas:
        if not 0.0 < lam < 1.0:
            continue
        try:
            f0 = _f_tilde(lam, 0.0, shape, obj, k_trunc)
        except DegenerateProcessError:
            continue
        for theta in grid.thetas:
            if theta <= 0.0 or theta >= 1.0:
                continue
            f = _f_tilde(lam, theta, shape, obj, k_trunc)
            worst = min(worst, (f - f0) / f0)
            count += 1
    report.claims.append(
        ClaimResult("theta>0 dominated by theta=0", worst >= -rel_tol, count, worst)
    )

    # (b)
    worst, count = math.inf, 0
    for theta in grid.thetas:
        if theta > 0.0 or theta <= -1.0:
            continue
        lams = [
            lam
            for lam in grid.lambdas
            if lam > 1.0 / shape.N and 0.0 < lam < 1.0 and theta >= theta_lower_bound(lam) - 1e-12
        ]
        prev = None
        for lam in lams:
            try:
                f = _f_tilde(lam, theta, shape, obj, k_trunc)
            except DegenerateProcessError:
                prev = None
                continue
            if prev is not None:
                worst = min(worst, (f - prev) / prev)
                count += 1
            prev = f
    report.claims.append(
        ClaimResult(
            "F non-decreasing in lambda on (1/N, 1) for theta<=0",
            count == 0 or worst >= -rel_tol,
            count,
            worst,
        )
    )

    # (c)
    worst, count = math.inf, 0
    for N in range(grid.alpha_N[0], grid.alpha_N[1] + 1):
        rep = cubic_roots(NetworkShape(1, N))
        worst = min(worst, rep.alpha - 1.0 / N)
        count += 1
    report.claims.append(ClaimResult("alpha > 1/N for N > 4", worst > 0.0, count, worst))

    worst, count = math.inf, 0
    for C in range(grid.beta_C[0], grid.beta_C[1] + 1):
        for N in range(C + 5, grid.beta_N_max + 1):
            rep = cubic_roots(NetworkShape(C, N))
            worst = min(worst, rep.beta - 1.0 / N)
            count += 1
    report.claims.append(ClaimResult("beta > 1/N for N > C+4", worst > 0.0, count, worst))
    return report
