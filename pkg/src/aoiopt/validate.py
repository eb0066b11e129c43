"""Acceptance checks shared by ``aoiopt validate`` and the test suite.

Each check returns :class:`Check` records; a check passes only at the
stated tolerance.  Mismatch bounds carry an absolute slack of two
percentage points because the reference bounds are themselves maxima of
noisy simulations.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from . import oracle, simnet
from .core import NetworkShape, Objective, SecondOrderPoint
from .experiments import (
    COMPARE_SCREEN,
    ExperimentConfig,
    run_compare,
    run_mismatch,
    run_optimality,
    two_state_mismatch_grid,
    worst_mismatch,
)
from .secondorder import approx_aoi_moment
from .twostate import (
    LambdaTheta,
    TwoStateParams,
    cubic_roots,
    two_state_means,
    two_state_moments,
    two_state_variances,
)
from .wag import WagParams, wag_means, wag_moments, wag_phi_array, wag_variances

SLACK = 0.02


@dataclass
class Check:
    name: str
    passed: bool
    measured: float
    limit: float
    detail: str = ""
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return (f"[{tag}] {self.name}: measured={self.measured:.6g} limit={self.limit:.6g}"
                f" ({self.seconds:.1f}s) {self.detail}").rstrip()


def _timed(fn):
    def wrapper(*args, **kwargs):
        t0 = time.perf_counter()
        checks = fn(*args, **kwargs)
        dt = time.perf_counter() - t0
        for c in checks:
            c.seconds = dt
        return checks

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _le(name, measured, limit, detail="") -> Check:
    return Check(name, bool(measured <= limit), float(measured), float(limit), detail)


# ---------------------------------------------------------------------------
# Deterministic equivalences
# ---------------------------------------------------------------------------

TWO_STATE_GRID = {
    "lam": (0.15, 0.25, 0.4),
    "theta": (-0.15, 0.0, 0.5),
    "shapes": ((1, 2), (2, 2), (2, 4)),
}


@_timed
def check_two_state_oracle(k_trunc: int = 1000) -> list[Check]:
    """Closed-form means/variances against matrix-power autocovariances."""
    worst_m = worst_v = 0.0
    for lam in TWO_STATE_GRID["lam"]:
        for theta in TWO_STATE_GRID["theta"]:
            lt = LambdaTheta(lam, theta)
            params = lt.to_params()
            chain = oracle.two_state_chain(params.r, params.s)
            for C, N in TWO_STATE_GRID["shapes"]:
                shape = NetworkShape(C, N)
                ref = oracle.exact_mean_variance(chain, shape, k_trunc)
                m_a, m_p = two_state_means(lt, shape)
                v_a2, v_p2 = two_state_variances(lt, shape, k_trunc)
                worst_m = max(worst_m, abs(m_a - ref.m_a), abs(m_p - ref.m_p))
                worst_v = max(worst_v, abs(v_a2 - ref.v_a2), abs(v_p2 - ref.v_p2))
    return [
        _le("C1 two-state means vs oracle", worst_m, 1e-9, "27 cells"),
        _le("C1 two-state variances vs oracle", worst_v, 1e-8, "27 cells"),
    ]


@_timed
def check_wag_oracle(k_trunc: int = 1000) -> list[Check]:
    worst_m = worst_v = 0.0
    shapes = ((1, 1), (1, 4), (2, 4), (4, 2))
    for r in (0.1, 0.3, 0.5, 0.7):
        for H in (0, 1, 2, 4):
            params = WagParams(r, H)
            chain = oracle.wag_chain(r, H)
            for C, N in shapes:
                shape = NetworkShape(C, N)
                ref = oracle.exact_mean_variance(chain, shape, k_trunc)
                m_a, m_p = wag_means(params, shape)
                v_a2, v_p2 = wag_variances(params, shape, k_trunc)
                worst_m = max(worst_m, abs(m_a - ref.m_a), abs(m_p - ref.m_p))
                worst_v = max(worst_v, abs(v_a2 - ref.v_a2), abs(v_p2 - ref.v_p2))
    return [
        _le("C2 WaG means vs oracle", worst_m, 1e-12, "64 cells"),
        _le("C2 WaG variances vs oracle", worst_v, 1e-8, "64 cells"),
    ]


def phi_recursion(k_max: int, r: float, H: int) -> np.ndarray:
    """phi(k) = (1-r) phi(k-1) + r phi(k-H-2), phi(1) = 1, phi(k<=0) = 0."""
    phi = np.zeros(k_max + 1)
    phi[1] = 1.0
    for k in range(2, k_max + 1):
        back = k - H - 2
        phi[k] = (1.0 - r) * phi[k - 1] + (r * phi[back] if back >= 1 else 0.0)
    return phi


@_timed
def check_phi_identity(k_max: int = 300) -> list[Check]:
    worst = 0.0
    for r in np.round(np.arange(0.1, 0.95, 0.1), 10):
        for H in range(0, 7):
            closed = wag_phi_array(k_max, WagParams(float(r), H))
            worst = max(worst, float(np.max(np.abs(closed - phi_recursion(k_max, float(r), H)))))
    return [_le("C3 phi closed form vs recursion", worst, 1e-12, f"k<={k_max}, 63 (r,H) pairs")]


@_timed
def check_h0_reduction() -> list[Check]:
    worst = 0.0
    shapes = (NetworkShape(1, 1), NetworkShape(1, 4), NetworkShape(2, 4))
    objs = (Objective(1.0, 1), Objective(0.5, 2), Objective(0.8, 3))
    for r in np.round(np.arange(0.1, 0.95, 0.1), 10):
        for shape in shapes:
            a = WagParams(float(r), 0)
            b = TwoStateParams(float(r), 1.0)
            lt = b.to_lambda_theta()
            pairs = list(zip(wag_means(a, shape), two_state_means(lt, shape)))
            pairs += list(zip(wag_variances(a, shape), two_state_variances(lt, shape)))
            for obj in objs:
                pairs += list(zip(wag_moments(a, shape, obj), two_state_moments(b, shape, obj)))
            worst = max(worst, max(abs(x - y) for x, y in pairs))
    return [_le("C4 WaG H=0 equals two-state s=1", worst, 1e-9, "r in 0.1..0.9")]


@_timed
def check_lemma_roots() -> list[Check]:
    margin_a = min(cubic_roots(NetworkShape(1, N)).alpha - 1.0 / N for N in range(5, 201))
    margin_b = min(
        cubic_roots(NetworkShape(C, N)).beta - 1.0 / N
        for C in range(1, 9)
        for N in range(C + 5, 201)
    )
    return [
        Check("C9 alpha > 1/N for N in [5,200]", margin_a > 0.0, margin_a, 0.0, "min(alpha-1/N)"),
        Check("C9 beta > 1/N for C<=8, N>C+4", margin_b > 0.0, margin_b, 0.0, "min(beta-1/N)"),
    ]


# ---------------------------------------------------------------------------
# Mismatch bounds (criteria 5, 6, 10)
# ---------------------------------------------------------------------------


def two_state_bound(user: str, z: int) -> float:
    base = {1: (0.01, 0.01), 2: (0.15, 0.10), 3: (0.25, 0.15)}[z]
    return (base[0] if user == "active" else base[1]) + SLACK


def wag_bound(shape: tuple[int, int], user: str, z: int) -> float:
    if user == "active":
        return (0.057 if z <= 2 else 0.10) + SLACK
    return (0.10 if shape == (1, 1) else 0.18) + SLACK


def _bound_checks(prefix: str, worst: dict, bound) -> list[Check]:
    checks = []
    for (C, N, user, z), val in sorted(worst.items()):
        checks.append(_le(f"{prefix} C={C} N={N} {user} z={z}", val, bound((C, N), user, z)))
    return checks


@_timed
def check_two_state_mismatch(runs: int = 100, slots: int = 10_000, rows=None) -> list[Check]:
    if rows is None:
        rows = run_mismatch(ExperimentConfig("mismatch-two-state", runs=runs, slots=slots))
    return _bound_checks("C5 two-state mismatch", worst_mismatch(rows),
                         lambda shape, user, z: two_state_bound(user, z))


@_timed
def check_wag_mismatch(runs: int = 100, slots: int = 10_000, rows=None) -> list[Check]:
    if rows is None:
        rows = run_mismatch(ExperimentConfig("mismatch-wag", runs=runs, slots=slots))
    return _bound_checks("C6 WaG mismatch", worst_mismatch(rows), wag_bound)


def exact_mismatch_table(z_max: int = 3) -> dict[tuple, dict]:
    """Approximation error against exact AoI moments on the mismatch grids.

    Returns {(model, C, N, user, z): worst relative error of the z-th root}.
    """
    out: dict[tuple, float] = {}

    def record(model, shape, m_v, exact):
        for user, (m, v2), mom in zip(("active", "passive"), m_v, (exact.active, exact.passive)):
            for z in range(1, z_max + 1):
                approx = approx_aoi_moment(SecondOrderPoint(m, v2), z) ** (1.0 / z)
                true = mom[z - 1] ** (1.0 / z)
                key = (model, shape.C, shape.N, user, z)
                out[key] = max(out.get(key, 0.0), abs(approx - true) / true)

    for C, N in ((1, 1), (2, 4)):
        shape = NetworkShape(C, N)
        for s in (1.0, 0.8):
            for r in two_state_mismatch_grid(shape, s):
                lt = TwoStateParams(r, s).to_lambda_theta()
                m_a, m_p = two_state_means(lt, shape)
                v_a2, v_p2 = two_state_variances(lt, shape)
                exact = oracle.exact_aoi_moments(oracle.two_state_chain(r, s), shape, z_max)
                record("two-state", shape, ((m_a, v_a2), (m_p, v_p2)), exact)
        for r in (0.3, 0.5):
            for H in range(1, 9):
                params = WagParams(r, H)
                m_a, m_p = wag_means(params, shape)
                v_a2, v_p2 = wag_variances(params, shape)
                exact = oracle.exact_aoi_moments(oracle.wag_chain(r, H), shape, z_max)
                record("wag", shape, ((m_a, v_a2), (m_p, v_p2)), exact)
    return out


@_timed
def check_exact_error() -> list[Check]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        table = exact_mismatch_table()
    checks = []
    finite = all(math.isfinite(v) for v in table.values())
    checks.append(Check("C10 exact-oracle errors finite", finite, float(len(table)), float(len(table))))
    for (model, C, N, user, z), val in sorted(table.items()):
        limit = two_state_bound(user, z) if model == "two-state" else wag_bound((C, N), user, z)
        checks.append(_le(f"C10 exact error {model} C={C} N={N} {user} z={z}", val, limit))
    return checks


# ---------------------------------------------------------------------------
# Optimality and comparison (criteria 7, 8)
# ---------------------------------------------------------------------------


@_timed
def check_optimality(runs: int = 100, slots: int = 10_000, rows=None) -> list[Check]:
    if rows is None:
        rows = run_optimality(ExperimentConfig("optimality", runs=runs, slots=slots))
    active = [r for r in rows if r.w == 1.0]
    passive = [r for r in rows if r.w == 0.0]
    gap = max(r.mismatch for r in active)
    share = sum(r.param2 == 1.0 for r in active) / len(active)
    off = [r for r in passive if r.param2 != 1.0]
    worst_off = max((r.mismatch for r in off), default=0.0)
    return [
        _le("C7 active gap s=1 vs best s", gap, 0.0217 + SLACK,
            f"s=1 best in {100 * share:.0f}% of {len(active)} active cells"),
        Check("C7 passive best s is 1 in every cell", not off, float(len(off)), 0.0,
              f"{len(passive)} cells, largest gap where not: {worst_off:.3g}"),
        Check("s=1 best in at least 20% of active cells", share >= 0.2, share, 0.2),
    ]


def compare_rows(runs: int = 20, slots: int = 100_000, screen=COMPARE_SCREEN, shapes=None):
    cfg = ExperimentConfig("compare", runs=runs, slots=slots, screen=screen,
                           shapes=tuple(shapes or ()))
    return run_compare(cfg)


def compare_checks(rows) -> list[Check]:
    cells: dict[tuple, dict] = {}
    for row in rows:
        cells.setdefault((row.C, row.N, row.w, row.z), {})[row.policy] = row.f_value
    worst_base = -math.inf
    worst_opt = {1: -math.inf, 4: -math.inf}
    fails = []
    for (C, N, w, z), f in sorted(cells.items()):
        for base in ("slotted-aloha", "optimal-aloha", "ata"):
            margin = (f["wag"] - f[base]) / f[base]
            worst_base = max(worst_base, margin)
            if margin > 0.0:
                fails.append(f"C={C},N={N},w={w:.3g},z={z} vs {base}")
        gap = (f["wag"] - f["optimal-wag"]) / f["optimal-wag"]
        worst_opt[C] = max(worst_opt.get(C, -math.inf), gap)
    checks = [
        _le("C8 WaG F <= ALOHA baselines in every cell", worst_base, 0.0,
            ("failing: " + "; ".join(fails)) if fails else f"{len(cells)} cells, max relative excess"),
    ]
    for C, limit in ((1, 0.11), (4, 0.08)):
        if math.isfinite(worst_opt.get(C, -math.inf)):
            checks.append(_le(f"C8 WaG within {limit:.0%} of optimal WaG, C={C}", worst_opt[C], limit))
    return checks


@_timed
def check_compare(runs: int = 20, slots: int = 100_000) -> list[Check]:
    return compare_checks(compare_rows(runs, slots))


VALIDATIONS = {
    "oracle": (check_two_state_oracle, check_wag_oracle, check_phi_identity, check_h0_reduction,
               check_exact_error),
    "lemmas": (check_lemma_roots,),
    "mismatch": (check_two_state_mismatch, check_wag_mismatch),
    "optimality": (check_optimality,),
}
