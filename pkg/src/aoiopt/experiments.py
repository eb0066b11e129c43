"""Experiment drivers: approximation mismatch, s = 1 optimality, policy
comparison and analytic-versus-simulated efficiency.

Every driver returns flat :class:`Row` records (the CSV schema) so that
reports are a pure function of the rows.  User type is encoded through
``w``: rows with ``w = 1`` describe active users, ``w = 0`` passive users.
"""

from __future__ import annotations

import math
import time
import zlib
from dataclasses import dataclass, field, fields

import numpy as np

from . import simnet
from .core import NetworkShape, Objective, SecondOrderPoint
from .errors import DegenerateChainError, DegenerateProcessError, ParameterError
from .secondorder import approx_aoi_moment
from .twostate import (
    K_TRUNC,
    TwoStateParams,
    optimize_two_state,
    two_state_means,
    two_state_moments,
    two_state_variances,
)
from .wag import WagParams, optimize_wag, wag_means, wag_moments, wag_variances

CSV_FIELDS = (
    "experiment",
    "C",
    "N",
    "w",
    "z",
    "policy",
    "param1",
    "param2",
    "theoretical",
    "empirical",
    "mismatch",
    "f_value",
    "seed",
    "runs",
    "slots",
    "rng_id",
)

EXPERIMENTS = (
    "mismatch-two-state",
    "mismatch-wag",
    "optimality",
    "compare",
    "efficiency",
    "lemma-check",
    "approx",
    "optimize",
)


def default_seed(experiment: str) -> int:
    return 42 + zlib.crc32(experiment.encode("utf-8"))


def mismatch(theoretical: float, empirical: float) -> float:
    return abs(theoretical - empirical) / empirical


@dataclass
class Row:
    experiment: str
    C: int
    N: int
    w: float
    z: int
    policy: str
    param1: float
    param2: float
    theoretical: float
    empirical: float
    mismatch: float
    f_value: float
    seed: int
    runs: int
    slots: int
    rng_id: str = simnet.RNG_ID

    def values(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


@dataclass
class Timing:
    C: int
    N: int
    w: float
    z: int
    analytic_seconds: float
    simulated_seconds: float
    note: str = ""
    exhaustive_seconds: float = math.nan  # full-length sweep, extrapolated

    @property
    def ratio(self) -> float:
        return self.simulated_seconds / self.analytic_seconds

    @property
    def exhaustive_ratio(self) -> float:
        return self.exhaustive_seconds / self.analytic_seconds


@dataclass
class ExperimentConfig:
    experiment: str
    shapes: tuple[NetworkShape, ...] = ()
    z_list: tuple[int, ...] = (1, 2, 3)
    w_list: tuple[str, ...] = ("auto", "0.5")  # "auto" means N / (N + 1)
    slots: int = 10_000
    runs: int = 100
    seed: int | None = None
    k_trunc: int = K_TRUNC
    r_step: float = 0.01
    h_max: int = 15
    out_dir: str = "."
    format: str = "both"
    seq_file: str | None = None
    budget: int | None = None
    screen: simnet.Screen | None = None
    grid: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ParameterError(f"unknown experiment {self.experiment!r}")
        if not self.z_list or not self.w_list:
            raise ParameterError("z and w grids must be non-empty")
        if self.format not in ("csv", "svg", "both"):
            raise ParameterError(f"format must be csv, svg or both, got {self.format!r}")
        if self.seed is None:
            self.seed = default_seed(self.experiment)

    def weights(self, shape: NetworkShape) -> list[float]:
        out = []
        for w in self.w_list:
            val = shape.N / (shape.N + 1.0) if str(w) == "auto" else float(w)
            if val not in out:
                out.append(val)
        return out


# ---------------------------------------------------------------------------
# Approximation mismatch
# ---------------------------------------------------------------------------


def _approx_root(m: float, v2: float, z: int) -> float:
    try:
        return approx_aoi_moment(SecondOrderPoint(m, v2), z) ** (1.0 / z)
    except DegenerateProcessError:
        return math.nan


def _mismatch_rows(exp, cfg, shape, policy, points, res) -> list[Row]:
    (m_a, v_a2), (m_p, v_p2) = points
    rows = []
    p1, p2 = policy.params
    for z in cfg.z_list:
        for w, (m, v2) in ((1.0, (m_a, v_a2)), (0.0, (m_p, v_p2))):
            theo = _approx_root(m, v2, z)
            emp = res.aoi_root(z, active=w == 1.0)
            mis = mismatch(theo, emp) if math.isfinite(theo) else math.nan
            rows.append(
                Row(exp, shape.C, shape.N, w, z, policy.label, p1, p2, theo, emp, mis, emp,
                    cfg.seed, cfg.runs, cfg.slots)
            )
    return rows


def two_state_mismatch_grid(shape: NetworkShape, s: float, step: float | None = None) -> list[float]:
    """r from ``step`` up to the largest grid value with lambda <= 1/N.

    The chain must stay aperiodic (theta = 1 - r - s > -1).
    """
    if step is None:
        step = 0.1 if shape.N == 1 else 0.05
    r_max = 1.0 if shape.N == 1 else s / (shape.N - 1)
    out = []
    k = 1
    while step * k <= r_max + 1e-12:
        r = round(step * k, 12)
        if r + s < 2.0 - 1e-12 and r < 1.0 - 1e-12:
            out.append(r)
        k += 1
    return out


def run_mismatch(cfg: ExperimentConfig) -> list[Row]:
    """Theoretical (second-order) versus simulated AoI roots."""
    exp = cfg.experiment
    shapes = cfg.shapes or (NetworkShape(1, 1), NetworkShape(2, 4))
    z_max = max(cfg.z_list)
    rows: list[Row] = []
    for shape in shapes:
        if exp == "mismatch-two-state":
            settings = cfg.grid.get("s", (1.0, 0.8))
            cells = [(r, s) for s in settings for r in two_state_mismatch_grid(shape, s)]
        elif exp == "mismatch-wag":
            r_set = cfg.grid.get("r", (0.3, 0.5))
            h_set = cfg.grid.get("H", tuple(range(1, 9)))
            cells = [(r, H) for r in r_set for H in h_set]
        else:
            raise ParameterError(f"{exp!r} is not a mismatch experiment")
        for a, b in cells:
            if exp == "mismatch-two-state":
                params = TwoStateParams(a, b)
                lt = params.to_lambda_theta()
                m_a, m_p = two_state_means(lt, shape)
                try:
                    v_a2, v_p2 = two_state_variances(lt, shape, cfg.k_trunc)
                except DegenerateChainError:
                    v_a2 = v_p2 = math.nan
                policy = simnet.TwoState(a, b)
            else:
                params = WagParams(a, int(b))
                m_a, m_p = wag_means(params, shape)
                v_a2, v_p2 = wag_variances(params, shape, cfg.k_trunc)
                policy = simnet.Wag(a, int(b))
            res = simnet.simulate(
                simnet.SimConfig(shape, policy, cfg.slots, cfg.runs, cfg.seed, z_max=z_max)
            )
            rows += _mismatch_rows(exp, cfg, shape, policy, ((m_a, v_a2), (m_p, v_p2)), res)
    return rows


def worst_mismatch(rows: list[Row]) -> dict[tuple, float]:
    """Largest finite mismatch per (C, N, user type, z)."""
    out: dict[tuple, float] = {}
    for row in rows:
        if not math.isfinite(row.mismatch):
            continue
        key = (row.C, row.N, "active" if row.w == 1.0 else "passive", row.z)
        out[key] = max(out.get(key, 0.0), row.mismatch)
    return out


# ---------------------------------------------------------------------------
# Optimality of s = 1
# ---------------------------------------------------------------------------


def optimality_grid(shape: NetworkShape, r_step: float = 0.01, s_step: float = 0.01):
    """(r, [s ...]) with lambda = r / (r + s) <= 1/N for every s and s = 1 included."""
    N = shape.N
    cells = []
    k = 1
    while True:
        r = round(r_step * k, 12)
        if r * (N - 1) > 1.0 + 1e-12 or r >= 1.0:
            break
        n = int(round(1.0 / s_step))
        s_vals = [round(s_step * j, 12) for j in range(1, n + 1)]
        s_vals = [s for s in s_vals if s >= r * (N - 1) - 1e-12]
        cells.append((r, s_vals))
        k += 1
    return cells


def run_optimality(cfg: ExperimentConfig) -> list[Row]:
    """For each r, compare s = 1 with the empirically best s.

    Row semantics: ``theoretical`` holds the simulated root at s = 1,
    ``empirical`` the best simulated root over the s grid (its s in
    ``param2``), so ``mismatch`` is the relative gap.
    """
    shapes = cfg.shapes or (NetworkShape(1, 6), NetworkShape(2, 7))
    z_max = max(cfg.z_list)
    s_step = cfg.grid.get("s_step", 0.01)
    rows: list[Row] = []
    for shape in shapes:
        for r, s_vals in optimality_grid(shape, cfg.r_step, s_step):
            res = {
                s: simnet.simulate(
                    simnet.SimConfig(shape, simnet.TwoState(r, s), cfg.slots, cfg.runs, cfg.seed,
                                     z_max=z_max)
                )
                for s in s_vals
            }
            for z in cfg.z_list:
                for w in (1.0, 0.0):
                    vals = {s: res[s].aoi_root(z, active=w == 1.0) for s in s_vals}
                    best_s = min(s_vals, key=lambda s: (vals[s], -s))
                    at_one, best = vals[s_vals[-1]], vals[best_s]
                    rows.append(
                        Row("optimality", shape.C, shape.N, w, z, "s=1-vs-best", r, best_s,
                            at_one, best, mismatch(at_one, best), at_one, cfg.seed, cfg.runs,
                            cfg.slots)
                    )
    return rows


# ---------------------------------------------------------------------------
# Policy comparison
# ---------------------------------------------------------------------------


COMPARE_SCREEN = simnet.Screen(slots=20_000, runs=5, keep=8)


def run_compare(cfg: ExperimentConfig, timings: list[Timing] | None = None) -> list[Row]:
    """Empirical F for every policy and objective on each shape."""
    shapes = cfg.shapes or tuple(NetworkShape(C, N) for C in (1, 4) for N in (8, 10))
    rows: list[Row] = []
    seqs = None
    if cfg.seq_file:
        seqs = simnet.load_sequences(cfg.seq_file)
    for shape in shapes:
        objs = [Objective(w, z) for w in cfg.weights(shape) for z in cfg.z_list]
        z_max = max(cfg.z_list)

        def sim(policy):
            return simnet.simulate(
                simnet.SimConfig(shape, policy, cfg.slots, cfg.runs, cfg.seed, z_max=z_max)
            )

        cache: dict = {}

        def cached(policy):
            if policy not in cache:
                cache[policy] = sim(policy)
            return cache[policy]

        t0 = time.perf_counter()
        analytic = {o: optimize_wag(shape, o, cfg.r_step, cfg.h_max, cfg.k_trunc) for o in objs}
        t_analytic = (time.perf_counter() - t0) / len(objs)
        two_state = {o: optimize_two_state(shape, o, cfg.r_step, cfg.k_trunc) for o in objs}
        wag_analytic = tuple(dict.fromkeys(simnet.Wag(p.r, p.H) for p, _ in analytic.values()))

        t0 = time.perf_counter()
        opt_wag = simnet.sweep_policies(
            shape, simnet.wag_grid(cfg.r_step, cfg.h_max), objs, cfg.slots, cfg.runs, cfg.seed,
            cfg.screen, always=wag_analytic,
        )
        t_sweep = time.perf_counter() - t0
        opt_aloha = simnet.sweep_policies(
            shape, simnet.aloha_grid(cfg.r_step), objs, cfg.slots, cfg.runs, cfg.seed, cfg.screen,
            always=(simnet.slotted_aloha(shape.N),),
        )
        fixed = [simnet.slotted_aloha(shape.N), simnet.age_threshold_aloha(shape.N)]
        if seqs is not None:
            try:
                seqs.check_shape(shape)
                fixed.append(seqs)
            except ParameterError:
                pass

        for obj in objs:
            entries = []
            p_wag, f_wag = analytic[obj]
            pol = simnet.Wag(p_wag.r, p_wag.H)
            entries.append(("wag", pol, f_wag, cached(pol)))
            p_ts, f_ts = two_state[obj]
            pol = simnet.TwoState(p_ts.r, p_ts.s)
            entries.append(("two-state", pol, f_ts, cached(pol)))
            ow = opt_wag[obj]
            entries.append(("optimal-wag", ow.policy, math.nan, ow.result))
            for pol in fixed:
                entries.append((pol.label, pol, math.nan, cached(pol)))
            oa = opt_aloha[obj]
            entries.append(("optimal-aloha", oa.policy, math.nan, oa.result))
            for name, pol, theo, res in entries:
                f_hat = res.f_for(obj)
                p1, p2 = pol.params
                mis = mismatch(theo, f_hat) if math.isfinite(theo) else math.nan
                rows.append(
                    Row("compare", shape.C, shape.N, obj.w, obj.z, name, p1, p2, theo, f_hat, mis,
                        f_hat, cfg.seed, cfg.runs, cfg.slots)
                )
            if timings is not None:
                timings.append(
                    Timing(shape.C, shape.N, obj.w, obj.z, t_analytic, t_sweep,
                           "screened sweep" if cfg.screen else "exhaustive sweep")
                )
    return rows


# ---------------------------------------------------------------------------
# Efficiency: formula-based WaG versus budget-limited simulation (WaG_R)
# ---------------------------------------------------------------------------

# Slots per grid cell (one run each) such that a full-grid WaG_R sweep
# (1485 cells) takes about as long as one analytic optimisation on the
# reference machine (a few seconds at C=4, N=10).  Splitting the same
# slots over many runs costs far more wall time in per-run overhead.
DEFAULT_BUDGET = 6000
DEFAULT_SWEEP_RUNS = 1


def run_efficiency(cfg: ExperimentConfig, timings: list[Timing] | None = None) -> list[Row]:
    """F-hat of analytic WaG versus WaG_R (simulation-chosen with a small
    per-cell slot budget), both evaluated at full length."""
    shapes = cfg.shapes or tuple(NetworkShape(C, N) for C in (2, 4) for N in (8, 10))
    budget = cfg.budget if cfg.budget is not None else DEFAULT_BUDGET
    sweep_runs = int(cfg.grid.get("sweep_runs", DEFAULT_SWEEP_RUNS))
    rows: list[Row] = []
    for shape in shapes:
        objs = [Objective(w, z) for w in cfg.weights(shape) for z in cfg.z_list]
        z_max = max(cfg.z_list)
        t0 = time.perf_counter()
        analytic = {o: optimize_wag(shape, o, cfg.r_step, cfg.h_max, cfg.k_trunc) for o in objs}
        t_analytic = (time.perf_counter() - t0) / len(objs)
        t0 = time.perf_counter()
        wag_r = simnet.sweep_policies(
            shape, simnet.wag_grid(cfg.r_step, cfg.h_max), objs, budget, sweep_runs, cfg.seed
        )
        t_sweep = (time.perf_counter() - t0) / len(objs)
        t_full = math.nan
        if timings is not None and cfg.grid.get("estimate_exhaustive", True):
            t_full = estimate_exhaustive_seconds(shape, cfg.slots, cfg.runs, cfg.seed, cfg.r_step,
                                                 cfg.h_max)
        cache: dict = {}

        def full(policy):
            if policy not in cache:
                cache[policy] = simnet.simulate(
                    simnet.SimConfig(shape, policy, cfg.slots, cfg.runs, cfg.seed, z_max=z_max)
                )
            return cache[policy]

        for obj in objs:
            p, f_theo = analytic[obj]
            pa = simnet.Wag(p.r, p.H)
            pr = wag_r[obj].policy
            f_a, f_r = full(pa).f_for(obj), full(pr).f_for(obj)
            base = (obj.w, obj.z)
            rows.append(Row("efficiency", shape.C, shape.N, *base, "wag", pa.r, pa.H, f_theo, f_a,
                            mismatch(f_theo, f_a), f_a, cfg.seed, cfg.runs, cfg.slots))
            rows.append(Row("efficiency", shape.C, shape.N, *base,
                            "wag-r-lowconf" if wag_r[obj].low_confidence else "wag-r",
                            pr.r, pr.H, math.nan, f_r, math.nan, f_r, cfg.seed, cfg.runs,
                            cfg.slots))
            rows.append(Row("efficiency", shape.C, shape.N, *base, "ratio", math.nan, float(budget),
                            math.nan, math.nan, math.nan, f_a / f_r, cfg.seed, cfg.runs,
                            cfg.slots))
            if timings is not None:
                timings.append(Timing(shape.C, shape.N, obj.w, obj.z, t_analytic, t_sweep,
                                      f"WaG_R budget {budget} slots x {sweep_runs} runs", t_full))
    return rows


def estimate_exhaustive_seconds(
    shape: NetworkShape, slots: int, runs: int, seed: int, r_step: float = 0.01,
    h_max: int = 15, sample: int = 15,
) -> float:
    """Wall time of a full-length exhaustive WaG sweep, extrapolated from an
    evenly spaced sample of grid cells."""
    grid = simnet.wag_grid(r_step, h_max)
    picks = np.linspace(0, len(grid) - 1, min(sample, len(grid))).round().astype(int)
    t0 = time.perf_counter()
    for i in picks:
        simnet.simulate(simnet.SimConfig(shape, grid[i], slots, runs, seed))
    return (time.perf_counter() - t0) * len(grid) / len(picks)


# ---------------------------------------------------------------------------
# Single-point analysis helpers used by the CLI
# ---------------------------------------------------------------------------


def analyze_rows(model: str, shape: NetworkShape, obj: Objective, a: float, b: float,
                 k_trunc: int = K_TRUNC) -> list[Row]:
    if model == "two-state":
        params = TwoStateParams(a, b)
        aoi_a, aoi_p, f = two_state_moments(params, shape, obj, k_trunc)
        label, p1, p2 = "two-state", a, b
    elif model == "wag":
        params = WagParams(a, int(b))
        aoi_a, aoi_p, f = wag_moments(params, shape, obj, k_trunc)
        label, p1, p2 = "wag", a, float(int(b))
    else:
        raise ParameterError(f"unknown model {model!r}")
    nan = math.nan
    return [
        Row("approx", shape.C, shape.N, 1.0, obj.z, label, p1, p2, aoi_a, nan, nan, aoi_a, 0, 0, 0, ""),
        Row("approx", shape.C, shape.N, 0.0, obj.z, label, p1, p2, aoi_p, nan, nan, aoi_p, 0, 0, 0, ""),
        Row("approx", shape.C, shape.N, obj.w, obj.z, label, p1, p2, f, nan, nan, f, 0, 0, 0, ""),
    ]
