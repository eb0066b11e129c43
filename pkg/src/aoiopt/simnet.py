"""Slotted collision-channel simulator for active and passive users.

Transmission slots are generated from renewal structure (geometric
sojourns drawn by inverse transform), so a run costs O(transmissions)
rather than O(users x slots), vectorised over users.

Random stream layout (one Philox4x64 generator per run, keyed by
``SeedSequence([seed, run])``): first ``U`` uniforms give the users'
initial states, then blocks of shape ``(U, 64)`` follow, user ``u``
consuming row ``u`` of each successive block.  A user's stream therefore
does not depend on how many blocks a policy needs, which couples paths
across policy parameters (common random numbers).
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .core import Z_MAX, NetworkShape, Objective
from .errors import ParameterError
from .secondorder import power_sum

RNG_ID = "numpy-Philox4x64-10/SeedSequence(seed,run)/rows64"
THREADS_ENV = "AOIOPT_THREADS"
N_BATCHES = 20
BLOCK = 64


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, run])))


def _rows(rng: np.random.Generator, U: int, n: int) -> np.ndarray:
    """At least ``n`` uniforms in (0, 1] per user, shape (U, k*BLOCK)."""
    k = max(1, -(-n // BLOCK))
    block = 1.0 - rng.random((k, U, BLOCK))
    return block.transpose(1, 0, 2).reshape(U, k * BLOCK)


def _geometric(u: np.ndarray, p: float, cap: int) -> np.ndarray:
    """Inverse-transform Geom(p) on {1, 2, ...}, clipped to ``cap``."""
    if p >= 1.0:
        return np.ones(u.shape, dtype=np.int64)
    if p <= 0.0:
        return np.full(u.shape, cap, dtype=np.int64)
    g = np.ceil(np.log(u) / math.log1p(-p))
    return np.clip(g, 1, cap).astype(np.int64)


def _columns_for(T: int, mean_gap: float) -> int:
    return int(1.2 * T / max(mean_gap, 1.0)) + 16


def _renewal(rng, U: int, T: int, p: float, base, dead: int, mean_gap: float) -> np.ndarray:
    """Event times ``base + G_1 + ... + G_k + (k-1)*dead`` with G ~ Geom(p),
    one row per user, extended until every row passes T."""
    u = _rows(rng, U, _columns_for(T, mean_gap))
    while True:
        tau = np.cumsum(_geometric(u, p, T + 1), axis=1)
        tau += np.asarray(base, dtype=np.int64).reshape(-1, 1)
        if dead:
            tau += dead * np.arange(tau.shape[1])
        if U == 0 or tau[:, -1].min() > T:
            return tau
        u = np.hstack([u, _rows(rng, U, u.shape[1])])


def _flatten(tau: np.ndarray, T: int) -> tuple[np.ndarray, np.ndarray]:
    """Row-major valid entries (1..T) of an event matrix as (times, user)."""
    flat = tau.ravel()
    idx = np.flatnonzero((flat >= 1) & (flat <= T))
    return flat.take(idx), idx // max(tau.shape[1], 1)


def _expand(starts: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Concatenate the integer ranges ``[start, start + length)``."""
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.cumsum(lengths) - lengths
    return np.repeat(starts - offsets, lengths) + np.arange(total)


# ---------------------------------------------------------------------------
# Policies: tx(rng, init, T) -> (sorted times grouped by user, user index)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TwoState:
    """Idle -> TX with probability r, TX -> Idle with probability s."""

    r: float
    s: float

    def __post_init__(self):
        if not (0.0 <= self.r <= 1.0 and 0.0 <= self.s <= 1.0) or self.r + self.s <= 0.0:
            raise ParameterError(f"invalid two-state parameters r={self.r}, s={self.s}")

    @property
    def label(self) -> str:
        return "two-state"

    @property
    def params(self) -> tuple[float, float]:
        return self.r, self.s

    def tx(self, rng, init: np.ndarray, T: int):
        r, s = self.r, self.s
        U = init.size
        start_tx = init <= r / (r + s)
        cycle = (1.0 / r if r > 0 else T) + (1.0 / s if s > 0 else T)
        # columns alternate idle / TX sojourn lengths
        u = _rows(rng, U, 2 * _columns_for(T, cycle))
        while True:
            lens = np.empty(u.shape, dtype=np.int64)
            lens[:, 0::2] = _geometric(u[:, 0::2], r, T + 1)
            lens[:, 1::2] = _geometric(u[:, 1::2], s, T + 1)
            lens[start_tx, 0] = 0
            ends = np.cumsum(lens, axis=1)
            if U == 0 or ends[:, -1].min() >= T:
                break
            u = np.hstack([u, _rows(rng, U, u.shape[1])])
        starts = ends[:, 0::2] + 1
        busy = lens[:, 1::2]
        flat = starts.ravel()
        idx = np.flatnonzero(flat <= T)
        st = flat.take(idx)
        ln = np.minimum(busy.ravel().take(idx), T + 1 - st)
        user = np.repeat(idx // starts.shape[1], ln)
        return _expand(st, ln), user


@dataclass(frozen=True)
class Wag:
    """Wait-and-Go: Idle -(r)-> TX, then H forced Wait slots, then Idle."""

    r: float
    H: int

    def __post_init__(self):
        if not 0.0 < self.r <= 1.0 or int(self.H) != self.H or self.H < 0:
            raise ParameterError(f"invalid WaG parameters r={self.r}, H={self.H}")
        object.__setattr__(self, "H", int(self.H))

    @property
    def label(self) -> str:
        return "wag"

    @property
    def params(self) -> tuple[float, float]:
        return self.r, float(self.H)

    def tx(self, rng, init: np.ndarray, T: int):
        r, H = self.r, self.H
        # stationary law: Idle w.p. q0, TX and each Wait state w.p. q1
        q0 = 1.0 / ((H + 1) * r + 1.0)
        q1 = r * q0
        j = np.where(init <= q0, 0, 1 + np.minimum(((init - q0) / q1).astype(np.int64), H))
        # first Idle slot: 1 if Idle now, else after the remaining Wait slots
        base = np.where(j == 0, 1, H + 3 - j)
        tau = _renewal(rng, init.size, T, r, base, H + 1, H + 1 + 1.0 / r)
        head = np.where(j == 1, 1, 0).reshape(-1, 1)  # TX at slot 1
        return _flatten(np.hstack([head, tau]), T)


@dataclass(frozen=True)
class SlottedAloha:
    """Transmit independently in every slot with probability p."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ParameterError(f"ALOHA p must lie in (0, 1], got {self.p}")

    @property
    def label(self) -> str:
        return "slotted-aloha"

    @property
    def params(self) -> tuple[float, float]:
        return self.p, math.nan

    def tx(self, rng, init: np.ndarray, T: int):
        tau = _renewal(rng, init.size, T, self.p, 0, 0, 1.0 / self.p)
        return _flatten(tau, T)


@dataclass(frozen=True)
class AgeThresholdAloha:
    """ALOHA with probability p once more than ``threshold`` slots have
    passed since the user's own last transmission.  Users start eligible."""

    p: float
    threshold: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0 or self.threshold < 0.0:
            raise ParameterError(f"invalid ATA parameters p={self.p}, threshold={self.threshold}")

    @property
    def label(self) -> str:
        return "ata"

    @property
    def params(self) -> tuple[float, float]:
        return self.p, self.threshold

    def tx(self, rng, init: np.ndarray, T: int):
        dead = int(math.floor(self.threshold))  # slots blocked after a TX
        tau = _renewal(rng, init.size, T, self.p, 0, dead, dead + 1.0 / self.p)
        return _flatten(tau, T)


@dataclass(frozen=True)
class PreAssigned:
    """Fixed periodic binary schedules, one per active user of a cluster
    (reused in every cluster) or one per active user of the network."""

    sequences: tuple[str, ...]
    random_offset: bool = False

    def __post_init__(self):
        seqs = tuple(self.sequences)
        if not seqs:
            raise ParameterError("at least one sequence is required")
        period = len(seqs[0])
        for seq in seqs:
            if len(seq) != period or period < 1 or set(seq) - {"0", "1"}:
                raise ParameterError("sequences must be binary strings of one common length >= 1")
        object.__setattr__(self, "sequences", seqs)

    @property
    def label(self) -> str:
        return "pre-assigned"

    @property
    def params(self) -> tuple[float, float]:
        return float(len(self.sequences[0])), math.nan

    @property
    def period(self) -> int:
        return len(self.sequences[0])

    def check_shape(self, shape: NetworkShape) -> None:
        if len(self.sequences) not in (shape.N, shape.users):
            raise ParameterError(
                f"{len(self.sequences)} sequences fit neither N={shape.N} nor C*N={shape.users}"
            )

    def tx(self, rng, init: np.ndarray, T: int):
        U = init.size
        bits = np.array([[ch == "1" for ch in seq] for seq in self.sequences], dtype=bool)
        rows = bits[np.arange(U) % len(self.sequences)]
        if self.random_offset:
            offset = np.floor(init * self.period).astype(np.int64) % self.period
        else:
            offset = np.zeros(U, dtype=np.int64)
        # slot t of user u uses symbol (t - 1 + offset[u]) mod period
        t = np.arange(T)
        sched = rows[np.arange(U)[:, None], (t[None, :] + offset[:, None]) % self.period]
        idx = np.flatnonzero(sched.ravel())
        return idx % T + 1, idx // T


PolicySpec = Union[TwoState, Wag, SlottedAloha, AgeThresholdAloha, PreAssigned]


def slotted_aloha(N: int) -> SlottedAloha:
    return SlottedAloha(1.0 / N)


def age_threshold_aloha(N: int) -> AgeThresholdAloha:
    return AgeThresholdAloha(min(4.69 / N, 1.0), 2.2 * N)


def load_sequences(path: str | Path, shape: NetworkShape | None = None) -> PreAssigned:
    """Read one '0'/'1' line per active user (blank lines ignored)."""
    lines = [ln.strip() for ln in Path(path).read_text(encoding="utf-8").splitlines()]
    policy = PreAssigned(tuple(ln for ln in lines if ln))
    if shape is not None:
        policy.check_shape(shape)
    return policy


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    shape: NetworkShape
    policy: PolicySpec
    slots: int
    runs: int = 1
    seed: int = 0
    z_max: int = 3
    objective: Objective | None = None

    def __post_init__(self):
        if int(self.slots) != self.slots or self.slots < 1:
            raise ParameterError(f"slots must be >= 1, got {self.slots}")
        if int(self.runs) != self.runs or self.runs < 1:
            raise ParameterError(f"runs must be >= 1, got {self.runs}")
        if not 0 <= int(self.seed) < 2**64:
            raise ParameterError("seed must be a 64-bit unsigned integer")
        if not 1 <= self.z_max <= Z_MAX:
            raise ParameterError(f"z_max must be in [1, {Z_MAX}]")
        if self.objective is not None and self.objective.z > self.z_max:
            object.__setattr__(self, "z_max", self.objective.z)
        if isinstance(self.policy, PreAssigned):
            self.policy.check_shape(self.shape)


@dataclass
class RunStats:
    m_hat_a: float
    m_hat_p: float
    v2_hat_a: float  # within-run batch means
    v2_hat_p: float
    aoi_moments_a: np.ndarray  # E[AoI^z], z = 1..z_max, averaged over users
    aoi_moments_p: np.ndarray
    f_hat: float
    successes: np.ndarray  # per active user
    detections: int


def aoi_time_averages(
    times: np.ndarray, owner: np.ndarray, n_owners: int, T: int, z_max: int
) -> np.ndarray:
    """Per-owner time averages of AoI^z over slots 1..T, shape (z_max, n_owners).

    ``times`` are sorted success slots grouped by ``owner``.  AoI starts at
    1 before slot 1, resets to 1 on a success and grows by one otherwise,
    so each inter-success stretch contributes a power sum.
    """
    counts = np.bincount(owner, minlength=n_owners)
    has = np.flatnonzero(counts)
    bounds = np.cumsum(counts)
    first = times.take(bounds[has] - counts[has])
    last = times.take(bounds[has] - 1)
    inner = np.flatnonzero(owner[1:] == owner[:-1]) if times.size > 1 else np.zeros(0, np.int64)
    gaps = times.take(inner + 1) - times.take(inner)
    gap_owner = owner.take(inner + 1)
    out = np.empty((z_max, n_owners))
    for z in range(1, z_max + 1):
        total = np.full(n_owners, power_sum(T + 1, z) - 1.0)
        total[has] = power_sum(first, z) - 1.0 + power_sum(T + 1 - last, z)
        total += np.bincount(gap_owner, weights=power_sum(gaps, z), minlength=n_owners)
        out[z - 1] = total / T
    return out


def _batch_v2(times: np.ndarray, owner: np.ndarray, n_owners: int, T: int) -> float:
    """Batch-means temporal variance, averaged over owners."""
    n_b = min(N_BATCHES, T)
    size = T // n_b
    if n_b < 2 or size < 1:
        return math.nan
    keep = times <= n_b * size
    b = (times[keep] - 1) // size
    counts = np.bincount(owner[keep] * n_b + b, minlength=n_owners * n_b).reshape(n_owners, n_b)
    return float(np.mean(np.var(counts, axis=1, ddof=1) / size))


def _f_from_moments(mom_a, mom_p, obj: Objective) -> float:
    f = 0.0
    if obj.w > 0.0:
        f += obj.w * mom_a[obj.z - 1] ** (1.0 / obj.z)
    if obj.w < 1.0:
        f += (1.0 - obj.w) * mom_p[obj.z - 1] ** (1.0 / obj.z)
    return float(f)


def simulate_run(config: SimConfig, run_index: int) -> RunStats:
    shape, T, policy = config.shape, config.slots, config.policy
    U = shape.users
    rng = run_rng(int(config.seed), run_index)
    init = rng.random(U)
    times, user = policy.tx(rng, init, T)
    times = times.astype(np.int64, copy=False)
    user = user.astype(np.int64, copy=False)

    # deliveries: exactly one transmitter in the user's cluster
    key = (user // shape.N) * (T + 1) + times
    per_slot = np.bincount(key, minlength=shape.C * (T + 1))
    ok = np.flatnonzero(per_slot.take(key) == 1)
    s_times, s_user = times.take(ok), user.take(ok)
    successes = np.bincount(s_user, minlength=U)

    # passive detections: nobody in the network transmits
    busy = np.bincount(times, minlength=T + 1)[1:] > 0
    d_times = np.flatnonzero(~busy) + 1
    d_owner = np.zeros(d_times.size, dtype=np.int64)

    mom_a = aoi_time_averages(s_times, s_user, U, T, config.z_max).mean(axis=1)
    mom_p = aoi_time_averages(d_times, d_owner, 1, T, config.z_max)[:, 0]
    f_hat = math.nan if config.objective is None else _f_from_moments(mom_a, mom_p, config.objective)
    return RunStats(
        m_hat_a=float(successes.mean() / T),
        m_hat_p=float(d_times.size / T),
        v2_hat_a=_batch_v2(s_times, s_user, U, T),
        v2_hat_p=_batch_v2(d_times, d_owner, 1, T),
        aoi_moments_a=mom_a,
        aoi_moments_p=mom_p,
        f_hat=f_hat,
        successes=successes,
        detections=int(d_times.size),
    )


@dataclass
class SimResult:
    config: SimConfig
    runs: list[RunStats] = field(repr=False)
    m_hat_a: float
    m_hat_p: float
    v2_hat_a: float  # across runs
    v2_hat_p: float
    aoi_moments_a: np.ndarray
    aoi_moments_p: np.ndarray
    f_hat: float

    def f_for(self, obj: Objective) -> float:
        """Empirical objective for any (w, z) with z <= z_max."""
        if obj.z > self.config.z_max:
            raise ParameterError(f"z={obj.z} exceeds simulated z_max={self.config.z_max}")
        return _f_from_moments(self.aoi_moments_a, self.aoi_moments_p, obj)

    def aoi_root(self, z: int, active: bool = True) -> float:
        mom = self.aoi_moments_a if active else self.aoi_moments_p
        return float(mom[z - 1] ** (1.0 / z))


def thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "")
    if raw.strip():
        try:
            return max(1, int(raw))
        except ValueError:
            raise ParameterError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _across_run_v2(counts: np.ndarray, T: int) -> float:
    # counts: (runs, users); centre on the pooled mean
    flat = counts.astype(np.float64).ravel()
    if flat.size < 2:
        return math.nan
    m_bar = flat.mean() / T
    return float(np.var((flat - T * m_bar) / math.sqrt(T), ddof=1))


def simulate(config: SimConfig) -> SimResult:
    """R independent runs, reduced in run order (thread count does not matter)."""
    idx = range(config.runs)
    threads = min(thread_count(), config.runs)
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            runs = list(pool.map(lambda i: simulate_run(config, i), idx))
    else:
        runs = [simulate_run(config, i) for i in idx]
    T = config.slots
    succ = np.stack([r.successes for r in runs])
    det = np.array([[r.detections] for r in runs])
    mom_a = np.mean([r.aoi_moments_a for r in runs], axis=0)
    mom_p = np.mean([r.aoi_moments_p for r in runs], axis=0)
    v2_a, v2_p = _across_run_v2(succ, T), _across_run_v2(det, T)
    if math.isnan(v2_a):
        v2_a = runs[0].v2_hat_a
    if math.isnan(v2_p):
        v2_p = runs[0].v2_hat_p
    obj = config.objective
    return SimResult(
        config=config,
        runs=runs,
        m_hat_a=float(succ.mean() / T),
        m_hat_p=float(det.mean() / T),
        v2_hat_a=v2_a,
        v2_hat_p=v2_p,
        aoi_moments_a=mom_a,
        aoi_moments_p=mom_p,
        f_hat=math.nan if obj is None else _f_from_moments(mom_a, mom_p, obj),
    )


# ---------------------------------------------------------------------------
# Empirical parameter sweeps
# ---------------------------------------------------------------------------

MIN_EVENTS = 30


@dataclass(frozen=True)
class Screen:
    """Two-stage sweep: every candidate is first simulated with
    ``slots`` x ``runs``; the ``keep`` best per objective are re-simulated
    at full length and the winner is taken from that second stage."""

    slots: int
    runs: int
    keep: int


@dataclass
class SweepOutcome:
    policy: PolicySpec
    f_hat: float
    low_confidence: bool
    evaluated: int
    result: SimResult = field(repr=False)


def _low_confidence(res: SimResult, obj: Objective) -> bool:
    runs = res.runs
    if obj.w > 0.0 and min(int(r.successes.min()) for r in runs) * len(runs) < MIN_EVENTS:
        return True
    if obj.w < 1.0 and sum(r.detections for r in runs) < MIN_EVENTS:
        return True
    return False


def _best(results: list[SimResult], obj: Objective) -> tuple[int, float]:
    best, f_best = -1, math.inf
    for i, res in enumerate(results):
        f = res.f_for(obj)
        if f < f_best:  # strict: ties keep grid order
            best, f_best = i, f
    return best, f_best


def sweep_policies(
    shape: NetworkShape,
    policies: list[PolicySpec],
    objectives: list[Objective],
    slots: int,
    runs: int,
    seed: int,
    screen: Screen | None = None,
    always: tuple[PolicySpec, ...] = (),
) -> dict[Objective, SweepOutcome]:
    """Empirical argmin of F-hat over ``policies`` for every objective.

    One simulation per candidate serves all objectives, and every candidate
    shares ``seed`` so comparisons use common random numbers.  ``always``
    candidates join the second stage of a screened sweep unconditionally.
    """
    if not policies:
        raise ParameterError("empty policy grid")
    z_max = max(o.z for o in objectives)

    def run(pol, T, R):
        return simulate(SimConfig(shape, pol, T, R, seed, z_max=z_max))

    if screen is None:
        final = list(policies)
        results = [run(p, slots, runs) for p in final]
    else:
        pre = [run(p, screen.slots, screen.runs) for p in policies]
        chosen: set[int] = set()
        for obj in objectives:
            order = sorted(range(len(pre)), key=lambda i: (pre[i].f_for(obj), i))
            chosen.update(order[: screen.keep])
        final = [policies[i] for i in sorted(chosen)]
        final += [p for p in always if p not in final]
        results = [run(p, slots, runs) for p in final]
    out = {}
    for obj in objectives:
        i, f = _best(results, obj)
        out[obj] = SweepOutcome(final[i], f, _low_confidence(results[i], obj), len(policies), results[i])
    return out


def aloha_grid(p_step: float = 0.01) -> list[SlottedAloha]:
    if not 0.0 < p_step < 1.0:
        raise ParameterError("p_step must lie in (0, 1)")
    n = int(math.floor(1.0 / p_step + 1e-9))
    return [SlottedAloha(round(p_step * k, 12)) for k in range(1, n + 1) if p_step * k <= 1.0 - 1e-12]


def wag_grid(r_step: float = 0.01, h_max: int = 15, h_min: int = 1) -> list[Wag]:
    """H outer, r inner, so strict-minimum ties go to smaller H then r."""
    if not 0.0 < r_step < 1.0 or h_max < h_min:
        raise ParameterError("need 0 < r_step < 1 and h_max >= h_min")
    n = int(math.floor(1.0 / r_step - 1e-9))
    rs = [round(r_step * k, 12) for k in range(1, n + 1)]
    return [Wag(r, H) for H in range(h_min, h_max + 1) for r in rs]


def sweep_optimal_aloha(
    shape: NetworkShape,
    obj: Objective,
    slots: int,
    runs: int,
    seed: int,
    p_step: float = 0.01,
    screen: Screen | None = None,
) -> tuple[float, float]:
    """Empirically best ALOHA probability on the ``p_step`` grid and its F-hat."""
    out = sweep_policies(shape, aloha_grid(p_step), [obj], slots, runs, seed, screen)[obj]
    return out.policy.p, out.f_hat


def sweep_wag_empirical(
    shape: NetworkShape,
    obj: Objective,
    slots: int,
    runs: int,
    seed: int,
    r_step: float = 0.01,
    h_max: int = 15,
    screen: Screen | None = None,
) -> SweepOutcome:
    """Simulation-driven WaG parameter choice; ``slots`` is the per-cell budget.

    ``low_confidence`` is set when the winner saw fewer than MIN_EVENTS
    deliveries per user (or detections) over all runs.
    """
    return sweep_policies(shape, wag_grid(r_step, h_max), [obj], slots, runs, seed, screen)[obj]
