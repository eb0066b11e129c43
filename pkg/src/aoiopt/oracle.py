"""Exact reference computations on small instances.

Everything here works from transition matrices only, independently of the
closed forms in :mod:`twostate` and :mod:`wag`:

* stationary vectors by a direct linear solve,
* temporal variances by summing autocovariances from matrix powers,
* AoI moments from the stationary law of the age-augmented joint chain.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from functools import reduce

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .core import NetworkShape
from .errors import AgeCapError, DegenerateProcessError, ErgodicityError, ParameterError

ROW_TOL = 1e-12


@dataclass(frozen=True)
class ChainSpec:
    """Per-user transmission chain: row-stochastic ``transition`` and a
    boolean ``emit`` marking the transmitting states."""

    transition: np.ndarray
    emit: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=np.float64)
        emit = np.asarray(self.emit, dtype=bool)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or emit.shape != (P.shape[0],):
            raise ParameterError("transition must be square and emit must match its size")
        if np.any(P < 0.0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > ROW_TOL:
            raise ParameterError("transition rows must be non-negative and sum to 1")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "emit", emit)

    @property
    def states(self) -> int:
        return self.transition.shape[0]


def two_state_chain(r: float, s: float) -> ChainSpec:
    """States 0 = Idle, 1 = TX."""
    return ChainSpec(np.array([[1.0 - r, r], [s, 1.0 - s]]), np.array([False, True]))


def aloha_chain(p: float) -> ChainSpec:
    return two_state_chain(p, 1.0 - p)


def wag_chain(r: float, H: int) -> ChainSpec:
    """States 0 = Idle, 1 = TX, 2..H+1 = Wait."""
    S = H + 2
    P = np.zeros((S, S))
    P[0, 0], P[0, 1] = 1.0 - r, r
    for j in range(1, H + 1):
        P[j, j + 1] = 1.0
    P[H + 1, 0] += 1.0
    emit = np.zeros(S, dtype=bool)
    emit[1] = True
    return ChainSpec(P, emit)


def _power_converges(P: np.ndarray, pi: np.ndarray, tol: float = 1e-10) -> bool:
    Q = P.copy()
    for _ in range(64):
        if np.max(np.abs(Q - pi[None, :])) < tol:
            return True
        Q = Q @ Q
    return False


def stationary(chain: ChainSpec | np.ndarray, check: bool = True) -> np.ndarray:
    """Stationary vector pi with pi P = pi, sum(pi) = 1."""
    P = chain.transition if isinstance(chain, ChainSpec) else chain
    n = P.shape[0]
    if sp.issparse(P):
        A = (P.T - sp.identity(n, format="csr")).tolil()
        A[n - 1, :] = np.ones(n)
        b = np.zeros(n)
        b[-1] = 1.0
        pi = spla.spsolve(A.tocsc(), b)
        resid = np.max(np.abs(P.T @ pi - pi))
    else:
        A = P.T - np.eye(n)
        A[-1, :] = 1.0
        b = np.zeros(n)
        b[-1] = 1.0
        try:
            pi = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise ErgodicityError("stationary system is singular") from exc
        resid = np.max(np.abs(pi @ P - pi))
    if not np.all(np.isfinite(pi)) or resid > 1e-11 or pi.min() < -1e-12:
        raise ErgodicityError(f"stationary solve failed (residual {resid:.2e})")
    pi = np.clip(pi, 0.0, None)
    pi = pi / pi.sum()
    if check and not sp.issparse(P) and n <= 400 and not _power_converges(P, pi):
        raise ErgodicityError("power iteration does not converge (periodic chain)")
    return pi


# ---------------------------------------------------------------------------
# Temporal variance from matrix powers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MeanVariance:
    m_a: float
    v_a2: float
    m_p: float
    v_p2: float
    tail: float


def conditional_returns(chain: ChainSpec, k_trunc: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-user ``P(TX at k+1 | TX at 1)`` and ``P(not TX at k+1 | not TX at 1)``
    for k = 1..k_trunc, propagated through the transition matrix."""
    P = chain.transition
    pi = stationary(chain)
    tx = chain.emit.astype(np.float64)
    u_tx = pi * tx / np.dot(pi, tx)
    u_no = pi * (1.0 - tx) / np.dot(pi, 1.0 - tx)
    a = np.empty(k_trunc)
    b = np.empty(k_trunc)
    for k in range(k_trunc):
        u_tx = u_tx @ P
        u_no = u_no @ P
        a[k] = u_tx @ tx
        b[k] = u_no @ (1.0 - tx)
    return a, b


def _second_eigenvalue(P: np.ndarray) -> float:
    ev = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    return float(ev[1]) if ev.size > 1 else 0.0


def exact_mean_variance(chain: ChainSpec, shape: NetworkShape, k_trunc: int = 1000) -> MeanVariance:
    pi = stationary(chain)
    q = float(np.dot(pi, chain.emit))
    m_a = q * (1.0 - q) ** (shape.N - 1)
    m_p = (1.0 - q) ** shape.users
    a, b = conditional_returns(chain, k_trunc)
    cov_a = (a * b ** (shape.N - 1) - m_a) * m_a
    cov_p = (b**shape.users - m_p) * m_p
    v_a2 = m_a - m_a**2 + 2.0 * cov_a.sum()
    v_p2 = m_p - m_p**2 + 2.0 * cov_p.sum()
    rho = _second_eigenvalue(chain.transition)
    last = max(abs(cov_a[-1]), abs(cov_p[-1]))
    tail = 2.0 * last * rho / (1.0 - rho) if rho < 1.0 else math.inf
    if tail > 1e-9:
        warnings.warn(f"k_trunc={k_trunc} may be too small: tail estimate {tail:.2e}", stacklevel=2)
    return MeanVariance(m_a, float(v_a2), m_p, float(v_p2), tail)


def labeled_joint(chain: ChainSpec, n_users: int) -> np.ndarray:
    """Transition matrix of ``n_users`` independent labelled copies (user 0 is
    the most significant digit of the joint index)."""
    return reduce(np.kron, [chain.transition] * n_users)


def _labeled_states(chain: ChainSpec, n_users: int) -> np.ndarray:
    return np.array(list(itertools.product(range(chain.states), repeat=n_users)))


def exact_mean_variance_joint(chain: ChainSpec, shape: NetworkShape, k_trunc: int = 1000) -> MeanVariance:
    """Same quantities as :func:`exact_mean_variance`, computed directly on the
    labelled joint chain of all C*N users (tiny instances only)."""
    U = shape.users
    if chain.states**U > 4096:
        raise ParameterError("labelled joint chain too large")
    P = labeled_joint(chain, U)
    pi = stationary(P, check=False)
    states = _labeled_states(chain, U)
    tx = chain.emit[states]
    s_a = (tx[:, 0] & (tx[:, 1 : shape.N].sum(axis=1) == 0)).astype(np.float64)
    s_p = (tx.sum(axis=1) == 0).astype(np.float64)
    out = []
    for s in (s_a, s_p):
        m = float(pi @ s)
        u = pi * s
        cov = 0.0
        for _ in range(k_trunc):
            u = u @ P
            cov += float(u @ s) - m * m
        out += [m, m - m * m + 2.0 * cov]
    return MeanVariance(out[0], out[1], out[2], out[3], 0.0)


# ---------------------------------------------------------------------------
# Exact AoI moments via the age-augmented joint chain
# ---------------------------------------------------------------------------


def _compositions(n: int, parts: int) -> list[tuple[int, ...]]:
    out = []
    for bars in itertools.combinations(range(n + parts - 1), parts - 1):
        prev, comp = -1, []
        for b in bars:
            comp.append(b - prev - 1)
            prev = b
        comp.append(n + parts - 2 - prev)
        out.append(tuple(comp))
    return out


def count_chain(chain: ChainSpec, n_users: int) -> tuple[np.ndarray, sp.csr_matrix]:
    """Lumped chain over occupancy counts of ``n_users`` exchangeable users.

    Returns the count vectors (one row per lumped state) and the sparse
    transition matrix between them.
    """
    S = chain.states
    P = chain.transition
    comps = _compositions(n_users, S)
    index = {c: i for i, c in enumerate(comps)}
    support = [np.flatnonzero(P[i] > 0) for i in range(S)]
    # per (state, count): list of (increment vector, probability)
    moves: dict[tuple[int, int], list[tuple[tuple[int, ...], float]]] = {}
    for i in range(S):
        sup = support[i]
        probs = P[i, sup]
        for c in range(n_users + 1):
            lst = []
            for sub in _compositions(c, len(sup)) if len(sup) > 1 else [(c,)]:
                coef = math.factorial(c)
                pr = 1.0
                for cnt, p in zip(sub, probs):
                    coef //= math.factorial(cnt)
                    pr *= p**cnt
                inc = [0] * S
                for cnt, j in zip(sub, sup):
                    inc[j] += cnt
                lst.append((tuple(inc), coef * pr))
            moves[(i, c)] = lst
    rows, cols, vals = [], [], []
    for src, comp in enumerate(comps):
        dist = {(0,) * S: 1.0}
        for i, c in enumerate(comp):
            if c == 0:
                continue
            nxt: dict[tuple[int, ...], float] = {}
            for base, pb in dist.items():
                for inc, pi_ in moves[(i, c)]:
                    key = tuple(x + y for x, y in zip(base, inc))
                    nxt[key] = nxt.get(key, 0.0) + pb * pi_
            dist = nxt
        for key, p in dist.items():
            if p > 0.0:
                rows.append(src)
                cols.append(index[key])
                vals.append(p)
    n = len(comps)
    M = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return np.array(comps, dtype=np.int64), M


@dataclass(frozen=True)
class AoIMoments:
    """Exact ``E[AoI^j]`` for j = 1..z (index 0 is j = 1)."""

    active: np.ndarray
    passive: np.ndarray
    tail_active: float
    tail_passive: float


def _age_moments(P, succ: np.ndarray, z: int, age_cap: int, max_cap: int) -> tuple[np.ndarray, float]:
    pi = stationary(P, check=False)
    if float(pi @ succ) <= 0.0:
        raise DegenerateProcessError("success probability is zero; AoI is unbounded")
    fail = 1.0 - succ
    PT = P.T.tocsr() if sp.issparse(P) else P.T
    v = pi * succ
    moments = np.zeros(z)
    cap = age_cap
    a = 1
    while True:
        mass = v.sum()
        moments += mass * float(a) ** np.arange(1, z + 1)
        # remaining mass after age a
        v = (PT @ v) * fail
        a += 1
        tail = float(v.sum())
        if tail * float(a) ** z < 1e-14 * moments[-1]:
            return moments, tail * float(a) ** z
        if a > cap:
            bound = tail * float(cap) ** z
            if bound < 1e-8:
                return moments, bound
            if tail > 1e-6 and cap >= max_cap:
                raise AgeCapError(f"tail mass {tail:.2e} beyond age cap {cap}")
            if cap >= max_cap:
                return moments, bound
            cap *= 2


def _joint_spaces(chain: ChainSpec, shape: NetworkShape, labeled: bool):
    """Transition matrices and success indicators for the active and passive age chains."""
    emit = chain.emit
    if labeled:
        Pa = sp.csr_matrix(labeled_joint(chain, shape.N))
        st = _labeled_states(chain, shape.N)
        tx = emit[st]
        succ_a = tx[:, 0] & (tx[:, 1:].sum(axis=1) == 0)
        Pp = sp.csr_matrix(labeled_joint(chain, shape.users))
        stp = _labeled_states(chain, shape.users)
        succ_p = emit[stp].sum(axis=1) == 0
        return Pa, succ_a, Pp, succ_p
    tx_states = np.flatnonzero(emit)
    if shape.N > 1:
        comps_o, Po = count_chain(chain, shape.N - 1)
        others_idle = comps_o[:, tx_states].sum(axis=1) == 0
        Pa = sp.kron(sp.csr_matrix(chain.transition), Po, format="csr")
        succ_a = np.kron(emit.astype(np.float64), others_idle.astype(np.float64)) > 0
    else:
        Pa = sp.csr_matrix(chain.transition)
        succ_a = emit.copy()
    comps_p, Pp = count_chain(chain, shape.users)
    succ_p = comps_p[:, tx_states].sum(axis=1) == 0
    return Pa, succ_a, Pp, succ_p


def exact_aoi_moments(
    chain: ChainSpec,
    shape: NetworkShape,
    z: int,
    age_cap: int = 5000,
    labeled: bool = False,
    max_cap: int = 5000 * 64,
) -> AoIMoments:
    """Exact stationary AoI moments of an active and the passive user.

    The age-augmented chain (joint user state, age) has stationary law
    ``P(X = x, AoI = a) = [pi_S Q^(a-1)]_x`` where ``pi_S`` is the stationary
    vector restricted to success states and ``Q`` moves one slot without a
    success; the ages are enumerated up to ``age_cap`` (doubled while the
    reported tail bound ``tail_mass * age_cap^z`` exceeds 1e-8).
    """
    if z < 1:
        raise ParameterError("z must be >= 1")
    stationary(chain)  # ergodicity of the per-user chain
    Pa, succ_a, Pp, succ_p = _joint_spaces(chain, shape, labeled)
    ma, ta = _age_moments(Pa, succ_a.astype(np.float64), z, age_cap, max_cap)
    mp, tp = _age_moments(Pp, succ_p.astype(np.float64), z, age_cap, max_cap)
    return AoIMoments(ma, mp, ta, tp)
