import math
import warnings

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from aoiopt import (
    DegenerateChainError,
    DegenerateProcessError,
    LambdaTheta,
    NetworkShape,
    Objective,
    ParameterError,
    SecondOrderPoint,
    TwoStateParams,
    approx_aoi_moment,
    cubic_roots,
    lemma_checks,
    optimize_two_state,
    two_state_means,
    two_state_moments,
    two_state_variances,
)
from aoiopt import oracle
from aoiopt.twostate import GridSpec, lambda_grid, theta_lower_bound


def test_params_round_trip():
    p = TwoStateParams(0.25, 1.0)
    lt = p.to_lambda_theta()
    assert lt.lam == pytest.approx(0.2)
    assert lt.theta == pytest.approx(-0.25)
    back = lt.to_params()
    assert back.r == pytest.approx(0.25) and back.s == pytest.approx(1.0)


def test_param_errors():
    with pytest.raises(ParameterError):
        TwoStateParams(1.2, 0.5)
    with pytest.raises(DegenerateChainError):
        TwoStateParams(0.0, 0.0)
    with pytest.raises(ParameterError):
        LambdaTheta(0.2, -0.9)  # below the feasible bound -0.25
    with pytest.raises(ParameterError):
        NetworkShape(0, 3)


def test_means_examples():
    assert two_state_means(LambdaTheta(0.5, 0.3), NetworkShape(1, 1)) == pytest.approx((0.5, 0.5))
    assert two_state_means(LambdaTheta(0.2, 0.0), NetworkShape(1, 2)) == pytest.approx((0.16, 0.64))
    m_a, _ = two_state_means(LambdaTheta(1 / 8, 0.0), NetworkShape(1, 8))
    pi = oracle.stationary(oracle.aloha_chain(1 / 8))
    assert m_a == pytest.approx(pi[1] * pi[0] ** 7, rel=1e-12)
    assert m_a == pytest.approx(0.049087, abs=1e-6)


@pytest.mark.parametrize("lam", [0.1, 0.3, 0.7])
@pytest.mark.parametrize("shape", [NetworkShape(1, 1), NetworkShape(2, 3)])
def test_iid_variance(lam, shape):
    m_a, m_p = two_state_means(LambdaTheta(lam, 0.0), shape)
    v_a2, v_p2 = two_state_variances(LambdaTheta(lam, 0.0), shape)
    assert v_a2 == pytest.approx(m_a * (1 - m_a), rel=1e-14)
    assert v_p2 == pytest.approx(m_p * (1 - m_p), rel=1e-14)


def test_unit_theta_rejected():
    with pytest.raises(DegenerateChainError):
        two_state_variances(LambdaTheta(0.5, 1.0), NetworkShape(1, 1))


def _autocov_oracle(r, s, shape, k_trunc=1000):
    """Covariance sum from explicit powers of the per-user matrix."""
    P = np.array([[1 - r, r], [s, 1 - s]])
    lam = r / (r + s)
    m_a = lam * (1 - lam) ** (shape.N - 1)
    m_p = (1 - lam) ** shape.users
    Pk = np.eye(2)
    va, vp = m_a - m_a**2, m_p - m_p**2
    for _ in range(k_trunc):
        Pk = Pk @ P
        va += 2 * m_a * (Pk[1, 1] * Pk[0, 0] ** (shape.N - 1) - m_a)
        vp += 2 * m_p * (Pk[0, 0] ** shape.users - m_p)
    return va, vp


@pytest.mark.parametrize(
    "r,s,shape",
    [(0.5, 1.0, NetworkShape(1, 1)), (0.25, 1.0, NetworkShape(1, 2)), (0.3, 0.6, NetworkShape(2, 2))],
)
def test_variance_autocov_oracle(r, s, shape):
    got = two_state_variances(TwoStateParams(r, s).to_lambda_theta(), shape)
    np.testing.assert_allclose(got, _autocov_oracle(r, s, shape), rtol=0, atol=1e-9)


def test_variance_against_labelled_joint_chain():
    # every user tracked explicitly, no symmetry assumptions
    chain = oracle.two_state_chain(0.25, 1.0)
    shape = NetworkShape(1, 2)
    exact = oracle.exact_mean_variance_joint(chain, shape, 1000)
    v_a2, v_p2 = two_state_variances(LambdaTheta(0.2, -0.25), shape)
    assert v_a2 == pytest.approx(exact.v_a2, abs=1e-9)
    assert v_p2 == pytest.approx(exact.v_p2, abs=1e-9)


def test_moments_examples():
    with pytest.raises(DegenerateProcessError):
        two_state_moments(TwoStateParams(1.0, 0.0), NetworkShape(1, 2), Objective(1.0, 1))
    shape = NetworkShape(1, 1)
    lt = LambdaTheta(0.2, -0.25)
    m, _ = two_state_means(lt, shape)
    v2, _ = two_state_variances(lt, shape)
    f = two_state_moments(TwoStateParams(0.25, 1.0), shape, Objective(1.0, 1))[2]
    assert f == pytest.approx(0.5 * (v2 / m**2 + 1 / m) + 0.5)
    # slotted ALOHA, i.i.d. deliveries
    shape8 = NetworkShape(1, 8)
    m8 = (1 / 8) * (7 / 8) ** 7
    f8 = two_state_moments(TwoStateParams(1 / 8, 7 / 8), shape8, Objective(1.0, 1))[2]
    assert f8 == pytest.approx(approx_aoi_moment(SecondOrderPoint(m8, m8 * (1 - m8)), 1))


def test_passive_only_objective_skips_active_side():
    aoi_a, aoi_p, f = two_state_moments(TwoStateParams(0.3, 1.0), NetworkShape(1, 3), Objective(0.0, 2))
    assert f == pytest.approx(aoi_p)


def test_optimizer_examples():
    obj = Objective(1.0, 1)
    best, _ = optimize_two_state(NetworkShape(1, 1), obj)
    lams = lambda_grid(NetworkShape(1, 1))
    assert best.s == 1.0
    assert best.to_lambda_theta().lam == pytest.approx(lams[-1])
    best8, f8 = optimize_two_state(NetworkShape(1, 8), obj)
    assert best8.to_lambda_theta().lam == pytest.approx(1 / 8, abs=0.03)
    best0, _ = optimize_two_state(NetworkShape(2, 4), Objective(0.0, 1))
    assert best0.to_lambda_theta().lam == pytest.approx(lams[0])


def test_s_one_row_holds_grid_minimum():
    shape, obj = NetworkShape(1, 8), Objective(1.0, 1)
    _, f_line = optimize_two_state(shape, obj)
    f_grid = math.inf
    for r in np.arange(0.01, 0.16, 0.01):
        for s in np.arange(0.05, 1.0001, 0.05):
            if r / (r + s) <= 1 / 8:
                f_grid = min(f_grid, two_state_moments(TwoStateParams(r, s), shape, obj)[2])
    assert f_line <= f_grid * (1 + 1e-3)


def test_cubic_roots_examples():
    rep = cubic_roots(NetworkShape(1, 5))
    assert rep.alpha > 1 / 5 and rep.beta > 1 / 5
    rep10 = cubic_roots(NetworkShape(1, 10))
    assert rep10.residual_alpha < 1e-12
    # sign scan: exactly one crossing on [0, 1]
    y = np.linspace(0, 1, 100001)
    h = -(10 + 8) * y**3 - (10 - 13) * y**2 - 6 * y + 1
    crossings = np.flatnonzero(np.sign(h[:-1]) != np.sign(h[1:]))
    assert len(crossings) == 1
    assert abs(y[crossings[0]] - rep10.alpha) < 1e-4
    assert cubic_roots(NetworkShape(1, 100)).alpha > 0.01


def test_lemma_checks_small_grid():
    grid = GridSpec(lambdas=(0.1,), thetas=(0.1, 0.3, 0.5), alpha_N=(5, 20), beta_C=(1, 2), beta_N_max=20)
    rep = lemma_checks(NetworkShape(1, 6), Objective(1.0, 1), grid)
    assert rep.claims[0].passed and rep.claims[0].checked == 3
    assert rep.passed


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(1, 200))
def test_g_recursions(r, s, k):
    lam, theta = r / (r + s), 1 - r - s
    g = [1.0]
    gbar = [1.0]
    for _ in range(k - 1):
        g.append(r + theta * g[-1])
        gbar.append(s + theta * gbar[-1])
    assert g[-1] == pytest.approx(lam + (1 - lam) * theta ** (k - 1), abs=1e-12)
    assert gbar[-1] == pytest.approx(1 - lam + lam * theta ** (k - 1), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.floats(-0.9, 0.9), st.integers(1, 3), st.integers(1, 3))
def test_variances_match_oracle(lam, theta, C, N):
    assume(theta >= theta_lower_bound(lam) + 1e-9)
    lt = LambdaTheta(lam, theta)
    p = lt.to_params()
    shape = NetworkShape(C, N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exact = oracle.exact_mean_variance(oracle.two_state_chain(p.r, p.s), shape, 1000)
        got = two_state_variances(lt, shape, 1000)
    m = two_state_means(lt, shape)
    assert m[0] == pytest.approx(exact.m_a, abs=1e-9) and m[1] == pytest.approx(exact.m_p, abs=1e-9)
    assert got[0] == pytest.approx(max(exact.v_a2, 0.0), abs=1e-8)
    assert got[1] == pytest.approx(max(exact.v_p2, 0.0), abs=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(-0.9, 0.9), st.integers(1, 4))
def test_truncation_tail(lam, theta, N):
    assume(theta >= theta_lower_bound(lam) + 1e-9)
    lt, shape = LambdaTheta(lam, theta), NetworkShape(1, N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        a = np.array(two_state_variances(lt, shape, 1000))
        b = np.array(two_state_variances(lt, shape, 2000))
    assert np.all(np.abs(a - b) < 1e-8)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(1, 10), st.sampled_from([0.0, 0.5, 1.0]), st.integers(1, 3))
def test_optimizer_invariants(C, N, w, z):
    shape = NetworkShape(C, N)
    best, f = optimize_two_state(shape, Objective(w, z), r_step=0.05)
    assert best.s == 1.0
    assert best.to_lambda_theta().lam <= 1 / N + 1e-12
    assert math.isfinite(f)
