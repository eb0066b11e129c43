import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aoiopt import (
    LambdaTheta,
    NetworkShape,
    Objective,
    ParameterError,
    TwoStateParams,
    WagParams,
    optimize_wag,
    two_state_moments,
    two_state_variances,
    wag_means,
    wag_moments,
    wag_phi,
    wag_variances,
)
from aoiopt import oracle
from aoiopt.validate import phi_recursion
from aoiopt.wag import wag_not_tx_return, wag_phi_array, wag_stationary, wag_tx_return


def test_param_errors():
    for r, H in [(0.0, 1), (1.0, 1), (0.5, -1), (0.5, 1.5)]:
        with pytest.raises(ParameterError):
            WagParams(r, H)


@pytest.mark.parametrize("r,H", [(0.3, 0), (0.3, 2), (0.7, 4)])
def test_phi_examples(r, H):
    p = WagParams(r, H)
    assert wag_phi(1, p) == pytest.approx(1.0)
    for k in range(2, H + 3):
        assert wag_phi(k, p) == pytest.approx((1 - r) ** (k - 1), rel=1e-12)
    assert wag_phi(H + 3, p) == pytest.approx((1 - r) ** (H + 2) + r, rel=1e-12)
    assert wag_phi(0, p) == 0.0


def test_phi_is_first_idle_return_probability():
    # phi(k): in Idle k-1 slots after being in Idle
    r, H = 0.35, 3
    chain = oracle.wag_chain(r, H)
    row = np.zeros(H + 2)
    row[0] = 1.0
    phi = wag_phi_array(60, WagParams(r, H))
    for k in range(1, 61):
        assert row[0] == pytest.approx(phi[k], abs=1e-13)
        row = row @ chain.transition


def test_means_examples():
    assert wag_means(WagParams(0.5, 0), NetworkShape(1, 1)) == pytest.approx((1 / 3, 2 / 3))
    assert wag_means(WagParams(0.5, 2), NetworkShape(1, 1)) == pytest.approx((0.2, 0.8))
    shape = NetworkShape(2, 4)
    pi = oracle.stationary(oracle.wag_chain(0.3, 3))
    q = pi[1]
    got = wag_means(WagParams(0.3, 3), shape)
    assert got[0] == pytest.approx(q * (1 - q) ** 3, abs=1e-12)
    assert got[1] == pytest.approx((1 - q) ** 8, abs=1e-12)


@pytest.mark.parametrize("r,H", [(0.2, 0), (0.3, 3), (0.8, 6)])
def test_stationary_vector(r, H):
    st_ = wag_stationary(WagParams(r, H))
    pi = oracle.stationary(oracle.wag_chain(r, H))
    assert st_.q0 == pytest.approx(pi[0], abs=1e-12)
    np.testing.assert_allclose(pi[1:], st_.q1, atol=1e-12)
    assert st_.q0 + (H + 1) * st_.q1 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("shape", [NetworkShape(1, 1), NetworkShape(2, 4)])
def test_variances_against_oracle(shape):
    p = WagParams(0.3, 2)
    exact = oracle.exact_mean_variance(oracle.wag_chain(0.3, 2), shape, 1000)
    got = wag_variances(p, shape, 1000)
    assert got[0] == pytest.approx(exact.v_a2, abs=1e-8)
    assert got[1] == pytest.approx(exact.v_p2, abs=1e-8)


def test_variances_against_labelled_joint_chain():
    shape = NetworkShape(1, 2)
    exact = oracle.exact_mean_variance_joint(oracle.wag_chain(0.4, 1), shape, 1000)
    got = wag_variances(WagParams(0.4, 1), shape, 1000)
    np.testing.assert_allclose(got, (exact.v_a2, exact.v_p2), atol=1e-8)


def test_returns_match_chain_propagation():
    r, H = 0.3, 4
    a, b = oracle.conditional_returns(oracle.wag_chain(r, H), 200)
    p = WagParams(r, H)
    phi = wag_phi_array(201, p)
    k = np.arange(1, 201)
    np.testing.assert_allclose(wag_tx_return(k, p, phi), a, atol=1e-13)
    np.testing.assert_allclose(wag_not_tx_return(k, p, phi), b, atol=1e-13)


def test_printed_expression_drifts():
    # the variant weighting the Idle target by r does not settle at 1 - q1
    p = WagParams(0.3, 2)
    phi = wag_phi_array(2001, p)
    k = np.array([2000])
    limit = 1 - wag_stationary(p).q1
    assert wag_not_tx_return(k, p, phi)[0] == pytest.approx(limit, abs=1e-12)
    assert abs(wag_not_tx_return(k, p, phi, printed=True)[0] - limit) > 1e-3


def test_h0_matches_two_state():
    shape = NetworkShape(2, 3)
    for r in np.round(np.arange(0.1, 1.0, 0.1), 10):
        lam = r / (1 + r)
        lt = LambdaTheta(lam, -lam / (1 - lam))
        np.testing.assert_allclose(wag_variances(WagParams(r, 0), shape), two_state_variances(lt, shape),
                                   atol=1e-9)
        obj = Objective(0.5, 2)
        np.testing.assert_allclose(wag_moments(WagParams(r, 0), shape, obj),
                                   two_state_moments(TwoStateParams(r, 1.0), shape, obj), atol=1e-9)


def test_moments_examples():
    shape = NetworkShape(1, 1)
    got = wag_moments(WagParams(0.5, 0), shape, Objective(1.0, 1))
    assert got[2] == pytest.approx(two_state_moments(TwoStateParams(0.5, 1.0), shape, Objective(1.0, 1))[2])
    f = wag_moments(WagParams(0.11, 7), NetworkShape(1, 8), Objective(1.0, 1))[2]
    assert math.isfinite(f) and f > 0
    aoi_a, aoi_p, f0 = wag_moments(WagParams(0.3, 2), NetworkShape(2, 4), Objective(0.0, 2))
    assert f0 == pytest.approx(aoi_p)


@pytest.mark.filterwarnings("ignore:.*truncated variance")
def test_optimizer_examples():
    best, f = optimize_wag(NetworkShape(1, 1), Objective(1.0, 1), r_step=0.05, h_max=5)
    assert best.H == 1 and best.r >= 0.9
    best8, _ = optimize_wag(NetworkShape(1, 8), Objective(8 / 9, 1), r_step=0.01, h_max=15)
    assert best8.H >= 1
    best0, _ = optimize_wag(NetworkShape(1, 4), Objective(0.0, 1), r_step=0.05, h_max=6)
    assert best0.r == pytest.approx(0.05) and best0.H == 6
    with pytest.raises(ParameterError):
        optimize_wag(NetworkShape(1, 4), Objective(1.0, 1), h_max=0)


def test_optimizer_regression():
    # frozen from the validated pipeline
    best, f = optimize_wag(NetworkShape(1, 8), Objective(8 / 9, 1), r_step=0.01, h_max=15)
    assert (best.r, best.H) == (0.24, 5)
    assert f == pytest.approx(15.814, abs=5e-4)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 9), st.integers(0, 6))
def test_phi_closed_form_equals_recursion(r10, H):
    r = r10 / 10
    np.testing.assert_allclose(wag_phi_array(300, WagParams(r, H))[1:], phi_recursion(300, r, H)[1:],
                               rtol=0, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 6))
def test_conditional_probabilities(r, H):
    p = WagParams(r, H)
    phi = wag_phi_array(301, p)
    k = np.arange(1, 301)
    stay = wag_not_tx_return(k, p, phi)
    assert np.all(stay >= -1e-12) and np.all(stay <= 1 + 1e-12)
    tx = wag_tx_return(k, p, phi)
    assert np.all(tx[: H + 1] == 0.0)
    # no return before the wait ends, so those covariance terms are exactly -m_a^2
    m_a, _ = wag_means(p, NetworkShape(1, 3))
    terms = m_a * (tx * stay**2 - m_a)
    np.testing.assert_allclose(terms[: H + 1], -m_a**2, rtol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.95), st.integers(0, 5), st.integers(1, 3), st.integers(1, 3))
def test_variances_match_oracle(r, H, C, N):
    shape = NetworkShape(C, N)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        exact = oracle.exact_mean_variance(oracle.wag_chain(r, H), shape, 1000)
        got = wag_variances(WagParams(r, H), shape, 1000)
    assert got[0] >= 0.0 and got[1] >= 0.0
    assert got[0] == pytest.approx(max(exact.v_a2, 0.0), abs=1e-8)
    assert got[1] == pytest.approx(max(exact.v_p2, 0.0), abs=1e-8)


def test_variance_tends_to_iid_for_small_r():
    p = WagParams(0.001, 0)
    m_a, _ = wag_means(p, NetworkShape(1, 1))
    v_a2, _ = wag_variances(p, NetworkShape(1, 1))
    assert v_a2 == pytest.approx(m_a * (1 - m_a), rel=1e-2)
