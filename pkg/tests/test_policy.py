import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scac.errors import ParameterError
from scac.mdp import GarnetSpec
from scac.policy import (FeatureSet, PolicyParams, action_feature, build_feature_set,
                         has_constant_in_span, likelihood_ratio, likelihood_ratio_all,
                         policy_distribution, policy_matrix, sample_action)


@pytest.mark.parametrize("X,L,l", [(30, 8, 3), (100, 20, 5)])
def test_benchmark_feature_sets(X, L, l):
    fs = build_feature_set(GarnetSpec(X, 4, 2, 0.1, L, l), seed=1)
    assert fs.phi.shape == (X, L)
    assert set(np.unique(fs.phi)) == {0.0, 1.0}
    assert np.all(fs.phi.sum(axis=1) == l)
    assert len({tuple(r) for r in fs.phi}) == X
    assert np.linalg.matrix_rank(fs.phi) == L


def test_benchmark_feature_sets_represent_the_constant():
    fs = build_feature_set(GarnetSpec(30, 4, 2, 0.1, 8, 3), seed=1)
    assert has_constant_in_span(fs.phi)
    np.testing.assert_allclose(fs.phi @ np.full(8, 1 / 3), 1.0)


def test_pigeonhole_infeasible():
    with pytest.raises(ParameterError):
        build_feature_set(GarnetSpec(3, 2, 2, 0.0, 2, 1), seed=0)


def test_feature_set_deterministic():
    spec = GarnetSpec(30, 4, 2, 0.1, 8, 3)
    assert build_feature_set(spec, 5).phi.tobytes() == build_feature_set(spec, 5).phi.tobytes()
    assert build_feature_set(spec, 5).phi.tobytes() != build_feature_set(spec, 6).phi.tobytes()


@pytest.mark.parametrize("seed", range(8))
def test_exclude_constant_basis(seed):
    fs = build_feature_set(GarnetSpec(10, 3, 2, 0.0, 5, 3), seed, exclude_constant=True)
    assert not has_constant_in_span(fs.phi)
    assert np.linalg.matrix_rank(fs.phi) == 5
    assert len({tuple(r) for r in fs.phi}) == 10
    assert np.all((fs.phi.sum(axis=1) >= 1) & (fs.phi.sum(axis=1) <= 3))


def test_normalized_columns():
    fs = build_feature_set(GarnetSpec(30, 4, 2, 0.1, 8, 3), 1, normalize_columns=True)
    np.testing.assert_allclose(np.linalg.norm(fs.phi, axis=0), 1.0)


def _fs(seed=0, X=6, U=3, L=4, l=2):
    return build_feature_set(GarnetSpec(X, U, 2, 0.0, L, l), seed)


def test_action_feature_blocks():
    fs = _fs()
    xi = action_feature(fs, 2, 0)
    np.testing.assert_array_equal(xi[:4], fs.phi[2])
    assert not xi[4:].any()
    for x, u, v in itertools.product(range(6), range(3), range(3)):
        a, b = action_feature(fs, x, u), action_feature(fs, x, v)
        assert a @ b == (2 if u == v else 0)
    with pytest.raises(IndexError):
        action_feature(fs, 0, 3)


def test_zero_theta_is_uniform():
    fs = _fs()
    np.testing.assert_allclose(policy_distribution(fs, np.zeros(fs.K), 1), 1 / 3)


def test_shift_invariance(rng):
    fs = _fs()
    theta = rng.standard_normal(fs.K)
    # adding c to every weight on one active column raises each logit of
    # that state by c
    x = 0
    col = int(np.flatnonzero(fs.phi[x])[0])
    shifted = theta.reshape(3, 4).copy()
    shifted[:, col] += 7.5
    np.testing.assert_allclose(policy_distribution(fs, shifted.ravel(), x),
                               policy_distribution(fs, theta, x), atol=1e-15)


def test_matches_extended_precision(rng):
    fs = _fs(X=5, U=3, L=4, l=2)
    theta = 4 * rng.standard_normal(fs.K)
    mpmath.mp.dps = 50
    for x in range(5):
        logits = [mpmath.mpf(float(theta @ action_feature(fs, x, u))) for u in range(3)]
        total = mpmath.fsum(mpmath.exp(z) for z in logits)
        ref = [float(mpmath.exp(z) / total) for z in logits]
        np.testing.assert_allclose(policy_distribution(fs, theta, x), ref, rtol=1e-14, atol=0)


def test_large_logits_stay_finite():
    fs = _fs()
    mu = policy_distribution(fs, np.full(fs.K, 400.0) * np.repeat([1, 0, 0], 4), 0)
    assert np.all(np.isfinite(mu)) and mu[0] == pytest.approx(1.0)


def test_non_finite_theta_rejected():
    fs = _fs()
    theta = np.zeros(fs.K)
    theta[0] = np.nan
    with pytest.raises(ParameterError):
        policy_distribution(fs, theta, 0)
    with pytest.raises(ParameterError):
        PolicyParams(theta)


def test_policy_params_accepted():
    fs = _fs()
    params = PolicyParams(np.zeros(fs.K))
    np.testing.assert_allclose(policy_distribution(fs, params, 0), 1 / 3)


def test_single_action_score_is_zero():
    fs = build_feature_set(GarnetSpec(6, 1, 2, 0.0, 4, 2), 0)
    assert not likelihood_ratio(fs, np.ones(fs.K), 3, 0).any()


def test_uniform_two_action_score():
    fs = build_feature_set(GarnetSpec(6, 2, 2, 0.0, 4, 2), 0)
    psi = likelihood_ratio(fs, np.zeros(fs.K), 1, 0)
    expected = (action_feature(fs, 1, 0) - action_feature(fs, 1, 1)) / 2
    np.testing.assert_allclose(psi, expected, atol=1e-16)


def test_score_matrix_matches_pointwise(rng):
    fs = _fs()
    theta = rng.standard_normal(fs.K)
    full = likelihood_ratio_all(fs, theta)
    for x, u in itertools.product(range(6), range(3)):
        np.testing.assert_allclose(full[x, u], likelihood_ratio(fs, theta, x, u), atol=1e-15)
    np.testing.assert_allclose(policy_matrix(fs, theta)[4], policy_distribution(fs, theta, 4))


thetas = arrays(np.float64, 12, elements=st.floats(-6, 6, allow_nan=False))


@settings(max_examples=60, deadline=None)
@given(theta=thetas, x=st.integers(0, 5))
def test_distribution_and_score_identities(theta, x):
    fs = _fs()
    mu = policy_distribution(fs, theta, x)
    assert np.all(mu > 0)
    assert abs(mu.sum() - 1) <= 1e-12
    psis = np.array([likelihood_ratio(fs, theta, x, u) for u in range(3)])
    # direct summation of sum_u mu psi
    assert np.abs(mu @ psis).max() <= 1e-10
    assert np.linalg.norm(psis, axis=1).max() <= 2 * math.sqrt(2) + 1e-12


@settings(max_examples=40, deadline=None)
@given(theta=arrays(np.float64, 12, elements=st.floats(-3, 3, allow_nan=False)),
       x=st.integers(0, 5), u=st.integers(0, 2), k=st.integers(0, 11))
def test_score_matches_finite_differences(theta, x, u, k):
    fs = _fs()
    eps = 1e-5
    delta = np.zeros(12)
    delta[k] = 1.0
    fd = (policy_distribution(fs, theta + eps * delta, x)[u]
          - policy_distribution(fs, theta - eps * delta, x)[u]) / (2 * eps)
    analytic = policy_distribution(fs, theta, x)[u] * (likelihood_ratio(fs, theta, x, u) @ delta)
    assert abs(fd - analytic) <= 1e-6 * max(abs(analytic), 1e-3)


def test_dominant_action_sampling():
    fs = _fs()
    theta = np.zeros(fs.K)
    theta[4:8] = 50.0  # action 1 dominates in every state
    rng = np.random.default_rng(2)
    acts = [sample_action(fs, theta, 3, rng) for _ in range(10_000)]
    assert np.mean(np.array(acts) == 1) > 0.999


def test_uniform_sampling_frequencies():
    fs = _fs()
    rng = np.random.default_rng(3)
    n = 30_000
    counts = np.bincount([sample_action(fs, np.zeros(fs.K), 0, rng) for _ in range(n)], minlength=3)
    band = 3 * math.sqrt((1 / 3) * (2 / 3) / n)
    assert np.all(np.abs(counts / n - 1 / 3) <= band)


def test_sampling_deterministic_and_one_draw():
    fs = _fs()
    theta = np.linspace(-1, 1, fs.K)
    a, b = np.random.default_rng(9), np.random.default_rng(9)
    assert ([sample_action(fs, theta, 2, a) for _ in range(50)]
            == [sample_action(fs, theta, 2, b) for _ in range(50)])
    c, d = np.random.default_rng(1), np.random.default_rng(1)
    sample_action(fs, theta, 0, c)
    d.random()
    assert c.random() == d.random()


def test_feature_set_round_trip():
    fs = _fs()
    back = FeatureSet.from_dict(fs.to_dict())
    assert back.phi.tobytes() == fs.phi.tobytes() and back.n_actions == fs.n_actions
