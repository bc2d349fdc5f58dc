import numpy as np
import pytest
from numpy.testing import assert_allclose

from pcrlb import (BoundSeries, DecomposedFim, FimTriple, GaussianBelief, NumericError,
                   bound_difference, decompose_terms, fim_recursion_step,
                   fim_via_decomposition, initial_fim, inv_lemma_split,
                   kalman_step, linear_gaussian_model, mean_cov_terms,
                   mean_only_terms, pcrlb_from_theta_pi, spd_inverse,
                   true_fim_terms_mc, ungm_model)

from conftest import random_spd, random_stable_linear_model

# frozen large-sample value of E[f'(x)^2] for the default scalar benchmark
# model under its prior, from a 1e7-sample run of an independent script
UNGM_D11_PRIOR = 44.300790


def unit_linear_model():
    one = np.ones((1, 1))
    return linear_gaussian_model(one, one, one, one, np.zeros(1), one)


def test_initial_fim_values():
    assert_allclose(initial_fim(unit_linear_model().prior), [[1.0]])
    model = ungm_model()  # prior variance 20
    assert_allclose(initial_fim(model.prior), [[0.05]])
    model2 = linear_gaussian_model(np.eye(2), np.eye(2), np.eye(2), np.eye(2),
                                   np.zeros(2), np.eye(2))
    assert_allclose(initial_fim(model2.prior), np.eye(2))


def test_recursion_step_hand_value():
    terms = FimTriple(d11=np.array([[1.0]]), d12=np.array([[-1.0]]),
                      d22=np.array([[2.0]]))
    j1 = fim_recursion_step(np.array([[1.0]]), terms)
    assert_allclose(j1, [[1.5]], rtol=1e-14)
    # 1/1.5 is the Kalman posterior variance 2/3 for the all-ones model
    assert_allclose(1.0 / j1[0, 0], 2.0 / 3.0, rtol=1e-14)


def test_recursion_step_decoupled():
    terms = FimTriple(d11=np.diag([2.0, 3.0]), d12=np.zeros((2, 2)),
                      d22=np.diag([4.0, 5.0]))
    j1 = fim_recursion_step(np.eye(2), terms)
    assert_allclose(j1, np.diag([4.0, 5.0]))


def test_recursion_tracks_kalman_covariance(rng):
    """Inverse information equals the Kalman posterior covariance at every step."""
    for dim in (1, 2):
        model = random_stable_linear_model(rng, dim)
        x = model.prior.mean
        j = initial_fim(model.prior)
        belief = GaussianBelief(model.prior.mean, model.prior.cov)
        a = model.transition_jacobian(1, x)
        h = model.measurement_jacobian(1, x)
        for k in range(1, 51):
            j = fim_recursion_step(j, mean_only_terms(model, k, x))
            out = kalman_step(a, h, model.process_cov, model.meas_cov,
                              belief, np.zeros(dim))
            belief = out.posterior
            assert_allclose(spd_inverse(j), belief.cov, atol=1e-8)


def test_true_terms_constant_for_linear_model(rng):
    model = random_stable_linear_model(rng, 2)
    states_prev = rng.standard_normal((40, 2))
    states_new = rng.standard_normal((40, 2))
    terms = true_fim_terms_mc(model, 3, states_prev, states_new)
    a = model.transition_jacobian(3, np.zeros(2))
    h = model.measurement_jacobian(3, np.zeros(2))
    q_inv = spd_inverse(model.process_cov)
    r_inv = spd_inverse(model.meas_cov)
    assert_allclose(terms.d11, a.T @ q_inv @ a, atol=1e-12)
    assert_allclose(terms.d12, -a.T @ q_inv, atol=1e-12)
    assert_allclose(terms.d22, q_inv + h.T @ r_inv @ h, atol=1e-12)


def test_true_terms_single_sample_equals_mean_only():
    model = ungm_model()
    x_prev = np.array([1.7])
    x_new = np.array([-0.4])
    mc = true_fim_terms_mc(model, 2, x_prev[None, :], x_new[None, :])
    point = mean_only_terms(model, 2, x_prev, x_new)
    assert_allclose(mc.d11, point.d11, rtol=1e-12)
    assert_allclose(mc.d12, point.d12, rtol=1e-12)
    assert_allclose(mc.d22, point.d22, rtol=1e-12)


def test_true_terms_large_sample_matches_frozen_value():
    model = ungm_model()
    rng = np.random.default_rng(19)
    samples = rng.normal(0.0, np.sqrt(20.0), size=(100000, 1))
    terms = true_fim_terms_mc(model, 1, samples, samples)
    assert abs(terms.d11[0, 0] - UNGM_D11_PRIOR) / UNGM_D11_PRIOR < 0.01


def test_true_terms_validation():
    model = ungm_model()
    with pytest.raises(ValueError):
        true_fim_terms_mc(model, 1, np.zeros((3, 1)), np.zeros((4, 1)))
    with pytest.raises(ValueError):
        true_fim_terms_mc(model, 1, np.zeros((0, 1)), np.zeros((0, 1)))


def test_mean_only_linear_hand_values():
    terms = mean_only_terms(unit_linear_model(), 1, np.zeros(1))
    assert_allclose(terms.d11, [[1.0]])
    assert_allclose(terms.d12, [[-1.0]])
    assert_allclose(terms.d22, [[2.0]])


def test_mean_only_ungm_hand_values():
    model = ungm_model()
    terms = mean_only_terms(model, 1, np.array([1.0]), np.array([2.0]))
    assert_allclose(terms.d11, [[0.25]], atol=1e-14)  # slope 0.5 at x=1
    flat = mean_only_terms(model, 1, np.array([1.0]), np.array([0.0]))
    assert_allclose(flat.d22, [[1.0]], atol=1e-14)  # measurement slope 0 at 0


def test_mean_cov_linear_hand_values():
    """Unit scalar model with belief variance 1: information is damped."""
    terms = mean_cov_terms(unit_linear_model(), 1,
                           GaussianBelief(np.zeros(1), np.ones((1, 1))))
    assert_allclose(terms.d11, [[0.5]], atol=1e-12)
    assert_allclose(terms.d12, [[-0.5]], atol=1e-12)
    # state precision 1/2 plus measurement term 1/(2+1)
    assert_allclose(terms.d22, [[5.0 / 6.0]], atol=1e-12)


def test_mean_cov_tight_belief_recovers_mean_only(rng):
    """Zero belief covariance on both channels collapses onto the point terms."""
    for dim in (1, 2):
        model = random_stable_linear_model(rng, dim)
        x = rng.standard_normal(dim)
        zero = np.zeros((dim, dim))
        state = GaussianBelief(x, zero)
        meas_point = model.transition(1, x)
        meas = GaussianBelief(meas_point, zero)
        got = mean_cov_terms(model, 1, state, meas)
        want = mean_only_terms(model, 1, x, meas_point)
        assert_allclose(got.d11, want.d11, atol=1e-8)
        assert_allclose(got.d12, want.d12, atol=1e-8)
        assert_allclose(got.d22, want.d22, atol=1e-8)


def scalar_mean_cov_oracle(model, k, x, p, y=None, pz=None):
    """Independent scalar implementation: closed-form moment maps plus
    central differences of their first arguments."""
    q = model.process_cov[0, 0]
    r = model.meas_cov[0, 0]

    def state_mean(t):
        return model.transition(k, np.array([t]))[0] + 0.5 * model.transition_hessians(
            k, np.array([t]))[0][0, 0] * p

    def state_cov(t):
        g = model.transition_jacobian(k, np.array([t]))[0, 0]
        s = model.transition_hessians(k, np.array([t]))[0][0, 0]
        return g * g * p + 0.5 * s * s * p * p + q

    if y is None:
        y, pz = state_mean(x), state_cov(x)

    def meas_mean(t):
        return model.measure(k, np.array([t]))[0] + 0.5 * model.measurement_hessians(
            k, np.array([t]))[0][0, 0] * pz

    def meas_cov(t):
        g = model.measurement_jacobian(k, np.array([t]))[0, 0]
        s = model.measurement_hessians(k, np.array([t]))[0][0, 0]
        return g * g * pz + 0.5 * s * s * pz * pz + r

    def diff(fn, t, h=1e-6):
        return (fn(t + h) - fn(t - h)) / (2.0 * h)

    px = state_cov(x)
    pzz = meas_cov(y)
    dm_x, dp_x = diff(state_mean, x), diff(state_cov, x)
    dm_z, dp_z = diff(meas_mean, y), diff(meas_cov, y)
    d11 = dm_x ** 2 / px + 0.5 * (dp_x / px) ** 2
    d12 = -dm_x / px
    d22 = 1.0 / px + dm_z ** 2 / pzz + 0.5 * (dp_z / pzz) ** 2
    return d11, d12, d22


def test_mean_cov_matches_independent_oracle():
    model = ungm_model()
    rng = np.random.default_rng(99)
    points = [(0.0, 1.0)] + [(rng.uniform(-20, 20), rng.uniform(0.1, 10.0))
                             for _ in range(25)]
    for x, p in points:
        got = mean_cov_terms(model, 2, GaussianBelief(np.array([x]), np.array([[p]])))
        d11, d12, d22 = scalar_mean_cov_oracle(model, 2, x, p)
        assert_allclose(got.d11[0, 0], d11, rtol=1e-4)
        assert_allclose(got.d12[0, 0], d12, rtol=1e-4)
        assert_allclose(got.d22[0, 0], d22, rtol=1e-4)


def test_decompose_linear_hand_values():
    parts = decompose_terms(unit_linear_model(), 1,
                            GaussianBelief(np.zeros(1), np.ones((1, 1))))
    assert_allclose(parts.psi_state, [[0.5]], atol=1e-12)
    assert_allclose(parts.spread_11, [[-0.5]], atol=1e-12)
    assert_allclose(parts.mean_11, [[1.0]], atol=1e-12)
    assert_allclose(parts.d11(), [[0.5]], atol=1e-12)


def test_decompose_zero_spread_limit(rng):
    model = random_stable_linear_model(rng, 2)
    x = rng.standard_normal(2)
    zero = np.zeros((2, 2))
    meas_point = model.transition(1, x)
    parts = decompose_terms(model, 1, GaussianBelief(x, zero),
                            GaussianBelief(meas_point, zero))
    point = mean_only_terms(model, 1, x, meas_point)
    assert_allclose(parts.psi_state, zero, atol=1e-12)
    assert_allclose(parts.psi_meas, zero, atol=1e-12)
    for got, want in ((parts.mean_11, point.d11), (parts.mean_12, point.d12),
                      (parts.mean_22, point.d22)):
        assert_allclose(got, want, atol=1e-10)
    assert_allclose(parts.spread_11, zero, atol=1e-10)
    assert_allclose(parts.spread_12, zero, atol=1e-10)
    assert_allclose(parts.spread_22, zero, atol=1e-10)


def test_decompose_block_sums_match_full_terms():
    model = ungm_model()
    rng = np.random.default_rng(7)
    for _ in range(100):
        belief = GaussianBelief(np.array([rng.uniform(-25, 25)]),
                                np.array([[rng.uniform(0.1, 30.0)]]))
        parts = decompose_terms(model, 3, belief)
        full = mean_cov_terms(model, 3, belief)
        assert_allclose(parts.d11(), full.d11, rtol=1e-8, atol=1e-12)
        assert_allclose(parts.d12(), full.d12, rtol=1e-8, atol=1e-12)
        assert_allclose(parts.d22(), full.d22, rtol=1e-8, atol=1e-12)


def test_fim_via_decomposition_linear_hand_values():
    model = unit_linear_model()
    belief = GaussianBelief(np.zeros(1), np.ones((1, 1)))
    parts = decompose_terms(model, 1, belief)
    state = fim_via_decomposition(np.array([[1.0]]), parts, k=1)
    assert_allclose(state.theta, [[1.5]], atol=1e-12)
    direct = fim_recursion_step(np.array([[1.0]]), mean_cov_terms(model, 1, belief))
    assert_allclose(state.j, direct, atol=1e-10)
    assert_allclose(state.pi, state.j - state.theta, atol=1e-10)
    assert_allclose(state.pi, [[-5.0 / 6.0]], atol=1e-10)
    assert not state.pi_fallback
    assert state.k == 1


def test_fim_via_decomposition_zero_spread_fallback(rng):
    model = random_stable_linear_model(rng, 1)
    x = rng.standard_normal(1)
    zero = np.zeros((1, 1))
    parts = decompose_terms(model, 1, GaussianBelief(x, zero),
                            GaussianBelief(model.transition(1, x), zero))
    state = fim_via_decomposition(np.array([[2.0]]), parts)
    assert state.pi_fallback
    assert_allclose(state.pi, zero, atol=1e-10)
    assert_allclose(state.j, state.theta, atol=1e-10)


def test_fim_via_decomposition_matches_direct_path():
    model = ungm_model()
    rng = np.random.default_rng(11)
    for _ in range(50):
        belief = GaussianBelief(np.array([rng.uniform(-15, 15)]),
                                np.array([[rng.uniform(0.2, 20.0)]]))
        j_prev = np.array([[rng.uniform(0.05, 5.0)]])
        state = fim_via_decomposition(j_prev, decompose_terms(model, 2, belief))
        direct = fim_recursion_step(j_prev, mean_cov_terms(model, 2, belief))
        assert_allclose(state.j, direct, rtol=1e-8, atol=1e-12)
        assert_allclose(state.theta + state.pi, state.j, rtol=1e-12, atol=1e-14)


def test_pcrlb_from_theta_pi_hand_values():
    bound, fallback = pcrlb_from_theta_pi(np.array([[1.0]]), np.array([[1.0]]))
    assert_allclose(bound, [[0.5]], atol=1e-14)
    assert not fallback
    bound0, fallback0 = pcrlb_from_theta_pi(np.array([[1.0]]), np.zeros((1, 1)))
    assert fallback0
    assert_allclose(bound0, [[1.0]], atol=1e-14)


def test_pcrlb_from_theta_pi_random(rng):
    for dim in (1, 2, 3, 4):
        for _ in range(25):
            theta = random_spd(rng, dim)
            pi = random_spd(rng, dim)
            bound, fallback = pcrlb_from_theta_pi(theta, pi)
            assert not fallback
            assert_allclose(bound, np.linalg.inv(theta + pi), atol=1e-10)


def test_bound_difference_hand_values():
    gap, fallback = bound_difference(np.array([[1.0]]), np.array([[1.0]]))
    assert_allclose(gap, [[0.5]], atol=1e-14)
    assert not fallback
    gap0, fallback0 = bound_difference(np.array([[1.0]]), np.zeros((1, 1)))
    assert fallback0
    assert_allclose(gap0, np.zeros((1, 1)), atol=1e-14)


def test_bound_difference_random(rng):
    for dim in (1, 2, 3):
        for _ in range(25):
            j_star = random_spd(rng, dim)
            pi = random_spd(rng, dim)
            gap, fallback = bound_difference(j_star, pi)
            assert not fallback
            direct = np.linalg.inv(j_star) - np.linalg.inv(j_star + pi)
            assert_allclose(gap, direct, atol=1e-10)


def test_spd_inverse_values(rng):
    assert_allclose(spd_inverse(np.eye(3)), np.eye(3))
    assert_allclose(spd_inverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    m = random_spd(rng, 4)
    assert_allclose(spd_inverse(m) @ m, np.eye(4), atol=1e-9)


def test_spd_inverse_errors():
    with pytest.raises(NumericError):
        spd_inverse(np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        spd_inverse(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        spd_inverse(np.zeros((2, 3)))


def test_inv_lemma_split_values(rng):
    assert_allclose(inv_lemma_split(np.eye(1), np.eye(1)), [[0.5]], atol=1e-14)
    assert_allclose(inv_lemma_split(2.0 * np.eye(1), 2.0 * np.eye(1)),
                    [[0.25]], atol=1e-14)
    for dim in (1, 2, 3):
        a = random_spd(rng, dim)
        b = random_spd(rng, dim)
        assert_allclose(inv_lemma_split(a, b), np.linalg.inv(a + b), atol=1e-10)


def test_fim_triple_symmetrizes_and_validates():
    skew = np.array([[1.0, 2.0], [0.0, 1.0]])
    terms = FimTriple(d11=skew, d12=np.zeros((2, 2)), d22=np.eye(2))
    assert_allclose(terms.d11, terms.d11.T)
    assert_allclose(terms.d11, [[1.0, 1.0], [1.0, 1.0]])
    with pytest.raises(ValueError):
        FimTriple(d11=np.eye(2), d12=np.zeros((3, 3)), d22=np.eye(2))


def test_bound_series_rejects_non_finite():
    with pytest.raises(ValueError):
        BoundSeries(method="true", estimator=None,
                    values=np.array([[[np.nan]]]))
    ok = BoundSeries(method="true", estimator=None, values=np.ones((5, 1, 1)))
    assert ok.values.shape == (5, 1, 1)


def test_returned_fims_symmetric_psd():
    model = ungm_model()
    rng = np.random.default_rng(21)
    j = initial_fim(model.prior)
    x = np.array([0.0])
    for k in range(1, 30):
        belief = GaussianBelief(x, np.array([[rng.uniform(0.5, 5.0)]]))
        j = fim_recursion_step(j, mean_cov_terms(model, k, belief))
        assert_allclose(j, j.T, atol=1e-10)
        assert np.all(np.linalg.eigvalsh(spd_inverse(j)) > -1e-12)
        x = np.array([rng.uniform(-10, 10)])
