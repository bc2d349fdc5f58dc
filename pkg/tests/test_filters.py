import numpy as np
import pytest
from numpy.testing import assert_allclose

from pcrlb import (GaussianBelief, ParticleSet, UTParams, init_particles, kalman_step,
                   linear_gaussian_model, particle_moments, pf_step, run_pf, run_ukf,
                   sample_trajectory, sigma_points, systematic_resample, ukf_step,
                   ungm_model, unscented_transform)

from conftest import random_stable_linear_model


def kalman_run(model, measurements):
    belief = GaussianBelief(model.prior.mean, model.prior.cov)
    a = model.transition_jacobian(1, model.prior.mean)
    h = model.measurement_jacobian(1, model.prior.mean)
    out = []
    for z in measurements:
        step = kalman_step(a, h, model.process_cov, model.meas_cov, belief, z)
        out.append(step)
        belief = step.posterior
    return out


def test_kalman_step_hand_values():
    """Posterior variances for the all-ones scalar model follow 2/3, 5/8, 13/21."""
    one = np.ones((1, 1))
    belief = GaussianBelief(np.zeros(1), one.copy())
    for expected in (2.0 / 3.0, 5.0 / 8.0, 13.0 / 21.0):
        out = kalman_step(one, one, one, one, belief, np.zeros(1))
        assert_allclose(out.posterior.cov, [[expected]], rtol=1e-14)
        belief = out.posterior


def test_sigma_points_shape_and_weights():
    belief = GaussianBelief(np.array([1.0, -2.0]), np.diag([4.0, 9.0]))
    pts = sigma_points(belief.mean, belief.cov, UTParams())
    assert pts.points.shape == (5, 2)
    assert_allclose(pts.mean_weights.sum(), 1.0, atol=1e-12)
    # wings come in +/- pairs around the center
    assert_allclose(pts.points[1:3] + pts.points[3:5],
                    np.tile(2.0 * belief.mean, (2, 1)), atol=1e-12)


def test_unscented_transform_identity():
    belief = GaussianBelief(np.array([0.3, -1.0]), np.diag([2.0, 0.5]))
    noise = np.eye(2) * 0.1
    mean, cov, cross = unscented_transform(lambda x: x, belief, noise, UTParams())
    assert_allclose(mean, belief.mean, atol=1e-12)
    assert_allclose(cov, belief.cov + noise, atol=1e-12)
    assert_allclose(cross, belief.cov, atol=1e-12)


def test_unscented_transform_linear_exact(rng):
    a = rng.standard_normal((2, 2))
    belief = GaussianBelief(rng.standard_normal(2), np.diag([1.5, 0.7]))
    noise = np.eye(2) * 0.3
    mean, cov, cross = unscented_transform(lambda x: a @ x, belief, noise, UTParams())
    assert_allclose(mean, a @ belief.mean, atol=1e-10)
    assert_allclose(cov, a @ belief.cov @ a.T + noise, atol=1e-10)
    assert_allclose(cross, belief.cov @ a.T, atol=1e-10)


def test_unscented_transform_quadratic_hand_value():
    # n=1, kappa=2: center weight 2/3, wings 1/6 at +-sqrt(3)
    belief = GaussianBelief(np.zeros(1), np.eye(1))
    mean, _, _ = unscented_transform(lambda x: x**2, belief, np.zeros((1, 1)),
                                     UTParams(alpha=1.0, kappa=2.0))
    assert_allclose(mean, [1.0], atol=1e-12)


def test_ukf_matches_kalman_over_50_steps(rng):
    for dim in (1, 2):
        model = random_stable_linear_model(rng, dim)
        traj = sample_trajectory(model, 50, rng.integers(2**32))
        kalman = kalman_run(model, traj.measurements)
        ukf = run_ukf(model, traj.measurements)
        for ko, uo in zip(kalman, ukf):
            assert_allclose(uo.posterior.mean, ko.posterior.mean, atol=1e-9)
            assert_allclose(uo.posterior.cov, ko.posterior.cov, atol=1e-9)
            assert_allclose(uo.predicted.mean, ko.predicted.mean, atol=1e-9)


def test_ukf_uninformative_measurement():
    model = ungm_model(meas_var=1e12)
    belief = GaussianBelief(np.array([0.5]), np.array([[2.0]]))
    out = ukf_step(model, 1, belief, np.array([0.3]))
    assert_allclose(out.posterior.mean, out.predicted.mean, rtol=1e-6)
    assert_allclose(out.posterior.cov, out.predicted.cov, rtol=1e-6)


def test_ukf_zero_innovation():
    """A measurement equal to its prediction leaves the mean at the prediction."""
    model = ungm_model()
    belief = GaussianBelief(np.array([1.2]), np.array([[0.5]]))
    pred_mean, pred_cov, _ = unscented_transform(
        lambda x: model.transition(1, x), belief, model.process_cov, UTParams())
    z_mean, _, _ = unscented_transform(
        lambda x: model.measure(1, x), GaussianBelief(pred_mean, pred_cov),
        model.meas_cov, UTParams())
    out = ukf_step(model, 1, belief, z_mean)
    assert_allclose(out.posterior.mean, out.predicted.mean, atol=1e-10)
    assert_allclose(out.predicted.mean, pred_mean, atol=1e-12)


def test_particle_moments_hand_values():
    states = np.array([[1.0], [3.0]])
    weights = np.array([0.5, 0.5])
    belief = particle_moments(states, weights)
    assert_allclose(belief.mean, [2.0])
    assert_allclose(belief.cov, [[1.0]], atol=1e-9)


def test_particle_moments_degenerate():
    states = np.array([[4.0], [9.0], [1.0]])
    w = np.array([0.0, 1.0, 0.0])
    belief = particle_moments(states, w)
    assert_allclose(belief.mean, [9.0])
    assert belief.cov[0, 0] <= 1e-8  # zero plus regularization


def test_particle_set_validation():
    with pytest.raises(ValueError):
        ParticleSet(np.zeros((3, 1)), np.array([0.5, 0.2, 0.2]))
    ps = ParticleSet(np.zeros((4, 1)), np.full(4, 0.25))
    assert_allclose(ps.ess, 4.0)


def test_systematic_resample_examples():
    assert systematic_resample(np.full(4, 0.25), 0.37).tolist() == [0, 1, 2, 3]
    assert systematic_resample(np.array([1.0, 0.0, 0.0, 0.0]), 0.9).tolist() == [0, 0, 0, 0]
    got = systematic_resample(np.array([0.5, 0.5, 0.0, 0.0]), 0.1)
    assert got.tolist() == [0, 0, 1, 1]


def test_systematic_resample_rejects_unnormalized():
    with pytest.raises(ValueError):
        systematic_resample(np.array([0.5, 0.6]), 0.1)


def test_resampling_preserves_weighted_mean():
    """Average of 1000 seeded resampled means stays within 3 standard errors."""
    rng = np.random.default_rng(314)
    values = np.array([-2.0, -0.5, 0.1, 1.3, 4.0])
    weights = np.array([0.1, 0.15, 0.3, 0.25, 0.2])
    target = float(weights @ values)
    means = []
    for _ in range(1000):
        idx = systematic_resample(weights, rng.uniform())
        means.append(values[idx].mean())
    means = np.asarray(means)
    se = means.std(ddof=1) / np.sqrt(len(means))
    assert abs(means.mean() - target) < 3.0 * max(se, 1e-12)


def test_pf_single_particle_no_noise():
    tiny = 1e-30
    model = ungm_model(process_var=tiny, meas_var=5.0)
    particles = ParticleSet(np.array([[1.0]]), np.array([1.0]))
    new, out = pf_step(model, 1, particles, np.array([0.5]), seed=0)
    assert_allclose(out.posterior.mean, model.transition(1, np.array([1.0])), atol=1e-9)


def test_pf_identical_particles():
    model = ungm_model(process_var=1e-30)
    states = np.full((50, 1), 2.0)
    particles = ParticleSet(states, np.full(50, 0.02))
    _, out = pf_step(model, 1, particles, np.array([1.0]), seed=3)
    assert_allclose(out.posterior.mean, model.transition(1, np.array([2.0])), atol=1e-6)
    assert out.posterior.cov[0, 0] < 1e-8


def test_pf_converges_to_kalman(rng):
    model = random_stable_linear_model(rng, 1)
    traj = sample_trajectory(model, 10, 777)
    kalman = kalman_run(model, traj.measurements)
    k_mean = kalman[-1].posterior.mean
    k_var = kalman[-1].posterior.cov[0, 0]
    errors = {}
    for n in (100, 10000):
        outputs = run_pf(model, traj.measurements, n_particles=n, seed=2024)
        errors[n] = abs(outputs[-1].posterior.mean[0] - k_mean[0])
    assert errors[10000] < errors[100]
    assert errors[10000] < 3.0 * np.sqrt(k_var / 10000)


def test_pf_large_sample_single_step():
    model = linear_gaussian_model(np.array([[0.8]]), np.array([[1.0]]),
                                  np.array([[0.5]]), np.array([[0.4]]),
                                  np.zeros(1), np.array([[1.0]]))
    n = 100000
    particles = init_particles(model, n, seed=5)
    z = np.array([0.7])
    new, out = pf_step(model, 1, particles, z, seed=6,
                       resample="adaptive", ess_threshold=0.0)
    kal = kalman_step(np.array([[0.8]]), np.array([[1.0]]), np.array([[0.5]]),
                      np.array([[0.4]]), GaussianBelief(np.zeros(1), np.array([[1.0]])), z)
    se = np.sqrt(kal.posterior.cov[0, 0] / new.ess)
    assert abs(out.posterior.mean[0] - kal.posterior.mean[0]) < 3.0 * se


def test_pf_reproducible():
    model = ungm_model()
    traj = sample_trajectory(model, 15, 42)
    a = run_pf(model, traj.measurements, n_particles=300, seed=9)
    b = run_pf(model, traj.measurements, n_particles=300, seed=9)
    for oa, ob in zip(a, b):
        assert np.array_equal(oa.posterior.mean, ob.posterior.mean)
        assert np.array_equal(oa.posterior.cov, ob.posterior.cov)


def test_pf_vanished_likelihood_warns():
    # measurement so extreme that every log-likelihood is -inf
    model = ungm_model()
    particles = ParticleSet(np.zeros((20, 1)), np.full(20, 0.05))
    with pytest.warns(RuntimeWarning):
        _, out = pf_step(model, 1, particles, np.array([1e200]), seed=1)
    assert np.all(np.isfinite(out.posterior.mean))


def test_pf_nan_measurement_raises():
    from pcrlb import NumericError

    model = ungm_model()
    particles = ParticleSet(np.zeros((20, 1)), np.full(20, 0.05))
    with pytest.raises(NumericError):
        pf_step(model, 1, particles, np.array([np.nan]), seed=1)


def test_ukf_reproducible():
    model = ungm_model()
    traj = sample_trajectory(model, 20, 8)
    a = run_ukf(model, traj.measurements)
    b = run_ukf(model, traj.measurements)
    for oa, ob in zip(a, b):
        assert np.array_equal(oa.posterior.mean, ob.posterior.mean)
        assert np.array_equal(oa.posterior.cov, ob.posterior.cov)
