import math

import numpy as np
import pytest

from pgp_risk.gp_core import (
    GpHyperparams,
    OptimizerSettings,
    covariance,
    fit_hyperparams,
    fit_multistart,
    input_spread,
    log_marginal_likelihood,
    posterior,
)
from pgp_risk.oracle_suite import (
    dense_gp_solve,
    fd_gradient,
    grid_search_variances,
    pure_noise_training_set,
    random_hyperparams,
    random_training_set,
    sample_gp_training_set,
)
from pgp_risk.pattern_index import TrainingSet


def _hp(dim, signal_var=1.0, noise_var=0.1, scale=1.0):
    return GpHyperparams(signal_var=signal_var, noise_var=noise_var, length_scales=(scale,) * dim)


def test_covariance_at_zero_distance():
    assert covariance([0.3, -1.2], [0.3, -1.2], _hp(2, signal_var=2.5)) == pytest.approx(2.5)


def test_covariance_direct_value():
    a = np.zeros(3)
    b = np.array([math.sqrt(2.0), 0.0, 0.0])

    assert covariance(a, b, _hp(3)) == pytest.approx(math.exp(-1.0), rel=1e-12)


def test_covariance_decays_with_distance():
    hp = _hp(2)
    values = [covariance([0.0, 0.0], [d, 0.0], hp) for d in (0.5, 1.0, 2.0, 4.0, 40.0)]

    assert all(later < earlier for earlier, later in zip(values, values[1:]))
    assert values[-1] == 0.0


def test_covariance_dimension_mismatch():
    with pytest.raises(ValueError):
        covariance([0.0, 1.0], [0.0, 1.0, 2.0], _hp(2))
    with pytest.raises(ValueError):
        covariance([0.0, 1.0], [0.0, 1.0], _hp(3))


def test_hyperparams_must_be_positive():
    with pytest.raises(ValueError):
        GpHyperparams(signal_var=1.0, noise_var=0.0, length_scales=(1.0,))
    with pytest.raises(ValueError):
        GpHyperparams(signal_var=1.0, noise_var=0.1, length_scales=())


def test_log_round_trip():
    hp = GpHyperparams(signal_var=0.7, noise_var=0.02, length_scales=(1.5, 0.4))

    again = GpHyperparams.from_log(hp.to_log())

    assert again.signal_var == pytest.approx(hp.signal_var)
    assert again.length_scales == pytest.approx(hp.length_scales)


def test_posterior_interpolates_training_point():
    ts = TrainingSet.from_arrays([[0.4, -0.2]], [1.3], [0.4, -0.2])
    hp = _hp(2, noise_var=1e-12)

    post = posterior(ts, hp)

    assert post.mean == pytest.approx(1.3, abs=1e-6)
    assert 0.0 <= post.variance <= 1e-6


def test_posterior_reverts_to_prior_far_away():
    ts = TrainingSet.from_arrays([[0.0], [0.5]], [1.0, -2.0], [1e3])
    hp = _hp(1, signal_var=2.0, noise_var=0.3)

    post = posterior(ts, hp)

    assert post.mean == pytest.approx(0.0, abs=1e-12)
    assert post.variance == pytest.approx(2.3)


def test_posterior_matches_dense_inverse():
    rng = np.random.default_rng(42)
    for _ in range(20):
        dim = int(rng.integers(1, 6))
        ts = random_training_set(rng, int(rng.integers(1, 13)), dim)
        hp = random_hyperparams(rng, dim)

        fast = posterior(ts, hp)
        slow = dense_gp_solve(ts, hp, jitter=fast.jitter)

        assert fast.mean == pytest.approx(slow.mean, abs=1e-10)
        assert fast.variance == pytest.approx(slow.variance, abs=1e-10)
        assert fast.log_likelihood == pytest.approx(slow.log_likelihood, abs=1e-10)
        assert 0.0 <= fast.variance <= hp.signal_var + hp.noise_var + 1e-8


def test_scalar_log_likelihood_closed_form():
    hp = _hp(1, signal_var=1.5, noise_var=0.25)
    ts = TrainingSet.from_arrays([[0.2]], [0.9], [0.0])

    value, _ = log_marginal_likelihood(ts, hp)

    c = 1.75 * (1.0 + 1e-10)
    expected = -0.5 * math.log(c) - 0.9**2 / (2.0 * c) - 0.5 * math.log(2.0 * math.pi)
    assert value == pytest.approx(expected, abs=1e-12)


def test_zero_targets_drop_quadratic_term():
    rng = np.random.default_rng(3)
    base = random_training_set(rng, 6, 3)
    ts = TrainingSet.from_arrays(base.X, np.zeros(6), base.query.values)
    hp = random_hyperparams(rng, 3)

    value, _ = log_marginal_likelihood(ts, hp)

    slow = dense_gp_solve(ts, hp, jitter=posterior(ts, hp).jitter)
    assert value == pytest.approx(slow.log_likelihood, abs=1e-10)


def test_noise_increases_log_determinant():
    rng = np.random.default_rng(4)
    ts = TrainingSet.from_arrays(rng.standard_normal((6, 2)), np.zeros(6), np.zeros(2))
    quiet = _hp(2, noise_var=0.01)
    noisy = _hp(2, noise_var=0.5)

    # with zero targets the value is -0.5 log det C - const
    assert log_marginal_likelihood(ts, noisy)[0] < log_marginal_likelihood(ts, quiet)[0]


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(6)
    for _ in range(10):
        dim = int(rng.integers(1, 5))
        ts = random_training_set(rng, 6, dim)
        theta = random_hyperparams(rng, dim).to_log()

        _, analytic = log_marginal_likelihood(ts, GpHyperparams.from_log(theta))
        numeric = fd_gradient(lambda th: log_marginal_likelihood(ts, GpHyperparams.from_log(th))[0], theta)

        scale = max(float(np.max(np.abs(analytic))), 1.0)
        assert np.max(np.abs(analytic - numeric)) / scale <= 1e-5


def test_fit_never_loses_likelihood():
    rng = np.random.default_rng(7)
    for _ in range(5):
        ts = random_training_set(rng, 10, 3)
        init = random_hyperparams(rng, 3)

        fitted = fit_hyperparams(ts, init, OptimizerSettings(max_iter=20))

        assert log_marginal_likelihood(ts, fitted)[0] >= log_marginal_likelihood(ts, init)[0]


def test_fit_is_deterministic():
    ts = sample_gp_training_set(1)

    first = fit_hyperparams(ts, GpHyperparams.isotropic(1))
    second = fit_hyperparams(ts, GpHyperparams.isotropic(1))

    assert first == second


def test_fit_at_optimum_is_a_fixed_point():
    ts = sample_gp_training_set(2)
    optimum = fit_hyperparams(ts, GpHyperparams.isotropic(1))

    refit = fit_hyperparams(ts, optimum)

    gain = log_marginal_likelihood(ts, refit)[0] - log_marginal_likelihood(ts, optimum)[0]
    assert 0.0 <= gain < 1e-6


def test_recovery_fit_is_at_least_as_likely_as_truth():
    truth = GpHyperparams(signal_var=1.0, noise_var=0.01, length_scales=(1.0,))
    for seed in range(5):
        ts = sample_gp_training_set(seed, truth=truth)

        hp, value = fit_multistart(ts, OptimizerSettings())

        error = hp.to_log() - truth.to_log()
        # the length scale is well determined; the two variances only to about a factor of e
        assert abs(error[2]) <= 0.5
        assert np.all(np.abs(error[:2]) <= 1.5)
        assert value >= log_marginal_likelihood(ts, truth)[0] - 1e-9


@pytest.mark.parametrize("seed", range(4))
def test_pure_noise_is_fitted_as_noise(seed):
    ts = pure_noise_training_set(seed)

    hp, value = fit_multistart(ts, OptimizerSettings())

    _, _, grid_value = grid_search_variances(ts, (1.0,) * ts.X.shape[1])
    assert hp.noise_var >= 0.1 * hp.signal_var
    assert value >= grid_value - 1e-8
    assert hp.signal_var + hp.noise_var == pytest.approx(float(np.mean(ts.targets**2)), rel=1e-3)


def test_pure_noise_total_variance_matches_sample():
    rng = np.random.default_rng(9)
    inputs = 100.0 * np.arange(12, dtype=float)[:, None]
    targets = rng.standard_normal(12)
    ts = TrainingSet.from_arrays(inputs, targets, np.zeros(1))

    hp, _ = fit_multistart(ts, OptimizerSettings())

    # far-apart inputs leave only the diagonal, whose best total is the mean square
    assert hp.signal_var + hp.noise_var == pytest.approx(float(np.mean(targets**2)), rel=1e-3)
    assert hp.noise_var >= 0.1 * hp.signal_var


def test_input_spread_is_largest_distance():
    X = np.array([[0.0, 0.0], [3.0, 4.0], [1.0, 1.0]])

    assert input_spread(X) == pytest.approx(5.0)
    assert input_spread(X[:1]) == 0.0


def test_length_floor_bounds_every_scale():
    rng = np.random.default_rng(21)
    ts = random_training_set(rng, 15, 3)
    settings = OptimizerSettings(length_floor=2.0, restart_scales=(1.0, 3.0, 10.0))

    hp, _ = fit_multistart(ts, settings)

    floor = 2.0 * input_spread(ts.X)
    assert min(hp.length_scales) >= floor * (1.0 - 1e-12)


def test_length_floor_is_skipped_for_identical_inputs():
    ts = TrainingSet.from_arrays(np.ones((6, 2)), np.linspace(-1.0, 1.0, 6), np.ones(2))

    hp, _ = fit_multistart(ts, OptimizerSettings(length_floor=2.0))

    assert all(math.isfinite(s) for s in hp.length_scales)


def test_length_floor_must_be_positive():
    with pytest.raises(ValueError):
        OptimizerSettings(length_floor=0.0)


def test_polish_never_loses_likelihood():
    rng = np.random.default_rng(23)
    for _ in range(4):
        ts = random_training_set(rng, 12, 2)

        _, rough = fit_multistart(ts, OptimizerSettings(polish=False))
        _, polished = fit_multistart(ts, OptimizerSettings())

        assert polished >= rough - 1e-9 * (1.0 + abs(rough))


def test_polish_removes_dependence_on_target_rounding():
    ts = sample_gp_training_set(4)
    nudged = TrainingSet.from_arrays(ts.X, ts.targets * (1.0 + 1e-15), ts.query.values)

    first, _ = fit_multistart(ts, OptimizerSettings())
    second, _ = fit_multistart(nudged, OptimizerSettings())

    assert np.max(np.abs(first.to_log() - second.to_log())) <= 1e-8


def test_warm_start_is_an_extra_restart():
    ts = sample_gp_training_set(3)
    cold, cold_value = fit_multistart(ts, OptimizerSettings())

    warm, warm_value = fit_multistart(ts, OptimizerSettings(warm_start=True), warm=cold)

    assert warm_value >= cold_value - 1e-9
    assert fit_multistart(ts, OptimizerSettings(), warm=cold) == (cold, cold_value)
