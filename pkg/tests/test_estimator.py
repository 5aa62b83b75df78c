import warnings

import numpy as np
import pytest

from uwloc import estimator, model, noise
from uwloc.errors import (DegenerateGeometry, InvalidParameter, NonPositiveSpeedSquare,
                          RankDeficient)
from uwloc.estimator import WEIGHTING_MODES

from conftest import random_geometry


def phi1_true(source, sensors):
    r, rdot = model.ranges_and_rates(source.position, source.velocity,
                                     sensors.positions, sensors.velocities)
    c = source.speed
    return np.concatenate([source.position, source.velocity, [c * r[0], c * c, c * rdot[0]]])


def stage1_residual(source, alpha, beta, m):
    sensors = model.NominalSensors(beta[:3 * m].reshape(m, 3), beta[3 * m:].reshape(m, 3))
    h1, g1 = estimator.build_stage1(model.MeasurementSet.from_alpha(alpha), sensors)
    return h1 - g1 @ phi1_true(source, sensors)


def central_fd(fn, x0, step):
    cols = []
    for k in range(x0.size):
        e = np.zeros_like(x0)
        e[k] = step
        cols.append((fn(x0 + e) - fn(x0 - e)) / (2 * step))
    return np.column_stack(cols)


def noisy_trial(source, array, nm, rng):
    meas = model.true_measurements(source, array)
    alpha = noise.sample_gaussian(meas.alpha, nm.q_alpha, rng)
    perturbed = noise.perturb_array(array, nm.q_beta, rng)
    return model.MeasurementSet.from_alpha(alpha), perturbed.nominal()


def test_stage1_residual_vanishes_without_noise(source, array):
    truth = array.truth()
    h1, g1 = estimator.build_stage1(model.true_measurements(source, array), truth)
    resid = h1 - g1 @ phi1_true(source, truth)
    assert np.max(np.abs(resid)) <= 1e-9 * np.max(np.abs(h1))


def test_tdoa_rows_have_no_velocity_or_rate_terms(source, array):
    _, g1 = estimator.build_stage1(model.true_measurements(source, array), array.truth())
    assert not np.any(g1[:9, 3:6])
    assert not np.any(g1[:9, 8])


def test_error_transforms_are_the_linearisation(source, array):
    """``eps1 = B1 d_alpha + D1 d_beta`` checked against finite differences."""
    m = array.count
    truth = array.truth()
    meas = model.true_measurements(source, array)
    a0, b0 = meas.alpha, truth.beta
    b1, d1 = estimator.error_transforms(meas, truth, source.position, source.velocity,
                                        source.speed)
    b_fd = central_fd(lambda a: stage1_residual(source, a, b0, m), a0, 1e-7)
    d_fd = central_fd(lambda b: stage1_residual(source, a0, b, m), b0, 1e-3)
    assert np.max(np.abs(b_fd - b1)) <= 1e-7 * np.max(np.abs(b1))
    assert np.max(np.abs(d_fd - d1)) <= 1e-7 * np.max(np.abs(d1))
    # the variant with t in place of tdot does not linearise the FDOA rows
    _, d1_uncorrected = estimator.error_transforms(meas, truth, source.position, source.velocity,
                                               source.speed, "uncorrected")
    assert np.max(np.abs(d_fd - d1_uncorrected)) > 0.1 * np.max(np.abs(d1))


def test_noiseless_phi1_round_trip(source, array):
    truth = array.truth()
    meas = model.true_measurements(source, array)
    h1, g1 = estimator.build_stage1(meas, truth)
    phi, _ = estimator.stage1_solve(h1, g1, np.eye(18))
    np.testing.assert_allclose(phi, phi1_true(source, truth), rtol=1e-8)


def test_five_sensors_are_not_enough(source, array):
    sub = model.SensorArray(array.true_positions[:5], array.true_velocities[:5])
    meas = model.true_measurements(source, sub)
    with pytest.raises(RankDeficient) as err:
        estimator.estimate(meas, sub.nominal(), mode="plain_identity")
    assert err.value.stage == "stage1"
    h1, g1 = estimator.build_stage1(meas, sub.truth())
    with pytest.raises(RankDeficient):
        estimator.stage1_solve(h1, g1, np.eye(8))


def test_weighting_scale_does_not_change_solution(source, array, rng):
    nm = noise.NoiseModel.standard(10, 1.0, 1.0, 1500.0)
    meas, sensors = noisy_trial(source, array, nm, rng)
    h1, g1 = estimator.build_stage1(meas, sensors)
    w = np.diag(rng.uniform(0.5, 2.0, 18))
    a, _ = estimator.stage1_solve(h1, g1, w)
    b, _ = estimator.stage1_solve(h1, g1, 1e6 * w)
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_initial_full_covariance_weight_is_inverse_q_alpha(source, array):
    nm = noise.NoiseModel(noise.standard_q_alpha(10, 1.0, 1500.0), np.zeros((60, 60)))
    meas = model.true_measurements(source, array)
    w1, b1, d1 = estimator.stage1_weights(meas, array.truth(), None, nm)
    assert b1 is None and d1 is None
    np.testing.assert_allclose(w1 @ nm.q_alpha, np.eye(18), atol=1e-9)


def test_stage1_weight_matches_error_covariance(source, array, unit_noise):
    meas = model.true_measurements(source, array)
    truth = array.truth()
    phi = phi1_true(source, truth)
    w1, b1, d1 = estimator.stage1_weights(meas, truth, phi, unit_noise)
    cov = b1 @ unit_noise.q_alpha @ b1.T + d1 @ unit_noise.q_beta @ d1.T
    np.testing.assert_allclose(w1 @ cov, np.eye(18), atol=1e-8)
    # identity modes never look at the noise model
    for mode in ("structured_identity", "plain_identity"):
        w, _, _ = estimator.stage1_weights(meas, truth, None, None, mode)
        np.testing.assert_array_equal(w, np.eye(18))


def test_stage2_residual_vanishes_at_truth(source, array):
    truth = array.truth()
    phi1 = phi1_true(source, truth)
    system = estimator.build_stage2(phi1, truth, np.eye(9))
    off = source.position - truth.positions[0]
    voff = source.velocity - truth.velocities[0]
    phi2 = np.concatenate([off ** 2, off * voff, [source.speed ** 2]])
    assert np.max(np.abs(system.h2 - system.g2 @ phi2)) <= 1e-9 * np.max(np.abs(system.h2))


def test_speed_block_determinant(source, array):
    s1, sd1 = array.true_positions[0], array.true_velocities[0]
    c = source.speed
    r1 = np.linalg.norm(source.position - s1)
    for form in ("reduced", "full"):
        b2 = estimator.stage2_transform(source.position, source.velocity, c, array.truth(), form)
        assert np.linalg.det(b2[6:, 6:]) == pytest.approx(-2.0 * c * c * r1 * r1, rel=1e-10)


def test_recover_picks_signs_from_stage1(source, array):
    truth = array.truth()
    s1, sd1 = truth.positions[0], truth.velocities[0]
    off = np.array([-30.0, 40.0, -50.0])
    voff = np.array([1.0, -2.0, 0.5])
    phi1 = np.concatenate([s1 + off, sd1 + voff, [0.0, 1500.0 ** 2, 0.0]])
    phi2 = np.concatenate([off ** 2, off * voff, [1500.0 ** 2]])
    pos, vel, speed, notes = estimator.recover(phi1, phi2, truth)
    np.testing.assert_allclose(pos, s1 + off)
    np.testing.assert_allclose(vel, sd1 + voff)
    assert speed == pytest.approx(1500.0)
    assert notes == []


def test_recover_clamps_and_warns(array):
    truth = array.truth()
    s1 = truth.positions[0]
    phi1 = np.concatenate([s1 + 10.0, truth.velocities[0], [0.0, 1.0, 0.0]])
    base = np.array([100.0, 100.0, 100.0, 1.0, 1.0, 1.0, 2.25e6])
    tiny = base.copy()
    tiny[0] = -1e-6
    pos, _, _, notes = estimator.recover(phi1, tiny, truth)
    assert notes == [] and pos[0] == pytest.approx(s1[0] + 1e-3)
    big = base.copy()
    big[0] = -1e4
    _, _, _, notes = estimator.recover(phi1, big, truth)
    assert len(notes) == 1
    neg_speed = base.copy()
    neg_speed[6] = -1e5
    with pytest.raises(NonPositiveSpeedSquare):
        estimator.recover(phi1, neg_speed, truth)


def test_negative_stage1_speed_square_is_rejected(source, array):
    phi1 = phi1_true(source, array.truth())
    phi1[7] = -1.0
    with pytest.raises(NonPositiveSpeedSquare):
        estimator.build_stage2(phi1, array.truth(), np.eye(9))


def test_source_on_reference_plane_is_degenerate(array):
    s1 = array.true_positions[0]
    src = model.SourceState([s1[0], 800.0, 200.0], [1.0, 1.0, 1.0], 1500.0)
    with pytest.raises(DegenerateGeometry):
        estimator.estimate(model.true_measurements(src, array), array.truth(),
                           mode="plain_identity")


def test_noiseless_recovery_in_every_mode(source, array):
    meas = model.true_measurements(source, array)
    nm = noise.NoiseModel(np.zeros((18, 18)), np.zeros((60, 60)))
    for mode in WEIGHTING_MODES:
        rep = estimator.estimate(meas, array.truth(), nm, mode=mode)
        np.testing.assert_allclose(rep.xi, source.xi, rtol=1e-8, atol=1e-8)
        assert rep.weighting_mode == mode and rep.iterations_used == 2


def test_refuses_true_sensor_array(source, array):
    with pytest.raises(TypeError):
        estimator.estimate(model.true_measurements(source, array), array)


def test_argument_validation(source, array):
    meas = model.true_measurements(source, array)
    with pytest.raises(InvalidParameter):
        estimator.estimate(meas, array.truth(), n_iter=0, mode="plain_identity")
    with pytest.raises(InvalidParameter):
        estimator.estimate(meas, array.truth(), mode="full_covariance")
    with pytest.raises(InvalidParameter):
        estimator.estimate(meas, array.truth(), mode="nonsense")


def test_translation_equivariance(source, array, unit_noise, rng):
    meas, sensors = noisy_trial(source, array, noise.NoiseModel.standard(10, 0.1, 0.1, 1500.0), rng)
    shift = np.array([250.0, -120.0, 75.0])
    a = estimator.estimate(meas, sensors, unit_noise)
    b = estimator.estimate(meas, sensors.translated(shift), unit_noise)
    np.testing.assert_allclose(b.position, a.position + shift, rtol=1e-7)
    np.testing.assert_allclose(b.velocity, a.velocity, rtol=1e-6, atol=1e-9)
    assert b.speed == pytest.approx(a.speed, rel=1e-9)


def test_random_geometries_noiseless(rng):
    for m in (6, 8, 10):
        src, arr = random_geometry(rng, m)
        rep = estimator.estimate(model.true_measurements(src, arr), arr.truth(),
                                 mode="structured_identity")
        np.testing.assert_allclose(rep.xi, src.xi, rtol=1e-6)


@pytest.mark.slow
def test_small_noise_estimates_are_unbiased(source, array):
    nm = noise.NoiseModel.standard(10, noise.db_to_sigma(-20), noise.db_to_sigma(-20), 1500.0)
    rng = np.random.default_rng(7)
    errs = []
    for _ in range(2000):
        meas, sensors = noisy_trial(source, array, nm, rng)
        errs.append(estimator.estimate(meas, sensors, nm).xi - source.xi)
    errs = np.array(errs)
    se = errs.std(axis=0, ddof=1) / np.sqrt(len(errs))
    assert np.all(np.abs(errs.mean(axis=0)) <= 3 * se)


@pytest.mark.slow
def test_reported_covariance_matches_sample(source, array):
    nm = noise.NoiseModel.standard(10, noise.db_to_sigma(-20), noise.db_to_sigma(-20), 1500.0)
    rng = np.random.default_rng(11)
    errs, covs = [], []
    for _ in range(2000):
        meas, sensors = noisy_trial(source, array, nm, rng)
        rep = estimator.estimate(meas, sensors, nm)
        errs.append(rep.xi - source.xi)
        covs.append(rep.cov_xi)
    sample = np.cov(np.array(errs).T)
    reported = np.mean(covs, axis=0)
    assert np.linalg.norm(reported - sample) <= 0.15 * np.linalg.norm(sample)


@pytest.mark.slow
def test_second_reweight_changes_little(source, array):
    nm = noise.NoiseModel.standard(10, 1.0, 1.0, 1500.0)
    rng = np.random.default_rng(3)
    sq = {1: [], 2: []}
    for _ in range(1000):
        meas, sensors = noisy_trial(source, array, nm, rng)
        for k in sq:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                sq[k].append(np.sum((estimator.estimate(meas, sensors, nm, n_iter=k).position
                                     - source.position) ** 2))
    one, two = np.mean(sq[1]), np.mean(sq[2])
    assert abs(one - two) <= 0.05 * two
