import numpy as np
import pytest

from rmts import kalman
from rmts.core import AffineTransform
from rmts.errors import InputError

ROT90 = AffineTransform(np.array([[0.0, -1.0], [1.0, 0.0]]), np.zeros(2))


def random_state(rng) -> kalman.KalmanState:
    z = np.array(
        [rng.uniform(-500, 500), rng.uniform(-500, 500),
         rng.uniform(5, 80), rng.uniform(5, 80)]
    )
    s = kalman.initiate(z)
    for _ in range(int(rng.integers(0, 4))):
        s = kalman.predict(s)
        s = kalman.update(s, z + rng.normal(0, 1.0, size=4) * [1, 1, 0, 0])
    return s


class TestInitiate:
    def test_mean_layout(self):
        s = kalman.initiate((10, 10, 4, 8))
        assert np.array_equal(s.mean, [10, 10, 4, 8, 0, 0, 0, 0])

    def test_covariance_diagonal_positive(self):
        s = kalman.initiate((10, 10, 4, 8))
        assert np.all(np.diag(s.covariance) > 0)
        assert np.array_equal(s.covariance, np.diag(np.diag(s.covariance)))

    def test_unit_box(self):
        s = kalman.initiate((0, 0, 1, 1))
        assert np.array_equal(s.mean, [0, 0, 1, 1, 0, 0, 0, 0])

    def test_nonpositive_size_rejected(self):
        with pytest.raises(InputError):
            kalman.initiate((0, 0, 0, 5))
        with pytest.raises(InputError):
            kalman.initiate((0, 0, 5, -1))


class TestPredict:
    def test_unit_translation(self):
        s0 = kalman.initiate((10, 10, 4, 8))
        s = kalman.KalmanState(np.array([10.0, 10, 4, 8, 1, 0, 0, 0]), s0.covariance)
        assert np.array_equal(kalman.predict(s).mean, [11, 10, 4, 8, 1, 0, 0, 0])

    def test_zero_velocity_keeps_position(self):
        s = kalman.initiate((50, 60, 10, 20))
        assert np.array_equal(kalman.predict(s).mean[:4], [50, 60, 10, 20])

    def test_uncertainty_grows(self):
        s = kalman.initiate((10, 10, 4, 8))
        s2 = kalman.predict(s)
        assert np.trace(s2.covariance) > np.trace(s.covariance)


class TestUpdate:
    def test_exact_measurement_keeps_mean(self):
        s = kalman.initiate((10, 10, 4, 8))
        s = kalman.predict(s)
        s2 = kalman.update(s, s.mean[:4])
        assert np.allclose(s2.mean, s.mean, atol=1e-12)

    def test_measured_block_shrinks(self):
        rng = np.random.default_rng(3)
        s = random_state(rng)
        s = kalman.predict(s)
        s2 = kalman.update(s, s.mean[:4] + [2.0, -1.0, 0.5, 0.5])
        before = np.trace(s.covariance[:4, :4])
        after = np.trace(s2.covariance[:4, :4])
        assert after <= before

    def test_repeated_update_converges_monotonically(self):
        s = kalman.initiate((0.0, 0.0, 10.0, 10.0))
        z = np.array([8.0, -6.0, 14.0, 9.0])
        errs = []
        for _ in range(10):
            s = kalman.update(s, z)
            errs.append(np.linalg.norm(s.mean[:4] - z))
        assert all(errs[i + 1] <= errs[i] for i in range(len(errs) - 1))


class TestCameraMotion:
    def test_identity_is_bitwise_noop(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = random_state(rng)
            s2 = kalman.apply_camera_motion(s, AffineTransform.identity())
            assert np.array_equal(s2.mean, s.mean)
            assert np.array_equal(s2.covariance, s.covariance)

    def test_pure_translation(self):
        s0 = kalman.initiate((10, 10, 4, 8))
        t = AffineTransform(np.eye(2), np.array([5.0, 0.0]))
        s2 = kalman.apply_camera_motion(s0, t)
        assert np.array_equal(s2.mean, [15, 10, 4, 8, 0, 0, 0, 0])
        assert np.array_equal(s2.covariance, s0.covariance)

    def test_rotation_rotates_velocity(self):
        s0 = kalman.initiate((10, 10, 4, 8))
        s = kalman.KalmanState(np.array([10.0, 10, 4, 8, 1, 0, 0, 0]), s0.covariance)
        s2 = kalman.apply_camera_motion(s, ROT90)
        assert np.allclose(s2.mean[4:6], [0.0, 1.0])

    def test_size_scales_with_sqrt_det(self):
        s = kalman.initiate((10, 10, 4, 8))
        t = AffineTransform(2.0 * np.eye(2), np.zeros(2))
        s2 = kalman.apply_camera_motion(s, t)
        assert np.allclose(s2.mean[2:4], [8, 16])

    def test_predict_after_identity_equals_predict(self):
        rng = np.random.default_rng(4)
        s = random_state(rng)
        a = kalman.predict(kalman.apply_camera_motion(s, AffineTransform.identity()))
        b = kalman.predict(s)
        assert np.array_equal(a.mean, b.mean)
        assert np.array_equal(a.covariance, b.covariance)


class TestNumericalInvariants:
    def test_symmetry_and_psd_over_seeded_states(self):
        rng = np.random.default_rng(99)
        for k in range(100):
            s = random_state(rng)
            ops = [
                kalman.predict(s),
                kalman.update(kalman.predict(s), s.mean[:4] + rng.normal(0, 2, 4)),
                kalman.apply_camera_motion(
                    s,
                    AffineTransform(
                        np.eye(2) + rng.normal(0, 0.05, (2, 2)),
                        rng.normal(0, 3, 2),
                    ),
                ),
            ]
            for s2 in ops:
                p = s2.covariance
                assert np.max(np.abs(p - p.T)) < 1e-9
                np.linalg.cholesky(p + 1e-12 * np.eye(8))

    def test_linear_consistency_predict_and_compensate_commute(self):
        # Compensating then predicting equals predicting then compensating
        # on the mean when velocity is transformed too (up to roundoff).
        rng = np.random.default_rng(21)
        for _ in range(50):
            s = random_state(rng)
            m = np.eye(2) + rng.normal(0, 0.05, (2, 2))
            t = AffineTransform(m, rng.normal(0, 3, 2))
            a = kalman.predict(kalman.apply_camera_motion(s, t))
            b = kalman.apply_camera_motion(kalman.predict(s), t)
            assert np.linalg.norm(a.mean[:2] - b.mean[:2]) < 1e-6

    def test_batched_matches_single(self):
        rng = np.random.default_rng(12)
        states = [random_state(rng) for _ in range(7)]
        means = np.stack([s.mean for s in states])
        covs = np.stack([s.covariance for s in states])
        bm, bc = kalman.multi_predict(means, covs)
        for i, s in enumerate(states):
            single = kalman.predict(s)
            assert np.allclose(bm[i], single.mean, atol=1e-12)
            assert np.allclose(bc[i], single.covariance, atol=1e-12)
