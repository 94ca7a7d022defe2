import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semidirect import geom
from semidirect.geom import (CameraIntrinsics, SE3Pose, Sim3Transform, backproject,
                             boxplus, project, se3_exp, se3_log, sim3_exp, sim3_log)


def quat_to_rot(q):
    """Quaternion (w, x, y, z) to rotation matrix; independent oracle."""
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_twists(rng, n, max_angle=3.0):
    v = rng.uniform(-5, 5, size=(n, 3))
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    w = axis * rng.uniform(0, max_angle, size=(n, 1))
    return np.hstack([v, w])


class TestSE3:
    def test_zero_twist_is_identity(self):
        T = se3_exp(np.zeros(6))
        assert np.allclose(T.R, np.eye(3), atol=1e-15)
        assert np.allclose(T.t, 0.0, atol=1e-15)

    def test_pure_translation(self):
        T = se3_exp([1.0, 2.0, 3.0, 0.0, 0.0, 0.0])
        assert np.allclose(T.R, np.eye(3), atol=1e-15)
        assert np.allclose(T.t, [1.0, 2.0, 3.0])

    def test_quarter_turn_about_z(self):
        T = se3_exp([0, 0, 0, 0, 0, math.pi / 2])
        expected = np.array([[0, -1, 0], [1, 0, 0], [0, 0, 1.0]])
        assert np.allclose(T.R, expected, atol=1e-12)
        assert np.allclose(T.t, 0.0, atol=1e-15)

    def test_identity_log_is_zero(self):
        assert np.allclose(se3_log(SE3Pose.identity()), 0.0, atol=1e-15)

    def test_round_trip_random(self):
        rng = np.random.default_rng(0)
        worst = 0.0
        for x in random_twists(rng, 1000):
            T = se3_exp(x)
            T2 = se3_exp(se3_log(T))
            worst = max(worst,
                        np.abs(T2.R - T.R).max(),
                        np.abs(T2.t - T.t).max())
        assert worst < 1e-10

    def test_angle_pi_about_x(self):
        R = quat_to_rot(np.array([0.0, 1.0, 0.0, 0.0]))  # 180 deg about x
        w = geom.so3_log(R)
        assert np.allclose(w, [math.pi, 0.0, 0.0], atol=1e-9)

    def test_log_matches_quaternion_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            q = rng.normal(size=4)
            R = quat_to_rot(q)
            w = geom.so3_log(R)
            assert np.allclose(geom.so3_exp(w), R, atol=1e-10)
            # oracle angle from the quaternion
            q = q / np.linalg.norm(q)
            angle = 2.0 * math.atan2(np.linalg.norm(q[1:]), abs(q[0]))
            assert abs(np.linalg.norm(w) - angle) < 1e-9

    def test_compose_inverse_preserve_invariants(self):
        rng = np.random.default_rng(2)
        for x, y in zip(random_twists(rng, 50), random_twists(rng, 50)):
            T = se3_exp(x) @ se3_exp(y).inverse()
            T.assert_valid()


class TestSim3:
    def test_zero_twist(self):
        S = sim3_exp(np.zeros(7))
        assert S.s == pytest.approx(1.0)
        assert np.allclose(S.R, np.eye(3), atol=1e-15)
        assert np.allclose(S.t, 0.0, atol=1e-15)

    def test_pure_scale(self):
        S = sim3_exp([0, 0, 0, 0, 0, 0, math.log(2.0)])
        assert S.s == pytest.approx(2.0, abs=1e-12)
        assert np.allclose(S.R, np.eye(3), atol=1e-15)
        assert np.allclose(S.t, 0.0, atol=1e-15)

    def test_round_trip_random(self):
        rng = np.random.default_rng(3)
        worst = 0.0
        for x6 in random_twists(rng, 1000):
            x = np.concatenate([x6, [rng.uniform(-1.0, 1.0)]])
            S = sim3_exp(x)
            S2 = sim3_exp(sim3_log(S))
            worst = max(worst, abs(S2.s - S.s),
                        np.abs(S2.R - S.R).max(), np.abs(S2.t - S.t).max())
        assert worst < 1e-10

    def test_round_trip_small_angles_and_scales(self):
        rng = np.random.default_rng(4)
        for scale in [0.0, 1e-12, 1e-8, 1e-5, 1e-3, 0.4]:
            for _ in range(20):
                x = np.concatenate([rng.uniform(-5, 5, 3),
                                    rng.normal(size=3) * scale,
                                    [rng.normal() * scale]])
                S = sim3_exp(x)
                assert np.allclose(sim3_log(S), x, atol=1e-10)

    def test_compose_matches_matrix_product(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            a = np.concatenate([random_twists(rng, 1)[0], [rng.uniform(-1, 1)]])
            b = np.concatenate([random_twists(rng, 1)[0], [rng.uniform(-1, 1)]])
            Sa, Sb = sim3_exp(a), sim3_exp(b)
            assert np.allclose((Sa @ Sb).matrix(), Sa.matrix() @ Sb.matrix(), atol=1e-12)
            assert np.allclose((Sa @ Sa.inverse()).matrix(), np.eye(4), atol=1e-12)

    def test_adjoint_identity(self):
        rng = np.random.default_rng(6)
        for _ in range(30):
            S = sim3_exp(np.concatenate([random_twists(rng, 1)[0] * 0.3,
                                         [rng.uniform(-0.5, 0.5)]]))
            x = np.concatenate([random_twists(rng, 1)[0] * 0.1,
                                [rng.uniform(-0.2, 0.2)]])
            lhs = (S @ sim3_exp(x) @ S.inverse()).matrix()
            rhs = sim3_exp(geom.sim3_adjoint(S) @ x).matrix()
            assert np.allclose(lhs, rhs, atol=1e-9)

    def test_left_jacobian_first_order(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = np.concatenate([random_twists(rng, 1)[0] * 0.3,
                                [rng.uniform(-0.3, 0.3)]])
            J = geom.sim3_left_jacobian(x)
            eps = 1e-7
            for k in range(7):
                d = np.zeros(7)
                d[k] = eps
                lhs = sim3_log(sim3_exp(J @ d) @ sim3_exp(x))
                assert np.allclose((lhs - x) / eps, d / eps, atol=1e-5)


class TestBoxplus:
    def test_zero_leaves_pose(self):
        T = se3_exp([0.3, -0.2, 0.1, 0.05, -0.1, 0.2])
        T2 = boxplus(np.zeros(6), T)
        assert np.allclose(T2.matrix(), T.matrix(), atol=1e-15)

    def test_identity_pose_gives_exp(self):
        x = np.array([0.1, 0.2, 0.3, 0.01, 0.02, 0.03])
        assert np.allclose(boxplus(x, SE3Pose.identity()).matrix(),
                           se3_exp(x).matrix(), atol=1e-15)

    def test_association_matches_matrix_product(self):
        rng = np.random.default_rng(8)
        for a, b in zip(random_twists(rng, 50), random_twists(rng, 50)):
            T = se3_exp(random_twists(rng, 1)[0])
            lhs = boxplus(a, boxplus(b, T)).matrix()
            rhs = se3_exp(a).matrix() @ se3_exp(b).matrix() @ T.matrix()
            assert np.allclose(lhs, rhs, atol=1e-12)


CAM = CameraIntrinsics(100.0, 100.0, 50.0, 50.0, 100, 100)


class TestCamera:
    def test_optical_axis(self):
        assert np.allclose(project(CAM, [0, 0, 1.0]), [50.0, 50.0])

    def test_off_axis(self):
        assert np.allclose(project(CAM, [1.0, 0, 2.0]), [100.0, 50.0])

    def test_behind_camera_raises(self):
        with pytest.raises(ValueError):
            project(CAM, [0.0, 0.0, -1.0])

    def test_backproject_center(self):
        assert np.allclose(backproject(CAM, [50.0, 50.0], 0.5), [0, 0, 2.0])

    def test_backproject_unit(self):
        assert np.allclose(backproject(CAM, [150.0, 50.0], 1.0), [1.0, 0.0, 1.0])

    def test_invalid_depth_raises(self):
        with pytest.raises(ValueError):
            backproject(CAM, [50.0, 50.0], 0.0)

    @given(st.floats(1, 99), st.floats(1, 99), st.floats(0.05, 20))
    @settings(max_examples=200, deadline=None)
    def test_project_backproject_round_trip(self, px, py, d):
        p = np.array([px, py])
        assert np.allclose(project(CAM, backproject(CAM, p, d)), p, atol=1e-12)

    def test_intrinsics_validation(self):
        with pytest.raises(ValueError):
            CameraIntrinsics(-1.0, 100.0, 50.0, 50.0, 100, 100)
        with pytest.raises(ValueError):
            CameraIntrinsics(100.0, 100.0, 150.0, 50.0, 100, 100)
