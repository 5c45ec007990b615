import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from prunekit.errors import InputError
from prunekit.rotations import (
    Pose,
    axis_angle_mats,
    cross3,
    mat3_apply,
    mat3_mul,
    mat_to_quat,
    normalized,
    quat_angle_between,
    quat_canonical,
    quat_conj,
    quat_mul,
    quat_normalize,
    quat_rotate,
    quat_to_mat,
    quat_to_rotvec,
    rotvec_to_quat,
)


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return quat_normalize(q)


def to_scipy(q):
    # scipy uses (x, y, z, w) ordering
    q = np.atleast_2d(q)
    return Rotation.from_quat(q[:, [1, 2, 3, 0]])


class TestMatrixOps:
    def test_mat3_mul_matches_matmul(self, rng):
        A = rng.normal(size=(12, 3, 3))
        B = rng.normal(size=(12, 3, 3))
        np.testing.assert_allclose(mat3_mul(A, B), A @ B, atol=1e-13)

    def test_mat3_apply_matches_matmul(self, rng):
        A = rng.normal(size=(12, 3, 3))
        v = rng.normal(size=(12, 3))
        np.testing.assert_allclose(mat3_apply(A, v), (A @ v[..., None])[..., 0], atol=1e-13)

    def test_batch_row_equals_scalar_call_bitwise(self, rng):
        A = rng.normal(size=(6, 3, 3))
        B = rng.normal(size=(6, 3, 3))
        batch = mat3_mul(A, B)
        for i in range(6):
            np.testing.assert_array_equal(batch[i], mat3_mul(A[i], B[i]))

    def test_cross3_matches_numpy(self, rng):
        a = rng.normal(size=(20, 3))
        b = rng.normal(size=(20, 3))
        np.testing.assert_allclose(cross3(a, b), np.cross(a, b), atol=1e-14)

    def test_axis_angle_mats_vs_scipy(self, rng):
        for _ in range(20):
            axis = normalized(rng.normal(size=3))
            angles = rng.uniform(-np.pi, np.pi, size=5)
            R = axis_angle_mats(axis, angles)
            ref = Rotation.from_rotvec(np.outer(angles, axis)).as_matrix()
            np.testing.assert_allclose(R, ref, atol=1e-12)

    def test_normalized_rejects_zero(self):
        with pytest.raises(InputError):
            normalized(np.zeros(3))


class TestQuaternions:
    def test_mul_vs_scipy(self, rng):
        a = random_quats(rng, 30)
        b = random_quats(rng, 30)
        got = quat_canonical(quat_mul(a, b))
        ref = (to_scipy(a) * to_scipy(b)).as_quat()[:, [3, 0, 1, 2]]
        sign = np.where(ref[:, :1] < 0, -1.0, 1.0)
        np.testing.assert_allclose(got, ref * sign, atol=1e-12)

    def test_conj_inverts(self, rng):
        q = random_quats(rng, 10)
        ident = quat_canonical(quat_mul(q, quat_conj(q)))
        np.testing.assert_allclose(ident, np.tile([1.0, 0, 0, 0], (10, 1)), atol=1e-12)

    def test_quat_mat_roundtrip_vs_scipy(self, rng):
        q = random_quats(rng, 40)
        R = quat_to_mat(q)
        np.testing.assert_allclose(R, to_scipy(q).as_matrix(), atol=1e-12)
        back = mat_to_quat(R)
        sign = np.where(q[:, :1] < 0, -1.0, 1.0)
        np.testing.assert_allclose(back, q * sign, atol=1e-12)

    def test_mat_to_quat_near_pi_branches(self, rng):
        """Trace near -1 exercises the per-axis branches of the conversion."""
        for axis in np.eye(3):
            for eps in (0.0, 1e-7, 1e-3):
                rv = axis * (np.pi - eps)
                R = Rotation.from_rotvec(rv).as_matrix()
                q = mat_to_quat(R)
                np.testing.assert_allclose(quat_to_mat(q), R, atol=1e-9)

    def test_rotvec_roundtrip(self, rng):
        rv = rng.uniform(-np.pi + 1e-6, np.pi - 1e-6, size=(30, 3)) / np.sqrt(3)
        q = rotvec_to_quat(rv)
        ref = Rotation.from_rotvec(rv).as_quat()[:, [3, 0, 1, 2]]
        sign = np.where(ref[:, :1] < 0, -1.0, 1.0)
        np.testing.assert_allclose(q, ref * sign, atol=1e-12)
        np.testing.assert_allclose(quat_to_rotvec(q), rv, atol=1e-12)

    def test_small_angle_stability(self):
        rv = np.array([1e-12, -2e-13, 3e-13])
        q = rotvec_to_quat(rv)
        np.testing.assert_allclose(quat_to_rotvec(q), rv, atol=1e-20)

    def test_rotate_matches_matrix(self, rng):
        q = random_quats(rng, 15)
        v = rng.normal(size=(15, 3))
        np.testing.assert_allclose(quat_rotate(q, v),
                                   (quat_to_mat(q) @ v[..., None])[..., 0], atol=1e-12)

    def test_angle_between(self, rng):
        q = random_quats(rng, 1)[0]
        assert quat_angle_between(q, q) == pytest.approx(0.0, abs=1e-7)
        half = rotvec_to_quat(np.array([0.0, 0.0, 0.7]))
        assert quat_angle_between(quat_mul(half, q), q) == pytest.approx(0.7, abs=1e-9)

    def test_normalize_rejects_zero(self):
        with pytest.raises(InputError):
            quat_normalize(np.zeros(4))


class TestPose:
    def test_canonicalizes_sign(self):
        p = Pose([1, 2, 3], [-1.0, 0, 0, 0])
        np.testing.assert_array_equal(p.t, [1.0, 2.0, 3.0])
        np.testing.assert_array_equal(p.o, [1.0, 0, 0, 0])

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(InputError):
            Pose([1, 2, 3], [2.0, 0, 0, 0])

    def test_compose_identity(self):
        p = Pose([0.1, 0.2, 0.3], rotvec_to_quat(np.array([0, 0, 0.4])))
        q = p.compose(Pose.identity())
        np.testing.assert_allclose(q.t, p.t)
        np.testing.assert_allclose(q.o, p.o)
