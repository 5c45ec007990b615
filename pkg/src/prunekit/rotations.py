"""Quaternion / rotation-matrix helpers, batch-friendly.

Quaternions are ``(w, x, y, z)`` arrays, canonicalized to ``w >= 0``.
All matrix routines are written with plain elementwise numpy arithmetic
(no BLAS dispatch), so evaluating a batch of N inputs produces results
bit-identical to evaluating each input alone.  The collision pipeline
relies on that equivalence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


def mat3_mul(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Matrix product over trailing (3, 3) axes with broadcasting."""
    shape = np.broadcast_shapes(A.shape[:-2], B.shape[:-2])
    out = np.empty(shape + (3, 3), dtype=float)
    for i in range(3):
        for j in range(3):
            out[..., i, j] = (
                A[..., i, 0] * B[..., 0, j]
                + A[..., i, 1] * B[..., 1, j]
                + A[..., i, 2] * B[..., 2, j]
            )
    return out


def mat3_apply(A: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply rotation matrices to vectors over trailing axes."""
    shape = np.broadcast_shapes(A.shape[:-2], v.shape[:-1])
    out = np.empty(shape + (3,), dtype=float)
    for i in range(3):
        out[..., i] = A[..., i, 0] * v[..., 0] + A[..., i, 1] * v[..., 1] + A[..., i, 2] * v[..., 2]
    return out


def cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.stack(
        [
            a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
            a[..., 2] * b[..., 0] - a[..., 0] * b[..., 2],
            a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        ],
        axis=-1,
    )


def normalized(v: np.ndarray) -> np.ndarray:
    """Unit vector along ``v``; raises on (near-)zero input."""
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(n < 1e-15):
        raise InputError("cannot normalize zero vector")
    return v / n


def axis_angle_mats(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Rodrigues rotation matrices about a fixed unit axis, batched over angles."""
    angles = np.asarray(angles, dtype=float)
    kx, ky, kz = float(axis[0]), float(axis[1]), float(axis[2])
    c = np.cos(angles)
    s = np.sin(angles)
    v = 1.0 - c
    R = np.empty(angles.shape + (3, 3), dtype=float)
    R[..., 0, 0] = c + kx * kx * v
    R[..., 0, 1] = kx * ky * v - kz * s
    R[..., 0, 2] = kx * kz * v + ky * s
    R[..., 1, 0] = ky * kx * v + kz * s
    R[..., 1, 1] = c + ky * ky * v
    R[..., 1, 2] = ky * kz * v - kx * s
    R[..., 2, 0] = kz * kx * v - ky * s
    R[..., 2, 1] = kz * ky * v + kx * s
    R[..., 2, 2] = c + kz * kz * v
    return R


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Flip sign so the scalar part is non-negative."""
    sign = np.where(q[..., 0:1] < 0.0, -1.0, 1.0)
    return q * sign


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n < 1e-15):
        raise InputError("cannot normalize zero quaternion")
    return quat_canonical(q / n)


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=float, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_to_mat(q: np.ndarray) -> np.ndarray:
    w, x, y, z = (q[..., i] for i in range(4))
    R = np.empty(q.shape[:-1] + (3, 3), dtype=float)
    R[..., 0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[..., 0, 1] = 2.0 * (x * y - w * z)
    R[..., 0, 2] = 2.0 * (x * z + w * y)
    R[..., 1, 0] = 2.0 * (x * y + w * z)
    R[..., 1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[..., 1, 2] = 2.0 * (y * z - w * x)
    R[..., 2, 0] = 2.0 * (x * z - w * y)
    R[..., 2, 1] = 2.0 * (y * z + w * x)
    R[..., 2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


def mat_to_quat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w >= 0), numerically robust for any branch."""
    R = np.asarray(R, dtype=float)
    r00, r11, r22 = R[..., 0, 0], R[..., 1, 1], R[..., 2, 2]
    # Four squared magnitudes (up to scale); the largest picks the stable branch.
    tw = 1.0 + r00 + r11 + r22
    tx = 1.0 + r00 - r11 - r22
    ty = 1.0 - r00 + r11 - r22
    tz = 1.0 - r00 - r11 + r22
    candidates = np.stack([tw, tx, ty, tz], axis=-1)
    branch = np.argmax(candidates, axis=-1)

    sw = np.sqrt(np.maximum(tw, 1e-30))
    sx = np.sqrt(np.maximum(tx, 1e-30))
    sy = np.sqrt(np.maximum(ty, 1e-30))
    sz = np.sqrt(np.maximum(tz, 1e-30))

    q_w = np.stack(
        [sw, (R[..., 2, 1] - R[..., 1, 2]) / sw, (R[..., 0, 2] - R[..., 2, 0]) / sw,
         (R[..., 1, 0] - R[..., 0, 1]) / sw], axis=-1)
    q_x = np.stack(
        [(R[..., 2, 1] - R[..., 1, 2]) / sx, sx, (R[..., 0, 1] + R[..., 1, 0]) / sx,
         (R[..., 0, 2] + R[..., 2, 0]) / sx], axis=-1)
    q_y = np.stack(
        [(R[..., 0, 2] - R[..., 2, 0]) / sy, (R[..., 0, 1] + R[..., 1, 0]) / sy, sy,
         (R[..., 1, 2] + R[..., 2, 1]) / sy], axis=-1)
    q_z = np.stack(
        [(R[..., 1, 0] - R[..., 0, 1]) / sz, (R[..., 0, 2] + R[..., 2, 0]) / sz,
         (R[..., 1, 2] + R[..., 2, 1]) / sz, sz], axis=-1)

    branch = branch[..., None]
    q = np.where(branch == 0, q_w, np.where(branch == 1, q_x, np.where(branch == 2, q_y, q_z)))
    return quat_normalize(q)


def quat_to_rotvec(q: np.ndarray) -> np.ndarray:
    """Rotation vector (axis * angle, angle in [0, pi]) of a unit quaternion."""
    q = quat_canonical(np.asarray(q, dtype=float))
    w = np.clip(q[..., 0], -1.0, 1.0)
    xyz = q[..., 1:]
    n = np.linalg.norm(xyz, axis=-1)
    angle = 2.0 * np.arctan2(n, w)
    # For tiny angles 2*xyz/w is exact to O(angle^3).
    small = n < 1e-9
    safe_n = np.where(small, 1.0, n)
    scale = np.where(small, 2.0 / np.where(w == 0.0, 1.0, w), angle / safe_n)
    return xyz * scale[..., None]


def rotvec_to_quat(rv: np.ndarray) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv, axis=-1)
    small = angle < 1e-12
    safe = np.where(small, 1.0, angle)
    axis = rv / safe[..., None]
    half = 0.5 * angle
    w = np.cos(half)
    s = np.where(small, 0.5, np.sin(half) / safe)  # sin(a/2)/a -> 1/2
    xyz = rv * s[..., None]
    return quat_canonical(np.concatenate([w[..., None], xyz], axis=-1))


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    return mat3_apply(quat_to_mat(q), v)


def quat_angle_between(a: np.ndarray, b: np.ndarray) -> float:
    """Geodesic angle between two unit quaternions, in [0, pi]."""
    rel = quat_mul(np.asarray(b, dtype=float), quat_conj(np.asarray(a, dtype=float)))
    return float(np.linalg.norm(quat_to_rotvec(rel), axis=-1))


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid pose: position (m) plus unit quaternion (w, x, y, z)."""

    t: np.ndarray
    o: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(3)
        o = np.asarray(self.o, dtype=float).reshape(4)
        norm = np.linalg.norm(o)
        if abs(norm - 1.0) > 1e-9:
            raise InputError(f"quaternion norm {norm!r} deviates from 1 by more than 1e-9")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "o", quat_canonical(o))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, R: np.ndarray, t: np.ndarray) -> "Pose":
        return cls(np.asarray(t, dtype=float), mat_to_quat(R))

    def matrix(self) -> np.ndarray:
        return quat_to_mat(self.o)

    def compose(self, other: "Pose") -> "Pose":
        """self * other (apply ``other`` in this pose's frame)."""
        return Pose(self.t + quat_rotate(self.o, other.t), quat_normalize(quat_mul(self.o, other.o)))

    def apply(self, p: np.ndarray) -> np.ndarray:
        return self.t + quat_rotate(self.o, np.asarray(p, dtype=float))

    def inverse(self) -> "Pose":
        qc = quat_conj(self.o)
        return Pose(-quat_rotate(qc, self.t), quat_canonical(qc))

    def is_close(self, other: "Pose", tol_t: float = 1e-9, tol_r: float = 1e-9) -> bool:
        return (
            float(np.linalg.norm(self.t - other.t)) <= tol_t
            and quat_angle_between(self.o, other.o) <= tol_r
        )
