"""Candidate end-effector poses on circles around a cut.

For a cut (t_c, v_c) the candidates live on a circle of radius r in the
branch cross-section plane.  Positions come from an orthogonal basis of
that plane; orientations point the tool's +Z axis at the cut point with +X
aligned to the branch direction, so the approach ring and the cutting ring
share orientations angle-for-angle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegeneratePoseError, InputError
from .rotations import Pose, mat_to_quat
from .treemodel import Cut

DEFAULT_APPROACH_RADIUS = 0.15
DEFAULT_CUTTING_RADIUS = 0.03


def default_angles(count: int = 36) -> np.ndarray:
    """``count`` uniform angles over [-pi, pi)."""
    if count < 1:
        raise InputError("angle count must be at least 1")
    return -np.pi + 2.0 * np.pi * np.arange(count) / count


def orthogonal_basis(v_c) -> tuple[np.ndarray, np.ndarray]:
    """Two vectors spanning the plane orthogonal to v_c.

    v1 = (v_y, -v_x, 0), v2 = (v_x v_z, v_y v_z, -v_x^2 - v_y^2); when v_c is
    along z (v_x = v_y = 0) those vanish, so the fixed fallback (1,0,0),
    (0,1,0) is used instead.  Outputs are not normalized.
    """
    v = np.asarray(v_c, dtype=float).reshape(3)
    if not np.any(v != 0.0):
        raise InputError("cut direction must be non-zero")
    x, y, z = v
    if x == 0.0 and y == 0.0:
        return np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    v1 = np.array([y, -x, 0.0])
    v2 = np.array([x * z, y * z, -x * x - y * y])
    return v1, v2


def _unit_basis(v_c) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    v = np.asarray(v_c, dtype=float).reshape(3)
    norm = float(np.sqrt(v @ v))
    if norm == 0.0:
        raise InputError("cut direction must be non-zero")
    vc = v / norm
    v1, v2 = orthogonal_basis(vc)
    return vc, v1 / float(np.sqrt(v1 @ v1)), v2 / float(np.sqrt(v2 @ v2))


def position_on_circle(cut: Cut, r: float, theta: float) -> np.ndarray:
    """Point at angle theta on the radius-r circle around the cut."""
    if r <= 0:
        raise InputError("circle radius must be positive")
    _, v1, v2 = _unit_basis(cut.direction)
    return cut.position + r * (np.cos(theta) * v1 + np.sin(theta) * v2)


def _orientation_from_axes(vc_unit: np.ndarray, approach_unit: np.ndarray) -> np.ndarray:
    """Unit quaternion whose matrix columns are (v_c, unit(a x v_c), a).

    Column 3 is the tool approach axis a pointing at the cut; column 1 is the
    branch direction (the shear blade plane normal); column 2 completes a
    right-handed frame, det +1.
    """
    w = np.array([
        approach_unit[1] * vc_unit[2] - approach_unit[2] * vc_unit[1],
        approach_unit[2] * vc_unit[0] - approach_unit[0] * vc_unit[2],
        approach_unit[0] * vc_unit[1] - approach_unit[1] * vc_unit[0],
    ])
    n = float(np.sqrt(w @ w))
    if n < 1e-9:
        raise DegeneratePoseError("approach axis is parallel to the cut direction")
    R = np.stack([vc_unit, w / n, approach_unit], axis=1)
    return mat_to_quat(R)


def cutting_orientation(cut: Cut, t_ee) -> np.ndarray:
    """Tool orientation for an end-effector standing at t_ee, looking at t_c."""
    t_ee = np.asarray(t_ee, dtype=float).reshape(3)
    vc, _, _ = _unit_basis(cut.direction)
    a = cut.position - t_ee
    norm = float(np.sqrt(a @ a))
    if norm < 1e-12:
        raise DegeneratePoseError("end-effector position coincides with the cut point")
    return _orientation_from_axes(vc, a / norm)


@dataclass(frozen=True, eq=False)
class PoseRing:
    """Ring of candidate poses around a cut, aligned index-for-index with angles."""

    cut: Cut
    radius: float
    angles: np.ndarray
    poses: tuple

    def __post_init__(self):
        object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).reshape(-1))
        object.__setattr__(self, "poses", tuple(self.poses))
        if len(self.poses) != len(self.angles):
            raise InputError("ring poses and angles must align")

    def __len__(self) -> int:
        return len(self.poses)

    def positions(self) -> np.ndarray:
        return np.stack([p.t for p in self.poses]) if self.poses else np.zeros((0, 3))

    def quaternions(self) -> np.ndarray:
        return np.stack([p.o for p in self.poses]) if self.poses else np.zeros((0, 4))


def generate_pose_set(cut: Cut, r: float, angles) -> PoseRing:
    """One pose per angle on the radius-r circle around the cut.

    Orientations are computed from the in-plane direction alone (no radius
    involved), so rings of different radii share identical orientations at
    equal angles; only the position moves along the approach axis.
    """
    if r <= 0:
        raise InputError("circle radius must be positive")
    angles = np.asarray(angles, dtype=float).reshape(-1)
    if np.any(np.abs(angles) > np.pi + 1e-12):
        raise InputError("angles must lie within [-pi, pi]")
    vc, v1, v2 = _unit_basis(cut.direction)
    poses = []
    for theta in angles:
        d = np.cos(theta) * v1 + np.sin(theta) * v2
        d = d / float(np.sqrt(d @ d))
        t_ee = cut.position + r * d
        poses.append(Pose(t_ee, _orientation_from_axes(vc, -d)))
    return PoseRing(cut, float(r), angles, tuple(poses))


def dump_rings(rings, path) -> None:
    """Debug dump of one or more rings as a JSON document."""
    doc = {
        "format": "prunekit-rings",
        "version": 1,
        "rings": [
            {
                "radius": ring.radius,
                "cut": {
                    "position": [float(v) for v in ring.cut.position],
                    "direction": [float(v) for v in ring.cut.direction],
                },
                "angles": [float(a) for a in ring.angles],
                "poses": [
                    {
                        "position": [float(v) for v in p.t],
                        "quaternion_wxyz": [float(v) for v in p.o],
                    }
                    for p in ring.poses
                ],
            }
            for ring in rings
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")
