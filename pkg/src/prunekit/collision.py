"""Capsule collision world with batched configuration and edge validation.

Static obstacles (tree branches plus anything else) are capsules in world
frame.  The robot's capsules ride on the chain's FK frames.  Everything is
written with elementwise numpy so checking a batch of configurations gives
bit-for-bit the same verdicts as checking them one at a time; the scalar
entry points literally run the batch code with a batch of one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError
from .kinematics import KinematicChain
from .rotations import mat3_apply
from .treemodel import CapsuleSet

# Segments shorter than ~1e-9 m are treated as points.
_SQ_EPS = 1e-18


@dataclass(frozen=True)
class Capsule:
    """Single capsule: segment from a to b swept by a sphere of given radius."""

    a: tuple
    b: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(v) for v in self.a))
        object.__setattr__(self, "b", tuple(float(v) for v in self.b))
        object.__setattr__(self, "radius", float(self.radius))
        if len(self.a) != 3 or len(self.b) != 3:
            raise InputError("capsule endpoints must be 3D")
        if self.radius <= 0:
            raise InputError("capsule radius must be positive")


def _dot3(ux, uy, uz, vx, vy, vz):
    return ux * vx + uy * vy + uz * vz


def _segment_sqdist(p1x, p1y, p1z, q1x, q1y, q1z, p2x, p2y, p2z, q2x, q2y, q2z):
    """Squared distance between segments [p1,q1] and [p2,q2], elementwise.

    Closest-point parameterization with clamping; degenerate (point-like)
    segments get the point-vs-segment special cases.  All branches are
    realized as where-chains so the arithmetic per element is identical no
    matter how the inputs are batched.
    """
    d1x, d1y, d1z = q1x - p1x, q1y - p1y, q1z - p1z
    d2x, d2y, d2z = q2x - p2x, q2y - p2y, q2z - p2z
    rx, ry, rz = p1x - p2x, p1y - p2y, p1z - p2z
    a = _dot3(d1x, d1y, d1z, d1x, d1y, d1z)
    e = _dot3(d2x, d2y, d2z, d2x, d2y, d2z)
    b = _dot3(d1x, d1y, d1z, d2x, d2y, d2z)
    c = _dot3(d1x, d1y, d1z, rx, ry, rz)
    f = _dot3(d2x, d2y, d2z, rx, ry, rz)

    deg1 = a <= _SQ_EPS
    deg2 = e <= _SQ_EPS
    a_safe = np.where(deg1, 1.0, a)
    e_safe = np.where(deg2, 1.0, e)

    denom = a * e - b * b
    s = np.where(denom > 0.0,
                 np.clip((b * f - c * e) / np.where(denom > 0.0, denom, 1.0), 0.0, 1.0),
                 0.0)
    t_raw = (b * s + f) / e_safe
    s = np.where(t_raw < 0.0, np.clip(-c / a_safe, 0.0, 1.0),
                 np.where(t_raw > 1.0, np.clip((b - c) / a_safe, 0.0, 1.0), s))
    t = np.clip(t_raw, 0.0, 1.0)

    # Point-like special cases override the general path.
    s = np.where(deg1, 0.0, s)
    t = np.where(deg1, np.clip(f / e_safe, 0.0, 1.0), t)
    s = np.where(deg2 & ~deg1, np.clip(-c / a_safe, 0.0, 1.0), s)
    t = np.where(deg2, 0.0, t)

    wx = rx + s * d1x - t * d2x
    wy = ry + s * d1y - t * d2y
    wz = rz + s * d1z - t * d2z
    return _dot3(wx, wy, wz, wx, wy, wz)


def segment_distance(p1, q1, p2, q2) -> np.ndarray:
    """Distance between segments; arguments broadcast over leading axes."""
    p1 = np.asarray(p1, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    sq = _segment_sqdist(
        p1[..., 0], p1[..., 1], p1[..., 2], q1[..., 0], q1[..., 1], q1[..., 2],
        p2[..., 0], p2[..., 1], p2[..., 2], q2[..., 0], q2[..., 1], q2[..., 2],
    )
    return np.sqrt(sq)


def capsule_distance(one: Capsule, two: Capsule) -> float:
    """Signed clearance between two capsules; negative means penetration.

    The pair is put in a canonical order before evaluating so the function
    is exactly symmetric in its arguments.
    """
    if (two.a, two.b, two.radius) < (one.a, one.b, one.radius):
        one, two = two, one
    d = segment_distance(np.array(one.a), np.array(one.b), np.array(two.a), np.array(two.b))
    return float(d) - one.radius - two.radius


@dataclass(frozen=True, eq=False)
class CollisionWorld:
    """Immutable static capsule field plus contact exemptions.

    ``source_edge`` keeps the provenance of tree capsules (edge index, -1 for
    plain environment geometry) so per-cut exemptions can be expressed in
    terms of tree edges.  ``exempt_pairs`` rows are (robot capsule index,
    static capsule index) combinations that never count as collision.
    """

    a: np.ndarray
    b: np.ndarray
    radius: np.ndarray
    source_edge: np.ndarray
    margin: float = 0.0
    exempt_pairs: np.ndarray = None

    def __post_init__(self):
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "radius", np.asarray(self.radius, dtype=float).reshape(-1))
        object.__setattr__(self, "source_edge", np.asarray(self.source_edge, dtype=np.int64).reshape(-1))
        pairs = self.exempt_pairs
        pairs = np.zeros((0, 2), dtype=np.int64) if pairs is None else np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "exempt_pairs", pairs)
        if not (self.radius > 0).all():
            raise InputError("static capsule radii must be positive")
        if self.margin < 0:
            raise InputError("collision margin cannot be negative")
        if len(self.a) != len(self.radius) or len(self.b) != len(self.radius):
            raise InputError("static capsule arrays disagree on length")
        if pairs.size and (pairs[:, 1].min() < 0 or pairs[:, 1].max() >= len(self.radius)):
            raise InputError("exemption refers to a static capsule that does not exist")
        if pairs.size and pairs[:, 0].min() < 0:
            raise InputError("exemption robot capsule index cannot be negative")

    def __len__(self) -> int:
        return len(self.radius)

    @classmethod
    def empty(cls, margin: float = 0.0) -> "CollisionWorld":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64), margin)

    @classmethod
    def from_capsule_set(cls, caps: CapsuleSet, margin: float = 0.0) -> "CollisionWorld":
        return cls(caps.a, caps.b, caps.radius, caps.edge_index, margin)

    @classmethod
    def from_capsules(cls, capsules, margin: float = 0.0) -> "CollisionWorld":
        if not capsules:
            return cls.empty(margin)
        return cls(
            [c.a for c in capsules],
            [c.b for c in capsules],
            [c.radius for c in capsules],
            np.full(len(capsules), -1, dtype=np.int64),
            margin,
        )

    def extended(self, caps: CapsuleSet) -> "CollisionWorld":
        return replace(
            self,
            a=np.vstack([self.a, caps.a]),
            b=np.vstack([self.b, caps.b]),
            radius=np.concatenate([self.radius, caps.radius]),
            source_edge=np.concatenate([self.source_edge, caps.edge_index]),
        )

    def with_margin(self, margin: float) -> "CollisionWorld":
        return replace(self, margin=margin)

    def with_exemptions(self, pairs) -> "CollisionWorld":
        return replace(self, exempt_pairs=np.asarray(pairs, dtype=np.int64).reshape(-1, 2))

    def indices_for_edges(self, edge_ids) -> np.ndarray:
        """Static capsule indices whose provenance is one of the given edges."""
        return np.flatnonzero(np.isin(self.source_edge, np.asarray(list(edge_ids), dtype=np.int64)))

    def _exempt_mask(self, n_robot: int) -> np.ndarray | None:
        if not self.exempt_pairs.size:
            return None
        if self.exempt_pairs[:, 0].max() >= n_robot:
            raise InputError("exemption refers to a robot capsule that does not exist")
        mask = np.zeros((n_robot, len(self)), dtype=bool)
        mask[self.exempt_pairs[:, 0], self.exempt_pairs[:, 1]] = True
        return mask


def place_robot_capsules(chain: KinematicChain, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """World-frame robot capsule endpoints (B, K, 3) for configurations Q."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R, p, _, _ = chain.fk_all(Q)
    K = len(chain.capsules)
    pa = np.empty((Q.shape[0], K, 3))
    pb = np.empty((Q.shape[0], K, 3))
    for k in range(K):
        link = int(chain.capsules.link[k])
        pa[:, k] = p[:, link] + mat3_apply(R[:, link], chain.capsules.a[k])
        pb[:, k] = p[:, link] + mat3_apply(R[:, link], chain.capsules.b[k])
    return pa, pb


def _signed_distances(world: CollisionWorld, chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Signed robot-vs-static clearance matrix (B, K, M)."""
    pa, pb = place_robot_capsules(chain, Q)
    sq = _segment_sqdist(
        pa[:, :, None, 0], pa[:, :, None, 1], pa[:, :, None, 2],
        pb[:, :, None, 0], pb[:, :, None, 1], pb[:, :, None, 2],
        world.a[None, None, :, 0], world.a[None, None, :, 1], world.a[None, None, :, 2],
        world.b[None, None, :, 0], world.b[None, None, :, 1], world.b[None, None, :, 2],
    )
    return np.sqrt(sq) - (chain.capsules.radius[None, :, None] + world.radius[None, None, :])


def config_in_collision_batch(world: CollisionWorld, chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Collision verdict per row of Q (B, n)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    K = len(chain.capsules)
    if len(world) == 0 or K == 0:
        return np.zeros(Q.shape[0], dtype=bool)
    hit = _signed_distances(world, chain, Q) <= world.margin
    mask = world._exempt_mask(K)
    if mask is not None:
        hit &= ~mask[None, :, :]
    return hit.any(axis=(1, 2))


@dataclass(frozen=True)
class CollisionQuery:
    """Result of a single-configuration check; truthy when colliding."""

    hit: bool
    pair: tuple | None

    def __bool__(self) -> bool:
        return self.hit


def config_in_collision(world: CollisionWorld, chain: KinematicChain, q: np.ndarray) -> CollisionQuery:
    """Scalar collision check; reports the first offending (robot, static) pair.

    Runs the batch path with a batch of one, so verdicts match batched
    checks exactly.  The reported pair is the lexicographically smallest
    (robot capsule index, static capsule index) in violation.
    """
    q = np.asarray(q, dtype=float).reshape(1, -1)
    K = len(chain.capsules)
    if len(world) == 0 or K == 0:
        return CollisionQuery(False, None)
    hit = _signed_distances(world, chain, q)[0] <= world.margin
    mask = world._exempt_mask(K)
    if mask is not None:
        hit &= ~mask
    offenders = np.argwhere(hit)
    if len(offenders) == 0:
        return CollisionQuery(False, None)
    return CollisionQuery(True, (int(offenders[0, 0]), int(offenders[0, 1])))


def clearance(world: CollisionWorld, chain: KinematicChain, q: np.ndarray) -> float:
    """Minimum signed distance over non-exempt pairs; +inf when nothing to hit."""
    q = np.asarray(q, dtype=float).reshape(1, -1)
    K = len(chain.capsules)
    if len(world) == 0 or K == 0:
        return math.inf
    signed = _signed_distances(world, chain, q)[0]
    mask = world._exempt_mask(K)
    if mask is not None:
        signed = np.where(mask, np.inf, signed)
    return float(signed.min())


def edge_valid(
    world: CollisionWorld,
    chain: KinematicChain,
    q_from: np.ndarray,
    q_to: np.ndarray,
    resolution: float,
    chunk: int = 256,
) -> bool:
    """True iff the straight joint-space segment is collision-free.

    States are sampled at uniform parameter spacing so consecutive configs
    differ by at most ``resolution`` per joint, endpoints included, and
    validated in batches.  The endpoint pair is canonicalized first, making
    the check exactly direction-independent.
    """
    if resolution <= 0:
        raise InputError("resolution must be positive")
    qa = chain._check_q(np.asarray(q_from, dtype=float).reshape(-1))
    qb = chain._check_q(np.asarray(q_to, dtype=float).reshape(-1))
    if tuple(qb) < tuple(qa):
        qa, qb = qb, qa
    span = float(np.max(np.abs(qb - qa))) if len(qa) else 0.0
    nseg = max(1, int(math.ceil(span / resolution - 1e-12)))
    ts = np.arange(nseg + 1) / nseg
    Q = qa[None, :] + ts[:, None] * (qb - qa)[None, :]
    Q[-1] = qb
    for start in range(0, len(Q), chunk):
        if config_in_collision_batch(world, chain, Q[start:start + chunk]).any():
            return False
    return True
