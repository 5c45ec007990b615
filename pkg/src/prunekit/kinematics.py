"""Serial-chain kinematics: FK, geometric Jacobian, manipulability, diverse IK.

The chain model is deliberately plain: revolute joints only, each defined by
a fixed origin transform and a rotation axis in its own frame.  Forward
kinematics is batched over configurations with elementwise arithmetic so a
batch row is bit-identical to a lone evaluation (the collision checker
depends on that).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import InputError
from .rotations import (
    Pose,
    axis_angle_mats,
    cross3,
    mat3_apply,
    mat3_mul,
    mat_to_quat,
    quat_conj,
    quat_mul,
    quat_normalize,
    quat_to_mat,
    quat_to_rotvec,
)

CHAIN_FORMAT = "prunekit-chain"

# Joint configurations are plain float arrays of length chain.n.
JointConfig = np.ndarray


@dataclass(frozen=True, eq=False)
class LinkCapsules:
    """Robot collision capsules, one frame index per capsule (0 = base frame,
    i = frame after joint i).  ``is_tool`` marks shear-tool capsules, which
    are the only ones granted contact exemptions against the target branch."""

    link: np.ndarray
    a: np.ndarray
    b: np.ndarray
    radius: np.ndarray
    is_tool: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "link", np.asarray(self.link, dtype=np.int64).reshape(-1))
        object.__setattr__(self, "a", np.asarray(self.a, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float).reshape(-1, 3))
        object.__setattr__(self, "radius", np.asarray(self.radius, dtype=float).reshape(-1))
        object.__setattr__(self, "is_tool", np.asarray(self.is_tool, dtype=bool).reshape(-1))
        if not (self.radius > 0).all():
            raise InputError("link capsule radii must be positive")

    def __len__(self) -> int:
        return len(self.radius)


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Revolute serial chain with joint limits and link collision capsules."""

    axes: np.ndarray
    origin_pos: np.ndarray
    origin_quat: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    vel_limits: np.ndarray
    ee_offset: Pose
    capsules: LinkCapsules
    home: np.ndarray
    base: Pose = field(default_factory=Pose.identity)
    name: str = "chain"

    def __post_init__(self):
        axes = np.asarray(self.axes, dtype=float).reshape(-1, 3)
        n = len(axes)
        norms = np.linalg.norm(axes, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise InputError("joint axes must be unit vectors")
        origin_pos = np.asarray(self.origin_pos, dtype=float).reshape(n, 3)
        origin_quat = np.stack([quat_normalize(q) for q in np.asarray(self.origin_quat, dtype=float).reshape(n, 4)])
        lower = np.asarray(self.lower, dtype=float).reshape(n)
        upper = np.asarray(self.upper, dtype=float).reshape(n)
        vel = np.asarray(self.vel_limits, dtype=float).reshape(n)
        home = np.asarray(self.home, dtype=float).reshape(n)
        if not (lower < upper).all():
            raise InputError("each joint needs lower limit < upper limit")
        if not (vel > 0).all():
            raise InputError("velocity limits must be positive")
        if np.any(home < lower) or np.any(home > upper):
            raise InputError("home configuration violates joint limits")
        if self.capsules.link.size and (self.capsules.link.min() < 0 or self.capsules.link.max() > n):
            raise InputError("link capsule frame index out of range")
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "origin_pos", origin_pos)
        object.__setattr__(self, "origin_quat", origin_quat)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "vel_limits", vel)
        object.__setattr__(self, "home", home)
        object.__setattr__(self, "_origin_mats", quat_to_mat(origin_quat))
        object.__setattr__(self, "_ee_mat", self.ee_offset.matrix())

    @property
    def n(self) -> int:
        return len(self.axes)

    def with_base(self, base: Pose) -> "KinematicChain":
        return replace(self, base=base)

    def within_limits(self, q: np.ndarray) -> bool:
        q = np.asarray(q, dtype=float)
        return bool(np.all(q >= self.lower) and np.all(q <= self.upper))

    def random_configs(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(count, self.n))

    def _check_q(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape[-1] != self.n:
            raise InputError(f"expected {self.n} joint values, got {q.shape[-1]}")
        return q

    def fk_all(self, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Batched FK over configurations Q (B, n).

        Returns per-joint frames ``(R (B, n+1, 3, 3), p (B, n+1, 3))`` with
        index 0 the base frame and index i the frame after joint i, plus the
        end-effector frame ``(R_ee (B, 3, 3), p_ee (B, 3))``.
        """
        Q = self._check_q(np.atleast_2d(Q))
        B = Q.shape[0]
        n = self.n
        R = np.empty((B, n + 1, 3, 3))
        p = np.empty((B, n + 1, 3))
        R[:, 0] = self.base.matrix()
        p[:, 0] = self.base.t
        for i in range(n):
            p[:, i + 1] = p[:, i] + mat3_apply(R[:, i], self.origin_pos[i])
            R_pre = mat3_mul(R[:, i], self._origin_mats[i])
            R[:, i + 1] = mat3_mul(R_pre, axis_angle_mats(self.axes[i], Q[:, i]))
        p_ee = p[:, n] + mat3_apply(R[:, n], self.ee_offset.t)
        R_ee = mat3_mul(R[:, n], self._ee_mat)
        return R, p, R_ee, p_ee


def forward_kinematics(chain: KinematicChain, q: JointConfig) -> Pose:
    """End-effector pose for a single configuration."""
    q = chain._check_q(np.asarray(q, dtype=float).reshape(-1))
    _, _, R_ee, p_ee = chain.fk_all(q[None, :])
    return Pose(p_ee[0], mat_to_quat(R_ee[0]))


def fk_batch(chain: KinematicChain, Q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """End-effector positions and orientation quaternions for Q (B, n)."""
    _, _, R_ee, p_ee = chain.fk_all(Q)
    return p_ee, mat_to_quat(R_ee)


def _jacobian_from_frames(chain: KinematicChain, R: np.ndarray, p: np.ndarray,
                          p_ee: np.ndarray) -> np.ndarray:
    """Geometric Jacobians from frames already produced by ``fk_all``."""
    B = R.shape[0]
    J = np.empty((B, 6, chain.n))
    for i in range(chain.n):
        z = mat3_apply(R[:, i + 1], chain.axes[i])
        J[:, :3, i] = cross3(z, p_ee - p[:, i + 1])
        J[:, 3:, i] = z
    return J


def jacobian_batch(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """World-frame geometric Jacobians (B, 6, n): rows are (linear, angular)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R, p, _, p_ee = chain.fk_all(Q)
    return _jacobian_from_frames(chain, R, p, p_ee)


def jacobian(chain: KinematicChain, q: JointConfig) -> np.ndarray:
    return jacobian_batch(chain, np.asarray(q, dtype=float)[None, :])[0]


def manipulability_batch(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Yoshikawa measure sqrt(det(Jt Jt^T)) from the translational Jacobian rows."""
    Jt = jacobian_batch(chain, Q)[:, :3, :]
    gram = Jt @ np.swapaxes(Jt, 1, 2)
    return np.sqrt(np.clip(np.linalg.det(gram), 0.0, None))


def manipulability(chain: KinematicChain, q: JointConfig) -> float:
    return float(manipulability_batch(chain, np.asarray(q, dtype=float)[None, :])[0])


def interior_margin(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Smallest distance (rad) from each configuration to any joint stop."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    return np.minimum((Q - chain.lower).min(axis=1), (chain.upper - Q).min(axis=1))


def pose_error_vec(p_cur: np.ndarray, q_cur: np.ndarray, goal_t: np.ndarray,
                   goal_o: np.ndarray) -> np.ndarray:
    """6D error (goal - current): translation then rotation vector, world frame.

    Broadcasts, so a single goal can be compared against a batch of current
    poses or each row can carry its own goal.
    """
    rel = quat_mul(goal_o, quat_conj(q_cur))
    t_err = np.broadcast_arrays(goal_t - p_cur, rel[..., :3])[0]
    return np.concatenate([t_err, quat_to_rotvec(rel)], axis=-1)


def _dls_track(
    chain: KinematicChain,
    goal_t: np.ndarray,
    goal_o: np.ndarray,
    Q0: np.ndarray,
    tol_t: float,
    tol_r: float,
    max_iters: int,
    damping: float,
    step_clamp: float,
    stop_on_first: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Damped least-squares iteration toward per-row goals for each row of Q0.

    ``goal_t``/``goal_o`` broadcast against the batch, so one shared goal and
    one goal per row are both fine.  Rows are clipped into joint limits every
    step.  Returns the final configurations and a convergence flag per row.
    With ``stop_on_first`` the loop ends at the first iteration where any row
    has converged.  Converged rows are frozen, so each row's result depends
    only on its own start and goal, never on what else shares the batch.
    """
    Q = np.clip(np.array(Q0, dtype=float, copy=True), chain.lower, chain.upper)
    lam2 = damping * damping
    eye6 = np.eye(6)
    ok = np.zeros(len(Q), dtype=bool)
    for _ in range(max_iters + 1):
        R, p, R_ee, p_ee = chain.fk_all(Q)
        err = pose_error_vec(p_ee, mat_to_quat(R_ee), goal_t, goal_o)
        ok = (np.linalg.norm(err[:, :3], axis=1) <= tol_t) & (
            np.linalg.norm(err[:, 3:], axis=1) <= tol_r
        )
        if ok.all() or (stop_on_first and ok.any()):
            break
        active = ~ok
        J = _jacobian_from_frames(chain, R[active], p[active], p_ee[active])
        JJt = J @ np.swapaxes(J, 1, 2) + lam2 * eye6
        y = np.linalg.solve(JJt, err[active][:, :, None])
        dq = (np.swapaxes(J, 1, 2) @ y)[:, :, 0]
        np.clip(dq, -step_clamp, step_clamp, out=dq)
        Q[active] = np.clip(Q[active] + dq, chain.lower, chain.upper)
    return Q, ok


def ik_single(
    chain: KinematicChain,
    target: Pose,
    q_init: JointConfig | None = None,
    tol_t: float = 1e-3,
    tol_r: float = 1e-2,
    max_iters: int = 150,
    restarts: int = 10,
    seed: int = 0,
    damping: float = 0.05,
    step_clamp: float = 0.2,
) -> JointConfig | None:
    """One IK solution via damped least squares, or None on non-convergence.

    The initial guess is tried alongside ``restarts`` random in-limit seeds;
    the lowest-index converged attempt wins, so a target already satisfied by
    ``q_init`` returns it untouched.
    """
    if tol_t <= 0 or tol_r <= 0:
        raise InputError("tolerances must be positive")
    q0 = chain.home if q_init is None else chain._check_q(np.asarray(q_init, dtype=float))
    rng = np.random.default_rng(np.random.SeedSequence([0x1C5, int(seed)]))
    Q0 = np.vstack([q0[None, :], chain.random_configs(rng, restarts)]) if restarts else q0[None, :]
    Q, ok = _dls_track(chain, target.t, target.o, Q0, tol_t, tol_r, max_iters, damping,
                       step_clamp, stop_on_first=True)
    if not ok.any():
        return None
    return Q[int(np.argmax(ok))]


@dataclass(frozen=True, eq=False)
class IKSolutionSet:
    """Verified IK solutions (K, n) with their restart indices and the
    pairwise max-abs joint distance matrix (K, K)."""

    solutions: np.ndarray
    restart_index: np.ndarray
    pairwise_linf: np.ndarray

    def __len__(self) -> int:
        return len(self.solutions)

    @classmethod
    def build(cls, solutions: np.ndarray, restart_index: np.ndarray) -> "IKSolutionSet":
        solutions = np.asarray(solutions, dtype=float).reshape(len(restart_index), -1)
        diff = solutions[:, None, :] - solutions[None, :, :]
        return cls(solutions, np.asarray(restart_index, dtype=int),
                   np.abs(diff).max(axis=-1) if len(solutions) else np.zeros((0, 0)))


def ik_diverse_set(
    chain: KinematicChain,
    target: Pose,
    count: int,
    seed: int = 0,
    tol_t: float = 1e-3,
    tol_r: float = 1e-2,
    max_iters: int = 150,
    damping: float = 0.05,
    step_clamp: float = 0.2,
    dedupe_tol: float = 1e-6,
) -> IKSolutionSet:
    """Up to ``count`` distinct IK solutions from independent random restarts.

    Restart i draws its seed configuration from a stream keyed by (seed, i),
    so results do not depend on evaluation order or batching.  An empty set
    is a legitimate outcome for unreachable targets.
    """
    if count < 1:
        raise InputError("count must be at least 1")
    Q0 = np.empty((count, chain.n))
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([0xD1F, int(seed), i]))
        Q0[i] = rng.uniform(chain.lower, chain.upper)
    Q, ok = _dls_track(chain, target.t, target.o, Q0, tol_t, tol_r, max_iters, damping, step_clamp)
    solutions: list[np.ndarray] = []
    indices: list[int] = []
    for i in np.flatnonzero(ok):
        q = Q[i]
        if any(np.max(np.abs(q - s)) < dedupe_tol for s in solutions):
            continue
        solutions.append(q)
        indices.append(int(i))
    if not solutions:
        return IKSolutionSet.build(np.zeros((0, chain.n)), np.zeros(0, dtype=int))
    return IKSolutionSet.build(np.vstack(solutions), np.array(indices))


# ---------------------------------------------------------------------------
# Chain config files


def _pose_from_doc(doc: dict) -> Pose:
    return Pose(np.asarray(doc["position"], dtype=float),
                quat_normalize(np.asarray(doc["quaternion_wxyz"], dtype=float)))


def _pose_to_doc(pose: Pose) -> dict:
    return {
        "position": [float(v) for v in pose.t],
        "quaternion_wxyz": [float(v) for v in pose.o],
    }


def load_chain(path) -> KinematicChain:
    """Read a chain config document; enforces the >= 6 joint schema rule."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return chain_from_doc(doc, name=Path(path).stem)


def chain_from_doc(doc: dict, name: str = "chain") -> KinematicChain:
    if doc.get("format") != CHAIN_FORMAT:
        raise InputError(f"unexpected chain format field {doc.get('format')!r}")
    joints = doc["joints"]
    if len(joints) < 6:
        raise InputError(f"chain config needs at least 6 joints, found {len(joints)}")
    caps = doc.get("link_capsules", [])
    capsules = LinkCapsules(
        [c["link"] for c in caps],
        [c["a"] for c in caps],
        [c["b"] for c in caps],
        [c["radius"] for c in caps],
        [bool(c.get("tool", False)) for c in caps],
    )
    return KinematicChain(
        axes=[j["axis"] for j in joints],
        origin_pos=[j["origin_position"] for j in joints],
        origin_quat=[j["origin_quaternion_wxyz"] for j in joints],
        lower=[j["limits"][0] for j in joints],
        upper=[j["limits"][1] for j in joints],
        vel_limits=[j["velocity_limit"] for j in joints],
        ee_offset=_pose_from_doc(doc["ee_offset"]),
        capsules=capsules,
        home=doc["home"],
        name=doc.get("name", name),
    )


def save_chain(chain: KinematicChain, path) -> None:
    doc = {
        "format": CHAIN_FORMAT,
        "version": 1,
        "name": chain.name,
        "joints": [
            {
                "axis": [float(v) for v in chain.axes[i]],
                "origin_position": [float(v) for v in chain.origin_pos[i]],
                "origin_quaternion_wxyz": [float(v) for v in chain.origin_quat[i]],
                "limits": [float(chain.lower[i]), float(chain.upper[i])],
                "velocity_limit": float(chain.vel_limits[i]),
            }
            for i in range(chain.n)
        ],
        "ee_offset": _pose_to_doc(chain.ee_offset),
        "home": [float(v) for v in chain.home],
        "link_capsules": [
            {
                "link": int(chain.capsules.link[k]),
                "a": [float(v) for v in chain.capsules.a[k]],
                "b": [float(v) for v in chain.capsules.b[k]],
                "radius": float(chain.capsules.radius[k]),
                "tool": bool(chain.capsules.is_tool[k]),
            }
            for k in range(len(chain.capsules))
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def default_chain() -> KinematicChain:
    """The 7-DoF arm shipped with the package."""
    text = resources.files("prunekit").joinpath("data/chain_pk7.json").read_text(encoding="utf-8")
    return chain_from_doc(json.loads(text), name="pk7")
