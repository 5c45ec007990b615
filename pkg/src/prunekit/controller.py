"""Position-based servoing for the approach-to-cut advance.

The control law is resolved-rate: qdot = J^+ k e_ee with a diagonal gain k.
The simulator integrates it at a fixed period and stops on the first of:
joint-limit violation, commanded-velocity violation, collision, or the
success tolerance.  Velocity is judged on the raw command, before any
clamping, so the singularity failure mode stays observable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionWorld, config_in_collision
from .errors import InputError
from .kinematics import KinematicChain, forward_kinematics, jacobian, pose_error_vec
from .rotations import Pose

STATUS_SUCCESS = "success"
STATUS_JOINT_LIMIT = "joint_limit"
STATUS_VELOCITY_LIMIT = "velocity_limit"
STATUS_COLLISION = "collision"
# Budget exhaustion without a limit event has no bucket in the failure
# taxonomy above; it gets its own status rather than a misleading one.
STATUS_INCOMPLETE = "incomplete"

EXECUTION_LOG_FORMAT = "prunekit-execution"


@dataclass(frozen=True)
class ServoConfig:
    k_t: float = 2.0
    k_r: float = 2.0
    dt: float = 0.01
    max_steps: int = 2000
    tol_t: float = 1e-3
    tol_r: float = 1e-2
    damping: float = 0.01

    def __post_init__(self):
        for name in ("k_t", "k_r", "dt", "max_steps", "tol_t", "tol_r", "damping"):
            if getattr(self, name) <= 0:
                raise InputError(f"servo parameter {name} must be positive")


def pose_error(current: Pose, goal: Pose) -> np.ndarray:
    """(goal - current) as translation stacked with a world-frame rotation vector."""
    return pose_error_vec(current.t, current.o, goal.t, goal.o)


def pbs_step(chain: KinematicChain, q, goal: Pose, cfg: ServoConfig = ServoConfig()) -> tuple[np.ndarray, np.ndarray]:
    """One servo update: commanded joint velocity and the integrated next config.

    Damped least squares keeps the command finite near singularities; no
    limits are applied here, the simulator owns violation detection.
    """
    q = np.asarray(q, dtype=float).reshape(-1)
    err = pose_error(forward_kinematics(chain, q), goal)
    gain = np.concatenate([np.full(3, cfg.k_t), np.full(3, cfg.k_r)])
    v = gain * err
    J = jacobian(chain, q)
    JJt = J @ J.T + (cfg.damping ** 2) * np.eye(6)
    qdot = J.T @ np.linalg.solve(JJt, v)
    return qdot, q + qdot * cfg.dt


@dataclass(frozen=True, eq=False)
class ExecutionOutcome:
    """Terminated servo run: a single status plus the full step log."""

    status: str
    steps: int
    final_error_t: float
    final_error_r: float
    log_q: np.ndarray
    log_qdot: np.ndarray
    log_error: np.ndarray
    offending_pair: tuple | None = None

    @property
    def success(self) -> bool:
        return self.status == STATUS_SUCCESS


def _error_norms(err: np.ndarray) -> tuple[float, float]:
    return float(np.linalg.norm(err[:3])), float(np.linalg.norm(err[3:]))


def simulate_approach(
    world: CollisionWorld,
    chain: KinematicChain,
    q_start,
    goal: Pose,
    cfg: ServoConfig = ServoConfig(),
) -> ExecutionOutcome:
    """Servo from q_start toward goal, with the failure checks in fixed order.

    After each integrated step: joint limits, then commanded velocity against
    the chain's limits, then collision, then the success tolerance.  The log
    holds one row per executed step (post-step q, the command, and the
    post-step error), so replaying it through FK reproduces the final error.
    """
    q = np.asarray(q_start, dtype=float).reshape(-1)
    if not chain.within_limits(q):
        raise InputError("servo start violates joint limits")
    if config_in_collision(world, chain, q):
        raise InputError("servo start is in collision")

    log_q, log_qdot, log_err = [], [], []
    err = pose_error(forward_kinematics(chain, q), goal)
    e_t, e_r = _error_norms(err)
    status = STATUS_INCOMPLETE
    pair = None
    steps = 0
    if e_t <= cfg.tol_t and e_r <= cfg.tol_r:
        status = STATUS_SUCCESS
    else:
        for _ in range(cfg.max_steps):
            qdot, q = pbs_step(chain, q, goal, cfg)
            err = pose_error(forward_kinematics(chain, q), goal)
            e_t, e_r = _error_norms(err)
            steps += 1
            log_q.append(q.copy())
            log_qdot.append(qdot)
            log_err.append(err)
            if np.any(q < chain.lower) or np.any(q > chain.upper):
                status = STATUS_JOINT_LIMIT
                break
            if np.any(np.abs(qdot) > chain.vel_limits):
                status = STATUS_VELOCITY_LIMIT
                break
            check = config_in_collision(world, chain, q)
            if check:
                status = STATUS_COLLISION
                pair = check.pair
                break
            if e_t <= cfg.tol_t and e_r <= cfg.tol_r:
                status = STATUS_SUCCESS
                break

    empty = np.zeros((0, chain.n))
    return ExecutionOutcome(
        status=status,
        steps=steps,
        final_error_t=e_t,
        final_error_r=e_r,
        log_q=np.stack(log_q) if log_q else empty,
        log_qdot=np.stack(log_qdot) if log_qdot else empty,
        log_error=np.stack(log_err) if log_err else np.zeros((0, 6)),
        offending_pair=pair,
    )


def save_execution_log(outcome: ExecutionOutcome, path) -> None:
    doc = {
        "format": EXECUTION_LOG_FORMAT,
        "version": 1,
        "status": outcome.status,
        "steps": outcome.steps,
        "final_error_t": outcome.final_error_t,
        "final_error_r": outcome.final_error_r,
        "offending_pair": list(outcome.offending_pair) if outcome.offending_pair else None,
        "q": [[float(v) for v in row] for row in outcome.log_q],
        "qdot": [[float(v) for v in row] for row in outcome.log_qdot],
        "error": [[float(v) for v in row] for row in outcome.log_error],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_execution_log(path) -> ExecutionOutcome:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != EXECUTION_LOG_FORMAT:
        raise InputError(f"unexpected execution log format field {doc.get('format')!r}")
    pair = doc.get("offending_pair")
    return ExecutionOutcome(
        status=doc["status"],
        steps=int(doc["steps"]),
        final_error_t=float(doc["final_error_t"]),
        final_error_r=float(doc["final_error_r"]),
        log_q=np.asarray(doc["q"], dtype=float),
        log_qdot=np.asarray(doc["qdot"], dtype=float),
        log_error=np.asarray(doc["error"], dtype=float),
        offending_pair=None if pair is None else (int(pair[0]), int(pair[1])),
    )
