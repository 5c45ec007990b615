"""Holistic pose-and-motion planning over candidate rings.

The pipeline per cut: generate paired approach/cutting rings, solve IK for
every ring angle, score candidates with collision + inverse-manipulability
cost, pick the cheapest workable candidate, then grow an RRT-Connect
trajectory from the start configuration to it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionWorld, config_in_collision_batch, edge_valid
from .errors import InputError
from .kinematics import KinematicChain, _dls_track, interior_margin, manipulability_batch
from .posegen import PoseRing, default_angles, generate_pose_set
from .rotations import Pose, quat_normalize
from .treemodel import Cut

EPS_SINGULAR = 1e-8
LIMIT_MARGIN = 0.15

STATUS_PLANNED = "planned"
STATUS_NO_CANDIDATE = "no_candidate"
STATUS_TIMEOUT = "timeout"

DEFAULT_RRT_STEP = 0.25
DEFAULT_RRT_RESOLUTION = 0.02
DEFAULT_RRT_ITERS = 1200
DEFAULT_SMOOTH_PASSES = 50


@dataclass(frozen=True)
class CostBreakdown:
    """Eq-4-style cost split: a hard collision gate plus 1/manipulability.

    The collision infinity is a flag, not a float; ``total`` only turns into
    math.inf for display so no infinities flow through comparisons.
    """

    infeasible: bool
    joint: float

    @property
    def collision(self) -> float:
        return math.inf if self.infeasible else 0.0

    @property
    def total(self) -> float:
        return math.inf if self.infeasible else self.joint

    def to_doc(self) -> dict:
        return {
            "infeasible": self.infeasible,
            "joint": self.joint,
            "total": None if self.infeasible else self.joint,
        }


def collision_cost(world: CollisionWorld, chain: KinematicChain, q) -> float:
    """math.inf sentinel when q collides, else 0.0.  The sentinel is never
    used in arithmetic; CostBreakdown carries the case split."""
    q = np.asarray(q, dtype=float).reshape(1, -1)
    return math.inf if bool(config_in_collision_batch(world, chain, q)[0]) else 0.0


def joint_cost(chain: KinematicChain, q) -> float:
    """Reciprocal manipulability, clamped near singularities (never divides by 0)."""
    m = manipulability_batch(chain, np.asarray(q, dtype=float)[None, :])[0]
    return 1.0 / max(float(m), EPS_SINGULAR)


@dataclass(frozen=True, eq=False)
class Candidate:
    """One scored (ring angle, IK solution) pair."""

    theta_index: int
    theta: float
    ik_index: int
    q: np.ndarray
    cost: CostBreakdown
    approach_pose: Pose
    cutting_pose: Pose


def theta_seed(seed: int, theta_index: int) -> int:
    """Independent per-angle IK seed stream, stable across runs."""
    return int(np.random.SeedSequence([int(seed), int(theta_index)]).generate_state(1, np.uint64)[0])


def evaluate_candidates(
    world: CollisionWorld,
    chain: KinematicChain,
    approach_ring: PoseRing,
    cutting_ring: PoseRing,
    ik_count: int,
    seed: int = 0,
    tol_t: float = 1e-3,
    tol_r: float = 1e-2,
    max_iters: int = 150,
    deadline: float | None = None,
    dedupe_tol: float = 1e-6,
) -> tuple[list[Candidate], int]:
    """Score every IK solution of every ring angle; returns (candidates, ik calls).

    Per angle this reproduces ik_diverse_set with seed theta_seed(seed, i)
    exactly, but all angles share one batched solve.  Converged answers that
    sit within LIMIT_MARGIN of a joint stop are discarded: those come from
    the solver clipping against the limit, and the servoed advance that
    follows needs room to move.  The list is sorted feasible-first ascending
    by (total cost, angle index, IK index); infeasible candidates trail in
    (angle index, IK index) order.  A ``deadline`` (time.perf_counter value)
    stops work between angle chunks.
    """
    if ik_count < 1:
        raise InputError("ik_count must be at least 1")
    if len(approach_ring) != len(cutting_ring):
        raise InputError("approach and cutting rings must pair angle-for-angle")
    A = len(approach_ring)
    n = chain.n
    candidates: list[Candidate] = []
    pending: list[tuple[int, int, np.ndarray]] = []
    ik_calls = 0
    chunk = 6
    for start in range(0, A, chunk):
        if deadline is not None and start > 0 and time.perf_counter() > deadline:
            break
        idxs = range(start, min(start + chunk, A))
        rows = len(idxs) * ik_count
        Q0 = np.empty((rows, n))
        goal_t = np.empty((rows, 3))
        goal_o = np.empty((rows, 4))
        for r, i in enumerate(idxs):
            s = theta_seed(seed, i)
            pose = approach_ring.poses[i]
            for j in range(ik_count):
                rng = np.random.default_rng(np.random.SeedSequence([0xD1F, s, j]))
                Q0[r * ik_count + j] = rng.uniform(chain.lower, chain.upper)
                goal_t[r * ik_count + j] = pose.t
                goal_o[r * ik_count + j] = pose.o
        Q, ok = _dls_track(chain, goal_t, goal_o, Q0, tol_t, tol_r, max_iters, 0.05, 0.2)
        ik_calls += rows
        roomy = interior_margin(chain, Q) >= LIMIT_MARGIN
        for r, i in enumerate(idxs):
            sols: list[np.ndarray] = []
            for j in range(ik_count):
                if not ok[r * ik_count + j] or not roomy[r * ik_count + j]:
                    continue
                q = Q[r * ik_count + j]
                if any(np.max(np.abs(q - s_)) < dedupe_tol for s_ in sols):
                    continue
                pending.append((i, len(sols), q))
                sols.append(q)
    if pending:
        stacked = np.stack([q for _, _, q in pending])
        hits = config_in_collision_batch(world, chain, stacked)
        manips = manipulability_batch(chain, stacked)
        for (i, j, q), hit, m in zip(pending, hits, manips):
            cost = CostBreakdown(bool(hit), 1.0 / max(float(m), EPS_SINGULAR))
            candidates.append(Candidate(i, float(approach_ring.angles[i]), j, q, cost,
                                        approach_ring.poses[i], cutting_ring.poses[i]))
    candidates.sort(key=lambda c: (c.cost.infeasible,
                                   c.cost.joint if not c.cost.infeasible else 0.0,
                                   c.theta_index, c.ik_index))
    return candidates, ik_calls


def feasible_candidates(candidates) -> list:
    return [c for c in candidates if not c.cost.infeasible]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Piecewise-linear joint-space path; validated at ``resolution`` spacing."""

    waypoints: np.ndarray
    resolution: float

    def __post_init__(self):
        wp = np.asarray(self.waypoints, dtype=float)
        wp = wp.reshape(1, -1) if wp.ndim == 1 else wp
        if len(wp) == 0:
            raise InputError("trajectory needs at least one waypoint")
        object.__setattr__(self, "waypoints", wp)

    def __len__(self) -> int:
        return len(self.waypoints)

    def length(self) -> float:
        if len(self.waypoints) < 2:
            return 0.0
        return float(np.sum(np.sqrt(np.sum(np.diff(self.waypoints, axis=0) ** 2, axis=1))))


class _Tree:
    """Growable node store with parent links for RRT bookkeeping."""

    def __init__(self, root: np.ndarray):
        self.nodes = np.empty((64, len(root)))
        self.nodes[0] = root
        self.count = 1
        self.parents = [-1]

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.count == len(self.nodes):
            grown = np.empty((2 * len(self.nodes), self.nodes.shape[1]))
            grown[: self.count] = self.nodes[: self.count]
            self.nodes = grown
        self.nodes[self.count] = q
        self.parents.append(parent)
        self.count += 1
        return self.count - 1

    def nearest(self, q: np.ndarray) -> int:
        d2 = np.sum((self.nodes[: self.count] - q) ** 2, axis=1)
        return int(np.argmin(d2))

    def branch(self, idx: int) -> list[np.ndarray]:
        out = []
        while idx >= 0:
            out.append(self.nodes[idx].copy())
            idx = self.parents[idx]
        return out


def _steer(q_from: np.ndarray, q_to: np.ndarray, step: float) -> np.ndarray:
    d = q_to - q_from
    dist = float(np.sqrt(d @ d))
    if dist <= step:
        return q_to.copy()
    return q_from + (step / dist) * d


def rrt_connect(
    world: CollisionWorld,
    chain: KinematicChain,
    q_start,
    q_goal,
    step: float = DEFAULT_RRT_STEP,
    resolution: float = DEFAULT_RRT_RESOLUTION,
    timeout: float = 10.0,
    seed: int = 0,
    max_iters: int = DEFAULT_RRT_ITERS,
    smooth_passes: int = DEFAULT_SMOOTH_PASSES,
) -> Trajectory | None:
    """Bidirectional RRT-Connect in joint space; None when no path in budget.

    Deterministic for a fixed seed as long as the iteration cap, not the
    wall clock, ends the search; the cap is sized so that is the norm.
    Shortcut smoothing re-uses the same random stream.
    """
    q_start = chain._check_q(np.asarray(q_start, dtype=float).reshape(-1)).copy()
    q_goal = chain._check_q(np.asarray(q_goal, dtype=float).reshape(-1)).copy()
    if not chain.within_limits(q_start) or not chain.within_limits(q_goal):
        raise InputError("rrt endpoints must respect joint limits")
    ends = np.stack([q_start, q_goal])
    if config_in_collision_batch(world, chain, ends).any():
        raise InputError("rrt endpoints must be collision-free")
    if timeout <= 0:
        return None
    deadline = time.perf_counter() + timeout
    if np.array_equal(q_start, q_goal):
        return Trajectory(q_start[None, :], resolution)

    rng = np.random.default_rng(np.random.SeedSequence([0x227C, int(seed)]))
    path: list[np.ndarray] | None = None
    if edge_valid(world, chain, q_start, q_goal, resolution):
        path = [q_start, q_goal]
    else:
        tree_a, tree_b = _Tree(q_start), _Tree(q_goal)
        a_is_start = True
        for _ in range(max_iters):
            if time.perf_counter() > deadline:
                return None
            q_rand = rng.uniform(chain.lower, chain.upper)
            near = tree_a.nearest(q_rand)
            q_new = _steer(tree_a.nodes[near], q_rand, step)
            if edge_valid(world, chain, tree_a.nodes[near], q_new, resolution):
                new_idx = tree_a.add(q_new, near)
                jdx = tree_b.nearest(q_new)
                while True:
                    q_next = _steer(tree_b.nodes[jdx], q_new, step)
                    if not edge_valid(world, chain, tree_b.nodes[jdx], q_next, resolution):
                        break
                    jdx = tree_b.add(q_next, jdx)
                    if np.array_equal(q_next, q_new):
                        half_a = tree_a.branch(new_idx)[::-1]
                        half_b = tree_b.branch(tree_b.parents[jdx])
                        path = half_a + half_b if a_is_start else half_b[::-1] + half_a[::-1]
                        break
                    if time.perf_counter() > deadline:
                        return None
                if path is not None:
                    break
            tree_a, tree_b = tree_b, tree_a
            a_is_start = not a_is_start
        if path is None:
            return None

    for _ in range(smooth_passes):
        if len(path) <= 2:
            break
        i = int(rng.integers(0, len(path) - 2))
        j = int(rng.integers(i + 2, len(path)))
        if edge_valid(world, chain, path[i], path[j], resolution):
            path = path[: i + 1] + path[j:]
    return Trajectory(np.stack(path), resolution)


@dataclass(frozen=True, eq=False)
class PlanRequest:
    """Everything one cut needs: geometry, budgets, and seeds."""

    cut: Cut
    q0: np.ndarray
    r_a: float = 0.15
    r_c: float = 0.03
    angles: np.ndarray | None = None
    ik_count: int = 8
    timeout: float = 30.0
    seed: int = 0
    screen: bool = True
    screen_limit: int = 32
    screen_points: int = 10
    rrt_step: float = DEFAULT_RRT_STEP
    rrt_resolution: float = DEFAULT_RRT_RESOLUTION
    rrt_iters: int = DEFAULT_RRT_ITERS
    smooth_passes: int = DEFAULT_SMOOTH_PASSES

    def __post_init__(self):
        object.__setattr__(self, "q0", np.asarray(self.q0, dtype=float).reshape(-1))
        if not (self.r_a >= self.r_c > 0):
            raise InputError("need approach radius >= cutting radius > 0")
        if self.timeout <= 0:
            raise InputError("timeout must be positive")
        if self.ik_count < 1:
            raise InputError("ik_count must be at least 1")
        if self.angles is not None:
            object.__setattr__(self, "angles", np.asarray(self.angles, dtype=float).reshape(-1))


@dataclass(frozen=True)
class PlanStats:
    candidates_evaluated: int = 0
    ik_calls: int = 0
    wall_time: float = 0.0


@dataclass(frozen=True, eq=False)
class PlanResult:
    status: str
    stats: PlanStats
    theta: float | None = None
    theta_index: int | None = None
    q_star: np.ndarray | None = None
    approach_pose: Pose | None = None
    cutting_pose: Pose | None = None
    trajectory: Trajectory | None = None
    cost: CostBreakdown | None = None

    @property
    def planned(self) -> bool:
        return self.status == STATUS_PLANNED


def _approach_screen(
    world: CollisionWorld,
    chain: KinematicChain,
    cand: Candidate,
    points: int = 10,
    tol_t: float = 1e-3,
    tol_r: float = 1e-2,
) -> bool:
    """Preview the servoed advance: track ``points`` interpolated poses from the
    approach position to the cutting position and reject the candidate if
    tracking stalls or any tracked configuration collides.  Orientation is
    constant along the segment by ring construction."""
    q = cand.q
    goal_o = cand.approach_pose.o[None, :]
    tracked = np.empty((points, chain.n))
    for k in range(points):
        frac = (k + 1) / points
        target_t = (1.0 - frac) * cand.approach_pose.t + frac * cand.cutting_pose.t
        Q, ok = _dls_track(chain, target_t[None, :], goal_o, q[None, :],
                           tol_t, tol_r, 15, 0.05, 0.2)
        if not ok[0]:
            return False
        q = Q[0]
        tracked[k] = q
    return not config_in_collision_batch(world, chain, tracked).any()


def holistic_plan(world: CollisionWorld, chain: KinematicChain, request: PlanRequest) -> PlanResult:
    """Full per-cut pipeline: rings, scored candidates, screen, RRT-Connect.

    Ties at equal cost resolve to the lowest angle index then lowest IK
    index.  Candidate evaluation is cut off at half the budget; the motion
    planner gets whatever wall time remains.
    """
    t0 = time.perf_counter()
    if not chain.within_limits(request.q0):
        raise InputError("q0 must respect joint limits")
    if config_in_collision_batch(world, chain, np.asarray(request.q0, dtype=float)[None, :])[0]:
        raise InputError("q0 must be collision-free")
    angles = request.angles if request.angles is not None else default_angles()
    approach_ring = generate_pose_set(request.cut, request.r_a, angles)
    cutting_ring = generate_pose_set(request.cut, request.r_c, angles)
    cands, ik_calls = evaluate_candidates(
        world, chain, approach_ring, cutting_ring, request.ik_count, request.seed,
        deadline=t0 + 0.5 * request.timeout,
    )

    def stats() -> PlanStats:
        return PlanStats(len(cands), ik_calls, time.perf_counter() - t0)

    feasible = feasible_candidates(cands)
    if not feasible:
        return PlanResult(STATUS_NO_CANDIDATE, stats())
    if time.perf_counter() - t0 >= request.timeout:
        return PlanResult(STATUS_TIMEOUT, stats())

    selected = None
    if request.screen:
        for cand in feasible[: request.screen_limit]:
            if _approach_screen(world, chain, cand, request.screen_points):
                selected = cand
                break
            if time.perf_counter() - t0 >= request.timeout:
                return PlanResult(STATUS_TIMEOUT, stats())
        if selected is None:
            return PlanResult(STATUS_NO_CANDIDATE, stats())
    else:
        selected = feasible[0]

    remaining = request.timeout - (time.perf_counter() - t0)
    if remaining <= 0:
        return PlanResult(STATUS_TIMEOUT, stats())
    trajectory = rrt_connect(
        world, chain, request.q0, selected.q,
        step=request.rrt_step, resolution=request.rrt_resolution,
        timeout=remaining, seed=request.seed,
        max_iters=request.rrt_iters, smooth_passes=request.smooth_passes,
    )
    if trajectory is None:
        return PlanResult(STATUS_TIMEOUT, stats())
    return PlanResult(
        STATUS_PLANNED, stats(),
        theta=selected.theta, theta_index=selected.theta_index,
        q_star=selected.q, approach_pose=selected.approach_pose,
        cutting_pose=selected.cutting_pose, trajectory=trajectory, cost=selected.cost,
    )


def plan_tree(
    world: CollisionWorld,
    chain: KinematicChain,
    cuts,
    q0,
    worlds=None,
    chain_from_previous: bool = False,
    **request_kwargs,
) -> list[PlanResult]:
    """Plan every cut from the same start (optionally chaining starts).

    ``worlds`` may carry one world per cut (e.g. with per-cut contact
    exemptions); otherwise ``world`` serves all cuts.  Each cut re-uses the
    same seed, so results match per-cut holistic_plan calls exactly.
    """
    cuts = list(cuts)
    if not cuts:
        raise InputError("cut list is empty")
    if worlds is not None and len(worlds) != len(cuts):
        raise InputError("need exactly one world per cut")
    results: list[PlanResult] = []
    q_start = np.asarray(q0, dtype=float).reshape(-1)
    for i, cut in enumerate(cuts):
        w = worlds[i] if worlds is not None else world
        result = holistic_plan(w, chain, PlanRequest(cut=cut, q0=q_start, **request_kwargs))
        results.append(result)
        if chain_from_previous and result.planned:
            q_start = result.q_star
    return results


# ---------------------------------------------------------------------------
# Plan files


def pose_to_doc(pose: Pose) -> dict:
    return {"position": [float(v) for v in pose.t],
            "quaternion_wxyz": [float(v) for v in pose.o]}


def pose_from_doc(doc: dict) -> Pose:
    return Pose(np.asarray(doc["position"], dtype=float),
                quat_normalize(np.asarray(doc["quaternion_wxyz"], dtype=float)))


PLAN_FORMAT = "prunekit-plan"


def save_plan(result: PlanResult, path, context: dict | None = None) -> None:
    doc = {
        "format": PLAN_FORMAT,
        "version": 1,
        "status": result.status,
        "theta": result.theta,
        "theta_index": result.theta_index,
        "q_star": None if result.q_star is None else [float(v) for v in result.q_star],
        "approach_pose": None if result.approach_pose is None else pose_to_doc(result.approach_pose),
        "cutting_pose": None if result.cutting_pose is None else pose_to_doc(result.cutting_pose),
        "trajectory": None if result.trajectory is None else {
            "waypoints": [[float(v) for v in row] for row in result.trajectory.waypoints],
            "resolution": result.trajectory.resolution,
        },
        "cost": None if result.cost is None else result.cost.to_doc(),
        "stats": {
            "candidates_evaluated": result.stats.candidates_evaluated,
            "ik_calls": result.stats.ik_calls,
            "wall_time": result.stats.wall_time,
        },
        "context": context or {},
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_plan(path) -> tuple[PlanResult, dict]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != PLAN_FORMAT:
        raise InputError(f"unexpected plan format field {doc.get('format')!r}")
    cost = None
    if doc.get("cost") is not None:
        cost = CostBreakdown(bool(doc["cost"]["infeasible"]), float(doc["cost"]["joint"]))
    trajectory = None
    if doc.get("trajectory") is not None:
        trajectory = Trajectory(np.asarray(doc["trajectory"]["waypoints"], dtype=float),
                                float(doc["trajectory"]["resolution"]))
    stats = PlanStats(
        int(doc["stats"]["candidates_evaluated"]),
        int(doc["stats"]["ik_calls"]),
        float(doc["stats"]["wall_time"]),
    )
    result = PlanResult(
        doc["status"], stats,
        theta=doc.get("theta"), theta_index=doc.get("theta_index"),
        q_star=None if doc.get("q_star") is None else np.asarray(doc["q_star"], dtype=float),
        approach_pose=None if doc.get("approach_pose") is None else pose_from_doc(doc["approach_pose"]),
        cutting_pose=None if doc.get("cutting_pose") is None else pose_from_doc(doc["cutting_pose"]),
        trajectory=trajectory, cost=cost,
    )
    return result, doc.get("context", {})
