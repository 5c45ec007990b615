"""Benchmark harness: base-pose grids, planner-class sweeps, and reports.

A sweep runs every cut of every tree from every base pose with one of five
planner classes, then aggregates planning/overall success ratios, timing,
and a failure histogram.  Reports split into a deterministic part
(report.json, byte-stable across reruns with the same seeds) and wall-clock
timing (timing.json); trials.csv carries both for spreadsheets.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .collision import CollisionWorld, config_in_collision, config_in_collision_batch
from .controller import ServoConfig, simulate_approach
from .errors import InputError
from .kinematics import KinematicChain, _dls_track, interior_margin
from .planner import (
    LIMIT_MARGIN,
    PlanRequest,
    PlanResult,
    PlanStats,
    STATUS_NO_CANDIDATE,
    STATUS_PLANNED,
    STATUS_TIMEOUT,
    holistic_plan,
    pose_from_doc,
    pose_to_doc,
    rrt_connect,
    theta_seed,
)
from .posegen import default_angles, generate_pose_set
from .rotations import Pose
from .treemodel import (
    CapsuleSet,
    TreeGraph,
    build_collision_primitives,
    generate_cut_edge_indices,
    generate_cuts,
    removal_subtree_edges,
)

METHOD_ELEMENTARY = "elementary"
METHOD_TWO_STAGE = "two_stage"
METHOD_HOLISTIC = "holistic"
METHOD_NO_POSEGEN = "ablation_no_posegen"
METHOD_SINGLE_IK = "ablation_single_ik"
METHODS = (METHOD_ELEMENTARY, METHOD_TWO_STAGE, METHOD_HOLISTIC,
           METHOD_NO_POSEGEN, METHOD_SINGLE_IK)

STATUS_START_INVALID = "start_in_collision"

REPORT_FORMAT = "prunekit-report"
SCENE_FORMAT = "prunekit-scene"

_ROOT2 = math.sqrt(2.0)


def base_pose_grid(graph: TreeGraph, standoff_scale: float = 0.6) -> list[Pose]:
    """Eight base poses around the tree's bounding box, facing its center.

    Four at the side-face midpoints, four off the box corners along the
    diagonals, all at a standoff of ``standoff_scale`` times the largest box
    dimension from the box, at mid-box height, yawed so +X points at the
    center.  Scales with the tree and translates with it.
    """
    lo, hi = graph.bounding_box()
    extent = hi - lo
    max_dim = float(extent.max())
    if max_dim <= 0.0:
        raise InputError("tree bounding box has zero extent")
    s = standoff_scale * max_dim
    d = s / _ROOT2
    c = 0.5 * (lo + hi)
    spots = [
        (hi[0] + s, c[1]),
        (lo[0] - s, c[1]),
        (c[0], hi[1] + s),
        (c[0], lo[1] - s),
        (hi[0] + d, hi[1] + d),
        (hi[0] + d, lo[1] - d),
        (lo[0] - d, hi[1] + d),
        (lo[0] - d, lo[1] - d),
    ]
    poses = []
    for x, y in spots:
        yaw = math.atan2(c[1] - y, c[0] - x)
        quat = np.array([math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw)])
        poses.append(Pose(np.array([x, y, c[2]]), quat))
    return poses


@dataclass(frozen=True, eq=False)
class Scenario:
    """One (tree, base pose, planner class) sweep unit."""

    tree_id: str
    graph: TreeGraph
    chain: KinematicChain
    base: Pose
    base_index: int
    method: str
    seed: int = 0
    timeout: float = 30.0
    r_a: float = 0.15
    r_c: float = 0.03
    angle_count: int = 36
    ik_count: int = 8
    margin: float = 0.0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InputError(f"unknown planner class {self.method!r}")
        if self.timeout <= 0:
            raise InputError("timeout must be positive")


@dataclass(frozen=True)
class TrialRecord:
    tree: str
    base_index: int
    cut_index: int
    method: str
    planning_status: str
    execution_status: str | None
    planning_time: float
    candidates: int
    ik_calls: int
    theta: float | None

    @property
    def planning_success(self) -> bool:
        return self.planning_status == STATUS_PLANNED

    @property
    def overall_success(self) -> bool:
        return self.planning_success and self.execution_status == "success"

    def key(self) -> tuple:
        return (self.tree, self.base_index, self.cut_index, self.method)


def cut_worlds(graph: TreeGraph, margin: float = 0.0,
               extra: CapsuleSet | None = None,
               tool_capsules=None) -> tuple[list, list[CollisionWorld]]:
    """Cuts plus a per-cut world where the shear tool may touch the doomed wood.

    Exemptions pair every tool capsule with the severed edge and everything
    distal to it; the rest of the tree stays solid.
    """
    cuts = generate_cuts(graph)
    edge_idxs = generate_cut_edge_indices(graph)
    caps = build_collision_primitives(graph)
    if extra is not None:
        caps = caps.concat(extra)
    base_world = CollisionWorld.from_capsule_set(caps, margin=margin)
    tool_caps = [] if tool_capsules is None else [int(k) for k in tool_capsules]
    worlds = []
    for eidx in edge_idxs:
        statics = base_world.indices_for_edges(removal_subtree_edges(graph, eidx))
        pairs = [(k, int(m)) for k in tool_caps for m in statics]
        worlds.append(base_world.with_exemptions(pairs) if pairs else base_world)
    return cuts, worlds


_GREEDY_RESTARTS = 4
_GREEDY_CHUNK = 8


def _greedy_plan(world, chain, cut, q0, scenario: Scenario, angles, use_cutting_ring: bool) -> PlanResult:
    """Baseline planning: first IK hit on the ring, one RRT-Connect query.

    ``use_cutting_ring`` selects the elementary flavor (straight to the
    cutting pose, no servo stage); otherwise the approach ring is scanned
    (two-stage flavor).  The scan is greedy in ring order: per angle, one IK
    answer (lowest converged restart, seeded per angle), kept only if it is
    collision free and clear of the joint stops by the same margin the
    holistic evaluator demands.  Angles are solved in chunks so a full scan
    of an unreachable cut stays cheap; per-row freezing in the solver keeps
    every answer independent of its chunk mates.
    """
    t0 = time.perf_counter()
    approach_ring = generate_pose_set(cut, scenario.r_a, angles)
    cutting_ring = generate_pose_set(cut, scenario.r_c, angles)
    ring = cutting_ring if use_cutting_ring else approach_ring
    ik_calls = 0
    candidates = 0

    def stats() -> PlanStats:
        return PlanStats(candidates, ik_calls, time.perf_counter() - t0)

    rows = 1 + _GREEDY_RESTARTS
    for lo in range(0, len(ring.poses), _GREEDY_CHUNK):
        if time.perf_counter() - t0 >= scenario.timeout:
            return PlanResult(STATUS_TIMEOUT, stats())
        block = list(range(lo, min(lo + _GREEDY_CHUNK, len(ring.poses))))
        Q0 = np.empty((len(block) * rows, chain.n))
        goal_t = np.empty((len(block) * rows, 3))
        goal_o = np.empty((len(block) * rows, 4))
        for k, i in enumerate(block):
            rng = np.random.default_rng(np.random.SeedSequence([0x1C5, int(theta_seed(scenario.seed, i))]))
            Q0[k * rows] = q0
            Q0[k * rows + 1:(k + 1) * rows] = chain.random_configs(rng, _GREEDY_RESTARTS)
            goal_t[k * rows:(k + 1) * rows] = ring.poses[i].t
            goal_o[k * rows:(k + 1) * rows] = ring.poses[i].o
        Q, ok = _dls_track(chain, goal_t, goal_o, Q0, 1e-3, 1e-2, 150, 0.05, 0.2)
        ik_calls += len(block)
        ok &= interior_margin(chain, Q) >= LIMIT_MARGIN
        picks = []   # (theta index, q) in ring order
        for k, i in enumerate(block):
            flags = ok[k * rows:(k + 1) * rows]
            if flags.any():
                picks.append((i, Q[k * rows + int(np.argmax(flags))]))
        if not picks:
            continue
        candidates += len(picks)
        hit = config_in_collision_batch(world, chain, np.stack([q for _, q in picks]))
        for (i, q), colliding in zip(picks, hit):
            if colliding:
                continue
            remaining = scenario.timeout - (time.perf_counter() - t0)
            if remaining <= 0:
                return PlanResult(STATUS_TIMEOUT, stats())
            trajectory = rrt_connect(world, chain, q0, q, timeout=remaining, seed=scenario.seed)
            if trajectory is None:
                return PlanResult(STATUS_TIMEOUT, stats())
            return PlanResult(
                STATUS_PLANNED, stats(),
                theta=float(ring.angles[i]), theta_index=i, q_star=q,
                approach_pose=approach_ring.poses[i], cutting_pose=cutting_ring.poses[i],
                trajectory=trajectory,
            )
    return PlanResult(STATUS_NO_CANDIDATE, stats())


def _plan_cut(world, chain, cut, q0, scenario: Scenario, angles) -> PlanResult:
    method = scenario.method
    if method == METHOD_ELEMENTARY:
        return _greedy_plan(world, chain, cut, q0, scenario, angles, use_cutting_ring=True)
    if method == METHOD_TWO_STAGE:
        return _greedy_plan(world, chain, cut, q0, scenario, angles, use_cutting_ring=False)
    request = PlanRequest(
        cut=cut, q0=q0, r_a=scenario.r_a, r_c=scenario.r_c,
        angles=angles[:1] if method == METHOD_NO_POSEGEN else angles,
        ik_count=1 if method == METHOD_SINGLE_IK else scenario.ik_count,
        timeout=scenario.timeout, seed=scenario.seed,
        screen=False,  # cost-only candidate selection; the approach screen is a conservative extra
    )
    return holistic_plan(world, chain, request)


def run_scenario(scenario: Scenario, servo: ServoConfig = ServoConfig()) -> list[TrialRecord]:
    """All cuts of one scenario, end to end; failures recorded, never raised."""
    placed = scenario.chain.with_base(scenario.base)
    tool_caps = np.flatnonzero(placed.capsules.is_tool)
    cuts, worlds = cut_worlds(scenario.graph, margin=scenario.margin, tool_capsules=tool_caps)
    angles = default_angles(scenario.angle_count)
    q0 = placed.home
    records: list[TrialRecord] = []
    for cut_index, (cut, world) in enumerate(zip(cuts, worlds)):
        t0 = time.perf_counter()
        if not placed.within_limits(q0) or config_in_collision(world, placed, q0):
            records.append(TrialRecord(
                scenario.tree_id, scenario.base_index, cut_index, scenario.method,
                STATUS_START_INVALID, None, time.perf_counter() - t0, 0, 0, None))
            continue
        result = _plan_cut(world, placed, cut, q0, scenario, angles)
        execution_status = None
        if result.planned:
            if scenario.method == METHOD_ELEMENTARY:
                # No second stage: playback of the validated trajectory.
                execution_status = "success"
            else:
                outcome = simulate_approach(world, placed, result.q_star, result.cutting_pose, servo)
                execution_status = outcome.status
        records.append(TrialRecord(
            scenario.tree_id, scenario.base_index, cut_index, scenario.method,
            result.status, execution_status, result.stats.wall_time,
            result.stats.candidates_evaluated, result.stats.ik_calls,
            result.theta))
    return records


FAILURE_KEYS = ("planning", "joint_limit", "velocity_limit", "collision")


@dataclass(frozen=True, eq=False)
class MethodStats:
    trials: int
    planning_successes: int
    overall_successes: int
    failures: dict
    planning_time_mean: float | None
    planning_time_std: float | None

    @property
    def planning_ratio(self) -> float:
        return self.planning_successes / self.trials if self.trials else 0.0

    @property
    def overall_ratio(self) -> float:
        return self.overall_successes / self.trials if self.trials else 0.0

    @property
    def failure_total(self) -> int:
        return sum(self.failures.values())


@dataclass(frozen=True, eq=False)
class ExperimentReport:
    trials: tuple
    methods: dict

    def canonical(self) -> dict:
        """Deterministic document: everything except wall-clock timing."""
        return {
            "format": REPORT_FORMAT,
            "version": 1,
            "methods": {
                name: {
                    "trials": st.trials,
                    "planning_successes": st.planning_successes,
                    "overall_successes": st.overall_successes,
                    "planning_ratio": st.planning_ratio,
                    "overall_ratio": st.overall_ratio,
                    "failures": dict(st.failures),
                }
                for name, st in self.methods.items()
            },
            "series": {
                "planning_ratio_bars": {m: st.planning_ratio for m, st in self.methods.items()},
                "overall_ratio_bars": {m: st.overall_ratio for m, st in self.methods.items()},
                "failure_pie": {m: dict(st.failures) for m, st in self.methods.items()},
            },
            "trials": [
                {
                    "tree": t.tree,
                    "base_index": t.base_index,
                    "cut_index": t.cut_index,
                    "method": t.method,
                    "planning_status": t.planning_status,
                    "execution_status": t.execution_status,
                    "candidates": t.candidates,
                    "ik_calls": t.ik_calls,
                    "theta": t.theta,
                }
                for t in self.trials
            ],
        }

    def timing(self) -> dict:
        return {
            "methods": {
                name: {
                    "planning_time_mean": st.planning_time_mean,
                    "planning_time_std": st.planning_time_std,
                }
                for name, st in self.methods.items()
            },
            "trials": [
                {
                    "tree": t.tree,
                    "base_index": t.base_index,
                    "cut_index": t.cut_index,
                    "method": t.method,
                    "planning_time": t.planning_time,
                }
                for t in self.trials
            ],
        }


def aggregate(trials) -> ExperimentReport:
    """Fold trial rows into per-method ratios, timing stats, and histograms."""
    trials = tuple(sorted(trials, key=lambda t: t.key()))
    if not trials:
        raise InputError("nothing to aggregate")
    methods: dict[str, MethodStats] = {}
    for name in sorted({t.method for t in trials}):
        rows = [t for t in trials if t.method == name]
        planned = [t for t in rows if t.planning_success]
        overall = [t for t in rows if t.overall_success]
        failures = {k: 0 for k in FAILURE_KEYS}
        for t in rows:
            if not t.planning_success:
                failures["planning"] += 1
            elif t.execution_status != "success":
                failures[t.execution_status] = failures.get(t.execution_status, 0) + 1
        times = np.array([t.planning_time for t in planned])
        methods[name] = MethodStats(
            trials=len(rows),
            planning_successes=len(planned),
            overall_successes=len(overall),
            failures=failures,
            planning_time_mean=float(times.mean()) if len(times) else None,
            planning_time_std=float(times.std()) if len(times) else None,
        )
    return ExperimentReport(trials, methods)


def emit_report(report: ExperimentReport, out_dir) -> dict:
    """Write report.json (deterministic), timing.json, and trials.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "report": out / "report.json",
        "timing": out / "timing.json",
        "csv": out / "trials.csv",
    }
    paths["report"].write_text(
        json.dumps(report.canonical(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    paths["timing"].write_text(
        json.dumps(report.timing(), indent=1, sort_keys=True) + "\n", encoding="utf-8")
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tree", "base_index", "cut_index", "method", "planning_status",
                         "execution_status", "planning_time", "candidates", "ik_calls", "theta"])
        for t in report.trials:
            writer.writerow([t.tree, t.base_index, t.cut_index, t.method, t.planning_status,
                             "" if t.execution_status is None else t.execution_status,
                             repr(t.planning_time), t.candidates, t.ik_calls,
                             "" if t.theta is None else repr(t.theta)])
    return paths


def read_report(out_dir) -> ExperimentReport:
    out = Path(out_dir)
    doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
    if doc.get("format") != REPORT_FORMAT:
        raise InputError(f"unexpected report format field {doc.get('format')!r}")
    times = {}
    timing_path = out / "timing.json"
    if timing_path.exists():
        tdoc = json.loads(timing_path.read_text(encoding="utf-8"))
        for row in tdoc["trials"]:
            times[(row["tree"], row["base_index"], row["cut_index"], row["method"])] = row["planning_time"]
    trials = []
    for row in doc["trials"]:
        key = (row["tree"], row["base_index"], row["cut_index"], row["method"])
        trials.append(TrialRecord(
            row["tree"], int(row["base_index"]), int(row["cut_index"]), row["method"],
            row["planning_status"], row["execution_status"],
            float(times.get(key, 0.0)), int(row["candidates"]), int(row["ik_calls"]),
            None if row["theta"] is None else float(row["theta"])))
    return aggregate(trials)


def run_bench(
    trees,
    chain: KinematicChain,
    methods=METHODS,
    seed: int = 0,
    timeout: float = 30.0,
    standoff_scale: float = 0.6,
    angle_count: int = 36,
    ik_count: int = 8,
    r_a: float = 0.15,
    r_c: float = 0.03,
    margin: float = 0.0,
    progress=None,
) -> ExperimentReport:
    """Sweep (tree x 8 base poses x methods); returns the aggregated report.

    ``trees`` is a sequence of (tree_id, TreeGraph).  ``progress`` is an
    optional callable fed one line per scenario for long runs.
    """
    trials: list[TrialRecord] = []
    for tree_id, graph in trees:
        bases = base_pose_grid(graph, standoff_scale)
        for base_index, base in enumerate(bases):
            for method in methods:
                scenario = Scenario(
                    tree_id, graph, chain, base, base_index, method,
                    seed=seed, timeout=timeout, r_a=r_a, r_c=r_c,
                    angle_count=angle_count, ik_count=ik_count, margin=margin)
                rows = run_scenario(scenario)
                trials.extend(rows)
                if progress is not None:
                    done = sum(1 for t in rows if t.planning_success)
                    progress(f"{tree_id} base {base_index} {method}: "
                             f"{done}/{len(rows)} planned")
    return aggregate(trials)


# ---------------------------------------------------------------------------
# Scene files


@dataclass(frozen=True, eq=False)
class Scene:
    skeleton: str
    chain: str
    base: Pose
    obstacles: CapsuleSet
    margin: float = 0.0


def save_scene(scene: Scene, path) -> None:
    doc = {
        "format": SCENE_FORMAT,
        "version": 1,
        "skeleton": scene.skeleton,
        "chain": scene.chain,
        "base_pose": pose_to_doc(scene.base),
        "margin": scene.margin,
        "obstacles": [
            {
                "a": [float(v) for v in scene.obstacles.a[i]],
                "b": [float(v) for v in scene.obstacles.b[i]],
                "radius": float(scene.obstacles.radius[i]),
            }
            for i in range(len(scene.obstacles))
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_scene(path) -> Scene:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != SCENE_FORMAT:
        raise InputError(f"unexpected scene format field {doc.get('format')!r}")
    obs = doc.get("obstacles", [])
    obstacles = CapsuleSet.from_arrays(
        [o["a"] for o in obs], [o["b"] for o in obs], [o["radius"] for o in obs],
    ) if obs else CapsuleSet.empty()
    return Scene(
        skeleton=doc["skeleton"],
        chain=doc["chain"],
        base=pose_from_doc(doc["base_pose"]),
        obstacles=obstacles,
        margin=float(doc.get("margin", 0.0)),
    )
