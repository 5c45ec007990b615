"""Command line front end.

Subcommands: cuts, synth, rings, plan, simulate, bench.  Planning failures
are ordinary data (reported, exit 0); only malformed inputs and internal
errors produce a non-zero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness, planner, posegen, treemodel
from .controller import ServoConfig, save_execution_log, simulate_approach
from .errors import PrunekitError
from .kinematics import default_chain, load_chain
from .rotations import Pose


def _chain_from_arg(path):
    return load_chain(path) if path else default_chain()


def _load_trees(tree_dir):
    paths = sorted(Path(tree_dir).glob("*.json"))
    if not paths:
        raise PrunekitError(f"no skeleton files found under {tree_dir}")
    return [(p.stem, treemodel.load_skeleton(p)) for p in paths]


def _cmd_cuts(args) -> int:
    graph = treemodel.load_skeleton(args.skeleton)
    if args.cloud:
        graph = treemodel.transfer_labels(treemodel.load_cloud(args.cloud), graph)
    cuts = treemodel.generate_cuts(graph)
    diagnostics = treemodel.diagnose_labels(graph) if args.diagnose else None
    treemodel.save_cuts(cuts, args.out, diagnostics)
    print(f"wrote {len(cuts)} cuts to {args.out}")
    if diagnostics and diagnostics["flagged"]:
        print(f"note: {diagnostics['regrowth_transitions']} remove->keep transitions present")
    return 0


def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        seed = args.seed + i
        graph, cloud = treemodel.synth_tree(seed)
        stem = out / f"tree_{i:02d}"
        treemodel.save_skeleton(graph, stem.with_suffix(".json"))
        if args.clouds:
            treemodel.save_cloud_ply(cloud, stem.with_suffix(".ply"))
        print(f"tree_{i:02d}: {graph.n_vertices} vertices, "
              f"{len(treemodel.generate_cuts(graph))} cuts (seed {seed})")
    return 0


def _cmd_rings(args) -> int:
    graph = treemodel.load_skeleton(args.skeleton)
    cuts = treemodel.generate_cuts(graph)
    if not 0 <= args.cut_index < len(cuts):
        raise PrunekitError(f"cut index {args.cut_index} out of range (tree has {len(cuts)} cuts)")
    cut = cuts[args.cut_index]
    angles = posegen.default_angles(args.angles)
    rings = [posegen.generate_pose_set(cut, args.r_a, angles),
             posegen.generate_pose_set(cut, args.r_c, angles)]
    posegen.dump_rings(rings, args.out)
    print(f"wrote approach/cutting rings ({args.angles} angles) to {args.out}")
    return 0


def _base_pose(args, graph) -> tuple[Pose, int | None]:
    if args.base is not None:
        x, y, z, yaw = (float(v) for v in args.base.split(","))
        quat = np.array([np.cos(0.5 * yaw), 0.0, 0.0, np.sin(0.5 * yaw)])
        return Pose(np.array([x, y, z]), quat), None
    grid = harness.base_pose_grid(graph, args.standoff)
    return grid[args.base_index], args.base_index


def _cmd_plan(args) -> int:
    graph = treemodel.load_skeleton(args.skeleton)
    chain = _chain_from_arg(args.chain)
    base, base_index = _base_pose(args, graph)
    placed = chain.with_base(base)
    tool_caps = np.flatnonzero(placed.capsules.is_tool)
    cuts, worlds = harness.cut_worlds(graph, margin=args.margin, tool_capsules=tool_caps)
    if not 0 <= args.cut_index < len(cuts):
        raise PrunekitError(f"cut index {args.cut_index} out of range (tree has {len(cuts)} cuts)")
    cut, world = cuts[args.cut_index], worlds[args.cut_index]
    request = planner.PlanRequest(
        cut=cut, q0=placed.home, r_a=args.r_a, r_c=args.r_c,
        angles=posegen.default_angles(args.angles), ik_count=args.ik_count,
        timeout=args.timeout, seed=args.seed)
    result = planner.holistic_plan(world, placed, request)
    context = {
        "skeleton": str(args.skeleton),
        "chain": str(args.chain) if args.chain else None,
        "base_pose": planner.pose_to_doc(base),
        "base_index": base_index,
        "cut_index": args.cut_index,
        "margin": args.margin,
        "seed": args.seed,
    }
    planner.save_plan(result, args.out, context)
    print(f"cut {args.cut_index}: {result.status} "
          f"({result.stats.candidates_evaluated} candidates, "
          f"{result.stats.wall_time:.2f}s)")
    return 0


def _cmd_simulate(args) -> int:
    result, context = planner.load_plan(args.plan)
    if not result.planned:
        print(f"plan status is {result.status!r}; nothing to simulate")
        return 0
    graph = treemodel.load_skeleton(context["skeleton"])
    chain = _chain_from_arg(context.get("chain"))
    placed = chain.with_base(planner.pose_from_doc(context["base_pose"]))
    tool_caps = np.flatnonzero(placed.capsules.is_tool)
    _, worlds = harness.cut_worlds(graph, margin=context.get("margin", 0.0),
                                   tool_capsules=tool_caps)
    world = worlds[context["cut_index"]]
    outcome = simulate_approach(world, placed, result.q_star, result.cutting_pose, ServoConfig())
    if args.out:
        save_execution_log(outcome, args.out)
    print(f"execution: {outcome.status} after {outcome.steps} steps "
          f"(final error {outcome.final_error_t * 1000:.2f} mm, {outcome.final_error_r:.4f} rad)")
    return 0


def _cmd_bench(args) -> int:
    trees = _load_trees(args.trees)
    chain = _chain_from_arg(args.chain)
    methods = harness.METHODS if args.method == "all" else (args.method,)
    progress = (lambda line: print(line, file=sys.stderr)) if args.verbose else None
    report = harness.run_bench(
        trees, chain, methods=methods, seed=args.seed, timeout=args.timeout,
        standoff_scale=args.standoff, angle_count=args.angles,
        ik_count=args.ik_count, margin=args.margin, progress=progress)
    paths = harness.emit_report(report, args.out)
    for name, st in report.methods.items():
        print(f"{name}: planning {st.planning_ratio:.3f} overall {st.overall_ratio:.3f} "
              f"({st.trials} trials)")
    print(f"report written to {paths['report']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="prunekit",
                                     description="tree pruning planning toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cuts", help="generate cut commands from a labeled skeleton")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--cloud", help="labeled point cloud (.ply or .csv) to transfer labels from")
    p.add_argument("--out", required=True)
    p.add_argument("--diagnose", action="store_true")
    p.set_defaults(fn=_cmd_cuts)

    p = sub.add_parser("synth", help="generate synthetic labeled trees")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--clouds", action="store_true", help="also write point clouds")
    p.set_defaults(fn=_cmd_synth)

    p = sub.add_parser("rings", help="dump candidate pose rings for one cut")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--cut-index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--r-a", type=float, default=posegen.DEFAULT_APPROACH_RADIUS)
    p.add_argument("--r-c", type=float, default=posegen.DEFAULT_CUTTING_RADIUS)
    p.add_argument("--angles", type=int, default=36)
    p.set_defaults(fn=_cmd_rings)

    p = sub.add_parser("plan", help="plan one cut end to end")
    p.add_argument("--skeleton", required=True)
    p.add_argument("--chain", help="chain config file (default: bundled 7-DoF arm)")
    p.add_argument("--cut-index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--base", help="explicit base pose as x,y,z,yaw")
    p.add_argument("--base-index", type=int, default=0, help="index into the 8-pose grid")
    p.add_argument("--standoff", type=float, default=0.6)
    p.add_argument("--r-a", type=float, default=posegen.DEFAULT_APPROACH_RADIUS)
    p.add_argument("--r-c", type=float, default=posegen.DEFAULT_CUTTING_RADIUS)
    p.add_argument("--angles", type=int, default=36)
    p.add_argument("--ik-count", type=int, default=8)
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--margin", type=float, default=0.0)
    p.set_defaults(fn=_cmd_plan)

    p = sub.add_parser("simulate", help="servo a planned approach to its cutting pose")
    p.add_argument("--plan", required=True)
    p.add_argument("--out", help="execution log destination")
    p.set_defaults(fn=_cmd_simulate)

    p = sub.add_parser("bench", help="run the benchmark sweep")
    p.add_argument("--trees", required=True, help="directory of skeleton .json files")
    p.add_argument("--chain", help="chain config file (default: bundled 7-DoF arm)")
    p.add_argument("--method", default="all", choices=harness.METHODS + ("all",))
    p.add_argument("--timeout", type=float, default=30.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--standoff", type=float, default=0.6)
    p.add_argument("--angles", type=int, default=36)
    p.add_argument("--ik-count", type=int, default=8)
    p.add_argument("--margin", type=float, default=0.0)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=_cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (PrunekitError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
