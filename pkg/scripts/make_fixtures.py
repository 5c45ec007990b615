#!/usr/bin/env python3
"""Regenerate the committed synthetic tree fixtures.

Usage: python3 scripts/make_fixtures.py [out_dir]

The fixtures are a deterministic function of the seeds below, so rerunning
this script reproduces the shipped files byte for byte.
"""

import sys
from pathlib import Path

from prunekit.treemodel import SynthParams, generate_cuts, save_skeleton, synth_tree

# One (seed, params) pair per fixture.  Heights, branch counts and removal
# shares vary so the suite covers small open trees through taller cluttered
# ones rather than ten clones of the same crown.
RECIPES = [
    (0, SynthParams()),
    (1, SynthParams(trunk_height=1.2, branch_count=8, branch_length=0.42)),
    (2, SynthParams(trunk_height=1.4, branch_count=12, twig_count=8, removal_fraction=0.30)),
    (23, SynthParams(branch_count=11, branch_length=0.48, twig_count=8, removal_fraction=0.40)),
    (4, SynthParams(trunk_height=1.25, branch_count=11, twig_count=8)),
    (5, SynthParams(trunk_height=1.35, branch_count=10, branch_length=0.40)),
    (6, SynthParams(branch_count=12, removal_fraction=0.45, twig_count=8)),
    (7, SynthParams(trunk_height=1.45, branch_count=12, branch_length=0.42)),
    (8, SynthParams(trunk_height=1.35, branch_count=12, branch_length=0.42, twig_count=9, removal_fraction=0.35)),
    (29, SynthParams(branch_count=11, branch_length=0.46, twig_count=7)),
]


def main() -> int:
    out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "fixtures" / "trees"
    out.mkdir(parents=True, exist_ok=True)
    for i, (seed, params) in enumerate(RECIPES):
        graph, _ = synth_tree(seed, params)
        path = out / f"tree_{i:02d}.json"
        save_skeleton(graph, path)
        print(f"{path.name}: {graph.n_vertices} vertices, {len(generate_cuts(graph))} cuts")
    return 0


if __name__ == "__main__":
    sys.exit(main())
