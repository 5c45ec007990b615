import json

import numpy as np
import pytest

from prunekit.errors import InputError
from prunekit.treemodel import (
    KEEP,
    REMOVE,
    Cut,
    LabeledPointCloud,
    SynthParams,
    TreeGraph,
    build_collision_primitives,
    crop_and_cluster,
    diagnose_labels,
    generate_cut_edge_indices,
    generate_cuts,
    load_cloud,
    load_cuts,
    load_skeleton,
    removal_subtree_edges,
    save_cloud_csv,
    save_cloud_ply,
    save_cuts,
    save_skeleton,
    synth_tree,
    transfer_labels,
)


def random_tree(rng, max_vertices=200):
    """Random rooted tree: vertex i > 0 parents onto a uniform earlier vertex."""
    n = int(rng.integers(2, max_vertices + 1))
    parents = [int(rng.integers(0, i)) for i in range(1, n)]
    edges = np.array([[p, i + 1] for i, p in enumerate(parents)])
    positions = rng.normal(size=(n, 3))
    radii = rng.uniform(0.01, 0.1, size=n)
    labels = rng.integers(0, 2, size=n)
    return TreeGraph(positions, radii, labels, edges)


def oracle_cut_edges(graph):
    """Flat scan: every edge whose parent keeps and child goes."""
    return [
        i
        for i, (p, c) in enumerate(graph.edges)
        if graph.labels[p] == KEEP and graph.labels[c] == REMOVE
    ]


class TestCutGeneration:
    def test_matches_flat_scan_oracle(self, rng):
        for _ in range(300):
            graph = random_tree(rng)
            got = generate_cut_edge_indices(graph)
            assert sorted(got) == sorted(oracle_cut_edges(graph))

    def test_cut_fields_come_from_edge_endpoints(self):
        positions = [[0, 0, 0], [0, 0, 1], [0.3, 0, 1.4]]
        graph = TreeGraph(positions, [0.05, 0.04, 0.02], [KEEP, KEEP, REMOVE],
                          [[0, 1], [1, 2]])
        (cut,) = generate_cuts(graph)
        np.testing.assert_allclose(cut.position, [0.3, 0, 1.4])
        np.testing.assert_allclose(cut.direction, [0.3, 0, 0.4])

    def test_walk_order_is_depth_first_lifo(self):
        # root 0 with children 1, 2 (in edge order); both children removed.
        # The walk pops LIFO, so the edge under 0->2's subtree side is visited
        # before vertex 1's own children, but emission happens per parent in
        # edge order when the parent is expanded.
        positions = np.zeros((5, 3)) + np.arange(5)[:, None]
        graph = TreeGraph(
            positions, np.full(5, 0.05),
            [KEEP, REMOVE, KEEP, REMOVE, REMOVE],
            [[0, 1], [0, 2], [2, 3], [2, 4]],
        )
        assert generate_cut_edge_indices(graph) == [0, 2, 3]

    def test_no_cut_on_regrowth_transition(self):
        graph = TreeGraph(
            np.zeros((3, 3)) + np.arange(3)[:, None], np.full(3, 0.05),
            [REMOVE, KEEP, KEEP], [[0, 1], [1, 2]],
        )
        assert generate_cuts(graph) == []
        diag = diagnose_labels(graph)
        assert diag["regrowth_transitions"] == 1
        assert diag["flagged"] is True

    def test_all_keep_tree_has_no_cuts(self, rng):
        graph = random_tree(rng)
        graph = graph.with_labels(np.zeros(graph.n_vertices, dtype=int))
        assert generate_cuts(graph) == []
        assert diagnose_labels(graph)["flagged"] is False

    def test_nested_removal_yields_single_cut_at_boundary(self):
        # once inside a removed region the walk does not emit again
        graph = TreeGraph(
            np.zeros((4, 3)) + np.arange(4)[:, None], np.full(4, 0.05),
            [KEEP, REMOVE, REMOVE, REMOVE], [[0, 1], [1, 2], [2, 3]],
        )
        assert generate_cut_edge_indices(graph) == [0]


class TestGraphValidation:
    def test_rejects_cycle(self):
        with pytest.raises(InputError):
            TreeGraph(np.zeros((3, 3)), np.full(3, 0.1), np.zeros(3),
                      [[0, 1], [1, 2], [2, 1]])

    def test_rejects_orphan_vertex(self):
        with pytest.raises(InputError):
            TreeGraph(np.zeros((3, 3)), np.full(3, 0.1), np.zeros(3), [[0, 1]])

    def test_rejects_bad_labels(self):
        with pytest.raises(InputError):
            TreeGraph(np.zeros((2, 3)), np.full(2, 0.1), [0, 7], [[0, 1]])

    def test_rejects_nonpositive_radius(self):
        with pytest.raises(InputError):
            TreeGraph(np.zeros((2, 3)), [0.1, 0.0], [0, 0], [[0, 1]])

    def test_rejects_parent_on_root(self):
        with pytest.raises(InputError):
            TreeGraph(np.zeros((2, 3)), np.full(2, 0.1), np.zeros(2), [[1, 0]])

    def test_bounding_box(self):
        graph = TreeGraph([[0, -1, 2], [3, 1, 0]], [0.1, 0.1], [0, 0], [[0, 1]])
        lo, hi = graph.bounding_box()
        np.testing.assert_allclose(lo, [0, -1, 0])
        np.testing.assert_allclose(hi, [3, 1, 2])


class TestSubtreesAndPrimitives:
    def test_removal_subtree_collects_descendants(self):
        graph = TreeGraph(
            np.zeros((6, 3)) + np.arange(6)[:, None], np.full(6, 0.05),
            [KEEP, REMOVE, REMOVE, REMOVE, KEEP, KEEP],
            [[0, 1], [1, 2], [1, 3], [0, 4], [4, 5]],
        )
        assert sorted(removal_subtree_edges(graph, 0)) == [0, 1, 2]
        assert removal_subtree_edges(graph, 4) == [4]
        with pytest.raises(InputError):
            removal_subtree_edges(graph, 99)

    def test_primitives_one_capsule_per_edge(self, rng):
        graph = random_tree(rng)
        caps = build_collision_primitives(graph)
        assert len(caps) == graph.n_edges
        np.testing.assert_array_equal(caps.edge_index, np.arange(graph.n_edges))
        # capsule radius is the fatter endpoint
        for i, (p, c) in enumerate(graph.edges):
            assert caps.radius[i] == max(graph.radii[p], graph.radii[c])
            np.testing.assert_array_equal(caps.a[i], graph.positions[p])
            np.testing.assert_array_equal(caps.b[i], graph.positions[c])


class TestLabelTransfer:
    def test_exact_points_transfer_exactly(self, rng):
        graph = random_tree(rng, max_vertices=40)
        cloud = LabeledPointCloud(graph.positions.copy(), graph.labels.copy())
        out = transfer_labels(cloud, graph)
        np.testing.assert_array_equal(out.labels, graph.labels)

    def test_nearest_point_wins(self):
        graph = TreeGraph([[0, 0, 0], [0, 0, 1]], [0.1, 0.1], [0, 0], [[0, 1]])
        pts = np.array([[0, 0, 0.02], [0, 0, -0.01], [0, 0, 0.98], [0, 0, 1.01]])
        cloud = LabeledPointCloud(pts, np.array([1, 0, 0, 1]))
        out = transfer_labels(cloud, graph)
        assert out.labels[0] == KEEP    # z=-0.01 beats z=+0.02
        assert out.labels[1] == REMOVE  # z=1.01 beats z=0.98

    def test_equidistant_tie_takes_lowest_point_index(self):
        graph = TreeGraph([[0, 0, 0]], [0.1], [0], np.empty((0, 2), dtype=int))
        pts = np.array([[0.5, 0, 0], [-0.5, 0, 0]])
        out = transfer_labels(LabeledPointCloud(pts, np.array([1, 0])), graph)
        assert out.labels[0] == REMOVE


class TestSynth:
    def test_same_seed_same_tree(self):
        g1, c1 = synth_tree(3)
        g2, c2 = synth_tree(3)
        np.testing.assert_array_equal(g1.positions, g2.positions)
        np.testing.assert_array_equal(g1.edges, g2.edges)
        np.testing.assert_array_equal(g1.labels, g2.labels)
        np.testing.assert_array_equal(c1.points, c2.points)

    def test_different_seeds_differ(self):
        g1, _ = synth_tree(0)
        g2, _ = synth_tree(1)
        assert not np.array_equal(g1.positions, g2.positions)

    def test_produces_cuts_and_valid_graph(self):
        for seed in range(5):
            graph, cloud = synth_tree(seed)
            graph.validate()
            assert len(generate_cuts(graph)) >= 1
            assert len(cloud.points) > graph.n_vertices

    def test_params_validate(self):
        with pytest.raises(InputError):
            SynthParams(branch_count=0).validate()
        with pytest.raises(InputError):
            SynthParams(removal_fraction=1.5).validate()


def test_crop_and_cluster_keeps_largest_blob_inside_box(rng):
    a = rng.normal(scale=0.05, size=(40, 3))
    b = rng.normal(scale=0.05, size=(25, 3)) + [5.0, 0, 0]
    far = rng.normal(scale=0.05, size=(60, 3)) + [50.0, 0, 0]  # outside crop
    cloud = LabeledPointCloud(np.vstack([a, b, far]), np.zeros(125, dtype=int))
    out = crop_and_cluster(cloud, (np.array([-2.0, -2, -2]), np.array([7.0, 2, 2])), 0.5)
    assert len(out.points) == 40
    assert np.abs(out.points[:, 0]).max() < 2.0


class TestRoundTrips:
    def test_skeleton_roundtrip(self, rng, tmp_path):
        graph = random_tree(rng, max_vertices=30)
        path = tmp_path / "t.json"
        save_skeleton(graph, path)
        back = load_skeleton(path)
        np.testing.assert_allclose(back.positions, graph.positions)
        np.testing.assert_array_equal(back.edges, graph.edges)
        np.testing.assert_array_equal(back.labels, graph.labels)
        np.testing.assert_allclose(back.radii, graph.radii)

    def test_skeleton_rejects_foreign_format(self, tmp_path):
        path = tmp_path / "x.json"
        path.write_text(json.dumps({"format": "something-else"}))
        with pytest.raises(InputError):
            load_skeleton(path)

    def test_cloud_ply_roundtrip(self, rng, tmp_path):
        pts = rng.normal(size=(25, 3))
        labels = rng.integers(0, 2, size=25)
        cloud = LabeledPointCloud(pts, labels)
        path = tmp_path / "c.ply"
        save_cloud_ply(cloud, path)
        back = load_cloud(path)
        np.testing.assert_allclose(back.points, pts, atol=1e-6)
        np.testing.assert_array_equal(back.labels, labels)

    def test_cloud_csv_roundtrip(self, rng, tmp_path):
        pts = rng.normal(size=(10, 3))
        labels = rng.integers(0, 2, size=10)
        path = tmp_path / "c.csv"
        save_cloud_csv(LabeledPointCloud(pts, labels), path)
        back = load_cloud(path)
        np.testing.assert_allclose(back.points, pts)
        np.testing.assert_array_equal(back.labels, labels)

    def test_cuts_roundtrip_with_diagnostics(self, tmp_path):
        cuts = [Cut([0, 0, 1], [0, 0, 1]), Cut([1, 0, 1], [1, 0, 0])]
        path = tmp_path / "cuts.json"
        save_cuts(cuts, path, diagnostics={"flagged": False})
        back = load_cuts(path)
        assert len(back) == 2
        np.testing.assert_allclose(back[0].position, [0, 0, 1])
        np.testing.assert_allclose(back[1].direction, [1, 0, 0])
