"""Labeled tree skeletons: label transfer, cut extraction, collision primitives.

A skeleton is a rooted graph of vertices (position, branch radius, keep/remove
label) and directed parent->child edges.  Cuts are emitted wherever a kept
vertex has a removed child; each edge doubles as a collision capsule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyResultError, InputError

KEEP = 0
REMOVE = 1


@dataclass(frozen=True, eq=False)
class LabeledPointCloud:
    """Points (N, 3) in meters with a per-point keep(0)/remove(1) label."""

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if len(points) != len(labels):
            raise InputError(f"{len(points)} points but {len(labels)} labels")
        if labels.size and not np.isin(labels, (KEEP, REMOVE)).all():
            raise InputError("labels must be 0 (keep) or 1 (remove)")
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.points)


@dataclass(frozen=True, eq=False)
class TreeGraph:
    """Rooted skeleton: vertex positions/radii/labels plus directed edges."""

    positions: np.ndarray
    radii: np.ndarray
    labels: np.ndarray
    edges: np.ndarray
    root: int = 0

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=float).reshape(-1, 3)
        radii = np.asarray(self.radii, dtype=float).reshape(-1)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "positions", positions)
        object.__setattr__(self, "radii", radii)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "edges", edges)
        self.validate()

    @property
    def n_vertices(self) -> int:
        return len(self.positions)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def validate(self) -> None:
        n = len(self.positions)
        if n == 0:
            raise InputError("graph has no vertices")
        if len(self.radii) != n or len(self.labels) != n:
            raise InputError("radii/labels length must match vertex count")
        if not (self.radii > 0).all():
            raise InputError("all branch radii must be strictly positive")
        if self.labels.size and not np.isin(self.labels, (KEEP, REMOVE)).all():
            raise InputError("vertex labels must be 0 or 1")
        if not (0 <= self.root < n):
            raise InputError(f"root index {self.root} out of range")
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise InputError("edge endpoint out of range")
        parents = np.zeros(n, dtype=int)
        for p, c in self.edges:
            parents[c] += 1
        if parents[self.root] != 0:
            raise InputError("root must have no parent")
        nonroot = np.delete(parents, self.root)
        if not (nonroot == 1).all():
            raise InputError("every non-root vertex needs exactly one parent")
        if len(self._reachable_from_root()) != n:
            raise InputError("graph is not connected from the root (cycle or orphan)")

    def children(self) -> list[list[int]]:
        """Child lists per vertex, in edge order."""
        out: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for p, c in self.edges:
            out[p].append(int(c))
        return out

    def children_edges(self) -> list[list[tuple[int, int]]]:
        """Per vertex: (edge index, child) pairs, in edge order."""
        out: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for i, (p, c) in enumerate(self.edges):
            out[p].append((i, int(c)))
        return out

    def _reachable_from_root(self) -> set[int]:
        adj = self.children()
        seen = {int(self.root)}
        stack = [int(self.root)]
        while stack:
            v = stack.pop()
            for c in adj[v]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def with_labels(self, labels: np.ndarray) -> "TreeGraph":
        return replace(self, labels=np.asarray(labels, dtype=np.int64))

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.positions.min(axis=0), self.positions.max(axis=0)


@dataclass(frozen=True, eq=False)
class Cut:
    """One pruning command: sever point plus the section-plane normal.

    ``direction`` points along the branch from the kept parent toward the
    removed child; its magnitude is the edge length (never zero).
    """

    position: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        position = np.asarray(self.position, dtype=float).reshape(3)
        direction = np.asarray(self.direction, dtype=float).reshape(3)
        if np.linalg.norm(direction) <= 0.0:
            raise InputError("cut direction must be non-zero")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "direction", direction)


@dataclass(frozen=True, eq=False)
class CapsuleSet:
    """Capsules as SoA arrays: endpoints (M, 3), radii (M,), source edge per capsule.

    ``edge_index`` is -1 for capsules that did not come from a skeleton edge
    (static environment geometry).
    """

    a: np.ndarray
    b: np.ndarray
    radius: np.ndarray
    edge_index: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(-1, 3)
        b = np.asarray(self.b, dtype=float).reshape(-1, 3)
        radius = np.asarray(self.radius, dtype=float).reshape(-1)
        edge_index = np.asarray(self.edge_index, dtype=np.int64).reshape(-1)
        if not (len(a) == len(b) == len(radius) == len(edge_index)):
            raise InputError("capsule arrays must have equal length")
        if radius.size and not (radius > 0).all():
            raise InputError("capsule radii must be strictly positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "radius", radius)
        object.__setattr__(self, "edge_index", edge_index)

    def __len__(self) -> int:
        return len(self.radius)

    @classmethod
    def empty(cls) -> "CapsuleSet":
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int))

    @classmethod
    def from_arrays(cls, a, b, radius) -> "CapsuleSet":
        a = np.asarray(a, dtype=float).reshape(-1, 3)
        return cls(a, b, radius, np.full(len(a), -1, dtype=int))

    def concat(self, other: "CapsuleSet") -> "CapsuleSet":
        return CapsuleSet(
            np.vstack([self.a, other.a]),
            np.vstack([self.b, other.b]),
            np.concatenate([self.radius, other.radius]),
            np.concatenate([self.edge_index, other.edge_index]),
        )


def transfer_labels(cloud: LabeledPointCloud, graph: TreeGraph) -> TreeGraph:
    """Label each vertex from its nearest cloud point (ties: lowest point index)."""
    if len(cloud) == 0:
        raise InputError("cannot transfer labels from an empty cloud")
    tree = cKDTree(cloud.points)
    dist, _ = tree.query(graph.positions)
    labels = np.empty(graph.n_vertices, dtype=np.int64)
    for i, p in enumerate(graph.positions):
        # Re-resolve within an inflated ball so equidistant points are compared
        # with one consistent arithmetic and the lowest index wins.
        ball = tree.query_ball_point(p, dist[i] * (1.0 + 1e-9) + 1e-12)
        ball = np.sort(np.asarray(ball, dtype=int))
        d2 = np.sum((cloud.points[ball] - p) ** 2, axis=1)
        labels[i] = cloud.labels[ball[np.argmin(d2)]]
    return graph.with_labels(labels)


def _iter_cut_edges(graph: TreeGraph):
    """Depth-first stack walk from the root, yielding edges whose parent is
    kept and child removed.  Children are pushed in edge order and consumed
    last-in first-out."""
    adj = graph.children_edges()
    labels = graph.labels
    stack = [int(graph.root)]
    while stack:
        x = stack.pop()
        following = adj[x]
        stack.extend(c for _, c in following)
        for edge_idx, y in following:
            if labels[x] == KEEP and labels[y] == REMOVE:
                yield edge_idx, x, y


def generate_cuts(graph: TreeGraph) -> list[Cut]:
    """Extract cut commands at every keep->remove edge of the skeleton."""
    graph.validate()
    cuts = []
    for _, x, y in _iter_cut_edges(graph):
        pos = graph.positions[y]
        cuts.append(Cut(pos, pos - graph.positions[x]))
    return cuts


def generate_cut_edge_indices(graph: TreeGraph) -> list[int]:
    """Edge indices aligned with ``generate_cuts`` output order."""
    return [edge_idx for edge_idx, _, _ in _iter_cut_edges(graph)]


def diagnose_labels(graph: TreeGraph) -> dict:
    """Count label transitions along edges; a remove->keep edge means regrowth
    under a removed branch, which yields no cut and deserves a flag."""
    removal = regrowth = 0
    for p, c in graph.edges:
        if graph.labels[p] == KEEP and graph.labels[c] == REMOVE:
            removal += 1
        elif graph.labels[p] == REMOVE and graph.labels[c] == KEEP:
            regrowth += 1
    return {
        "removal_transitions": removal,
        "regrowth_transitions": regrowth,
        "flagged": regrowth > 0,
    }


def build_collision_primitives(graph: TreeGraph) -> CapsuleSet:
    """One capsule per edge; radius is the larger endpoint radius."""
    graph.validate()
    if graph.n_edges == 0:
        return CapsuleSet.empty()
    p, c = graph.edges[:, 0], graph.edges[:, 1]
    return CapsuleSet(
        graph.positions[p],
        graph.positions[c],
        np.maximum(graph.radii[p], graph.radii[c]),
        np.arange(graph.n_edges),
    )


def removal_subtree_edges(graph: TreeGraph, cut_edge_index: int) -> list[int]:
    """The cut edge plus every edge of the subtree hanging below it.

    These capsules are the material the shear is allowed to straddle while
    closing in on the cut.
    """
    if not (0 <= cut_edge_index < graph.n_edges):
        raise InputError(f"edge index {cut_edge_index} out of range")
    out = [int(cut_edge_index)]
    adj = graph.children_edges()
    stack = [int(graph.edges[cut_edge_index, 1])]
    while stack:
        v = stack.pop()
        for edge_idx, child in adj[v]:
            out.append(edge_idx)
            stack.append(child)
    return out


def crop_and_cluster(
    cloud: LabeledPointCloud,
    bounds: tuple[np.ndarray, np.ndarray],
    cluster_radius: float,
) -> LabeledPointCloud:
    """Keep points inside the axis-aligned box, then return the largest
    single-linkage cluster at ``cluster_radius``.  Labels ride along."""
    if cluster_radius <= 0:
        raise InputError("cluster_radius must be positive")
    lo = np.asarray(bounds[0], dtype=float).reshape(3)
    hi = np.asarray(bounds[1], dtype=float).reshape(3)
    inside = np.all((cloud.points >= lo) & (cloud.points <= hi), axis=1)
    if not inside.any():
        raise EmptyResultError("no points inside the crop box")
    pts = cloud.points[inside]
    labels = cloud.labels[inside]
    pairs = cKDTree(pts).query_pairs(cluster_radius, output_type="ndarray")
    n = len(pts)
    adj = coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n)
    )
    _, component = connected_components(adj, directed=False)
    sizes = np.bincount(component)
    keep = component == int(np.argmax(sizes))
    return LabeledPointCloud(pts[keep], labels[keep])


# ---------------------------------------------------------------------------
# Synthetic trees


@dataclass(frozen=True)
class SynthParams:
    """Branching configuration for the synthetic tree generator.

    All lengths in meters.  ``removal_fraction`` is the share of primary
    branches that receive a remove label on a leaf-side subtree.
    """

    trunk_height: float = 1.3
    trunk_segments: int = 6
    trunk_radius: float = 0.04
    branch_count: int = 10
    branch_segments: int = 4
    branch_length: float = 0.45
    twig_count: int = 6
    twig_length: float = 0.18
    removal_fraction: float = 0.35
    points_per_edge: int = 12

    def validate(self) -> None:
        if self.branch_count < 1:
            raise InputError("branch_count must be at least 1")
        if self.trunk_height <= 0 or self.trunk_radius <= 0:
            raise InputError("trunk dimensions must be positive")
        if self.trunk_segments < 1 or self.branch_segments < 1:
            raise InputError("segment counts must be at least 1")
        if not 0.0 <= self.removal_fraction <= 1.0:
            raise InputError("removal_fraction must lie in [0, 1]")
        if self.points_per_edge < 1:
            raise InputError("points_per_edge must be at least 1")


def synth_tree(seed: int, params: SynthParams = SynthParams()) -> tuple[TreeGraph, LabeledPointCloud]:
    """Deterministic synthetic orchard tree plus a matching labeled cloud.

    Whole subtrees on the leaf side get the remove label, the way an
    annotator marks an entire branch for pruning.
    """
    params.validate()
    rng = np.random.default_rng(np.random.SeedSequence([0x7EE5, int(seed)]))

    positions: list[np.ndarray] = [np.zeros(3)]
    radii: list[float] = [params.trunk_radius]
    edges: list[tuple[int, int]] = []

    def add_vertex(pos, radius, parent):
        positions.append(np.asarray(pos, dtype=float))
        radii.append(float(radius))
        edges.append((parent, len(positions) - 1))
        return len(positions) - 1

    # Trunk: near-vertical chain with slight wander, tapering upward.
    trunk_ids = [0]
    seg_h = params.trunk_height / params.trunk_segments
    pos = np.zeros(3)
    for k in range(params.trunk_segments):
        drift = rng.normal(0.0, 0.01, size=2)
        pos = pos + np.array([drift[0], drift[1], seg_h])
        taper = 1.0 - 0.6 * (k + 1) / params.trunk_segments
        trunk_ids.append(add_vertex(pos, params.trunk_radius * max(taper, 0.25), trunk_ids[-1]))

    # Primary branches sprout from the upper trunk at random azimuths.
    branch_first_vertex: list[int] = []
    branch_tip_chain: list[list[int]] = []
    for _ in range(params.branch_count):
        attach = trunk_ids[int(rng.integers(max(1, params.trunk_segments // 3), params.trunk_segments + 1))]
        azim = rng.uniform(-np.pi, np.pi)
        elev = rng.uniform(0.15, 0.9)
        length = params.branch_length * rng.uniform(0.7, 1.3)
        direction = np.array([np.cos(azim) * np.cos(elev), np.sin(azim) * np.cos(elev), np.sin(elev)])
        seg = length / params.branch_segments
        chain = [attach]
        pos = positions[attach].copy()
        r0 = radii[attach] * 0.55
        for k in range(params.branch_segments):
            direction = direction + rng.normal(0.0, 0.12, size=3)
            direction /= np.linalg.norm(direction)
            pos = pos + seg * direction
            taper = 1.0 - 0.5 * (k + 1) / params.branch_segments
            chain.append(add_vertex(pos, max(r0 * taper, 0.004), chain[-1]))
        branch_first_vertex.append(chain[1])
        branch_tip_chain.append(chain)

    # Twigs add clutter around the crown.
    for _ in range(params.twig_count):
        host = branch_tip_chain[int(rng.integers(0, params.branch_count))]
        attach = host[int(rng.integers(1, len(host)))]
        direction = rng.normal(0.0, 1.0, size=3)
        direction[2] = abs(direction[2]) * 0.5
        direction /= np.linalg.norm(direction)
        pos = positions[attach] + params.twig_length * rng.uniform(0.6, 1.2) * direction
        add_vertex(pos, max(radii[attach] * 0.6, 0.003), attach)

    graph = TreeGraph(
        np.vstack(positions),
        np.array(radii),
        np.zeros(len(positions), dtype=np.int64),
        np.array(edges, dtype=np.int64).reshape(-1, 2),
        root=0,
    )

    # Mark whole leaf-side subtrees of selected branches for removal.
    n_remove = int(round(params.removal_fraction * params.branch_count))
    labels = np.zeros(graph.n_vertices, dtype=np.int64)
    if n_remove > 0:
        chosen = rng.choice(params.branch_count, size=n_remove, replace=False)
        adj = graph.children()
        for b in np.sort(chosen):
            chain = branch_tip_chain[b]
            start = chain[int(rng.integers(1, len(chain)))]
            stack = [start]
            while stack:
                v = stack.pop()
                labels[v] = REMOVE
                stack.extend(adj[v])
    graph = graph.with_labels(labels)

    # Cloud: exact vertex points plus jittered samples along each edge,
    # labeled by the nearer endpoint.
    pts = [graph.positions]
    lbl = [graph.labels]
    for p, c in graph.edges:
        u = rng.uniform(0.05, 0.95, size=params.points_per_edge)
        base = graph.positions[p][None, :] * (1 - u[:, None]) + graph.positions[c][None, :] * u[:, None]
        jitter = rng.normal(0.0, 0.3 * max(graph.radii[p], graph.radii[c]), size=(params.points_per_edge, 3))
        pts.append(base + jitter)
        lbl.append(np.where(u < 0.5, graph.labels[p], graph.labels[c]))
    cloud = LabeledPointCloud(np.vstack(pts), np.concatenate(lbl))
    return graph, cloud


# ---------------------------------------------------------------------------
# File formats

SKELETON_FORMAT = "prunekit-skeleton"
CUTS_FORMAT = "prunekit-cuts"


def save_skeleton(graph: TreeGraph, path) -> None:
    doc = {
        "format": SKELETON_FORMAT,
        "version": 1,
        "units": "m",
        "root": int(graph.root),
        "vertices": [
            [float(p[0]), float(p[1]), float(p[2]), float(r), int(l)]
            for p, r, l in zip(graph.positions, graph.radii, graph.labels)
        ],
        "edges": [[int(p), int(c)] for p, c in graph.edges],
    }
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_skeleton(path) -> TreeGraph:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not valid JSON: {e}") from e
    if doc.get("format") != SKELETON_FORMAT:
        raise InputError(f"{path}: unexpected format field {doc.get('format')!r}")
    rows = doc["vertices"]
    if any(len(r) not in (4, 5) for r in rows):
        raise InputError(f"{path}: vertex rows must be [x, y, z, radius] or [x, y, z, radius, label]")
    positions = np.array([r[:3] for r in rows], dtype=float)
    radii = np.array([r[3] for r in rows], dtype=float)
    labels = np.array([r[4] if len(r) == 5 else KEEP for r in rows], dtype=np.int64)
    return TreeGraph(positions, radii, labels, np.array(doc["edges"], dtype=np.int64).reshape(-1, 2), int(doc["root"]))


def save_cloud_ply(cloud: LabeledPointCloud, path) -> None:
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar label",
        "end_header",
    ]
    for p, l in zip(cloud.points, cloud.labels):
        lines.append(f"{float(p[0])!r} {float(p[1])!r} {float(p[2])!r} {int(l)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cloud_ply(path) -> LabeledPointCloud:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    if not text or text[0].strip() != "ply":
        raise InputError(f"{path}: missing 'ply' magic line")
    props: list[str] = []
    count = None
    body_start = None
    for i, line in enumerate(text[1:], start=1):
        tok = line.split()
        if not tok:
            continue
        if tok[0] == "format" and tok[1] != "ascii":
            raise InputError(f"{path}: only ascii PLY is supported")
        if tok[0] == "element":
            if tok[1] != "vertex":
                raise InputError(f"{path}: unsupported element {tok[1]!r}")
            count = int(tok[2])
        elif tok[0] == "property":
            props.append(tok[-1])
        elif tok[0] == "end_header":
            body_start = i + 1
            break
    if body_start is None or count is None:
        raise InputError(f"{path}: malformed PLY header")
    for needed in ("x", "y", "z", "label"):
        if needed not in props:
            raise InputError(f"{path}: PLY is missing vertex property {needed!r}")
    idx = {name: k for k, name in enumerate(props)}
    rows = [line.split() for line in text[body_start : body_start + count]]
    if len(rows) != count:
        raise InputError(f"{path}: expected {count} vertex rows, found {len(rows)}")
    data = np.array(rows, dtype=float)
    points = data[:, [idx["x"], idx["y"], idx["z"]]]
    labels = data[:, idx["label"]].astype(np.int64)
    return LabeledPointCloud(points, labels)


def save_cloud_csv(cloud: LabeledPointCloud, path) -> None:
    lines = ["x,y,z,label"]
    for p, l in zip(cloud.points, cloud.labels):
        lines.append(f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r},{int(l)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_cloud_csv(path) -> LabeledPointCloud:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.lower().startswith("x,"):
            continue
        rows.append([float(v) for v in line.split(",")])
    if not rows:
        raise InputError(f"{path}: no data rows")
    data = np.array(rows, dtype=float)
    if data.shape[1] != 4:
        raise InputError(f"{path}: expected x,y,z,label columns")
    return LabeledPointCloud(data[:, :3], data[:, 3].astype(np.int64))


def load_cloud(path) -> LabeledPointCloud:
    suffix = Path(path).suffix.lower()
    if suffix == ".ply":
        return load_cloud_ply(path)
    if suffix == ".csv":
        return load_cloud_csv(path)
    raise InputError(f"{path}: unknown cloud extension {suffix!r} (use .ply or .csv)")


def save_cuts(cuts: list[Cut], path, diagnostics: dict | None = None) -> None:
    doc = {
        "format": CUTS_FORMAT,
        "version": 1,
        "cuts": [
            {
                "position": [float(v) for v in c.position],
                "direction": [float(v) for v in c.direction],
            }
            for c in cuts
        ],
    }
    if diagnostics is not None:
        doc["diagnostics"] = diagnostics
    Path(path).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def load_cuts(path) -> list[Cut]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CUTS_FORMAT:
        raise InputError(f"{path}: unexpected format field {doc.get('format')!r}")
    return [Cut(np.array(c["position"]), np.array(c["direction"])) for c in doc["cuts"]]
