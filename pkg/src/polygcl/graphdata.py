"""Graph data model, degree-normalized adjacency, dataset ingestion and splits."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

logger = logging.getLogger(__name__)

TRAIN_PER_CLASS = 20
VAL_SIZE = 500
TEST_SIZE = 1000


class GraphError(ValueError):
    """Invalid graph structure or metadata."""


class ParseError(ValueError):
    """Malformed dataset file; the message carries file path and line number."""


def canonical_edges(edges: np.ndarray, num_nodes: int) -> np.ndarray:
    """Canonicalize an undirected edge list: u < v, unique rows, indices validated.

    Self-loops are rejected here; loaders drop them (with a counter) before
    constructing a Graph, since self-loops only enter during normalization.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if edges.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    if edges.min() < 0 or edges.max() >= num_nodes:
        bad = edges[(edges < 0) | (edges >= num_nodes)].flat[0]
        raise GraphError(f"edge endpoint {bad} outside [0, {num_nodes})")
    if np.any(edges[:, 0] == edges[:, 1]):
        u = edges[edges[:, 0] == edges[:, 1]][0, 0]
        raise GraphError(f"self-loop on node {u}; self-loops are not stored explicitly")
    lo = np.minimum(edges[:, 0], edges[:, 1])
    hi = np.maximum(edges[:, 0], edges[:, 1])
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


@dataclass
class Graph:
    """Undirected graph with dense node features and class labels.

    Edges are stored canonically (u < v, deduplicated, no self-loops); the
    constructor canonicalizes orientation and duplicates but rejects
    self-loops and out-of-range indices or labels.
    """

    num_nodes: int
    edges: np.ndarray      # (E, 2) int64
    features: np.ndarray   # (N, F) float64
    labels: np.ndarray     # (N,) int64
    num_classes: int

    def __post_init__(self):
        if self.num_nodes <= 0:
            raise GraphError("graph must have at least one node")
        self.edges = canonical_edges(self.edges, self.num_nodes)
        self.features = np.ascontiguousarray(np.asarray(self.features, dtype=np.float64))
        if self.features.ndim != 2 or self.features.shape[0] != self.num_nodes:
            raise GraphError(
                f"features must be ({self.num_nodes}, F); got {self.features.shape}"
            )
        if not np.all(np.isfinite(self.features)):
            raise GraphError("features contain non-finite values")
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.labels.shape[0] != self.num_nodes:
            raise GraphError(
                f"labels must have length {self.num_nodes}; got {self.labels.shape[0]}"
            )
        if self.num_classes <= 0:
            raise GraphError("num_classes must be positive")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            bad = self.labels[(self.labels < 0) | (self.labels >= self.num_classes)][0]
            raise GraphError(f"label {bad} outside [0, {self.num_classes})")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]


@dataclass
class SparseAdjacency:
    """Symmetric degree-normalized adjacency with self-loops, compressed-row layout."""

    indptr: np.ndarray   # (N+1,) int
    indices: np.ndarray  # (nnz,) int
    values: np.ndarray   # (nnz,) float64, strictly positive

    @property
    def num_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def shape(self) -> tuple[int, int]:
        n = self.num_nodes
        return (n, n)

    def to_scipy(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.values, self.indices, self.indptr), shape=self.shape)

    def to_dense(self) -> np.ndarray:
        return self.to_scipy().toarray()

    def matmul(self, dense: np.ndarray) -> np.ndarray:
        """Left-multiply a dense matrix by this sparse matrix."""
        return self.to_scipy() @ dense

    def t_matmul(self, dense: np.ndarray) -> np.ndarray:
        """Left-multiply by the transpose (used by the backward pass)."""
        return self.to_scipy().T @ dense

    def row_sums(self) -> np.ndarray:
        return np.add.reduceat(self.values, self.indptr[:-1])


def normalized_from_edges(num_nodes: int, edges: np.ndarray) -> SparseAdjacency:
    """Build the symmetric renormalized adjacency D^{-1/2} (A + I) D^{-1/2}.

    D is the degree of A + I, so an isolated node keeps a self-loop of
    weight exactly 1. Symmetry holds at value level: entries (u, v) and
    (v, u) are the same float product.
    """
    n = num_nodes
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    deg = np.ones(n)  # the self-loop contributes 1 to every degree
    if edges.size:
        np.add.at(deg, edges[:, 0], 1.0)
        np.add.at(deg, edges[:, 1], 1.0)
    dinv = 1.0 / np.sqrt(deg)
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1], loops])
    cols = np.concatenate([edges[:, 1], edges[:, 0], loops])
    vals = dinv[rows] * dinv[cols]
    csr = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    csr.sort_indices()
    return SparseAdjacency(csr.indptr, csr.indices, csr.data)


def normalize_adjacency(g: Graph) -> SparseAdjacency:
    """Normalized adjacency of the full graph (self-loops added here)."""
    return normalized_from_edges(g.num_nodes, g.edges)


@dataclass
class SplitMasks:
    """Disjoint train/val/test node-index sets."""

    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        self.train = np.unique(np.asarray(self.train, dtype=np.int64))
        self.val = np.unique(np.asarray(self.val, dtype=np.int64))
        self.test = np.unique(np.asarray(self.test, dtype=np.int64))
        for a, b, names in (
            (self.train, self.val, "train/val"),
            (self.train, self.test, "train/test"),
            (self.val, self.test, "val/test"),
        ):
            if np.intersect1d(a, b).size:
                raise GraphError(f"split masks overlap: {names}")


def make_split(g: Graph, seed: int) -> SplitMasks:
    """Deterministic split: 20 train nodes per class, then 500 val and 1000 test.

    Train nodes are the first 20 of each class in a seeded shuffle; val and
    test come from the shuffled remainder.
    """
    rng = np.random.default_rng(seed)
    order = rng.permutation(g.num_nodes)
    shuffled_labels = g.labels[order]
    train_parts = []
    for c in range(g.num_classes):
        members = order[shuffled_labels == c]
        if members.size < TRAIN_PER_CLASS:
            raise GraphError(
                f"class {c} has only {members.size} nodes; "
                f"need {TRAIN_PER_CLASS} for the train split"
            )
        train_parts.append(members[:TRAIN_PER_CLASS])
    train = np.concatenate(train_parts)
    in_train = np.zeros(g.num_nodes, dtype=bool)
    in_train[train] = True
    rest = order[~in_train[order]]
    if rest.size < VAL_SIZE + TEST_SIZE:
        raise GraphError(
            f"only {rest.size} nodes left after the train split; "
            f"need {VAL_SIZE} val + {TEST_SIZE} test"
        )
    return SplitMasks(train=train, val=rest[:VAL_SIZE], test=rest[VAL_SIZE : VAL_SIZE + TEST_SIZE])


@dataclass
class IngestStats:
    """Counters for rows the raw-format loader had to repair or drop."""

    unknown_edges_dropped: int = 0
    duplicate_edges_merged: int = 0
    self_cites_dropped: int = 0


def load_content_cites(
    content_path: str | Path,
    cites_path: str | Path,
    feature_normalize: bool = False,
) -> tuple[Graph, IngestStats]:
    """Load a citation graph from tab-separated content/cites files.

    Parameters
    ----------
    content_path : node rows "id <TAB> f1 .. fF <TAB> label".
    cites_path : edge rows "id <TAB> id"; direction is discarded.
    feature_normalize : divide each feature row by its sum (off by default).

    Returns
    -------
    (Graph, IngestStats). Nodes are reindexed contiguously in content-file
    order; labels map to class indices by sorted label string. Edges naming
    unknown ids are dropped and counted, duplicates and reversed duplicates
    are merged, self-citations are dropped.
    """
    content_path = Path(content_path)
    cites_path = Path(cites_path)

    ids: list[str] = []
    index: dict[str, int] = {}
    rows: list[list[float]] = []
    label_names: list[str] = []
    width = None
    with open(content_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 3:
                raise ParseError(
                    f"{content_path}:{lineno}: expected 'id<TAB>features...<TAB>label', "
                    f"got {len(parts)} fields"
                )
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(
                    f"{content_path}:{lineno}: expected {width} fields, got {len(parts)}"
                )
            node_id = parts[0]
            if node_id in index:
                raise ParseError(f"{content_path}:{lineno}: duplicate node id {node_id!r}")
            try:
                rows.append([float(x) for x in parts[1:-1]])
            except ValueError as err:
                raise ParseError(f"{content_path}:{lineno}: non-numeric feature: {err}") from err
            index[node_id] = len(ids)
            ids.append(node_id)
            label_names.append(parts[-1])
    if not ids:
        raise ParseError(f"{content_path}: no data rows")

    classes = sorted(set(label_names))
    class_index = {name: i for i, name in enumerate(classes)}
    labels = np.array([class_index[name] for name in label_names], dtype=np.int64)
    features = np.array(rows, dtype=np.float64)
    if feature_normalize:
        sums = features.sum(axis=1, keepdims=True)
        features = features / np.maximum(sums, 1.0)

    stats = IngestStats()
    seen: set[tuple[int, int]] = set()
    edge_list: list[tuple[int, int]] = []
    with open(cites_path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(
                    f"{cites_path}:{lineno}: expected 'id<TAB>id', got {len(parts)} fields"
                )
            a, b = parts
            if a not in index or b not in index:
                stats.unknown_edges_dropped += 1
                continue
            u, v = index[a], index[b]
            if u == v:
                stats.self_cites_dropped += 1
                continue
            key = (min(u, v), max(u, v))
            if key in seen:
                stats.duplicate_edges_merged += 1
                continue
            seen.add(key)
            edge_list.append(key)
    if stats.unknown_edges_dropped:
        logger.warning(
            "%s: dropped %d edges naming ids absent from %s",
            cites_path,
            stats.unknown_edges_dropped,
            content_path.name,
        )

    edges = np.array(edge_list, dtype=np.int64).reshape(-1, 2)
    graph = Graph(
        num_nodes=len(ids),
        edges=edges,
        features=features,
        labels=labels,
        num_classes=len(classes),
    )
    return graph, stats


def save_canonical(g: Graph, path: str | Path, masks: SplitMasks | None = None) -> None:
    """Write the canonical JSON graph file (UTF-8, row-major arrays)."""
    payload: dict = {
        "num_nodes": g.num_nodes,
        "num_classes": g.num_classes,
        "edges": g.edges.tolist(),
        "features": g.features.tolist(),
        "labels": g.labels.tolist(),
    }
    if masks is not None:
        payload["masks"] = {
            "train": masks.train.tolist(),
            "val": masks.val.tolist(),
            "test": masks.test.tolist(),
        }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, separators=(",", ":"), sort_keys=True)


def load_canonical(path: str | Path) -> tuple[Graph, SplitMasks | None]:
    """Load a canonical JSON graph file; returns embedded masks when present."""
    path = Path(path)
    with open(path, encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}: invalid JSON: {err}") from err
    if not isinstance(payload, dict):
        raise ParseError(f"{path}: top-level value must be an object")
    for key in ("num_nodes", "num_classes", "edges", "features", "labels"):
        if key not in payload:
            raise ParseError(f"{path}: missing required key {key!r}")
    try:
        graph = Graph(
            num_nodes=int(payload["num_nodes"]),
            edges=np.asarray(payload["edges"], dtype=np.int64).reshape(-1, 2),
            features=np.asarray(payload["features"], dtype=np.float64),
            labels=np.asarray(payload["labels"], dtype=np.int64),
            num_classes=int(payload["num_classes"]),
        )
    except (GraphError, TypeError, ValueError) as err:
        raise ParseError(f"{path}: {err}") from err
    masks = None
    if "masks" in payload and payload["masks"] is not None:
        m = payload["masks"]
        for key in ("train", "val", "test"):
            if key not in m:
                raise ParseError(f"{path}: masks object missing key {key!r}")
        try:
            masks = SplitMasks(
                train=np.asarray(m["train"], dtype=np.int64),
                val=np.asarray(m["val"], dtype=np.int64),
                test=np.asarray(m["test"], dtype=np.int64),
            )
        except GraphError as err:
            raise ParseError(f"{path}: {err}") from err
        for part in (masks.train, masks.val, masks.test):
            if part.size and (part.min() < 0 or part.max() >= graph.num_nodes):
                raise ParseError(f"{path}: mask index outside [0, {graph.num_nodes})")
    return graph, masks


def ring_graph(num_nodes: int = 8, num_features: int = 5, num_classes: int = 2, seed: int = 0) -> Graph:
    """Small deterministic ring graph used for circuit dumps and smoke checks."""
    if num_nodes < 3:
        raise GraphError("ring graph needs at least 3 nodes")
    edges = np.array([[i, (i + 1) % num_nodes] for i in range(num_nodes)], dtype=np.int64)
    rng = np.random.default_rng(seed)
    features = rng.uniform(-1.0, 1.0, size=(num_nodes, num_features))
    labels = np.arange(num_nodes, dtype=np.int64) % num_classes
    return Graph(num_nodes, edges, features, labels, num_classes)
