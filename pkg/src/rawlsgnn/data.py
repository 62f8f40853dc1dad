"""Dataset ingestion, seeded split generation, and synthetic power-law graphs.

On-disk layout for a dataset directory:

    edges.tsv      one ``src<TAB>dst`` edge per line, 0-based ids, # comments
    features.csv   one row per node, comma-separated reals
    labels.csv     one integer class per node
    split.json     optional cached split {"seed", "train", "val", "test"}

Self-loops found in ``edges.tsv`` are dropped (the training pipeline adds its
own), with a warning carrying the count.
"""

from __future__ import annotations

import json
import warnings
from collections import deque
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .graph import SparseMatrix, from_edge_list, is_symmetric, read_edge_list

__all__ = [
    "GraphDataset",
    "load_dataset",
    "make_split",
    "with_split",
    "save_split",
    "load_split",
    "synthetic_powerlaw",
    "is_connected",
    "TRAIN_PER_CLASS",
    "VAL_SIZE",
    "TEST_SIZE",
]

# split protocol: fixed number of training nodes per class plus fixed-size
# validation and test sets drawn from the remainder
TRAIN_PER_CLASS = 20
VAL_SIZE = 500
TEST_SIZE = 1000

_EMPTY_MASK = np.zeros(0, dtype=np.int64)
_EMPTY_MASK.flags.writeable = False


@dataclass(frozen=True)
class GraphDataset:
    """A node-classification problem: graph, features, labels, and splits.

    ``A`` is symmetric and self-loop free; masks are disjoint sorted index
    arrays (empty until a split is attached).
    """

    A: SparseMatrix
    X: np.ndarray
    labels: np.ndarray
    train_mask: np.ndarray = _EMPTY_MASK
    val_mask: np.ndarray = _EMPTY_MASK
    test_mask: np.ndarray = _EMPTY_MASK

    def __post_init__(self) -> None:
        n = self.A.n_rows
        if self.X.shape[0] != n or len(self.labels) != n:
            raise ValueError(
                f"inconsistent sizes: graph has {n} nodes, features "
                f"{self.X.shape[0]} rows, labels {len(self.labels)} entries"
            )
        if not is_symmetric(self.A):
            raise ValueError("adjacency matrix must be symmetric")
        masks = (self.train_mask, self.val_mask, self.test_mask)
        combined = np.concatenate(masks)
        if len(np.unique(combined)) != len(combined):
            raise ValueError("train/val/test masks must be disjoint")

    @property
    def num_nodes(self) -> int:
        return self.A.n_rows

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if len(self.labels) else 0

    def node_degrees(self) -> np.ndarray:
        """Integer node degrees in the original adjacency matrix."""
        return np.rint(
            np.bincount(self.A.row_ids(), weights=self.A.values, minlength=self.num_nodes)
        ).astype(np.int64)


def load_dataset(dir_path: str | Path) -> GraphDataset:
    """Load ``edges.tsv`` / ``features.csv`` / ``labels.csv`` from a directory.

    The returned dataset has empty masks; attach a split with
    :func:`make_split` or a cached ``split.json``.
    """
    directory = Path(dir_path)
    for name in ("edges.tsv", "features.csv", "labels.csv"):
        if not (directory / name).exists():
            raise FileNotFoundError(f"dataset file missing: {directory / name}")

    X = np.loadtxt(directory / "features.csv", delimiter=",", dtype=np.float64, ndmin=2)
    raw_labels = np.loadtxt(directory / "labels.csv", dtype=np.float64, ndmin=1)
    if np.any(raw_labels != np.rint(raw_labels)):
        raise ValueError("labels.csv must contain integer class indices")
    labels = raw_labels.astype(np.int64)
    if len(labels) and labels.min() < 0:
        raise ValueError(f"unknown class index {labels.min()} in labels.csv")
    if X.shape[0] != len(labels):
        raise ValueError(
            f"row-count mismatch: features.csv has {X.shape[0]} rows, "
            f"labels.csv has {len(labels)}"
        )

    n = len(labels)
    edges = read_edge_list(directory / "edges.tsv")
    kept = [(u, v) for u, v in edges if u != v]
    dropped = len(edges) - len(kept)
    if dropped:
        warnings.warn(f"dropped {dropped} self-loop(s) from edges.tsv", stacklevel=2)
    A = from_edge_list(kept, n, symmetrize=True)
    return GraphDataset(A=A, X=X, labels=labels)


def make_split(
    dataset: GraphDataset, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample (train, val, test) masks: 20 nodes per class, then 500 + 1000.

    Deterministic per seed; raises with the offending counts when the
    dataset is too small.
    """
    rng = np.random.default_rng(seed)
    n = dataset.num_nodes
    num_classes = dataset.num_classes
    needed = TRAIN_PER_CLASS * num_classes + VAL_SIZE + TEST_SIZE
    if n < needed:
        raise ValueError(
            f"need at least {needed} nodes for a split "
            f"({TRAIN_PER_CLASS} x {num_classes} classes + {VAL_SIZE} val "
            f"+ {TEST_SIZE} test), got {n}"
        )

    train_parts = []
    for cls in range(num_classes):
        members = np.nonzero(dataset.labels == cls)[0]
        if len(members) < TRAIN_PER_CLASS:
            raise ValueError(
                f"class {cls} has only {len(members)} nodes, "
                f"need {TRAIN_PER_CLASS} for the training split"
            )
        train_parts.append(rng.choice(members, TRAIN_PER_CLASS, replace=False))
    train = np.sort(np.concatenate(train_parts))

    remainder = np.setdiff1d(np.arange(n), train, assume_unique=False)
    held_out = rng.choice(remainder, VAL_SIZE + TEST_SIZE, replace=False)
    val = np.sort(held_out[:VAL_SIZE])
    test = np.sort(held_out[VAL_SIZE:])
    return train.astype(np.int64), val.astype(np.int64), test.astype(np.int64)


def with_split(dataset: GraphDataset, seed: int) -> GraphDataset:
    """Copy of ``dataset`` with a fresh seeded split attached."""
    train, val, test = make_split(dataset, seed)
    return replace(dataset, train_mask=train, val_mask=val, test_mask=test)


def save_split(path: str | Path, dataset: GraphDataset, seed: int) -> None:
    payload = {
        "seed": seed,
        "train": dataset.train_mask.tolist(),
        "val": dataset.val_mask.tolist(),
        "test": dataset.test_mask.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_split(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    payload = json.loads(Path(path).read_text())
    return tuple(
        np.asarray(payload[key], dtype=np.int64) for key in ("train", "val", "test")
    )


def synthetic_powerlaw(
    n: int,
    m_attach: int,
    num_classes: int,
    feature_dim: int,
    homophily: float,
    seed: int,
    *,
    intra_community: float = 0.9,
) -> GraphDataset:
    """Connected preferential-attachment graph with planted label communities.

    Each arriving node draws a community label, then attaches to
    ``min(t, m_attach)`` distinct earlier nodes. Targets are sampled
    degree-proportionally, restricted to the node's own community with
    probability ``intra_community`` (falling back to the whole graph while
    the community is empty). Features are a convex mix
    ``homophily * onehot(label) + (1 - homophily) * gaussian noise``, so
    ``homophily=1`` yields noiseless, perfectly separating features.
    """
    if m_attach < 1 or n <= m_attach:
        raise ValueError("need n > m_attach >= 1")
    if num_classes < 1:
        raise ValueError("need at least one class")
    if feature_dim < num_classes:
        raise ValueError("feature_dim must be at least num_classes")
    if not 0.0 <= homophily <= 1.0:
        raise ValueError("homophily must lie in [0, 1]")
    if not 0.0 <= intra_community <= 1.0:
        raise ValueError("intra_community must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    labels = rng.integers(0, num_classes, size=n)

    # degree-proportional sampling via endpoint lists: each stored endpoint
    # is one unit of degree, so a uniform draw from a list is a draw
    # proportional to degree
    all_endpoints: list[int] = [0]
    community_endpoints: list[list[int]] = [[] for _ in range(num_classes)]
    community_endpoints[labels[0]].append(0)
    edges: list[tuple[int, int]] = []

    for node in range(1, n):
        community = community_endpoints[labels[node]]
        targets: set[int] = set()
        wanted = min(node, m_attach)
        attempts = 0
        while len(targets) < wanted:
            attempts += 1
            pool = community if (community and rng.random() < intra_community) else all_endpoints
            candidate = pool[rng.integers(len(pool))]
            if candidate != node:
                targets.add(candidate)
            if attempts > 50 * wanted:
                # tiny candidate pools can stall the rejection loop
                rest = np.setdiff1d(np.arange(node), np.fromiter(targets, dtype=np.int64))
                targets.update(rng.choice(rest, wanted - len(targets), replace=False))
        for target in targets:
            edges.append((node, target))
            for endpoint in (node, target):
                all_endpoints.append(endpoint)
                community_endpoints[labels[endpoint]].append(endpoint)

    A = from_edge_list(edges, n, symmetrize=True)

    onehot = np.zeros((n, feature_dim))
    onehot[np.arange(n), labels] = 1.0
    noise = rng.standard_normal((n, feature_dim))
    X = homophily * onehot + (1.0 - homophily) * noise
    return GraphDataset(A=A, X=X, labels=labels.astype(np.int64))


def is_connected(A: SparseMatrix) -> bool:
    """Breadth-first reachability from node 0."""
    n = A.n_rows
    if n == 0:
        return True
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    queue = deque([0])
    while queue:
        node = queue.popleft()
        neighbors, _ = A.row(node)
        for neighbor in neighbors[~seen[neighbors]]:
            seen[neighbor] = True
            queue.append(int(neighbor))
    return bool(seen.all())
