"""Directed address graph, normalized sparse operator, and training inputs.

The transaction graph keeps direction and parallel-edge counts because the
behavioral features need them. Propagation uses a separate operator: a 0/1
adjacency, symmetrized by default (the symmetric normal form is only well
defined for symmetric matrices), with self-loops added so nodes retain their
own features. Both behaviors are flag-selectable for ablation.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

from .errors import ShapeMismatch
from .txmodel import Address, LabeledDataset

if TYPE_CHECKING:  # pragma: no cover - import cycle guard for annotations only
    from .evaluate import SplitMasks
    from .features import FeatureMatrix


@dataclass
class TxGraph:
    """Directed graph over addresses with per-edge transaction counts."""

    addresses: tuple[Address, ...]
    edges: np.ndarray          # (m, 2) int array of (src_id, dst_id)
    edge_weights: np.ndarray   # (m,) parallel-transaction counts
    node_index: dict[Address, int]

    def __post_init__(self):
        n = len(self.addresses)
        if self.edges.size and (self.edges.min() < 0 or self.edges.max() >= n):
            raise ShapeMismatch("edge endpoint out of range")
        pairs = {(int(s), int(d)) for s, d in self.edges}
        if len(pairs) != len(self.edges):
            raise ShapeMismatch("duplicate directed edge")
        if sorted(self.node_index.values()) != list(range(n)):
            raise ShapeMismatch("node_index is not a bijection onto 0..n-1")

    @property
    def n_nodes(self) -> int:
        return len(self.addresses)


def build_graph(ds: LabeledDataset) -> TxGraph:
    """One node per distinct endpoint (first-appearance order), one edge per
    distinct (sender, receiver) pair with the collapsed transaction count."""
    node_index: dict[Address, int] = {}
    addresses: list[Address] = []
    counts: dict[tuple[int, int], int] = {}
    for tx in ds.transactions:
        for addr in (tx.sender, tx.receiver):
            if addr not in node_index:
                node_index[addr] = len(addresses)
                addresses.append(addr)
        key = (node_index[tx.sender], node_index[tx.receiver])
        counts[key] = counts.get(key, 0) + 1
    if counts:
        edges = np.array(list(counts.keys()), dtype=np.int64)
        weights = np.array(list(counts.values()), dtype=np.int64)
    else:
        edges = np.empty((0, 2), dtype=np.int64)
        weights = np.empty((0,), dtype=np.int64)
    return TxGraph(tuple(addresses), edges, weights, node_index)


def write_edge_list(g: TxGraph, path: str | Path) -> None:
    """Dump `src_address dst_address weight` lines for external inspection."""
    with open(path, "w", encoding="utf-8") as fh:
        for (src, dst), w in zip(g.edges, g.edge_weights):
            fh.write(f"{g.addresses[int(src)]} {g.addresses[int(dst)]} {int(w)}\n")


@dataclass(eq=False)
class SparseMatrix:
    """Compressed-sparse-row matrix with float64 values."""

    n_rows: int
    n_cols: int
    indptr: np.ndarray   # (n_rows + 1,) int64, non-decreasing
    indices: np.ndarray  # (nnz,) int64 column ids, strictly increasing per row
    values: np.ndarray   # (nnz,) float64

    def __post_init__(self):
        self.indptr = np.asarray(self.indptr, dtype=np.int64)
        self.indices = np.asarray(self.indices, dtype=np.int64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.indptr.shape != (self.n_rows + 1,):
            raise ShapeMismatch("indptr has wrong length")
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise ShapeMismatch("indptr endpoints inconsistent with nnz")
        if np.any(np.diff(self.indptr) < 0):
            raise ShapeMismatch("indptr must be non-decreasing")
        if len(self.indices) != len(self.values):
            raise ShapeMismatch("indices/values length mismatch")
        if self.indices.size and (
            self.indices.min() < 0 or self.indices.max() >= self.n_cols
        ):
            raise ShapeMismatch("column id out of range")
        for r in range(self.n_rows):
            row = self.indices[self.indptr[r] : self.indptr[r + 1]]
            if row.size > 1 and np.any(np.diff(row) <= 0):
                raise ShapeMismatch(f"column ids not strictly increasing in row {r}")
        # Row id per stored entry; precomputed once for vectorized products.
        self._row_ids = np.repeat(
            np.arange(self.n_rows, dtype=np.int64), np.diff(self.indptr)
        )

    @property
    def nnz(self) -> int:
        return len(self.values)

    @classmethod
    def from_coo(
        cls,
        n_rows: int,
        n_cols: int,
        rows: np.ndarray,
        cols: np.ndarray,
        values: np.ndarray,
    ) -> "SparseMatrix":
        """Build CSR from triplets; duplicate coordinates are summed."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        order = np.lexsort((cols, rows))
        rows, cols, values = rows[order], cols[order], values[order]
        if len(rows):
            fresh = np.concatenate(
                ([True], (np.diff(rows) != 0) | (np.diff(cols) != 0))
            )
            group = np.cumsum(fresh) - 1
            merged = np.zeros(group[-1] + 1, dtype=np.float64)
            np.add.at(merged, group, values)
            rows, cols, values = rows[fresh], cols[fresh], merged
        indptr = np.zeros(n_rows + 1, dtype=np.int64)
        np.add.at(indptr, rows + 1, 1)
        indptr = np.cumsum(indptr)
        return cls(n_rows, n_cols, indptr, cols, values)

    def to_dense(self) -> np.ndarray:
        dense = np.zeros((self.n_rows, self.n_cols))
        dense[self._row_ids, self.indices] = self.values
        return dense

    def transpose(self) -> "SparseMatrix":
        return SparseMatrix.from_coo(
            self.n_cols, self.n_rows, self.indices, self._row_ids, self.values
        )


def spmv(m: SparseMatrix, dense: np.ndarray) -> np.ndarray:
    """Exact sparse @ dense product (dense may be a vector or a matrix)."""
    dense = np.asarray(dense, dtype=np.float64)
    if dense.shape[0] != m.n_cols:
        raise ShapeMismatch(
            f"operand has {dense.shape[0]} rows, matrix has {m.n_cols} columns"
        )
    out_shape = (m.n_rows,) + dense.shape[1:]
    out = np.zeros(out_shape)
    if m.nnz:
        contrib = m.values.reshape((-1,) + (1,) * (dense.ndim - 1)) * dense[m.indices]
        np.add.at(out, m._row_ids, contrib)
    return out


def normalized_adjacency(
    g: TxGraph, add_self_loops: bool = True, symmetrize: bool = True
) -> SparseMatrix:
    """Symmetric degree normalization of the 0/1 adjacency.

    With A the 0/1 adjacency (symmetrized via max(A, A^T) when requested) and
    A~ = A + I when self-loops are on, returns D^{-1/2} A~ D^{-1/2} where D is
    the diagonal of A~'s row sums. Rows of degree zero (possible only with
    self-loops off) come out as all-zero rows rather than dividing by zero.
    """
    n = g.n_nodes
    entries: dict[tuple[int, int], float] = {}
    for src, dst in g.edges:
        entries[(int(src), int(dst))] = 1.0
        if symmetrize:
            entries[(int(dst), int(src))] = 1.0
    if add_self_loops:
        for i in range(n):
            entries[(i, i)] = entries.get((i, i), 0.0) + 1.0

    degree = np.zeros(n)
    for (i, _j), a in entries.items():
        degree[i] += a
    inv_sqrt = np.zeros(n)
    positive = degree > 0
    inv_sqrt[positive] = 1.0 / np.sqrt(degree[positive])

    if not entries:
        return SparseMatrix.from_coo(
            n, n, np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64), np.empty(0)
        )
    rows = np.array([i for i, _ in entries], dtype=np.int64)
    cols = np.array([j for _, j in entries], dtype=np.int64)
    vals = np.array(
        [a * inv_sqrt[i] * inv_sqrt[j] for (i, j), a in entries.items()]
    )
    return SparseMatrix.from_coo(n, n, rows, cols, vals)


@dataclass
class GraphBatch:
    """Everything the classifier needs, packed and shape-checked."""

    features: "FeatureMatrix"
    norm_adj: SparseMatrix
    labels: np.ndarray       # (n,) int codes
    train_mask: np.ndarray   # (n,) bool
    test_mask: np.ndarray    # (n,) bool

    def __post_init__(self):
        n = self.norm_adj.n_rows
        if self.features.rows.shape[0] != n:
            raise ShapeMismatch(
                f"feature rows ({self.features.rows.shape[0]}) != node count ({n})"
            )
        if self.labels.shape != (n,):
            raise ShapeMismatch("label vector has wrong length")
        for mask in (self.train_mask, self.test_mask):
            if mask.shape != (n,) or mask.dtype != np.bool_:
                raise ShapeMismatch("masks must be boolean vectors over nodes")
        if np.any(self.train_mask & self.test_mask):
            raise ShapeMismatch("train and test masks overlap")


def to_training_inputs(
    g: TxGraph,
    X: "FeatureMatrix",
    ds: LabeledDataset,
    split: "SplitMasks",
    add_self_loops: bool = True,
    symmetrize: bool = True,
) -> GraphBatch:
    """Pack features, normalized adjacency, labels, and split masks."""
    if X.rows.shape[0] != g.n_nodes:
        raise ShapeMismatch(
            f"feature rows ({X.rows.shape[0]}) != node count ({g.n_nodes})"
        )
    labels = np.array(
        [int(ds.labels[addr]) for addr in g.addresses], dtype=np.int64
    )
    adj = normalized_adjacency(g, add_self_loops=add_self_loops, symmetrize=symmetrize)
    return GraphBatch(
        features=X,
        norm_adj=adj,
        labels=labels,
        train_mask=np.asarray(split.train_mask, dtype=bool),
        test_mask=np.asarray(split.test_mask, dtype=bool),
    )
