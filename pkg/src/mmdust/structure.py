"""Structural penalty matrices.

A :class:`StructureMatrix` is the ``m x p`` matrix ``D`` in the penalty
``lambda * ||D beta||_1``.  Entries are kept as sparse triplets; dense and
CSR views, row norms and the Gram matrix ``D D^T`` are built lazily because
the dual inner loop needs fast row access.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp


class StructureError(ValueError):
    """Raised for malformed structure matrices, trees or structure files."""


class StructureMatrix:
    """Sparse ``m x p`` penalty matrix stored as triplets.

    Parameters
    ----------
    m, p : int
        Shape of the matrix.
    rows, cols, vals : array_like
        Zero-based triplets. Duplicate ``(row, col)`` pairs are rejected and
        explicit zeros are dropped.
    """

    def __init__(self, m: int, p: int, rows, cols, vals):
        m, p = int(m), int(p)
        if m < 0 or p < 1:
            raise StructureError(f"invalid shape ({m}, {p})")
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        vals = np.asarray(vals, dtype=float).ravel()
        if not (rows.shape == cols.shape == vals.shape):
            raise StructureError("triplet arrays must have equal length")
        if rows.size:
            if rows.min() < 0 or rows.max() >= m:
                raise StructureError("row index out of range")
            if cols.min() < 0 or cols.max() >= p:
                raise StructureError("column index out of range")
            keys = rows * p + cols
            if np.unique(keys).size != keys.size:
                raise StructureError("duplicate (row, col) triplets")
        keep = vals != 0.0
        order = np.lexsort((cols[keep], rows[keep]))
        self.m = m
        self.p = p
        self.rows = rows[keep][order]
        self.cols = cols[keep][order]
        self.vals = vals[keep][order]
        for a in (self.rows, self.cols, self.vals):
            a.flags.writeable = False

    @classmethod
    def from_dense(cls, D) -> "StructureMatrix":
        D = np.atleast_2d(np.asarray(D, dtype=float))
        r, c = np.nonzero(D)
        return cls(D.shape[0], D.shape[1], r, c, D[r, c])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.p)

    @property
    def nnz(self) -> int:
        return int(self.vals.size)

    def __repr__(self) -> str:
        return f"StructureMatrix(m={self.m}, p={self.p}, nnz={self.nnz})"

    @cached_property
    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix((self.vals, (self.rows, self.cols)), shape=self.shape)

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        out[self.rows, self.cols] = self.vals
        out.flags.writeable = False
        return out

    @cached_property
    def row_sq_norms(self) -> np.ndarray:
        """Squared Euclidean norm of every row ``d_i``."""
        out = np.bincount(self.rows, weights=self.vals**2, minlength=self.m)
        out.flags.writeable = False
        return out

    @cached_property
    def gram(self) -> np.ndarray:
        """Dense ``D D^T``."""
        G = self.dense @ self.dense.T
        G.flags.writeable = False
        return G

    @cached_property
    def sigma_max_sq(self) -> float:
        """Largest eigenvalue of ``D D^T`` (the dual smoothness constant)."""
        if self.m == 0:
            return 0.0
        return float(np.linalg.norm(self.dense, 2) ** 2)

    def matvec(self, beta) -> np.ndarray:
        """``D @ beta``."""
        return self.csr @ np.asarray(beta, dtype=float)

    def rmatvec(self, u) -> np.ndarray:
        """``D.T @ u``."""
        return self.csr.T @ np.asarray(u, dtype=float)

    def penalty(self, beta) -> float:
        """``||D beta||_1``."""
        return float(np.abs(self.matvec(beta)).sum())

    def row(self, i: int) -> np.ndarray:
        return self.dense[i]

    def triplets(self) -> Iterable[tuple[int, int, float]]:
        return zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist())

    def delete_rows(self, mask) -> "StructureMatrix":
        """Return the matrix with the rows flagged in ``mask`` removed."""
        mask = np.asarray(mask, dtype=bool)
        keep_rows = np.flatnonzero(~mask)
        remap = -np.ones(self.m, dtype=np.int64)
        remap[keep_rows] = np.arange(keep_rows.size)
        sel = remap[self.rows] >= 0
        return StructureMatrix(keep_rows.size, self.p, remap[self.rows[sel]], self.cols[sel], self.vals[sel])

    def with_zero_columns(self, k: int = 1) -> "StructureMatrix":
        """Append ``k`` all-zero columns (unpenalized coefficients)."""
        return StructureMatrix(self.m, self.p + k, self.rows, self.cols, self.vals)


def vstack(blocks: Sequence[StructureMatrix]) -> StructureMatrix:
    """Stack structure matrices with equal column count on top of each other."""
    p = blocks[0].p
    if any(b.p != p for b in blocks):
        raise StructureError("blocks must share the column count")
    rows, cols, vals, offset = [], [], [], 0
    for b in blocks:
        rows.append(b.rows + offset)
        cols.append(b.cols)
        vals.append(b.vals)
        offset += b.m
    return StructureMatrix(offset, p, np.concatenate(rows), np.concatenate(cols), np.concatenate(vals))


def identity(p: int) -> StructureMatrix:
    idx = np.arange(p)
    return StructureMatrix(p, p, idx, idx, np.ones(p))


def chain_difference(p: int) -> StructureMatrix:
    """First differences ``beta_i - beta_{i+1}`` on consecutive coordinates."""
    if p < 1:
        raise StructureError("p must be positive")
    i = np.arange(p - 1)
    return StructureMatrix(
        p - 1, p, np.concatenate([i, i]), np.concatenate([i, i + 1]),
        np.concatenate([np.ones(p - 1), -np.ones(p - 1)]),
    )


def pair_differences(pairs: Iterable[tuple[int, int]], p: int) -> StructureMatrix:
    """One row ``beta_a - beta_b`` per pair; pairs are 1-indexed."""
    pairs = [(int(a), int(b)) for a, b in pairs]
    for a, b in pairs:
        if not (1 <= a <= p and 1 <= b <= p) or a == b:
            raise StructureError(f"invalid pair ({a}, {b}) for p={p}")
    k = len(pairs)
    rows = np.repeat(np.arange(k), 2)
    cols = np.array([c - 1 for ab in pairs for c in ab], dtype=np.int64)
    vals = np.tile([1.0, -1.0], k)
    return StructureMatrix(k, p, rows, cols, vals)


def read_triplets(path) -> StructureMatrix:
    """Read the triplet format: header ``m p nnz`` then 1-indexed ``row col value`` lines."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 3:
        raise StructureError(f"{path}: header must be 'm p nnz'")
    m, p, nnz = (int(v) for v in lines[0])
    body = lines[1:]
    if len(body) != nnz:
        raise StructureError(f"{path}: header declares {nnz} entries, found {len(body)}")
    if any(len(b) != 3 for b in body):
        raise StructureError(f"{path}: entry lines must be 'row col value'")
    rows = [int(b[0]) - 1 for b in body]
    cols = [int(b[1]) - 1 for b in body]
    vals = [float(b[2]) for b in body]
    return StructureMatrix(m, p, rows, cols, vals)


def write_triplets(D: StructureMatrix, path) -> None:
    out = [f"{D.m} {D.p} {D.nnz}"]
    out += [f"{r + 1} {c + 1} {v!r}" for r, c, v in D.triplets()]
    Path(path).write_text("\n".join(out) + "\n")


def build_structure(kind: str, p: int | None = None, *, pairs=None, path=None) -> StructureMatrix:
    """Dispatch on a builder name: ``identity``, ``chain``, ``pairs`` or ``triplets``."""
    if kind == "identity":
        return identity(p)
    if kind in ("chain", "chain_difference"):
        return chain_difference(p)
    if kind in ("pairs", "pair_differences"):
        return pair_differences(pairs, p)
    if kind == "triplets":
        D = read_triplets(path)
        if p is not None and D.p != p:
            raise StructureError(f"triplet file has {D.p} columns, expected {p}")
        return D
    raise StructureError(f"unknown structure kind {kind!r}")


def numerical_rank(D: StructureMatrix, tol: float | None = None) -> int:
    if D.m == 0:
        return 0
    s = np.linalg.svd(D.dense, compute_uv=False)
    if tol is None:
        tol = max(D.m, D.p) * np.finfo(float).eps
    return int((s > tol * s[0]).sum()) if s[0] > 0 else 0


def null_space_basis(D: StructureMatrix, tol: float | None = None) -> np.ndarray:
    """Orthonormal basis (``p x q``) of the null space of ``D``.

    ``tol`` is relative to the largest singular value; the default is
    ``max(m, p) * machine_eps``.
    """
    if D.m == 0:
        return np.eye(D.p)
    _, s, Vt = np.linalg.svd(D.dense, full_matrices=True)
    if tol is None:
        tol = max(D.m, D.p) * np.finfo(float).eps
    rank = int((s > tol * s[0]).sum()) if s.size and s[0] > 0 else 0
    return Vt[rank:].T.copy()


@dataclass(frozen=True)
class AggregationTree:
    """Rooted tree over the original features.

    ``parent`` maps every node id to its parent id (``0`` for the root) and
    ``leaf_feature`` maps leaf node ids to 1-based feature indices.
    """

    parent: dict[int, int]
    leaf_feature: dict[int, int]
    children: dict[int, list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        parent = {int(k): int(v) for k, v in self.parent.items()}
        if 0 in parent:
            raise StructureError("node id 0 is reserved for 'no parent'")
        roots = [u for u, par in parent.items() if par == 0]
        if len(roots) != 1:
            raise StructureError(f"tree must have exactly one root, found {len(roots)}")
        children: dict[int, list[int]] = {u: [] for u in parent}
        for u, par in parent.items():
            if par == 0:
                continue
            if par not in parent:
                raise StructureError(f"node {u} has unknown parent {par}")
            children[par].append(u)
        for v in children.values():
            v.sort()
        # reachability from the root rules out cycles
        seen, queue = set(), deque(roots)
        while queue:
            u = queue.popleft()
            if u in seen:
                raise StructureError("tree contains a cycle")
            seen.add(u)
            queue.extend(children[u])
        if len(seen) != len(parent):
            raise StructureError("tree is disconnected or cyclic")
        leaves = {u for u, c in children.items() if not c}
        lf = {int(k): int(v) for k, v in self.leaf_feature.items()}
        if set(lf) != leaves:
            raise StructureError("every leaf (and only leaves) must map to a feature")
        feats = sorted(lf.values())
        if feats != list(range(1, len(feats) + 1)):
            raise StructureError("leaf features must be a permutation of 1..p0")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "leaf_feature", lf)
        object.__setattr__(self, "children", children)

    @property
    def root(self) -> int:
        return next(u for u, par in self.parent.items() if par == 0)

    @property
    def n_nodes(self) -> int:
        return len(self.parent)

    @property
    def n_features(self) -> int:
        return len(self.leaf_feature)

    def node_order(self) -> list[int]:
        """Column order for the node coefficients.

        Leaves come first in feature order, then internal nodes breadth-first
        from the root with children visited by ascending node id.
        """
        leaves = sorted(self.leaf_feature, key=self.leaf_feature.get)
        internal, queue = [], deque([self.root])
        while queue:
            u = queue.popleft()
            if self.children[u]:
                internal.append(u)
                queue.extend(self.children[u])
        return leaves + internal

    def ancestors(self, u: int) -> list[int]:
        out = []
        while self.parent[u] != 0:
            u = self.parent[u]
            out.append(u)
        return out


def read_tree(path) -> AggregationTree:
    """Read ``node_id parent_id [feature_id]`` lines; the root has parent 0."""
    parent, leaf_feature = {}, {}
    for lineno, ln in enumerate(Path(path).read_text().splitlines(), 1):
        parts = ln.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) not in (2, 3):
            raise StructureError(f"{path}:{lineno}: expected 'node parent [feature]'")
        u = int(parts[0])
        if u in parent:
            raise StructureError(f"{path}:{lineno}: duplicate node {u}")
        parent[u] = int(parts[1])
        if len(parts) == 3:
            leaf_feature[u] = int(parts[2])
    return AggregationTree(parent, leaf_feature)


def write_tree(tree: AggregationTree, path) -> None:
    lines = []
    for u in sorted(tree.parent):
        f = tree.leaf_feature.get(u)
        lines.append(f"{u} {tree.parent[u]}" + (f" {f}" if f is not None else ""))
    Path(path).write_text("\n".join(lines) + "\n")


def tree_to_matrices(tree: AggregationTree) -> tuple[StructureMatrix, StructureMatrix, list[int]]:
    """Aggregation matrix ``A`` (``p0 x |T|``), penalty ``D = [I; A]`` and the node order.

    ``A[j, k] = 1`` iff node ``order[k]`` is leaf ``j`` or one of its ancestors,
    so ``beta = A @ gamma``.
    """
    order = tree.node_order()
    col = {u: k for k, u in enumerate(order)}
    rows, cols = [], []
    for leaf, feat in tree.leaf_feature.items():
        for u in [leaf] + tree.ancestors(leaf):
            rows.append(feat - 1)
            cols.append(col[u])
    T = len(order)
    A = StructureMatrix(tree.n_features, T, rows, cols, np.ones(len(rows)))
    return A, vstack([identity(T), A]), order
