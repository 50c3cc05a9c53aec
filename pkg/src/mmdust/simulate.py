"""Synthetic designs for the logistic, Cox and tree-aggregated Cox experiments.

All generators draw from ``numpy.random.default_rng(seed)`` (PCG64), so a
given seed reproduces the same data on every platform numpy supports.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import Dataset
from .structure import AggregationTree, StructureMatrix, identity, pair_differences, vstack

DESIGNS = ("logistic_sec411", "cox_sec412", "cox_tree_appE")

LOGISTIC_B = np.array([-3, 3, -2, 2, -1, 1, 0.5, 0, 0, 0], dtype=float)
LOGISTIC_INTERCEPT = -4.0
COX_B = np.array([1, 1, 2, -2, -2, 3, 1.5, -0.5, 0, 0], dtype=float)
COX_PAIRS = ((1, 2), (2, 3), (4, 5))


@dataclass
class SimulatedData:
    dataset: Dataset
    coef: np.ndarray            # true eta coefficients on the original features
    intercept: float = 0.0
    tree: AggregationTree | None = None


def logistic_sec411(seed: int, n: int = 400) -> SimulatedData:
    """Bernoulli response with ``eta = -4 + x'b``, ``x ~ N(0, I_10)``."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, LOGISTIC_B.size))
    eta = LOGISTIC_INTERCEPT + X @ LOGISTIC_B
    y = (rng.uniform(size=n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
    return SimulatedData(Dataset(X, y, kind="logistic"), LOGISTIC_B.copy(), LOGISTIC_INTERCEPT)


def cox_sec412(seed: int, n: int = 400) -> SimulatedData:
    """Exponential event times with hazard ``0.1 * exp(x'b)``, censored by Exp(rate 0.9)."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, COX_B.size))
    eta = X @ COX_B
    T = -np.log(rng.uniform(size=n)) / (0.1 * np.exp(eta))
    C = rng.exponential(1.0 / 0.9, size=n)
    time = np.minimum(T, C)
    status = (T <= C).astype(int)
    return SimulatedData(Dataset(X, time=time, status=status, kind="cox"), COX_B.copy())


def cox_sec412_structure() -> StructureMatrix:
    """Three pairwise-difference rows stacked on ``I_10`` (13 x 10)."""
    return vstack([pair_differences(COX_PAIRS, COX_B.size), identity(COX_B.size)])


def fig5_tree() -> AggregationTree:
    """Five leaves: root 6 with children 8 (leaves 1-3) and 7 (leaves 4-5)."""
    parent = {1: 8, 2: 8, 3: 8, 4: 7, 5: 7, 7: 6, 8: 6, 6: 0}
    return AggregationTree(parent, {j: j for j in range(1, 6)})


def fig6_tree() -> AggregationTree:
    """42 leaves under 25 internal nodes.

    The root has four children. The first three each split into two nodes
    that again split into two, each of those holding three leaves; the
    fourth splits into two nodes of three leaves each. Leaves are numbered
    1..42 left to right and internal nodes from 43 in breadth-first order.
    """
    parent: dict[int, int] = {}
    nxt = [43]

    def new(par):
        u = nxt[0]
        nxt[0] += 1
        parent[u] = par
        return u

    root = new(0)
    level1 = [new(root) for _ in range(4)]
    level2 = {a: [new(a) for _ in range(2)] for a in level1}
    level3 = {b: [new(b) for _ in range(2)] for a in level1[:3] for b in level2[a]}
    leaf = 1
    holders = [c for a in level1[:3] for b in level2[a] for c in level3[b]] + level2[level1[3]]
    for h in holders:
        for _ in range(3):
            parent[leaf] = h
            leaf += 1
    return AggregationTree(parent, {j: j for j in range(1, leaf)})


def appE_coefficients(p0: int = 42) -> np.ndarray:
    b = np.zeros(p0)
    b[0:12] = 1.0
    b[12:18] = -2.0
    b[18:21] = 1.5
    b[21] = -1.5
    b[22] = -3.0
    b[24] = 3.0
    return b


def ar1_covariance(p: int, rho: float = 0.5) -> np.ndarray:
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def cox_tree_appE(seed: int, snr: float = 1.0, n: int = 300,
                  tree: AggregationTree | None = None) -> SimulatedData:
    """Log-normal event times on an AR(1) design, censored by Exp(rate 5000).

    ``sigma^2 = b' Sigma b / snr`` uses the population variance of ``eta``.
    """
    if not snr > 0:
        raise ValueError("snr must be positive")
    tree = fig6_tree() if tree is None else tree
    p0 = tree.n_features
    if p0 < 25:
        raise ValueError("the coefficient pattern needs at least 25 features")
    rng = np.random.default_rng(seed)
    Sigma = ar1_covariance(p0)
    X = rng.multivariate_normal(np.zeros(p0), Sigma, size=n, method="cholesky")
    b = appE_coefficients(p0)
    sigma = np.sqrt(b @ Sigma @ b / snr)
    eta = X @ b
    T = np.exp(eta + sigma * rng.standard_normal(n))
    C = rng.exponential(1.0 / 5000.0, size=n)
    time = np.minimum(T, C)
    status = (T <= C).astype(int)
    return SimulatedData(Dataset(X, time=time, status=status, kind="cox"), b, tree=tree)


def simulate_dataset(design: str, seed: int, **kw) -> SimulatedData:
    if design == "logistic_sec411":
        return logistic_sec411(seed, **kw)
    if design == "cox_sec412":
        return cox_sec412(seed, **kw)
    if design == "cox_tree_appE":
        return cox_tree_appE(seed, **kw)
    raise ValueError(f"unknown design {design!r}; choose from {', '.join(DESIGNS)}")
