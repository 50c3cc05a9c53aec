"""Stagewise descent in the box-constrained dual.

The dual of a generalized lasso with a quadratic loss is a least-squares
problem over the box ``||u||_inf <= lambda``. Here it is attacked with
fixed-size coordinate moves: every step moves a single dual coordinate by
``+eps`` or ``-eps``, whichever feasible move lowers the objective most.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .structure import StructureMatrix

#: a move must lower the objective by more than this fraction of max(1, F)
STRICT_DECREASE = 1e-14
#: incremental residual refresh period (steps)
REFRESH_EVERY = 10_000
#: slack in the box membership test and in the argmax-tie test
BOX_TOL = 1e-12


class InfeasibleStart(ValueError):
    pass


@dataclass
class DualState:
    """Dual iterate with its residual ``ytilde - D^T u`` kept up to date."""

    u: np.ndarray
    bound: float
    residual: np.ndarray
    objective: float
    steps_taken: int = 0


@dataclass(frozen=True)
class GapReport:
    gap: float
    bound_rhs: float
    certified: bool


def _box_slack(bound: float) -> float:
    return BOX_TOL * max(1.0, abs(bound))


def dual_solver(ytilde, D: StructureMatrix, u0, Nd=None, eps: float = 0.01,
                bound: float | None = None) -> DualState:
    """Steepest feasible ``+-eps`` coordinate moves on ``||ytilde - D^T u||^2``.

    ``bound`` defaults to ``max|u0|``, the box used inside a path run.
    ``Nd=None`` runs until no feasible move strictly decreases the
    objective. Ties in the argmin go to the lowest coordinate, with the
    negative move before the positive one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    ytilde = np.asarray(ytilde, dtype=float)
    u = np.array(u0, dtype=float)
    if u.shape != (D.m,) or ytilde.shape != (D.p,):
        raise ValueError("dimension mismatch between ytilde, D and u0")
    if bound is None:
        bound = float(np.abs(u).max()) if u.size else 0.0
    slack = _box_slack(bound)
    if u.size and np.abs(u).max() > bound + slack:
        raise InfeasibleStart(f"max|u0| = {np.abs(u).max():g} exceeds the bound {bound:g}")
    Dd, G, q = D.dense, D.gram, D.row_sq_norms
    r = ytilde - Dd.T @ u
    F = float(r @ r)
    state = DualState(u, float(bound), r, F)
    if Nd is not None and Nd <= 0 or D.m == 0:
        return state
    c = Dd @ r
    m = D.m
    two_eps, eps2 = 2.0 * eps, eps * eps
    hi = bound + slack
    delta = np.empty(2 * m)
    steps = 0
    limit = np.inf if Nd is None else int(Nd)
    while steps < limit:
        # interleaved [minus_0, plus_0, minus_1, ...]: argmin keeps the tie order
        delta[0::2] = np.where(u - eps >= -hi, two_eps * c + eps2 * q, np.inf)
        delta[1::2] = np.where(u + eps <= hi, -two_eps * c + eps2 * q, np.inf)
        k = int(np.argmin(delta))
        best = delta[k]
        if not best < -STRICT_DECREASE * max(1.0, F):
            break
        i, s = k >> 1, (eps if k & 1 else -eps)
        u[i] += s
        r -= s * Dd[i]
        c -= s * G[:, i]
        F += best
        steps += 1
        if steps % REFRESH_EVERY == 0:
            r = ytilde - Dd.T @ u
            c = Dd @ r
            F = float(r @ r)
    state.u, state.residual, state.steps_taken = u, r, steps
    state.objective = float(r @ r)
    return state


def duality_gap(ytilde, D: StructureMatrix, u, lam: float, eps: float | None = None) -> GapReport:
    """Frank-Wolfe gap of ``0.5 * ||ytilde - D^T u||^2`` over the box.

    ``gap = g'u + lam * ||g||_1`` with ``g = -D (ytilde - D^T u)``; it bounds
    the suboptimality of ``u``. With ``eps`` the report also carries the
    no-descent bound ``sigma_max(D D^T) * lam * m * eps``.
    """
    u = np.asarray(u, dtype=float)
    if u.size and np.abs(u).max() > lam + _box_slack(lam):
        raise InfeasibleStart("u violates the box")
    g = -D.matvec(np.asarray(ytilde, dtype=float) - D.rmatvec(u))
    gap = float(g @ u + lam * np.abs(g).sum())
    if eps is None:
        return GapReport(gap, float("nan"), False)
    rhs = D.sigma_max_sq * lam * D.m * eps
    return GapReport(gap, rhs, gap <= rhs)


def least_norm_dual(ytilde, D: StructureMatrix, tol: float | None = None) -> np.ndarray:
    """Minimum-norm minimiser of ``||ytilde - D^T u||`` via an SVD pseudo-inverse.

    ``tol`` is relative to the largest singular value of ``D``.
    """
    ytilde = np.asarray(ytilde, dtype=float)
    if D.m == 0:
        return np.zeros(0)
    U, s, Vt = np.linalg.svd(D.dense, full_matrices=False)
    if tol is None:
        tol = max(D.m, D.p) * np.finfo(float).eps
    keep = s > tol * s[0] if s[0] > 0 else np.zeros_like(s, dtype=bool)
    # D^T = V S U^T  =>  (D^T)^+ = U S^-1 V^T
    return U[:, keep] @ ((Vt[keep] @ ytilde) / s[keep])


@dataclass(frozen=True)
class QuadraticDualPath:
    """Output of :func:`box_path_quadratic`: one row per ``lambda`` decrement."""

    lambdas: np.ndarray
    u: np.ndarray
    beta: np.ndarray

    def __len__(self):
        return self.lambdas.size

    def __iter__(self):
        return iter(zip(self.lambdas, self.u))


def box_path_quadratic(X, y, D: StructureMatrix, eps: float, ridge: float = 1e-6) -> QuadraticDualPath:
    """Dual stagewise path for ``0.5 * ||y - X b||^2 + lam * ||D b||_1``.

    The dual loss is ``0.5 * (X'y - D'u)' P (X'y - D'u)`` with
    ``P = (X'X)^-1``. When ``X`` is rank deficient a ridge term
    ``ridge * ||b||^2`` is added to the primal so that ``P`` exists. Points
    are emitted whenever no feasible move remains and ``lambda`` is about to
    drop by ``eps``; the run stops once ``lambda <= eps``.
    """
    from .path import backward_step, round_to_grid

    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    p = X.shape[1]
    H = X.T @ X
    if np.linalg.matrix_rank(X) < p:
        H = H + 2.0 * ridge * np.eye(p)
    P = np.linalg.inv(H)
    P = 0.5 * (P + P.T)
    b = X.T @ y
    Dd = D.dense
    PDt = P @ Dd.T
    Q = Dd @ PDt                     # D P D^T
    qd = np.diag(Q).copy()

    # unconstrained minimiser: least-norm solution of min ||R (b - D'u)||, P = R'R
    R = np.linalg.cholesky(P).T
    uF = np.linalg.lstsq(R @ Dd.T, R @ b, rcond=None)[0]

    u = round_to_grid(uF, eps)
    u, _ = backward_step(u, eps)
    k = int(np.rint(np.abs(u).max() / eps)) if u.size else 0

    w = P @ (b - Dd.T @ u)            # primal beta for the current u
    c = Dd @ w                        # minus the dual gradient
    F = 0.5 * float((b - Dd.T @ u) @ w)
    lams, us, betas = [], [], []
    two = 2 * D.m
    delta = np.empty(two)
    steps = 0
    while k * eps > eps:
        lam = k * eps
        hi = lam + _box_slack(lam)
        while True:
            delta[0::2] = np.where(u - eps >= -hi, eps * c + 0.5 * eps * eps * qd, np.inf)
            delta[1::2] = np.where(u + eps <= hi, -eps * c + 0.5 * eps * eps * qd, np.inf)
            j = int(np.argmin(delta))
            if not delta[j] < -STRICT_DECREASE * max(1.0, abs(F)):
                break
            i, s = j >> 1, (eps if j & 1 else -eps)
            u[i] += s
            w -= s * PDt[:, i]
            c -= s * Q[:, i]
            F += delta[j]
            steps += 1
            if steps % REFRESH_EVERY == 0:
                w = P @ (b - Dd.T @ u)
                c = Dd @ w
                F = 0.5 * float((b - Dd.T @ u) @ w)
        lams.append(lam)
        us.append(u.copy())
        betas.append(w.copy())
        u, _ = backward_step(u, eps)
        u = round_to_grid(u, eps)
        k -= 1
        w = P @ (b - Dd.T @ u)
        c = Dd @ w
        F = 0.5 * float((b - Dd.T @ u) @ w)
    return QuadraticDualPath(np.array(lams), np.array(us).reshape(-1, D.m), np.array(betas).reshape(-1, p))
