"""Reference solvers used to check the stagewise path.

None of these share the stagewise machinery: the lasso oracle is plain
proximal gradient, the box dual is solved by projected gradient, and the
1-D fused lasso has an exact dynamic program.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .losses import LossModel
from .structure import StructureMatrix


class OracleError(RuntimeError):
    pass


@dataclass(frozen=True)
class OracleSolution:
    beta: np.ndarray
    u: np.ndarray
    kkt_residual: float
    iterations: int


def soft_threshold(z, t):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def lasso_kkt_residual(grad, beta, lam, penalized=None) -> float:
    """Largest violation of the lasso subgradient conditions."""
    grad, beta = np.asarray(grad), np.asarray(beta)
    pen = np.ones(beta.size, bool) if penalized is None else np.asarray(penalized, bool)
    res = np.where(beta != 0, np.abs(grad + lam * np.sign(beta)), np.maximum(np.abs(grad) - lam, 0.0))
    res = np.where(pen, res, np.abs(grad))
    return float(res.max()) if res.size else 0.0


def ista_lasso(model: LossModel, lam: float, tol: float = 1e-12, beta0=None,
               penalized=None, max_iter: int = 1_000_000) -> OracleSolution:
    """Proximal gradient for ``f(beta) + lam * sum_{j penalized} |beta_j|``.

    Stops when successive objective values differ by at most ``tol``.
    ``penalized`` masks unpenalized coordinates (e.g. an intercept).
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    pen = np.ones(model.p, bool) if penalized is None else np.asarray(penalized, bool)
    L = model.lipschitz
    beta = np.zeros(model.p) if beta0 is None else np.array(beta0, dtype=float)

    def obj(b):
        return model.value(b) + lam * np.abs(b[pen]).sum()

    F = obj(beta)
    for it in range(1, max_iter + 1):
        z = beta - model.gradient(beta) / L
        beta = np.where(pen, soft_threshold(z, lam / L), z)
        F_new = obj(beta)
        if abs(F - F_new) <= tol:
            g = model.gradient(beta)
            u = np.where(pen, -g, 0.0)
            return OracleSolution(beta, u[pen], lasso_kkt_residual(g, beta, lam, pen), it)
        F = F_new
    raise OracleError(f"ISTA did not converge in {max_iter} iterations")


def projected_gradient_box(ytilde, D: StructureMatrix, lam: float, tol: float = 1e-12,
                           u0=None, max_iter: int = 1_000_000) -> np.ndarray:
    """Minimise ``0.5 * ||ytilde - D^T u||^2`` over ``||u||_inf <= lam``.

    Plain projected gradient with step ``1 / sigma_max(D D^T)``; stops when
    the norm of the projected-gradient map drops to ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    ytilde = np.asarray(ytilde, dtype=float)
    if D.m == 0 or lam == 0:
        return np.zeros(D.m)
    Dd, G = D.dense, D.gram
    Lg = D.sigma_max_sq
    if Lg == 0:
        return np.zeros(D.m)
    b = Dd @ ytilde
    u = np.zeros(D.m) if u0 is None else np.clip(np.asarray(u0, dtype=float), -lam, lam)
    for _ in range(max_iter):
        g = G @ u - b
        u_new = np.clip(u - g / Lg, -lam, lam)
        if Lg * np.linalg.norm(u_new - u) <= tol:
            return u_new
        u = u_new
    raise OracleError(f"projected gradient did not converge in {max_iter} iterations")


def generalized_kkt(model: LossModel, D: StructureMatrix, beta, u, lam) -> tuple[float, float]:
    """Recompute ``||grad f(beta) + D'u||`` and the complementary-slackness gap.

    The second number is ``max_i (lam |D_i beta| - u_i D_i beta)``, which is
    zero exactly when ``u_i = lam * sign(D_i beta)`` on every nonzero row.
    """
    beta, u = np.asarray(beta, dtype=float), np.asarray(u, dtype=float)
    stat = float(np.linalg.norm(model.gradient(beta) + D.rmatvec(u)))
    Db = D.matvec(beta)
    cs = float(np.max(lam * np.abs(Db) - u * Db)) if D.m else 0.0
    return stat, max(cs, 0.0)


def exact_fixed_lambda(model: LossModel, D: StructureMatrix, lam: float, tol: float = 1e-9,
                       beta0=None, u0=None, max_iter: int = 200_000) -> OracleSolution:
    """Fully converged MM at one ``lambda``.

    Each round majorizes at the current ``beta`` with the path's ``L``, solves
    the box dual by projected gradient, and applies the stationarity update.
    Iteration stops once ``L * ||beta_new - beta|| <= tol``, i.e. once the
    stationarity residual of the pair is below ``tol``.
    """
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    L = model.lipschitz
    beta = np.zeros(model.p) if beta0 is None else np.array(beta0, dtype=float)
    u = None if u0 is None else np.asarray(u0, dtype=float)
    inner_tol = max(tol * 1e-2, 1e-13)
    for it in range(1, max_iter + 1):
        ytilde = L * beta - model.gradient(beta)
        u = projected_gradient_box(ytilde, D, lam, inner_tol, u0=u)
        beta_new = (ytilde - D.rmatvec(u)) / L
        step = L * np.linalg.norm(beta_new - beta)
        beta = beta_new
        if step <= tol:
            stat, cs = generalized_kkt(model, D, beta, u, lam)
            return OracleSolution(beta, u, max(stat, cs), it)
    stat, cs = generalized_kkt(model, D, beta, u, lam)
    raise OracleError(f"MM oracle did not converge: stationarity {stat:.3e}, slackness {cs:.3e}")


def grid_brute_force(ytilde, D: StructureMatrix, lam: float, grid_step: float,
                     chunk: int = 1 << 20) -> np.ndarray:
    """Exhaustive minimisation of ``0.5 * ||ytilde - D^T u||^2`` on a box grid (``m <= 3``)."""
    if D.m > 3:
        raise ValueError("grid brute force is limited to m <= 3")
    if grid_step <= 0:
        raise ValueError("grid_step must be positive")
    ytilde = np.asarray(ytilde, dtype=float)
    if D.m == 0:
        return np.zeros(0)
    axis = -lam + grid_step * np.arange(int(np.floor(2 * lam / grid_step + 1e-9)) + 1)
    if lam - axis[-1] > 1e-12 * max(1.0, lam):
        axis = np.append(axis, lam)         # keep the upper face of the box
    k = axis.size
    Dd = D.dense
    total = k ** D.m
    best, best_val = None, np.inf
    for start in range(0, total, chunk):
        idx = np.arange(start, min(total, start + chunk))
        U = np.stack([axis[(idx // k**j) % k] for j in range(D.m)], axis=1)
        R = ytilde - U @ Dd
        vals = 0.5 * np.einsum("ij,ij->i", R, R)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best = vals[j], U[j].copy()
    return best


def fused_lasso_dp(y, lam: float) -> np.ndarray:
    """Exact ``argmin 0.5 ||y - b||^2 + lam * sum |b_{i+1} - b_i|``.

    Dynamic programming over piecewise-linear derivative messages, with the
    knots stored in a deque-like array that grows from the middle.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    if n <= 1:
        return y.copy()
    x = np.zeros(2 * n)
    a = np.zeros(2 * n)
    b = np.zeros(2 * n)
    tm = np.zeros(n - 1)
    tp = np.zeros(n - 1)

    tm[0] = -lam + y[0]
    tp[0] = lam + y[0]
    lo_i, hi_i = n - 1, n
    x[lo_i], x[hi_i] = tm[0], tp[0]
    a[lo_i], b[lo_i] = 1.0, -y[0] + lam
    a[hi_i], b[hi_i] = -1.0, y[0] + lam
    afirst, bfirst = 1.0, -lam - y[1]
    alast, blast = -1.0, -lam + y[1]

    for k in range(1, n - 1):
        lo = lo_i
        while lo <= hi_i:
            if afirst * x[lo] + bfirst > -lam:
                break
            afirst += a[lo]
            bfirst += b[lo]
            lo += 1
        hi = hi_i
        while hi >= lo:
            if -alast * x[hi] - blast < lam:
                break
            alast += a[hi]
            blast += b[hi]
            hi -= 1
        tm[k] = (-lam - bfirst) / afirst
        tp[k] = (lam + blast) / (-alast)
        lo_i, hi_i = lo - 1, hi + 1
        x[lo_i], x[hi_i] = tm[k], tp[k]
        a[lo_i], b[lo_i] = afirst, bfirst + lam
        a[hi_i], b[hi_i] = alast, blast + lam
        afirst, bfirst = 1.0, -lam - y[k + 1]
        alast, blast = -1.0, -lam + y[k + 1]

    lo = lo_i
    while lo <= hi_i:
        if afirst * x[lo] + bfirst > 0:
            break
        afirst += a[lo]
        bfirst += b[lo]
        lo += 1
    beta = np.zeros(n)
    beta[-1] = -bfirst / afirst
    for k in range(n - 2, -1, -1):
        if beta[k + 1] > tp[k]:
            beta[k] = tp[k]
        elif beta[k + 1] < tm[k]:
            beta[k] = tm[k]
        else:
            beta[k] = beta[k + 1]
    return beta
