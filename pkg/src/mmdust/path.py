"""Majorization-minimization dual stagewise path (MM-DUST).

The path starts at the fully penalized end, where ``D beta = 0``, and walks
``lambda`` down a grid of spacing ``eps``. At every grid value the loss is
replaced by its isotropic quadratic majorizer. The majorized problem is
attacked through a few stagewise dual moves, and the primal is recovered
from primal-dual stationarity.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dual import dual_solver, least_norm_dual
from .losses import LossModel, objective_value
from .structure import StructureMatrix, null_space_basis

log = logging.getLogger(__name__)

TIE_TOL = 1e-12


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class PathConfig:
    eps: float
    Nm: int = 1
    Nd: int | None = 15             # None: run each dual solve to no descent
    ridge_delta: float = 1e-6
    boundary_tol: float = 1e-9
    early_stop: int | None = None   # run length K for the AIC rule, None disables it
    max_points: int | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.Nm < 1 or (self.Nd is not None and self.Nd < 1):
            raise ValueError("Nm and Nd must be at least 1")
        if self.early_stop is not None and self.early_stop < 1:
            raise ValueError("early-stop run length must be at least 1")


@dataclass
class PathPoint:
    lam: float
    grid_index: int
    beta: np.ndarray
    u: np.ndarray
    objective: float
    df: int
    aic: float
    accepted_inner_rounds: int = 0


@dataclass
class SolutionPath:
    points: list[PathPoint]
    eps: float
    L: float
    stopped_early: bool = False
    stop_reason: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    @property
    def lambdas(self) -> np.ndarray:
        return np.array([pt.lam for pt in self.points])

    @property
    def betas(self) -> np.ndarray:
        return np.array([pt.beta for pt in self.points])

    @property
    def us(self) -> np.ndarray:
        return np.array([pt.u for pt in self.points])


def round_to_grid(u, eps: float) -> np.ndarray:
    """Nearest multiple of ``eps``; exact half-way values go toward zero."""
    u = np.asarray(u, dtype=float)
    k = np.ceil(np.abs(u) / eps - 0.5)
    return np.sign(u) * k * eps


def backward_step(u, eps: float) -> tuple[np.ndarray, float]:
    """Shrink every coordinate tied at the max magnitude by ``eps``."""
    u = np.array(u, dtype=float)
    if u.size == 0:
        return u, -eps
    a = np.abs(u)
    top = a.max()
    K = a >= top - TIE_TOL * max(1.0, top)
    # rebuild from the grid index so repeated steps do not drift off k * eps
    u[K] = np.sign(u[K]) * (np.rint(a[K] / eps) - 1) * eps
    return u, top - eps


def _newton(fun, grad, hess, s0, tol, max_iter, ridge):
    """Damped Newton with Armijo backtracking.

    Returns ``(s, gradient norm, used_ridge)``; adds ``ridge * ||s||^2``
    once the Hessian is singular or the line search stalls.
    """
    s = s0.copy()
    use_ridge = False

    def F(x):
        return fun(x) + (ridge * x @ x if use_ridge else 0.0)

    def G(x):
        return grad(x) + (2 * ridge * x if use_ridge else 0.0)

    for it in range(max_iter):
        g = G(s)
        gn = float(np.linalg.norm(g))
        if gn <= tol:
            return s, gn, use_ridge
        H = hess(s) + (2 * ridge * np.eye(s.size) if use_ridge else 0.0)
        try:
            if np.linalg.cond(H) > 1e12:
                raise np.linalg.LinAlgError
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            if not use_ridge:
                use_ridge = True
                continue
            step = g
        f0, t, dec = F(s), 1.0, float(g @ step)
        # near the optimum the predicted decrease drops below the rounding noise of f
        noise = 8 * np.finfo(float).eps * max(1.0, abs(f0))
        while t > 1e-12:
            cand = s - t * step
            fc = F(cand)
            if fc <= f0 - 1e-4 * t * dec + noise:
                break
            t *= 0.5
        else:
            if dec <= 1e-28 * max(1.0, abs(f0)):
                # already at machine precision
                return s, gn, use_ridge
            if not use_ridge:
                use_ridge = True
                continue
            raise ConvergenceError(f"line search stalled, gradient norm {gn:.3e}")
        s = cand
        if it == 100 and not use_ridge:
            # slow progress usually means an unbounded (separable) direction
            use_ridge = True
    g = G(s)
    raise ConvergenceError(f"Newton did not converge in {max_iter} iterations (gradient norm {np.linalg.norm(g):.3e})")


def initial_fit(model: LossModel, D: StructureMatrix, ridge_delta: float = 1e-6,
                tol: float = 1e-10, max_iter: int = 500) -> np.ndarray:
    """Minimise the loss over the null space of ``D``.

    Returns zero when ``D`` has full column rank.
    """
    V = null_space_basis(D)
    if V.shape[1] == 0:
        return np.zeros(model.p)
    reduced = LossModel(model.dataset, model.kind, design=model.X @ V)
    s, gn, ridged = _newton(reduced.value, reduced.gradient, reduced.hessian,
                            np.zeros(V.shape[1]), tol, max_iter, ridge_delta)
    if ridged:
        log.info("initial fit used the ridge fallback (delta=%g)", ridge_delta)
    return V @ s


def degrees_of_freedom(D: StructureMatrix, u, lam: float, boundary_tol: float = 1e-9,
                       _cache: dict | None = None) -> int:
    """Nullity of ``D`` after deleting the rows whose dual sits on the box edge."""
    u = np.asarray(u, dtype=float)
    tol = boundary_tol * max(1.0, lam)
    on_edge = np.abs(u) >= lam - tol
    key = on_edge.tobytes()
    if _cache is not None and key in _cache:
        return _cache[key]
    sub = D.delete_rows(on_edge)
    df = int(null_space_basis(sub).shape[1])
    if _cache is not None:
        _cache[key] = df
    return df


def information_criterion(model: LossModel, beta, df: int, kind: str = "AIC") -> float:
    """``2 f(beta) + 2 df`` with ``f`` the negative (partial) log-likelihood."""
    if kind != "AIC":
        raise ValueError(f"unsupported criterion {kind!r}")
    if df < 0:
        raise ValueError("df must be nonnegative")
    return 2.0 * model.value(beta) + 2.0 * df


def early_stop(history, run_length: int) -> bool:
    """True when the last ``run_length + 1`` entries rise in both df and AIC.

    ``history`` holds ``(df, aic)`` pairs recorded only on df changes.
    """
    if len(history) < run_length + 1:
        return False
    tail = history[-(run_length + 1):]
    return all(b[0] > a[0] and b[1] > a[1] for a, b in zip(tail, tail[1:]))


def mm_dust_path(model: LossModel, D: StructureMatrix, config: PathConfig) -> SolutionPath:
    """Trace the approximate generalized lasso path from ``lambda_0`` down to ``eps``."""
    if D.p != model.p:
        raise ValueError(f"D has {D.p} columns, model has {model.p} coefficients")
    eps = config.eps
    L = model.lipschitz
    beta = initial_fit(model, D, config.ridge_delta)
    grad = model.gradient(beta)
    u = round_to_grid(least_norm_dual(L * beta - grad, D), eps)
    k0 = int(np.rint(np.abs(u).max() / eps)) if u.size else 0

    df_cache: dict = {}

    def make_point(k, beta, u, gamma, rounds):
        lam = k * eps
        df = degrees_of_freedom(D, u, lam, config.boundary_tol, df_cache)
        return PathPoint(lam, k, beta.copy(), u.copy(), gamma, df,
                         information_criterion(model, beta, df), rounds)

    lam0 = k0 * eps
    points = [make_point(k0, beta, u, objective_value(model, beta, D, lam0), 0)]
    history = [(points[0].df, points[0].aic)]
    path = SolutionPath(points, eps, L, meta={"lambda0": lam0, "n_lambda": k0})
    log.debug("lambda0=%g, L=%g, grid points=%d", lam0, L, k0)

    for t in range(1, k0):
        if config.max_points is not None and len(points) >= config.max_points:
            path.stopped_early, path.stop_reason = True, "max_points"
            break
        k = k0 - t
        lam = k * eps
        u, _ = backward_step(u, eps)
        ytilde = L * beta - grad
        gamma = objective_value(model, beta, D, lam)
        rounds = 0
        for _ in range(config.Nm):
            state = dual_solver(ytilde, D, u, config.Nd, eps)
            u_c = round_to_grid(state.u, eps)
            beta_c = state.residual / L      # beta - (D'u + grad) / L
            gamma_c = objective_value(model, beta_c, D, lam)
            if not gamma_c < gamma - 1e-12 * max(1.0, abs(gamma)):
                break
            u, beta, gamma = u_c, beta_c, gamma_c
            grad = model.gradient(beta)
            ytilde = L * beta - grad
            rounds += 1
        pt = make_point(k, beta, u, gamma, rounds)
        points.append(pt)
        if pt.df != history[-1][0]:
            history.append((pt.df, pt.aic))
            if config.early_stop is not None and early_stop(history, config.early_stop):
                path.stopped_early = True
                path.stop_reason = f"AIC increased over {config.early_stop} consecutive df values"
                break
    return path
