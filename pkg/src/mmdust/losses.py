"""Datasets, convex losses and their quadratic majorizers.

Three losses are supported:

* ``squared``  -- ``0.5 * ||y - X beta||^2``
* ``logistic`` -- binomial negative log-likelihood with 0/1 response
* ``cox``      -- negative log partial likelihood (no tied event times)

Every loss exposes a scalar ``L`` with ``L * I >= Hessian`` everywhere, which
is all the path solver needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import expit

from .structure import StructureMatrix

KINDS = ("squared", "logistic", "cox")

#: floor on the Cox majorizer constant (degenerate constant-column data)
COX_L_FLOOR = 1e-8


class DataError(ValueError):
    """Invalid dataset contents (response coding, ties, shapes)."""


class Dataset:
    """Design matrix plus response.

    ``y`` is used by the squared and logistic losses; ``time``/``status`` by
    Cox. When ``standardize`` is set, columns are scaled to unit (population)
    standard deviation and, if an intercept is requested or the loss is Cox,
    also centred. ``design`` is the matrix the losses actually see; an
    intercept is appended to it as a final all-ones column.
    """

    def __init__(self, X, y=None, *, time=None, status=None, kind="squared",
                 standardize=False, intercept=False):
        if kind not in KINDS:
            raise DataError(f"unknown loss kind {kind!r}")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n, p = X.shape
        if n < 1 or p < 1:
            raise DataError("X must have at least one row and one column")
        if not np.all(np.isfinite(X)):
            raise DataError("X contains non-finite values")
        self.X = X
        self.kind = kind
        self.intercept = bool(intercept)
        self.standardize = bool(standardize)
        if kind == "cox":
            if intercept:
                raise DataError("the Cox partial likelihood has no intercept")
            if time is None or status is None:
                raise DataError("cox data needs time and status")
            time = np.asarray(time, dtype=float).ravel()
            status = np.asarray(status).ravel()
            if time.size != n or status.size != n:
                raise DataError("time/status length does not match X")
            if not np.all(np.isfinite(time)) or np.any(time <= 0):
                bad = np.flatnonzero(~(time > 0))
                raise DataError(f"survival times must be positive (rows {bad.tolist()[:10]})")
            if not np.all(np.isin(status, (0, 1))):
                raise DataError("status must be 0/1")
            status = status.astype(int)
            ev = np.flatnonzero(status == 1)
            vals, inv, counts = np.unique(time[ev], return_inverse=True, return_counts=True)
            if np.any(counts > 1):
                tied = ev[counts[inv] > 1]
                raise DataError(f"tied event times are not supported (rows {tied.tolist()[:10]})")
            self.y = None
            self.time, self.status = time, status
        else:
            if y is None:
                raise DataError(f"{kind} data needs a response y")
            y = np.asarray(y, dtype=float).ravel()
            if y.size != n:
                raise DataError("y length does not match X")
            if not np.all(np.isfinite(y)):
                raise DataError("y contains non-finite values")
            if kind == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
                raise DataError("logistic response must be coded 0/1")
            self.y = y
            self.time = self.status = None

        if standardize:
            center = intercept or kind == "cox"
            means = X.mean(axis=0) if center else np.zeros(p)
            scales = (X - means).std(axis=0) if center else np.sqrt((X**2).mean(axis=0))
            if np.any(scales <= 0):
                raise DataError(f"constant columns cannot be standardized: {np.flatnonzero(scales <= 0).tolist()}")
        else:
            means, scales = np.zeros(p), np.ones(p)
        self.column_means = means
        self.column_scales = scales

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        """Number of original features (excluding any intercept)."""
        return self.X.shape[1]

    @cached_property
    def X_std(self) -> np.ndarray:
        return (self.X - self.column_means) / self.column_scales

    @cached_property
    def design(self) -> np.ndarray:
        Z = self.X_std
        if self.intercept:
            Z = np.hstack([Z, np.ones((self.n, 1))])
        return Z

    def unstandardize(self, beta) -> np.ndarray:
        """Map design-scale coefficients to the original feature scale.

        The intercept (if any) is returned as the last entry and absorbs the
        centring shift, so ``X @ b[:p] + b[p]`` equals ``design @ beta``.
        """
        beta = np.asarray(beta, dtype=float)
        b = beta[: self.p] / self.column_scales
        if self.intercept:
            return np.append(b, beta[self.p] - b @ self.column_means)
        return b


class LossModel:
    """A loss over a fixed design.

    ``design`` overrides ``dataset.design`` (e.g. ``X @ A`` for tree
    aggregation). ``cox_scale`` switches the Cox constant from the provable
    sum bound to ``cox_scale * max_j m_j``.
    """

    def __init__(self, dataset: Dataset, kind: str | None = None, design=None,
                 cox_scale: float | None = None):
        kind = dataset.kind if kind is None else kind
        if kind not in KINDS:
            raise DataError(f"unknown loss kind {kind!r}")
        if (kind == "cox") != (dataset.kind == "cox"):
            raise DataError(f"{kind} loss is incompatible with {dataset.kind} data")
        if kind == "logistic" and not np.all(np.isin(dataset.y, (0.0, 1.0))):
            raise DataError("logistic response must be coded 0/1")
        X = dataset.design if design is None else np.atleast_2d(np.asarray(design, dtype=float))
        if X.shape[0] != dataset.n:
            raise DataError("design row count does not match the dataset")
        self.dataset = dataset
        self.kind = kind
        self.X = X
        self.cox_scale = cox_scale
        if kind == "cox":
            self._build_cox_index()

    @classmethod
    def from_arrays(cls, kind: str, X, y=None, time=None, status=None, **kw) -> "LossModel":
        return cls(Dataset(X, y, time=time, status=status, kind=kind), **kw)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def _build_cox_index(self):
        ds = self.dataset
        # descending time: every risk set is a prefix of the sorted rows
        order = np.argsort(-ds.time, kind="stable")
        t = ds.time[order]
        self._order = order
        self._Xs = self.X[order]
        self._event_pos = np.flatnonzero(ds.status[order] == 1)
        if self._event_pos.size == 0:
            raise DataError("cox data has no events")
        # number of rows with time >= t_s
        self._risk_end = np.searchsorted(-t, -t[self._event_pos], side="right")

    @property
    def events(self) -> np.ndarray:
        """Original row indices of the events."""
        return self._order[self._event_pos]

    def risk_set(self, s: int) -> np.ndarray:
        """Original row indices in the risk set of the ``s``-th event (sorted order)."""
        return self._order[: self._risk_end[s]]

    def _check(self, beta) -> np.ndarray:
        beta = np.asarray(beta, dtype=float).ravel()
        if beta.size != self.p:
            raise ValueError(f"beta has length {beta.size}, expected {self.p}")
        return beta

    def value(self, beta) -> float:
        beta = self._check(beta)
        if self.kind == "squared":
            r = self.dataset.y - self.X @ beta
            return 0.5 * float(r @ r)
        if self.kind == "logistic":
            eta = self.X @ beta
            return float(np.sum(np.logaddexp(0.0, eta) - self.dataset.y * eta))
        eta = self._Xs @ beta
        lse = np.logaddexp.accumulate(eta)
        return float(np.sum(lse[self._risk_end - 1] - eta[self._event_pos]))

    def gradient(self, beta) -> np.ndarray:
        beta = self._check(beta)
        if self.kind == "squared":
            return -self.X.T @ (self.dataset.y - self.X @ beta)
        if self.kind == "logistic":
            return self.X.T @ (expit(self.X @ beta) - self.dataset.y)
        return self._cox_gradient(beta)

    def _cox_gradient(self, beta) -> np.ndarray:
        Xs, ends = self._Xs, self._risk_end - 1
        eta = Xs @ beta
        w = np.exp(eta - eta.max())
        S = np.cumsum(w)[ends]
        if np.all(S > 1e-250):
            means = np.cumsum(w[:, None] * Xs, axis=0)[ends] / S[:, None]
        else:
            # prefix sums underflowed: normalise each risk set separately
            lse = np.logaddexp.accumulate(eta)[ends]
            means = np.stack([np.exp(eta[: e + 1] - l) @ Xs[: e + 1] for e, l in zip(ends, lse)])
        return means.sum(axis=0) - Xs[self._event_pos].sum(axis=0)

    def hessian(self, beta) -> np.ndarray:
        """Dense Hessian; used for small reduced problems and diagnostics only."""
        beta = self._check(beta)
        if self.kind == "squared":
            return self.X.T @ self.X
        if self.kind == "logistic":
            pr = expit(self.X @ beta)
            return (self.X * (pr * (1 - pr))[:, None]).T @ self.X
        Xs = self._Xs
        eta = Xs @ beta
        lse = np.logaddexp.accumulate(eta)
        H = np.zeros((self.p, self.p))
        for e, l in zip(self._risk_end - 1, lse[self._risk_end - 1]):
            w = np.exp(eta[: e + 1] - l)
            Z = Xs[: e + 1]
            mu = w @ Z
            H += (Z * w[:, None]).T @ Z - np.outer(mu, mu)
        return H

    @cached_property
    def cox_column_bounds(self) -> np.ndarray:
        """``m_j* = sum_s (max_{R_s} x_j - min_{R_s} x_j)^2 / 4`` per column."""
        hi = np.maximum.accumulate(self._Xs, axis=0)[self._risk_end - 1]
        lo = np.minimum.accumulate(self._Xs, axis=0)[self._risk_end - 1]
        return 0.25 * ((hi - lo) ** 2).sum(axis=0)

    @cached_property
    def lipschitz(self) -> float:
        if self.kind == "cox":
            mj = self.cox_column_bounds
            L = self.cox_scale * mj.max() if self.cox_scale is not None else mj.sum()
            return max(COX_L_FLOOR, float(L))
        sigma = float(np.linalg.norm(self.X, 2) ** 2)
        return sigma / 4.0 if self.kind == "logistic" else sigma


@dataclass(frozen=True)
class MajorizerState:
    """Quadratic majorizer ``f(b0) + g0'(b - b0) + L/2 ||b - b0||^2``."""

    L: float
    beta0: np.ndarray
    ytilde: np.ndarray

    @property
    def grad0(self) -> np.ndarray:
        return self.L * self.beta0 - self.ytilde


def loss_value(model: LossModel, beta) -> float:
    return model.value(beta)


def loss_gradient(model: LossModel, beta) -> np.ndarray:
    return model.gradient(beta)


def lipschitz_constant(model: LossModel) -> float:
    return model.lipschitz


def surrogate_response(model: LossModel, beta0, L: float) -> MajorizerState:
    """Surrogate response ``ytilde = L * beta0 - grad f(beta0)``."""
    if not L > 0:
        raise ValueError("L must be positive")
    beta0 = np.asarray(beta0, dtype=float).copy()
    return MajorizerState(float(L), beta0, L * beta0 - model.gradient(beta0))


def majorized_loss(model: LossModel, state: MajorizerState, beta) -> float:
    d = np.asarray(beta, dtype=float) - state.beta0
    return model.value(state.beta0) + float(state.grad0 @ d) + 0.5 * state.L * float(d @ d)


def objective_value(model: LossModel, beta, D: StructureMatrix, lam: float) -> float:
    """``f(beta) + lam * ||D beta||_1``."""
    if D.p != model.p:
        raise ValueError(f"D has {D.p} columns, model has {model.p} coefficients")
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    return model.value(beta) + lam * D.penalty(beta)
