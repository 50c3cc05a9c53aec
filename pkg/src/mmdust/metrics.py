"""Plain C-index and AUC, used to sanity-check fitted paths."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


def c_index(time, status, risk) -> float:
    """Harrell's concordance: pairs (i, j) with an event at ``t_i < t_j``.

    A pair is concordant when ``risk_i > risk_j``; risk ties count one half.
    """
    time, status, risk = (np.asarray(a, dtype=float).ravel() for a in (time, status, risk))
    ev = status == 1
    comparable = ev[:, None] & (time[:, None] < time[None, :])
    n = comparable.sum()
    if n == 0:
        return float("nan")
    diff = risk[:, None] - risk[None, :]
    score = (diff > 0) + 0.5 * (diff == 0)
    return float(score[comparable].sum() / n)


def auc(y, score) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic (ties averaged)."""
    y, score = np.asarray(y, dtype=float).ravel(), np.asarray(score, dtype=float).ravel()
    pos = y == 1
    n1, n0 = int(pos.sum()), int((~pos).sum())
    if n1 == 0 or n0 == 0:
        return float("nan")
    r = rankdata(score)
    return float((r[pos].sum() - n1 * (n1 + 1) / 2) / (n1 * n0))
