"""CSV datasets, flat config files and path serialization."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .losses import DataError, Dataset
from .path import PathPoint, SolutionPath

PATH_FORMATS = ("csv_long", "json")
SUMMARY_FIELDS = ("lambda", "objective", "df", "aic", "accepted_inner_rounds")


@dataclass(frozen=True)
class DatasetSchema:
    """Which CSV columns play which role.

    ``features=None`` takes every column not named as a response, time or
    status column, in file order.
    """

    response: str | None = None
    time: str | None = None
    status: str | None = None
    features: tuple[str, ...] | None = None
    intercept: bool = False


def _fmt(x) -> str:
    # repr round-trips doubles exactly
    return repr(float(x))


def read_csv_columns(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise DataError(f"{path}: duplicate column names in header")
    body = rows[1:]
    if not body:
        raise DataError(f"{path} has a header but no data rows")
    values = np.empty((len(body), len(header)))
    for i, r in enumerate(body, start=2):
        if len(r) != len(header):
            raise DataError(f"{path}:{i}: expected {len(header)} fields, found {len(r)}")
        try:
            values[i - 2] = [float(c) for c in r]
        except ValueError as exc:
            raise DataError(f"{path}:{i}: non-numeric cell ({exc})") from exc
    return header, values


def load_dataset(path, schema: DatasetSchema, kind: str, standardize: bool = True) -> Dataset:
    """Read a headered numeric CSV into a :class:`Dataset`."""
    header, values = read_csv_columns(path)
    col = {h: j for j, h in enumerate(header)}
    roles = [schema.response] if kind != "cox" else [schema.time, schema.status]
    if any(r is None for r in roles):
        need = "response" if kind != "cox" else "time and status"
        raise DataError(f"{kind} data needs the {need} column(s) named in the schema")
    features = list(schema.features) if schema.features is not None else [h for h in header if h not in roles]
    missing = [c for c in roles + features if c not in col]
    if missing:
        raise DataError(f"missing columns: {', '.join(missing)}")
    if not features:
        raise DataError("no feature columns")
    X = values[:, [col[c] for c in features]]
    if kind == "cox":
        return Dataset(X, time=values[:, col[schema.time]], status=values[:, col[schema.status]],
                       kind=kind, standardize=standardize, intercept=schema.intercept)
    return Dataset(X, values[:, col[schema.response]], kind=kind,
                   standardize=standardize, intercept=schema.intercept)


def write_dataset(dest, X, y=None, *, time=None, status=None, names=None) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    names = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    if time is not None:
        header, extra = names + ["time", "status"], [np.asarray(time, float), np.asarray(status, int)]
    else:
        header, extra = names + ["y"], [np.asarray(y, float)]
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(X.shape[0]):
            tail = [_fmt(extra[0][i])] + ([str(int(extra[1][i]))] if time is not None else [])
            w.writerow([_fmt(v) for v in X[i]] + tail)


def summary_path(dest) -> Path:
    dest = Path(dest)
    return dest.with_name(dest.stem + "_summary.csv")


def scales_path(dest) -> Path:
    dest = Path(dest)
    return dest.with_name(dest.stem + "_scales.csv")


def _report_beta(path: SolutionPath, dataset: Dataset | None, standardized: bool):
    if dataset is None or standardized:
        return path.betas
    return np.array([dataset.unstandardize(b) for b in path.betas])


def write_path(path: SolutionPath, dest, format: str = "csv_long", *, dataset: Dataset | None = None,
               standardized: bool = False, scales: dict | None = None) -> list[Path]:
    """Write a path for plotting; returns the files written.

    ``csv_long`` writes ``dest`` (lambda, kind, index, value; 1-based index)
    plus a ``*_summary.csv`` companion. ``json`` writes a single document
    holding the same records. Coefficients go through
    ``dataset.unstandardize`` unless ``standardized`` is set. ``scales``
    (name -> vector) is emitted alongside, e.g. the column scales for tree
    designs whose coefficients stay on the standardized scale.
    """
    if format not in PATH_FORMATS:
        raise ValueError(f"unknown format {format!r}")
    if not path.points:
        raise ValueError("cannot write an empty path")
    dest = Path(dest)
    betas = _report_beta(path, dataset, standardized)
    written = []
    if format == "csv_long":
        with dest.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["lambda", "kind", "index", "value"])
            for pt, b in zip(path.points, betas):
                lam = _fmt(pt.lam)
                for j, v in enumerate(b, 1):
                    w.writerow([lam, "beta", j, _fmt(v)])
                for i, v in enumerate(pt.u, 1):
                    w.writerow([lam, "u", i, _fmt(v)])
        written.append(dest)
        sp = summary_path(dest)
        with sp.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SUMMARY_FIELDS)
            for pt in path.points:
                w.writerow([_fmt(pt.lam), _fmt(pt.objective), pt.df, _fmt(pt.aic), pt.accepted_inner_rounds])
        written.append(sp)
        if scales:
            scp = scales_path(dest)
            with scp.open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["name", "index", "value"])
                for name in sorted(scales):
                    for j, v in enumerate(np.asarray(scales[name], float), 1):
                        w.writerow([name, j, _fmt(v)])
            written.append(scp)
    else:
        doc = {
            "eps": path.eps,
            "L": path.L,
            "stopped_early": path.stopped_early,
            "stop_reason": path.stop_reason,
            "coefficient_scale": "standardized" if (standardized or dataset is None) else "original",
            "points": [
                {"lambda": pt.lam, "objective": pt.objective, "df": pt.df, "aic": pt.aic,
                 "accepted_inner_rounds": pt.accepted_inner_rounds,
                 "beta": [float(v) for v in b], "u": [float(v) for v in pt.u]}
                for pt, b in zip(path.points, betas)
            ],
        }
        if scales:
            doc["scales"] = {k: [float(v) for v in np.asarray(s, float)] for k, s in scales.items()}
        dest.write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")
        written.append(dest)
    return written


def _grid_indices(lams: np.ndarray, eps: float) -> list[int]:
    if not np.isfinite(eps) or eps <= 0:
        return [0] * lams.size
    return [int(round(lam / eps)) for lam in lams]


def read_path(src, format: str | None = None) -> SolutionPath:
    """Inverse of :func:`write_path` (coefficients as written)."""
    src = Path(src)
    format = format or ("json" if src.suffix == ".json" else "csv_long")
    if format == "json":
        doc = json.loads(src.read_text(encoding="utf-8"))
        pts = doc["points"]
        lams = np.array([p["lambda"] for p in pts])
        eps = float(doc["eps"])
        points = [PathPoint(p["lambda"], k, np.array(p["beta"], float), np.array(p["u"], float),
                            p["objective"], int(p["df"]), p["aic"], int(p["accepted_inner_rounds"]))
                  for p, k in zip(pts, _grid_indices(lams, eps))]
        return SolutionPath(points, eps, float(doc["L"]), bool(doc["stopped_early"]), doc["stop_reason"])
    beta: dict[float, dict[int, float]] = {}
    u: dict[float, dict[int, float]] = {}
    order: list[float] = []
    with src.open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            lam = float(row["lambda"])
            if lam not in beta:
                beta[lam], u[lam] = {}, {}
                order.append(lam)
            target = beta if row["kind"] == "beta" else u
            target[lam][int(row["index"])] = float(row["value"])
    with summary_path(src).open(newline="", encoding="utf-8") as fh:
        summary = {float(r["lambda"]): r for r in csv.DictReader(fh)}
    lams = np.array(order)
    eps = float(lams[0] - lams[1]) if lams.size > 1 else float("nan")
    points = []
    for lam, k in zip(order, _grid_indices(lams, eps)):
        s = summary[lam]
        b = np.array([beta[lam][j] for j in sorted(beta[lam])])
        uu = np.array([u[lam][i] for i in sorted(u[lam])])
        points.append(PathPoint(lam, k, b, uu, float(s["objective"]), int(s["df"]), float(s["aic"]),
                                int(s["accepted_inner_rounds"])))
    return SolutionPath(points, eps, float("nan"))


def read_config(path) -> dict[str, str]:
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use flag names."""
    out: dict[str, str] = {}
    for lineno, ln in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in ln.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out
