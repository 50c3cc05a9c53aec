"""Command-line entry point: ``mmdust {fit,simulate,oracle-check,sweep}``.

Every flag can also come from ``--config FILE`` (flat ``key = value``
lines, keys spelled like the long flags); explicit flags win. Set
``MMDUST_LOG_LEVEL`` (e.g. ``DEBUG``) for progress logging. Failures exit
nonzero and print ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .io import DatasetSchema, load_dataset, read_config, write_dataset, write_path
from .losses import KINDS, Dataset, LossModel
from .oracle import exact_fixed_lambda
from .path import PathConfig, mm_dust_path
from .simulate import DESIGNS, simulate_dataset
from .structure import (StructureMatrix, build_structure, identity, read_tree, tree_to_matrices,
                        vstack, write_tree)

log = logging.getLogger("mmdust")

EXIT_FAILURE = 1


@dataclass
class Problem:
    dataset: Dataset
    model: LossModel
    D: StructureMatrix
    coupled: bool          # tree reparameterization: report standardized coefficients


def _csv_list(text: str | None, conv=float) -> list:
    if text is None or str(text).strip() == "":
        return []
    return [conv(t) for t in str(text).split(",") if t.strip()]


def _pairs(text: str | None) -> list[tuple[int, int]]:
    out = []
    for item in _csv_list(text, str):
        a, sep, b = item.strip().partition("-")
        if not sep:
            raise ValueError(f"pair {item!r} must look like 'a-b'")
        out.append((int(a), int(b)))
    return out


def _add_problem_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    g.add_argument("--data", required=True, help="CSV file with a header row")
    g.add_argument("--loss", choices=KINDS, required=True)
    g.add_argument("--response", default="y", help="response column (squared/logistic)")
    g.add_argument("--time", default="time", help="survival time column (cox)")
    g.add_argument("--status", default="status", help="event indicator column (cox)")
    g.add_argument("--features", default=None, help="comma-separated feature columns (default: all others)")
    g.add_argument("--intercept", action="store_true", help="add an unpenalized intercept")
    g.add_argument("--no-standardize", action="store_true")
    g.add_argument("--cox-scale", type=float, default=None, help="use c * max_j m_j as the Cox constant")
    s = p.add_argument_group("structure")
    s.add_argument("--structure", default="identity",
                   choices=("identity", "chain", "pairs", "triplets", "tree"))
    s.add_argument("--pairs", default=None, help="1-based pairs for 'pairs', e.g. 1-2,2-3")
    s.add_argument("--stack-identity", action="store_true", help="append an identity block below D")
    s.add_argument("--structure-file", default=None, help="triplet or tree file")
    c = p.add_argument_group("path")
    c.add_argument("--eps", type=float, default=0.01)
    c.add_argument("--Nm", type=int, default=1)
    c.add_argument("--Nd", type=int, default=15, help="0 runs each dual solve to no descent")
    c.add_argument("--ridge-delta", type=float, default=1e-6)
    c.add_argument("--boundary-tol", type=float, default=1e-9)
    c.add_argument("--early-stop", type=int, default=None, help="AIC run length K")
    c.add_argument("--max-points", type=int, default=None)
    p.add_argument("--seed", type=int, default=0, help="recorded for reproducibility")


def _path_config(args, eps: float | None = None) -> PathConfig:
    return PathConfig(eps=args.eps if eps is None else eps, Nm=args.Nm, Nd=args.Nd or None,
                      ridge_delta=args.ridge_delta, boundary_tol=args.boundary_tol,
                      early_stop=args.early_stop, max_points=args.max_points)


def build_problem(args) -> Problem:
    features = tuple(_csv_list(args.features, str)) or None
    schema = DatasetSchema(response=args.response, time=args.time, status=args.status,
                           features=features, intercept=args.intercept)
    ds = load_dataset(args.data, schema, args.loss, standardize=not args.no_standardize)
    design, coupled = None, False
    if args.structure == "tree":
        if not args.structure_file:
            raise ValueError("--structure tree needs --structure-file")
        tree = read_tree(args.structure_file)
        if tree.n_features != ds.p:
            raise ValueError(f"tree has {tree.n_features} leaves, data has {ds.p} features")
        A, D, _ = tree_to_matrices(tree)
        design = ds.X_std @ A.dense
        if ds.intercept:
            design = np.hstack([design, np.ones((ds.n, 1))])
        coupled = True
    else:
        D = build_structure(args.structure, ds.p, pairs=_pairs(args.pairs), path=args.structure_file)
    if args.stack_identity:
        D = vstack([D, identity(D.p)])
    if ds.intercept:
        D = D.with_zero_columns(1)
    model = LossModel(ds, design=design, cox_scale=args.cox_scale)
    return Problem(ds, model, D, coupled)


def _scales(prob: Problem) -> dict | None:
    ds = prob.dataset
    if not prob.coupled:
        return None
    return {"column_means": ds.column_means, "column_scales": ds.column_scales}


def cmd_fit(args) -> int:
    prob = build_problem(args)
    path = mm_dust_path(prob.model, prob.D, _path_config(args))
    log.info("fitted %d path points (lambda0=%g)", len(path), path.meta.get("lambda0", float("nan")))
    standardized = args.standardized_coefs or prob.coupled
    suffix = ".json" if args.format == "json" else ".csv"
    files = write_path(path, Path(args.out + suffix), args.format, dataset=prob.dataset,
                       standardized=standardized, scales=_scales(prob))
    for f in files:
        print(f)
    return 0


def cmd_simulate(args) -> int:
    kw = {}
    if args.n is not None:
        kw["n"] = args.n
    if args.design == "cox_tree_appE":
        kw["snr"] = args.snr
    sim = simulate_dataset(args.design, args.seed, **kw)
    ds = sim.dataset
    out = Path(args.out)
    if ds.kind == "cox":
        write_dataset(out, ds.X, time=ds.time, status=ds.status)
    else:
        write_dataset(out, ds.X, ds.y)
    truth = {"design": args.design, "seed": args.seed, "coef": [float(v) for v in sim.coef],
             "intercept": float(sim.intercept)}
    tp = out.with_name(out.stem + "_truth.json")
    tp.write_text(json.dumps(truth, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    print(out)
    print(tp)
    if sim.tree is not None:
        tr = out.with_name(out.stem + "_tree.txt")
        write_tree(sim.tree, tr)
        print(tr)
    return 0


def _nearest_point(path, lam: float):
    lams = path.lambdas
    return path.points[int(np.argmin(np.abs(lams - lam)))]


def _oracle_rows(prob: Problem, path, lambdas, tol: float, jobs: int):
    def one(lam):
        pt = _nearest_point(path, lam)
        sol = exact_fixed_lambda(prob.model, prob.D, pt.lam, tol=tol, beta0=pt.beta)
        diff = pt.beta - sol.beta
        return {"lambda": pt.lam, "sup_error": float(np.abs(diff).max()),
                "l2_error": float(np.linalg.norm(diff)), "objective_path": pt.objective,
                "objective_oracle": float(prob.model.value(sol.beta) + pt.lam * prob.D.penalty(sol.beta)),
                "oracle_kkt": sol.kkt_residual}

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, lambdas))


def _write_rows(dest, rows, fields) -> None:
    with Path(dest).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in rows:
            w.writerow([repr(float(r[f])) if isinstance(r[f], float) else r[f] for f in fields])


def cmd_oracle_check(args) -> int:
    prob = build_problem(args)
    path = mm_dust_path(prob.model, prob.D, _path_config(args))
    lam0 = path.points[0].lam
    lambdas = [lam0 if t == "lambda0" else float(t) for t in _csv_list(args.lambdas, str)] or [lam0]
    rows = _oracle_rows(prob, path, lambdas, args.tol, args.jobs)
    fields = ["lambda", "sup_error", "l2_error", "objective_path", "objective_oracle", "oracle_kkt"]
    _write_rows(args.out, rows, fields)
    print(args.out)
    return 0


def common_grid_indices(eps_list) -> tuple[float, list[int]]:
    """The coarsest step and, per step, its stride to the coarsest grid."""
    coarse = max(eps_list)
    strides = []
    for e in eps_list:
        r = coarse / e
        if abs(r - round(r)) > 1e-9 * r:
            raise ValueError(f"eps {e} does not divide the coarsest eps {coarse}")
        strides.append(int(round(r)))
    return coarse, strides


def cmd_sweep(args) -> int:
    prob = build_problem(args)
    eps_list = _csv_list(args.eps_list)
    if not eps_list:
        raise ValueError("--eps-list is empty")
    coarse, strides = common_grid_indices(eps_list)

    def run(e):
        return mm_dust_path(prob.model, prob.D, _path_config(args, eps=e))

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        paths = list(pool.map(run, eps_list))
    # compare on lambda values present in every path: multiples of the coarsest eps
    top = min(p.points[0].grid_index // s for p, s in zip(paths, strides))
    oracle = {}
    beta0 = None
    for k in range(top, 0, -1):
        sol = exact_fixed_lambda(prob.model, prob.D, k * coarse, tol=args.tol, beta0=beta0)
        oracle[k] = beta0 = sol.beta
    rows = []
    for e, s, p in zip(eps_list, strides, paths):
        errs = [np.abs(pt.beta - oracle[pt.grid_index // s]).max()
                for pt in p.points if pt.grid_index % s == 0 and pt.grid_index // s in oracle]
        rows.append({"eps": float(e), "n_points": len(p), "n_compared": len(errs),
                     "sup_error": float(max(errs)) if errs else float("nan")})
    _write_rows(args.out, rows, ["eps", "n_points", "n_compared", "sup_error"])
    print(args.out)
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmdust", description="Generalized lasso paths by MM dual stagewise descent")
    parser.add_argument("--config", default=None, help="flat key=value file mirroring the flags")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="trace a solution path")
    _add_problem_args(fit)
    fit.add_argument("--out", required=True, help="output prefix")
    fit.add_argument("--format", choices=("csv_long", "json"), default="csv_long")
    fit.add_argument("--standardized-coefs", action="store_true",
                     help="report coefficients on the standardized scale")
    fit.set_defaults(func=cmd_fit)

    sim = sub.add_parser("simulate", help="write a synthetic dataset")
    sim.add_argument("--design", choices=DESIGNS, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--n", type=int, default=None)
    sim.add_argument("--snr", type=float, default=1.0)
    sim.add_argument("--out", required=True)
    sim.set_defaults(func=cmd_simulate)

    oc = sub.add_parser("oracle-check", help="compare path points with the fixed-lambda oracle")
    _add_problem_args(oc)
    oc.add_argument("--lambdas", default="lambda0", help="comma list; 'lambda0' means the first point")
    oc.add_argument("--tol", type=float, default=1e-9)
    oc.add_argument("--jobs", type=int, default=1)
    oc.add_argument("--out", required=True)
    oc.set_defaults(func=cmd_oracle_check)

    sw = sub.add_parser("sweep", help="path error against the oracle for several eps")
    _add_problem_args(sw)
    sw.add_argument("--eps-list", required=True, help="comma list, e.g. 0.4,0.2,0.1,0.05")
    sw.add_argument("--tol", type=float, default=1e-9)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config", default=None)
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cfg = read_config(known.config)
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        command = next((t for t in argv if t in subparsers.choices), None)
        if command is None:
            return parser.parse_args(argv)
        sub = subparsers.choices[command]
        actions = {a.dest: a for a in sub._actions}
        defaults = {}
        for k, v in cfg.items():
            if k not in actions or k == "help":
                raise ValueError(f"unknown config key {k!r} for {command}")
            a = actions[k]
            if isinstance(a, argparse._StoreTrueAction):
                defaults[k] = v.lower() in ("1", "true", "yes", "on")
            else:
                defaults[k] = a.type(v) if a.type else v
            a.required = False
        sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    logging.basicConfig(level=os.environ.get("MMDUST_LOG_LEVEL", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    parser = make_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except SystemExit as exc:
        if exc.code in (0, None):
            raise
        print(json.dumps({"error": "UsageError", "message": "invalid command line"}), file=sys.stderr)
        return exc.code if isinstance(exc.code, int) else EXIT_FAILURE
    except Exception as exc:  # noqa: BLE001 - converted to machine-readable output
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
