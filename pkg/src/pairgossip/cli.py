"""Command line entry point ``pg``.

Exit codes: 0 success, 2 parameter error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from pairgossip.bounds import bounds_report
from pairgossip.data import gaussian_points, load_csv_report
from pairgossip.dualavg import MODES
from pairgossip.errors import DataError, NumericError, PairGossipError, ParameterError
from pairgossip.estimation import RUNNERS, TRAJECTORY_COLUMNS
from pairgossip.graph import generate, spectral_report, spectrum, tensor_with_complete
from pairgossip.harness import (DataSource, ExperimentConfig, load_config, run_experiment, run_sweep,
                                run_trials, write_optimizer_csv, write_rows)
from pairgossip.pairwise import gini_kernel, kernel_matrix, product_kernel, sum_kernel, variance_kernel

KERNELS = {"product": product_kernel, "sum": sum_kernel, "variance": variance_kernel, "gini": gini_kernel}

EXIT_OK, EXIT_FAIL, EXIT_PARAM, EXIT_DATA = 0, 1, 2, 3


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, list):
        return ";".join(map(str, v))
    return str(v)


def _emit(report: dict, out: str | None) -> None:
    for k, v in report.items():
        print(f"{k}={_fmt(v)}")
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["key", "value"])
            for k, v in report.items():
                w.writerow([k, _fmt(v)])


def cmd_spectral(args) -> int:
    g = generate(args.topology)
    if args.tensor:
        g = tensor_with_complete(g, args.tensor, link_virtual=args.link_virtual)
    rep = spectral_report(g)
    if args.method == "jacobi":
        sp = spectrum(g, method="jacobi")
        rep["spectral_gap"] = sp.spectral_gap
        rep["gap_over_edges"] = sp.spectral_gap / g.n_edges if g.n_edges else 0.0
        rep["lambda_max"] = float(sp.eigenvalues[-1])
    rep["method"] = args.method
    _emit(rep, args.out)
    return EXIT_OK


def _estimation_data(args, n: int):
    if args.data:
        data, _ = load_csv_report(args.data, args.has_header, args.id_column, args.label_column, None)
        if data.n < n:
            raise DataError(f"{args.data} has {data.n} usable rows, the graph needs {n}")
        return data.points[:n]
    return gaussian_points(n, args.dim, args.seed).points


def cmd_estimate(args) -> int:
    g = generate(args.topology)
    km = kernel_matrix(KERNELS[args.kernel](), _estimation_data(args, g.n))
    runner = RUNNERS[args.protocol]
    rows = []
    for r in range(args.runs):
        traj = runner(g, km, args.T, seed=args.seed + r, record_every=args.record_every)
        rows += [tuple(row[c] for c in TRAJECTORY_COLUMNS) for row in traj.rows()]
    write_rows(args.out or sys.stdout, TRAJECTORY_COLUMNS, rows)
    return EXIT_OK


def _data_source(args, objective: str) -> DataSource:
    if args.data:
        return DataSource(kind="csv", path=args.data, has_header=args.has_header, id_column=args.id_column,
                          label_column=args.label_column, keep_id_as_feature=args.keep_id_as_feature,
                          standardize=args.standardize)
    if args.data_source == "mixture":
        return DataSource(kind="mixture", dim=args.dim, seed=args.seed)
    return DataSource(kind="toy", dim=args.dim, shift=args.shift, seed=args.seed)


def cmd_optimize(args) -> int:
    cfg = ExperimentConfig(
        topology=args.topology, mode=args.mode, objective=args.objective, a=args.a, alpha=args.alpha,
        T=args.T, n_trials=args.runs, base_seed=args.seed, record_every=args.record_every,
        record_bias=args.bias, b=args.b, hinge=args.hinge, data=_data_source(args, args.objective),
    )
    write_optimizer_csv(args.out or sys.stdout, run_trials(cfg), per_node=args.per_node)
    return EXIT_OK


def cmd_bounds(args) -> int:
    g = generate(args.topology)
    rep = bounds_report(g, args.T, args.a, args.L, args.dist0, args.eps, R=args.R, alpha=args.alpha)
    _emit(rep, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    out = args.out or cfg.output
    if args.sweep:
        path = run_sweep(cfg, [t for t in args.sweep.split(",") if t], out, workers=args.workers)
        print(f"wrote {path}")
    else:
        rep = run_experiment(cfg, out, workers=args.workers)
        print(f"wrote {rep.aggregate_csv}, {rep.trials_csv}, {rep.manifest}")
    return EXIT_OK


def _optional_int(v: str) -> int | None:
    return None if v.lower() == "none" else int(v)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pg", description="Gossip estimation and optimization of pairwise objectives.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("spectral", help="Laplacian spectrum summary of a topology")
    s.add_argument("--topology", required=True)
    s.add_argument("--method", choices=("lapack", "jacobi"), default="lapack")
    s.add_argument("--tensor", type=int, default=0, help="replace G by G x K_k (k points per node)")
    s.add_argument("--link-virtual", action="store_true", help="also link the k copies hosted by one node")
    s.add_argument("--out")
    s.set_defaults(func=cmd_spectral)

    def data_flags(q, labels_default):
        q.add_argument("--data", help="CSV file, one point per row")
        q.add_argument("--has-header", action="store_true")
        q.add_argument("--id-column", type=_optional_int, default=None)
        q.add_argument("--label-column", type=_optional_int, default=labels_default)
        q.add_argument("--dim", type=int, default=None)

    e = sub.add_parser("estimate", help="gossip estimation of a U-statistic")
    e.add_argument("--protocol", choices=("gosta", "u1", "u2", "gosta_async"), default="gosta")
    e.add_argument("--topology", required=True)
    e.add_argument("--kernel", choices=sorted(KERNELS), default="product")
    data_flags(e, None)
    e.add_argument("--T", type=int, default=100)
    e.add_argument("--runs", type=int, default=1)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--record-every", type=int, default=1)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    o = sub.add_parser("optimize", help="gossip dual averaging on a pairwise objective")
    o.add_argument("--mode", choices=MODES, default="sync")
    o.add_argument("--objective", choices=("auc", "metric"), default="auc")
    o.add_argument("--topology", required=True)
    data_flags(o, -1)
    o.add_argument("--data-source", choices=("toy", "mixture"), default="toy")
    o.add_argument("--keep-id-as-feature", action="store_true")
    o.add_argument("--standardize", action="store_true")
    o.add_argument("--shift", type=float, default=0.5)
    o.add_argument("--T", type=int, default=1000)
    o.add_argument("--a", type=float, default=1.0)
    o.add_argument("--alpha", type=float, default=-0.5)
    o.add_argument("--b", type=float, default=1.0)
    o.add_argument("--hinge", choices=("standard", "plus"), default="standard")
    o.add_argument("--runs", type=int, default=1)
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--record-every", type=int, default=1)
    o.add_argument("--bias", action="store_true", help="record the bias term (sync and baseline)")
    o.add_argument("--per-node", action="store_true")
    o.add_argument("--out")
    o.set_defaults(func=cmd_optimize)

    b = sub.add_parser("bounds", help="evaluate the convergence and lower bounds")
    b.add_argument("--topology", required=True)
    b.add_argument("--T", type=int, default=1000)
    b.add_argument("--a", type=float, default=1.0)
    b.add_argument("--alpha", type=float, default=-0.5)
    b.add_argument("--L", type=float, default=1.0)
    b.add_argument("--dist0", type=float, default=1.0, help="||theta_0 - theta*||")
    b.add_argument("--eps", type=float, default=0.1)
    b.add_argument("--R", type=float, default=1.0)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    x = sub.add_parser("experiment", help="multi-trial experiment from a config file")
    x.add_argument("--config", required=True)
    x.add_argument("--sweep", help="comma separated topology descriptors")
    x.add_argument("--workers", type=int, default=None)
    x.add_argument("--seed", type=int, default=None, help="override base_seed")
    x.add_argument("--out")
    x.set_defaults(func=cmd_experiment)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "dim", "unset") is None:
        args.dim = 1 if args.command == "estimate" else 2
    try:
        return args.func(args)
    except ParameterError as exc:
        print(f"pg: parameter error: {exc}", file=sys.stderr)
        return EXIT_PARAM
    except (DataError, NumericError) as exc:
        print(f"pg: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except PairGossipError as exc:
        print(f"pg: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
