"""Command-line entry point: ``lowrank-gw {gen,solve,bench,validate}``.

Exit codes: 0 success, 2 usage or configuration error, 3 iteration budget
exhausted, 4 numerical failure.
"""

import argparse
import csv
import datetime
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._errors import ConvergenceError, InputError, NumericalError, RefusalError, ValidationError
from .costs import (
    dense_cost,
    knn_shortest_path_cost,
    lr_distance_approx,
    normalize_costs,
    squared_euclidean_factors,
)
from .datasets import (
    KINDS,
    DatasetSpec,
    generate,
    isometric_pair,
    load_point_cloud,
    save_coupling,
    save_low_rank,
    save_point_cloud,
    save_report,
    load_matrix,
)
from .entropic import EntropicConfig, solve_entropic_gw, solve_quad_entropic_gw
from .gw_lr import GwLrConfig, solve_gw_lr, solve_gw_lr_linear
from .sinkhorn import uniform
from .validation import SUITES, run_suite

log = logging.getLogger("lowrank_gw")

EXIT_OK, EXIT_USAGE, EXIT_BUDGET, EXIT_NUMERICAL = 0, 2, 3, 4
METHODS = ("ent", "quad-ent", "lr", "lin-lr")
COSTS = ("sqeuclidean", "euclidean", "knn", "file")
BENCH_HEADER = ("method", "param", "value", "rep", "final_loss", "total_ms", "outer_iters", "status")


class UsageError(Exception):
    """Bad flag combination; reported with exit code 2."""


def _exit_code(exc):
    if isinstance(exc, (UsageError, InputError, ValidationError, RefusalError, FileNotFoundError)):
        return EXIT_USAGE
    if isinstance(exc, ConvergenceError):
        return EXIT_BUDGET
    if isinstance(exc, NumericalError):
        return EXIT_NUMERICAL
    return None


# ---------------------------------------------------------------- config files


def read_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment, dashes equal underscores."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}: line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def _config_path(argv):
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _apply_config(parser, sub, argv):
    """Parse ``argv`` with defaults taken from ``--config`` when given."""
    path = _config_path(argv)
    command = next((tok for tok in argv if tok in sub), None)
    if path and command:
        values = read_config(path)
        actions = {a.dest: a for a in sub[command]._actions}
        defaults = {}
        for key, raw in values.items():
            action = actions.get(key)
            if action is None or key in ("help", "config"):
                raise UsageError(f"{path}: unknown key {key!r}")
            if action.nargs == 0:
                defaults[key] = raw.lower() in ("1", "true", "yes", "on")
                continue
            try:
                value = action.type(raw) if action.type else raw
            except (TypeError, ValueError) as exc:
                raise UsageError(f"{path}: bad value for {key}: {exc}") from exc
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{path}: {key} must be one of {list(action.choices)}")
            defaults[key] = value
        sub[command].set_defaults(**defaults)
        for action in sub[command]._actions:
            if action.dest in defaults:
                action.required = False
    return parser.parse_args(argv)


# ---------------------------------------------------------------- manifest


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def write_manifest(path, argv, args, started, extra=None):
    """JSON record sufficient to re-run the command."""
    deterministic = getattr(args, "deterministic", False)
    config = {k: v for k, v in vars(args).items() if k != "func"}
    manifest = {
        "command": ["lowrank-gw", *argv],
        "config": config,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "started": None if deterministic else started,
        "finished": None if deterministic else _now(),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- gen


def cmd_gen(args, argv):
    started = _now()
    spec = DatasetSpec(args.kind, args.n, args.d, args.k, args.beta, args.seed, args.std)
    X = generate(spec)
    save_point_cloud(args.out, X)
    extra = {"outputs": [str(args.out)]}
    if args.kind == "isometric_pair":
        _, Y, _ = isometric_pair(X, args.theta, [args.tx, args.ty])
        pair_out = args.pair_out or str(Path(args.out).with_suffix("")) + ".pair.csv"
        save_point_cloud(pair_out, Y)
        extra["outputs"].append(pair_out)
    write_manifest(str(args.out) + ".manifest.json", argv, args, started, extra)
    return EXIT_OK


# ---------------------------------------------------------------- solve


def _needs_factors(method):
    return method in ("quad-ent", "lin-lr")


def build_costs(args, X, Y):
    """Costs for the requested method, normalised to a common unit scale."""
    factored = _needs_factors(args.method)
    if args.cost == "sqeuclidean":
        A, B = squared_euclidean_factors(X), squared_euclidean_factors(Y)
        if not factored:
            A, B = A.dense(), B.dense()
    elif args.cost == "euclidean":
        if factored:
            A = lr_distance_approx(X, X, args.cost_rank, seed=args.seed)
            B = lr_distance_approx(Y, Y, args.cost_rank, seed=args.seed + 1)
        else:
            A, B = dense_cost(X, 1.0), dense_cost(Y, 1.0)
    else:
        if factored:
            raise UsageError(
                f"--method {args.method} needs factored costs (A = A1 A2^T) to run in sub-cubic time; "
                f"--cost {args.cost} yields a dense matrix. Use --method {'ent' if args.method == 'quad-ent' else 'lr'} "
                "or --cost sqeuclidean/euclidean"
            )
        if args.cost == "knn":
            A, B = knn_shortest_path_cost(X, args.knn), knn_shortest_path_cost(Y, args.knn)
        else:
            A, B = X, Y
    scale = 1.0
    if args.normalize == "max":
        A, B, scale = normalize_costs(A, B)
    return A, B, scale


def _load_inputs(args):
    if args.cost == "file":
        A, B = load_matrix(args.source), load_matrix(args.target)
        for name, C in (("source", A), ("target", B)):
            if C.shape[0] != C.shape[1]:
                raise UsageError(f"--cost file expects square cost matrices; {name} is {C.shape}")
        return A, B
    return load_point_cloud(args.source), load_point_cloud(args.target)


def _epsilon(args):
    if args.eps_from_gamma:
        return 1.0 / args.gamma
    return args.epsilon


def run_method(method, A, B, a, b, args):
    """Dispatch to a solver; returns ``(result, report)``."""
    if method in ("ent", "quad-ent"):
        eps = _epsilon(args)
        if eps is None or eps <= 0:
            raise UsageError(f"--method {method} needs --epsilon > 0 or --eps-from-gamma")
        cfg = EntropicConfig(
            epsilon=eps,
            outer_iter=args.outer_iter,
            inner_delta=args.inner_delta,
            inner_max_iter=args.inner_max_iter,
            init=args.ent_init,
            stop_tol=args.stop_tol,
        )
        solver = solve_entropic_gw if method == "ent" else solve_quad_entropic_gw
        return solver(A, B, a, b, cfg)
    cfg = GwLrConfig(
        rank=args.rank,
        alpha=args.alpha,
        gamma=args.gamma,
        epsilon=args.lr_epsilon,
        outer_iter=args.outer_iter,
        dykstra_delta=args.dykstra_delta,
        stop_tol=args.stop_tol,
        seed=args.seed,
        init=args.init,
    )
    solver = solve_gw_lr if method == "lr" else solve_gw_lr_linear
    return solver(A, B, a, b, cfg)


def cmd_solve(args, argv):
    started = _now()
    X, Y = _load_inputs(args)
    A, B, scale = build_costs(args, X, Y)
    a, b = uniform(X.shape[0]), uniform(Y.shape[0])
    result, report = run_method(args.method, A, B, a, b, args)
    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    if args.method in ("ent", "quad-ent"):
        outputs = [f"{prefix}.coupling.csv"]
        save_coupling(outputs[0], result.plan)
    else:
        outputs = [f"{prefix}.{x}.csv" for x in "QRg"]
        save_low_rank(prefix, result)
    save_report(f"{prefix}.report.csv", report, deterministic=args.deterministic)
    outputs.append(f"{prefix}.report.csv")
    summary = {
        "final_loss": report.final_loss,
        "initial_loss": report.initial_loss,
        "outer_iters": report.n_iter,
        "stop_reason": report.stop_reason,
        "init_fallback": report.init_fallback,
        "cost_scale": scale,
    }
    write_manifest(f"{prefix}.manifest.json", argv, args, started, {"outputs": outputs, "result": summary})
    print(
        f"{args.method}: final loss {report.final_loss:.6g} after {report.n_iter} outer iterations "
        f"({report.stop_reason})"
    )
    return EXIT_OK if report.converged else EXIT_BUDGET


# ---------------------------------------------------------------- bench


def cell_seed(base, rep):
    """Seed of one benchmark repetition; independent of execution order."""
    return int(np.random.SeedSequence([int(base), int(rep)]).generate_state(1)[0])


def _bench_cells(args):
    values = [float(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise UsageError("--values needs at least one number")
    methods = args.methods.split(",") if args.methods else None
    if methods is None:
        methods = {"gamma": ["lin-lr"], "rank": ["lin-lr"], "epsilon": ["quad-ent"]}[args.sweep]
    for m in methods:
        if m not in METHODS:
            raise UsageError(f"unknown method {m!r}")
    cells = []
    for method in methods:
        for value in values:
            cells.append((method, value))
    return cells


def _cell_args(args, method, value):
    cell = argparse.Namespace(**vars(args))
    cell.method = method
    if cell.outer_iter is None:
        cell.outer_iter = _default_outer(method)
    param = args.sweep
    if args.sweep == "gamma":
        cell.gamma = value
    elif args.sweep == "rank":
        if value != int(value) or value < 1:
            raise UsageError(f"rank values must be positive integers, got {value}")
        cell.rank = int(value)
    else:
        if args.eps_from_gamma:
            # the swept value is gamma and epsilon follows as 1 / gamma
            cell.gamma = value
            param = "gamma"
        else:
            cell.epsilon = value
            cell.lr_epsilon = value if method in ("lr", "lin-lr") else args.lr_epsilon
    return cell, param


def cmd_bench(args, argv):
    started = _now()
    cells = _bench_cells(args)
    rows = []
    for rep in range(args.reps):
        seed = cell_seed(args.seed, rep)
        src = generate(DatasetSpec(args.kind, args.n, args.d, args.k, args.beta, seed, args.std))
        tgt = generate(DatasetSpec(args.kind, args.n, args.d, args.k, args.beta, seed + 1, args.std))
        for method, value in cells:
            cell, param = _cell_args(args, method, value)
            cell.seed = seed
            t0 = time.monotonic()
            try:
                A, B, _ = build_costs(cell, src, tgt)
                a = uniform(src.shape[0])
                _, report = run_method(method, A, B, a, a, cell)
                final, iters = report.final_loss, report.n_iter
                status = "ok" if report.converged else "max_iter"
            except (InputError, NumericalError, ConvergenceError, UsageError, RefusalError) as exc:
                final, iters, status = float("nan"), 0, type(exc).__name__
                log.warning("cell %s %s=%s rep %d failed: %s", method, param, value, rep, exc)
            total_ms = 0.0 if args.deterministic else round((time.monotonic() - t0) * 1000.0, 3)
            shown = int(value) if param == "rank" else value
            rows.append((method, param, shown, rep, final, f"{total_ms:.3f}", iters, status))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(BENCH_HEADER)
        for row in rows:
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])
    write_manifest(str(args.out) + ".manifest.json", argv, args, started, {"outputs": [str(args.out)]})
    print(f"wrote {len(rows)} rows to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- validate


def cmd_validate(args, argv):
    suites = SUITES if args.suite == "all" else (args.suite,)
    ok = True
    for name in suites:
        for check in run_suite(name, seed=args.seed):
            print(f"[{name}] {check.line()}")
            ok &= check.passed
    return EXIT_OK if ok else 1


# ---------------------------------------------------------------- parser


def _solver_flags(p):
    p.add_argument("--cost", choices=COSTS, default="sqeuclidean")
    p.add_argument("--cost-rank", type=int, default=10, help="sketch rank for --cost euclidean with factored methods")
    p.add_argument("--knn", type=int, default=10, help="neighbours for --cost knn")
    p.add_argument("--normalize", choices=("max", "none"), default="max",
                   help="divide both costs by their largest entry (default)")
    p.add_argument("--epsilon", type=float, default=None, help="entropic weight of ent/quad-ent")
    p.add_argument("--eps-from-gamma", action="store_true", help="use epsilon = 1 / gamma")
    p.add_argument("--lr-epsilon", type=float, default=0.0, help="entropic weight of lr/lin-lr")
    p.add_argument("--gamma", type=float, default=100.0)
    p.add_argument("--rank", type=int, default=10)
    p.add_argument("--alpha", type=float, default=1e-10)
    p.add_argument("--outer-iter", type=int, default=None)
    p.add_argument("--stop-tol", type=float, default=1e-6)
    p.add_argument("--inner-delta", type=float, default=1e-6, help="Sinkhorn tolerance")
    p.add_argument("--inner-max-iter", type=int, default=10000)
    p.add_argument("--dykstra-delta", type=float, default=1e-3)
    p.add_argument("--init", choices=("lower_bound", "rank2", "uniform", "random"), default="lower_bound")
    p.add_argument("--ent-init", choices=("lower_bound", "product"), default="lower_bound")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action="store_true", help="zero wall-clock fields for byte-identical output")
    p.add_argument("--config", help="flat 'key = value' file; flags override it")


def _data_flags(p, required_n=True):
    p.add_argument("--kind", choices=KINDS, default="blobs" if not required_n else None, required=required_n)
    p.add_argument("--n", type=int, required=required_n, default=None if required_n else 500)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--k", type=int, default=1, help="clusters (blobs, mixture)")
    p.add_argument("--beta", type=float, default=10.0, help="minimum centroid distance")
    p.add_argument("--std", type=float, default=1.0, help="spread of blobs")


def build_parser():
    parser = argparse.ArgumentParser(prog="lowrank-gw", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = subs["gen"] = sub.add_parser("gen", help="generate a synthetic point cloud")
    _data_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--theta", type=float, default=0.0, help="rotation of isometric_pair")
    p.add_argument("--tx", type=float, default=0.0)
    p.add_argument("--ty", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.add_argument("--pair-out", default=None)
    p.add_argument("--deterministic", action="store_true")
    p.add_argument("--config")
    p.set_defaults(func=cmd_gen)

    p = subs["solve"] = sub.add_parser("solve", help="align two point clouds (or two cost files)")
    p.add_argument("--method", choices=METHODS, required=True)
    p.add_argument("--source", required=True, help="point cloud CSV, or cost CSV with --cost file")
    p.add_argument("--target", required=True)
    p.add_argument("--out-prefix", required=True)
    _solver_flags(p)
    p.set_defaults(func=cmd_solve)

    p = subs["bench"] = sub.add_parser("bench", help="sweep one parameter and write a CSV")
    p.add_argument("--sweep", choices=("gamma", "rank", "epsilon"), required=True)
    p.add_argument("--values", required=True, help="comma-separated grid")
    p.add_argument("--methods", default=None, help="comma-separated subset of " + ",".join(METHODS))
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--out", required=True)
    _data_flags(p, required_n=False)
    _solver_flags(p)
    p.set_defaults(func=cmd_bench)

    p = subs["validate"] = sub.add_parser("validate", help="run self-check suites against oracles")
    p.add_argument("--suite", choices=(*SUITES, "all"), default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config")
    p.set_defaults(func=cmd_validate)
    return parser, subs


def _default_outer(method):
    return 100 if method in ("ent", "quad-ent") else 50


def _finalize(args):
    if getattr(args, "method", None) and args.outer_iter is None:
        args.outer_iter = _default_outer(args.method)
    return args


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        args = _apply_config(parser, subs, argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"lowrank-gw: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(_finalize(args), argv)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"lowrank-gw: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
