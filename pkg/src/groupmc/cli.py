"""Command line front end.

Subcommands: complete (solve a completion problem), synth (crossed-group
synthetic data), mask (masking regimes), calibrate (per-category penalty
levels), eval (metrics), replay (re-run a recorded manifest).

Every command writes a JSON run manifest next to its outputs that records the
resolved configuration, paths and seed; replaying a manifest reproduces the
output files byte for byte. Exit codes: 0 success, 1 numerical failure
(divergence), 2 input or usage errors.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from .groups import (CoverageError, GroupStructure, lambda_heuristic,
                     load_groups_csv, save_groups_csv)
from .matio import (load_labels_csv, load_matrix, save_dense_csv,
                    save_labels_csv)
from .evalbench import (SyntheticSpec, adjusted_rand_index, frobenius_error,
                        generate_crossed_groups, normalized_mutual_information,
                        per_group_grassmann, per_group_subspace_error, rmse_on)
from .observation import (ObservationMask, load_mask_csv, mask_block_rows,
                          sample_uniform_mask, save_mask_csv, split_holdout)
from .solver import (DivergenceError, SolverConfig, solve_global_svt,
                     solve_group_aware)

THREADS_ENV = "GAME_THREADS"
EXIT_NUMERICAL = 1
EXIT_USAGE = 2


def _effective_threads(flag_value: int) -> int:
    env = os.environ.get(THREADS_ENV)
    if env is not None:
        return max(1, int(env))
    return max(1, flag_value)


def _json_dump(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_manifest(args, outputs: list[str], started: float) -> None:
    manifest = {
        "command": args.command,
        "argv": args._argv,
        "config": {k: v for k, v in vars(args).items()
                   if not k.startswith("_") and k not in ("command", "func")},
        "inputs": getattr(args, "_inputs", {}),
        "outputs": sorted(outputs),
        "seed": getattr(args, "seed", None),
        "duration_s": time.monotonic() - started,
        "version": __version__,
    }
    # One manifest per command so a shared --out prefix keeps the whole
    # workflow chain replayable.
    _json_dump(manifest, f"{args.out}_{args.command}_manifest.json")


def _load_matrix_and_mask(matrix_path, mask_path) -> tuple[np.ndarray, ObservationMask]:
    X, derived = load_matrix(matrix_path)
    if mask_path is not None:
        mask = load_mask_csv(mask_path, X.shape[0], X.shape[1])
        if derived is not None:
            stray = np.setdiff1d(mask.idx, derived.idx, assume_unique=True)
            if stray.size:
                i, j = int(stray[0] // mask.cols), int(stray[0] % mask.cols)
                raise ValueError(f"mask lists cell ({i},{j}) which is blank "
                                 f"in {matrix_path}")
        return X, mask
    if derived is not None:
        return X, derived
    return X, ObservationMask.full(X.shape[0], X.shape[1])


def _load_groups(path, n: int, allow_uncovered: bool) -> GroupStructure:
    if path is None or not os.path.exists(path):
        raise CoverageError(
            f"groups file {path!r} is missing; a row cover (every row in at "
            f"least one category) is required for grouped completion. "
            f"Pass --groups, or --baseline svt for the global solver.")
    return load_groups_csv(path, n, allow_uncovered=allow_uncovered)


def _parse_row_spec(spec: str) -> list[int]:
    rows: list[int] = []
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            rows.extend(range(int(lo), int(hi) + 1))
        else:
            rows.append(int(part))
    if not rows:
        raise ValueError(f"empty row spec {spec!r}")
    return rows


def _global_lambda_heuristic(mask: ObservationMask, sigma: float,
                             subexp_scale: float, scale: float) -> float:
    # Single-penalty analogue of the per-category rule (one block = the
    # whole matrix), used for the svt baseline.
    n, m = mask.rows, mask.cols
    d = n + m
    return scale * (sigma * math.sqrt(mask.n_observed * math.log(d) / min(n, m))
                    + subexp_scale * math.log(d))


def cmd_complete(args) -> int:
    X, mask = _load_matrix_and_mask(args.matrix, args.mask)
    args._inputs = {"matrix": args.matrix, "mask": args.mask,
                    "groups": args.groups}
    threads = _effective_threads(args.threads)
    outputs = []

    if args.baseline == "svt":
        if args.lam is None:
            raise ValueError("--baseline svt requires --lambda")
        result = solve_global_svt(X, mask, args.lam, gamma=args.gamma,
                                  max_iters=args.max_iters,
                                  rel_tol=args.rel_tol,
                                  accelerate=not args.pg)
    else:
        g = _load_groups(args.groups, X.shape[0], args.allow_uncovered)
        if args.category_lambdas is not None:
            with open(args.category_lambdas) as fh:
                lambdas = {str(k): float(v) for k, v in json.load(fh).items()}
            missing = [cid for cid in g.ids if cid not in lambdas]
            if missing:
                raise ValueError(f"--category-lambdas misses categories {missing}")
            lambdas = {cid: lambdas[cid] for cid in g.ids}
        elif args.sigma is not None:
            lambdas = lambda_heuristic(g, mask, args.sigma,
                                       subexp_scale=args.subexp_r,
                                       scale=args.scale)
        elif args.lam is not None:
            lambdas = {cid: args.lam / len(g) for cid in g.ids}
        else:
            raise ValueError("provide --lambda, --category-lambdas or --sigma")
        config = SolverConfig.from_category_lambdas(
            lambdas, gamma=args.gamma, max_iters=args.max_iters,
            rel_tol=args.rel_tol, trunc_rank=args.trunc_rank,
            spikiness_alpha=args.spikiness_alpha, accelerate=not args.pg,
            seed=args.seed, threads=threads)
        result = solve_group_aware(X, mask, g, config)

    completed_path = f"{args.out}_completed.csv"
    save_dense_csv(result.W_hat, completed_path)
    trace_path = f"{args.out}_trace.json"
    _json_dump({"objective": result.objective_trace.tolist(),
                "iters_run": result.iters_run,
                "converged": result.converged}, trace_path)
    outputs += [completed_path, trace_path]
    return 0, outputs


def cmd_synth(args) -> int:
    spec = SyntheticSpec(n=args.n, m=args.m, num_groups=args.groups_count,
                         num_subclusters=args.subclusters,
                         group_rank=args.group_rank, sub_rank=args.sub_rank,
                         beta=args.beta, noise_sigma=args.noise_sigma,
                         seed=args.seed, score_norm=args.score_norm)
    X, groups, hidden, parts = generate_crossed_groups(spec)
    args._inputs = {}
    outputs = []

    def put_matrix(name, A):
        path = f"{args.out}_{name}.csv"
        save_dense_csv(A, path)
        outputs.append(path)

    put_matrix("X", X)
    put_matrix("truth", parts["signal"])
    put_matrix("group_means", parts["group_means"])
    put_matrix("sub_means", parts["sub_means"])
    put_matrix("group_lowrank", parts["group_lowrank"])
    put_matrix("sub_lowrank", parts["sub_lowrank"])
    put_matrix("noise", parts["noise"])
    groups_path = f"{args.out}_groups.csv"
    save_groups_csv(groups, groups_path)
    labels_path = f"{args.out}_hidden_labels.csv"
    save_labels_csv(hidden, labels_path)
    outputs += [groups_path, labels_path]
    return 0, outputs


def cmd_mask(args) -> int:
    if args.keep_prob is None and args.block_rows is None and args.holdout is None:
        raise ValueError("nothing to do: pass --keep-prob, --block-rows "
                         "and/or --holdout")
    if (args.block_rows is None) != (args.block_drop is None):
        raise ValueError("--block-rows and --block-drop must be given together")
    X, mask = _load_matrix_and_mask(args.matrix, None)
    args._inputs = {"matrix": args.matrix}
    outputs = []

    if args.keep_prob is not None:
        keep = sample_uniform_mask(mask.rows, mask.cols, args.keep_prob,
                                   args.seed)
        mask = ObservationMask(mask.rows, mask.cols,
                               np.intersect1d(mask.idx, keep.idx,
                                              assume_unique=True))
    test = None
    if args.holdout is not None:
        mask, test = split_holdout(mask, args.holdout, args.seed + 1)
    if args.block_rows is not None:
        rows = _parse_row_spec(args.block_rows)
        mask = mask_block_rows(mask, rows, args.block_drop, args.seed + 2)

    if test is None:
        path = f"{args.out}_mask.csv"
        save_mask_csv(mask, path)
        outputs.append(path)
    else:
        train_path = f"{args.out}_train.csv"
        test_path = f"{args.out}_test.csv"
        save_mask_csv(mask, train_path)
        save_mask_csv(test, test_path)
        outputs += [train_path, test_path]
    return 0, outputs


def cmd_calibrate(args) -> int:
    X, mask = _load_matrix_and_mask(args.matrix, args.mask)
    g = _load_groups(args.groups, X.shape[0], args.allow_uncovered)
    args._inputs = {"matrix": args.matrix, "mask": args.mask,
                    "groups": args.groups}
    lambdas = lambda_heuristic(g, mask, args.sigma,
                               subexp_scale=args.subexp_r, scale=args.scale)
    print(json.dumps(lambdas, indent=2, sort_keys=True))
    path = f"{args.out}_lambdas.json"
    _json_dump(lambdas, path)
    return 0, [path]


KNOWN_METRICS = ("rmse", "frob", "subspace", "grassmann", "ari", "nmi")


def cmd_eval(args) -> int:
    wanted = [m.strip() for m in args.metrics.split(",") if m.strip()]
    unknown = [m for m in wanted if m not in KNOWN_METRICS]
    if unknown:
        raise ValueError(f"unknown metric(s) {unknown}; known: "
                         f"{', '.join(KNOWN_METRICS)}")
    if not wanted:
        raise ValueError("no metrics requested")
    args._inputs = {"truth": args.truth, "estimate": args.estimate,
                    "test_mask": args.test_mask, "groups": args.groups,
                    "labels_true": args.labels_true,
                    "labels_pred": args.labels_pred}

    need_matrices = {"rmse", "frob", "subspace", "grassmann"} & set(wanted)
    truth = estimate = None
    if need_matrices:
        if args.truth is None or args.estimate is None:
            raise ValueError(f"metrics {sorted(need_matrices)} need --truth "
                             f"and --estimate")
        truth, _ = load_matrix(args.truth)
        estimate, _ = load_matrix(args.estimate)

    report = {}
    for name in wanted:
        if name == "rmse":
            if args.test_mask is None:
                raise ValueError("rmse needs --test-mask")
            test = load_mask_csv(args.test_mask, truth.shape[0], truth.shape[1])
            report["rmse"] = rmse_on(test, truth, estimate)
        elif name == "frob":
            report["frob"] = frobenius_error(truth, estimate)
        elif name in ("subspace", "grassmann"):
            g = _load_groups(args.groups, truth.shape[0], False)
            if name == "subspace":
                report["subspace"] = per_group_subspace_error(
                    g, truth, estimate, ranks=args.rank)
            else:
                report["grassmann"] = per_group_grassmann(
                    g, truth, estimate, ranks=args.rank,
                    kind=args.grassmann_kind)
        else:
            if args.labels_true is None or args.labels_pred is None:
                raise ValueError(f"{name} needs --labels-true and --labels-pred")
            a = load_labels_csv(args.labels_true)
            b = load_labels_csv(args.labels_pred)
            if name == "ari":
                report["ari"] = adjusted_rand_index(a, b)
            else:
                report["nmi"] = normalized_mutual_information(a, b)

    print(json.dumps(report, indent=2, sort_keys=True))
    path = f"{args.out}_metrics.json"
    _json_dump(report, path)
    return 0, [path]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupmc",
        description="Group-aware low-rank matrix completion toolkit")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--out", required=True,
                       help="output path prefix (files get _<name> suffixes)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("complete", help="solve a completion problem")
    p.add_argument("matrix", help="dense or triplet CSV")
    add_common(p)
    p.add_argument("--mask", help="row,col CSV of observed cells")
    p.add_argument("--groups", help="row,category CSV")
    p.add_argument("--baseline", choices=["svt"],
                   help="use the global nuclear-norm baseline instead")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="global penalty level")
    p.add_argument("--category-lambdas",
                   help="JSON file mapping category id to its penalty")
    p.add_argument("--sigma", type=float,
                   help="noise level for the calibration rule")
    p.add_argument("--subexp-R", dest="subexp_r", type=float, default=0.0,
                   help="subexponential tail scale for the calibration rule")
    p.add_argument("--scale", type=float, default=1.0,
                   help="multiplier on the calibrated penalties")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--trunc-rank", type=int)
    p.add_argument("--spikiness-alpha", type=float)
    p.add_argument("--pg", action="store_true",
                   help="plain proximal gradient (no momentum)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help=f"per-category parallelism (env {THREADS_ENV} overrides)")
    p.add_argument("--allow-uncovered", action="store_true",
                   help="collect uncovered rows into a catch-all category")
    p.set_defaults(func=cmd_complete)

    p = sub.add_parser("synth", help="generate crossed-group synthetic data")
    add_common(p)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--m", type=int, default=500)
    p.add_argument("--groups-count", type=int, default=10)
    p.add_argument("--subclusters", type=int, default=5)
    p.add_argument("--group-rank", type=int, default=3)
    p.add_argument("--sub-rank", type=int, default=3)
    p.add_argument("--beta", type=float, default=0.0)
    p.add_argument("--noise-sigma", type=float, default=0.1)
    p.add_argument("--score-norm", choices=["unit", "raw"], default="unit")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mask", help="derive masks: uniform, block-wise, holdout")
    p.add_argument("matrix")
    add_common(p)
    p.add_argument("--keep-prob", type=float,
                   help="keep each observed cell with this probability")
    p.add_argument("--block-rows",
                   help="rows for block-wise drop, e.g. '0,3,10-19'")
    p.add_argument("--block-drop", type=float,
                   help="drop probability inside the block rows")
    p.add_argument("--holdout", type=float,
                   help="test fraction; writes train and test masks")
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("calibrate", help="per-category penalty levels")
    p.add_argument("matrix")
    add_common(p)
    p.add_argument("--mask")
    p.add_argument("--groups", required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--subexp-R", dest="subexp_r", type=float, default=0.0)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--allow-uncovered", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("eval", help="score an estimate against the truth")
    add_common(p)
    p.add_argument("--metrics", required=True,
                   help=f"comma list from: {', '.join(KNOWN_METRICS)}")
    p.add_argument("--truth")
    p.add_argument("--estimate")
    p.add_argument("--test-mask")
    p.add_argument("--groups")
    p.add_argument("--rank", type=int,
                   help="subspace rank per category (default: detected)")
    p.add_argument("--grassmann-kind", choices=["geodesic", "chordal"],
                   default="geodesic")
    p.add_argument("--labels-true")
    p.add_argument("--labels-pred")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "replay":
        with open(args.manifest) as fh:
            recorded = json.load(fh)
        return main(recorded["argv"])
    args._argv = argv
    started = time.monotonic()
    try:
        code, outputs = args.func(args)
    except DivergenceError as exc:
        print(f"groupmc {args.command}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, KeyError, OSError) as exc:
        print(f"groupmc {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    _write_manifest(args, outputs, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
