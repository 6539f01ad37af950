"""Command-line front end.

Subcommands: train, eval, propagate, mine, blobs, gradcheck.  Results go
to stdout (or --out) as JSON lines or CSV.  Exit codes: 0 success, 1 usage
error, 2 data or numeric error.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import sys
from dataclasses import fields

import numpy as np

from . import gradcheck as gc
from .data import (load_csv, make_blobs, parse_idx, sample_partition, strip_labels,
                   write_csv)
from .encoder import l2_normalize_rows
from .errors import SsdmlError
from .graph import build_knn, neighbor_matrix, seed_affinity
from .mining import mine_triplets
from .propagation import propagate
from .trainer import TrainConfig, evaluate_checkpoint, load_model, save_model, train


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems; the contract here is exit 1
    def error(self, message):
        raise _UsageError(message)


@contextlib.contextmanager
def _out_stream(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _add_data_flags(p):
    p.add_argument("--data", help="dataset CSV (features f0.., optional label column)")
    p.add_argument("--images-idx", help="IDX image file (use with --labels-idx)")
    p.add_argument("--labels-idx", help="IDX label file (use with --images-idx)")


def _add_train_flags(p):
    defaults = TrainConfig()
    p.add_argument("--method", choices=["ours", "seraph", "lrml"],
                   default=defaults.method,
                   help="graph-triplet method or a classical pairwise baseline")
    p.add_argument("--gamma", type=float, default=defaults.gamma,
                   help="affinity propagation weight")
    p.add_argument("--k", type=int, default=defaults.k, help="kNN graph degree")
    p.add_argument("--alpha-deg", type=float, default=defaults.alpha_deg,
                   help="angular loss angle in degrees")
    p.add_argument("--embed-dim", type=int, default=defaults.embed_dim,
                   help="embedding dimension l")
    p.add_argument("--lr", type=float, default=defaults.lr,
                   help="encoder SGD learning rate")
    p.add_argument("--batch-triplets", type=int, default=defaults.batch_triplets,
                   help="mini-batch size in triplets (pairs for baselines)")
    p.add_argument("--partition-size", type=int, default=defaults.partition_size,
                   help="unlabeled rows per partition (0 = all)")
    p.add_argument("--epochs-per-partition", type=int,
                   default=defaults.epochs_per_partition)
    p.add_argument("--max-epochs", type=int, default=defaults.max_epochs,
                   help="total training epochs across partitions")
    p.add_argument("--inner-l-iters", type=int, default=defaults.inner_l_iters,
                   help="metric optimizer steps per batch")
    p.add_argument("--seed", type=int, default=defaults.seed,
                   help="run seed (drives every RNG stream)")
    p.add_argument("--orth", action=argparse.BooleanOptionalAction,
                   default=defaults.orth,
                   help="keep the metric factor orthonormal (Stiefel steps)")
    p.add_argument("--encoder", action=argparse.BooleanOptionalAction,
                   default=defaults.encoder,
                   help="train the affine encoder alongside the metric")
    p.add_argument("--seraph-eta", type=float, default=defaults.seraph_eta,
                   help="entropy baseline distance threshold")
    p.add_argument("--seraph-mu", type=float, default=defaults.seraph_mu,
                   help="entropy baseline unlabeled weight")
    p.add_argument("--seraph-lambda", type=float,
                   default=defaults.seraph_lambda,
                   help="entropy baseline trace weight")
    p.add_argument("--lrml-gamma-s", type=float, default=defaults.lrml_gamma_s,
                   help="Laplacian baseline similar-pair weight")
    p.add_argument("--lrml-gamma-d", type=float, default=defaults.lrml_gamma_d,
                   help="Laplacian baseline dissimilar-pair weight")


def _load_dataset(args):
    if args.data:
        return load_csv(args.data)
    if args.images_idx and args.labels_idx:
        return parse_idx(args.images_idx, args.labels_idx)
    raise _UsageError("provide --data or both --images-idx and --labels-idx")


def _config_from_args(args) -> TrainConfig:
    names = {f.name for f in fields(TrainConfig)}
    kwargs = {name: getattr(args, name) for name in names if hasattr(args, name)}
    return TrainConfig(**kwargs)


def _cmd_train(args) -> int:
    dataset = _load_dataset(args)
    config = _config_from_args(args)
    model = train(dataset, config)
    if args.model:
        save_model(model, args.model)
    with _out_stream(args.out) as out:
        for rec in model.history:
            out.write(json.dumps(rec) + "\n")
    return 0


def _cmd_eval(args) -> int:
    dataset = _load_dataset(args)
    model = load_model(args.model)
    try:
        ks = tuple(int(v) for v in args.recall_ks.split(","))
        if not ks:
            raise ValueError("empty")
    except ValueError:
        raise _UsageError(f"--recall-ks must be comma-separated integers, "
                          f"got {args.recall_ks!r}") from None
    report = evaluate_checkpoint(model, dataset, ks=ks, seed=args.seed)
    with _out_stream(args.out) as out:
        out.write(json.dumps(report.as_json_dict()) + "\n")
    return 0


def _partition_affinity(args):
    dataset = _load_dataset(args)
    n_p = dataset.unlabeled_indices.size if args.partition_size == 0 \
        else args.partition_size
    part = sample_partition(dataset, n_p, args.seed)
    rows = part.node_rows
    Z = l2_normalize_rows(dataset.features[rows])
    graph = build_knn(Z, args.k)
    aff = propagate(neighbor_matrix(graph), seed_affinity(dataset.labels[rows]),
                    args.gamma)
    return graph, aff


def _cmd_propagate(args) -> int:
    _, aff = _partition_affinity(args)
    with _out_stream(args.out) as out:
        for row in aff.W:
            out.write(",".join(f"{v:.17g}" for v in row) + "\n")
    return 0


def _cmd_mine(args) -> int:
    graph, aff = _partition_affinity(args)
    triplets = mine_triplets(aff.W, graph)
    with _out_stream(args.out) as out:
        out.write("anchor,positive,negative\n")
        for t in triplets:
            out.write(f"{t.anchor},{t.positive},{t.negative}\n")
    return 0


def _cmd_blobs(args) -> int:
    dataset = make_blobs(args.classes, args.per_class, args.signal_dims,
                         args.noise_dims, args.sep, args.noise_sigma, args.seed)
    if args.labeled_per_class is not None:
        dataset = strip_labels(dataset, args.labeled_per_class, seed=args.seed)
    with _out_stream(args.out) as out:
        write_csv(dataset, out)
    return 0


def _cmd_gradcheck(args) -> int:
    errors = gc.run_all(seed=args.seed, trials=args.trials)
    ok = True
    for name, err in errors.items():
        status = "ok" if err <= gc.REL_TOL else "FAIL"
        print(f"{name}: max relative error {err:.3e} [{status}]")
        ok = ok and err <= gc.REL_TOL
    return 0 if ok else 2


def build_parser() -> _Parser:
    parser = _Parser(prog="ssdml", description=__doc__,
                     formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--threads", type=int, default=1,
                        help="worker threads (1 = reproducible default)")
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = dict(formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    p = sub.add_parser("train", help="learn a metric (and optional encoder)", **fmt)
    _add_data_flags(p)
    _add_train_flags(p)
    p.add_argument("--model", help="where to write the trained model")
    p.add_argument("--out", help="history JSON-lines path (default stdout)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="score a model on a labeled dataset", **fmt)
    _add_data_flags(p)
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--recall-ks", default="1,2,4,8",
                   help="comma-separated Recall@K cutoffs")
    p.add_argument("--seed", type=int, default=0, help="evaluation k-means seed")
    p.add_argument("--out", help="output path (default stdout)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("propagate", help="dump the propagated affinity matrix", **fmt)
    _add_data_flags(p)
    p.add_argument("--gamma", type=float, default=TrainConfig.gamma,
                   help="affinity propagation weight")
    p.add_argument("--k", type=int, default=TrainConfig.k, help="kNN graph degree")
    p.add_argument("--partition-size", type=int,
                   default=TrainConfig.partition_size,
                   help="unlabeled rows per partition (0 = all)")
    p.add_argument("--seed", type=int, default=0, help="partition sampling seed")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_propagate)

    p = sub.add_parser("mine", help="dump mined triplets as CSV", **fmt)
    _add_data_flags(p)
    p.add_argument("--gamma", type=float, default=TrainConfig.gamma,
                   help="affinity propagation weight")
    p.add_argument("--k", type=int, default=TrainConfig.k, help="kNN graph degree")
    p.add_argument("--partition-size", type=int,
                   default=TrainConfig.partition_size,
                   help="unlabeled rows per partition (0 = all)")
    p.add_argument("--seed", type=int, default=0, help="partition sampling seed")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("blobs", help="generate a synthetic blob dataset", **fmt)
    p.add_argument("--classes", type=int, required=True, help="class count")
    p.add_argument("--per-class", type=int, required=True,
                   help="points per class")
    p.add_argument("--signal-dims", type=int, default=5,
                   help="class-separated leading dimensions")
    p.add_argument("--noise-dims", type=int, default=45,
                   help="class-independent nuisance dimensions")
    p.add_argument("--sep", type=float, default=6.0,
                   help="class mean magnitude in the signal block")
    p.add_argument("--noise-sigma", type=float, default=4.0,
                   help="per-dimension noise standard deviation")
    p.add_argument("--labeled-per-class", type=int, default=None,
                   help="keep this many labels per class (default: keep all)")
    p.add_argument("--seed", type=int, default=0, help="generator seed")
    p.add_argument("--out", help="CSV path (default stdout)")
    p.set_defaults(func=_cmd_blobs)

    p = sub.add_parser("gradcheck",
                       help="finite-difference check of all analytic gradients",
                       **fmt)
    p.add_argument("--seed", type=int, default=0, help="instance generator seed")
    p.add_argument("--trials", type=int, default=100,
                   help="random instances per gradient suite")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SsdmlError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except np.linalg.LinAlgError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
