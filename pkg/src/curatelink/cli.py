"""Command-line interface: ``curatelink <command> [options]``.

Progress goes to stderr; results go to stdout.  Exit status is 0 on
success, 1 on a failed check and 2 on bad input.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .evaluate import mean_auc
from .features import FeatureFormatError, load_features
from .graph import (
    EdgeSplit,
    GraphError,
    build_graph,
    filter_degrees,
    read_edge_list,
    read_graph,
    split_edges,
    write_graph,
)
from .model import VARIANT_ALIASES, ModelConfig, ModelError, ranking_scores
from .modelio import ModelFileError, load_model, save_model
from .sparse import (
    build_dictionary,
    default_lambda_grid,
    encode_batch,
    encode_lasso_cd,
    format_codes,
    select_threshold_cv,
)
from .synth import SynthConfig, generate, write_dataset
from .trainer import TrainConfig, train

log = logging.getLogger("curatelink")


class UsageError(Exception):
    pass


def _load_inputs(graph_path, x_path, y_path):
    g = read_graph(graph_path)
    X, Y = load_features(x_path), load_features(y_path)
    if X.shape[0] != g.n_items:
        raise UsageError(f"item features: expected {g.n_items} rows (graph items), found {X.shape[0]}")
    if Y.shape[0] != g.n_groups:
        raise UsageError(f"group features: expected {g.n_groups} rows (graph groups), found {Y.shape[0]}")
    return g, X, Y


def _check_model_features(p, X, Y):
    cfg = p.config
    if Y.shape != (p.n_groups, cfg.d_y):
        raise UsageError(f"group features: expected {p.n_groups}x{cfg.d_y}, found {Y.shape[0]}x{Y.shape[1]}")
    if X.shape[1] != cfg.d_x:
        raise UsageError(f"item features: expected dim {cfg.d_x}, found {X.shape[1]}")


def model_config_from_args(args, d_x: int, d_y: int) -> ModelConfig:
    common = dict(margin=args.margin, reg_weight=args.reg_weight, reg_latent=args.reg_latent)
    if args.variant in ("proposed", "baseline"):
        k_item = 0 if args.k_item is None else args.k_item
        k_group = 64 if args.k_group is None else args.k_group
        if args.variant == "baseline" and args.k_item is None:
            k_item = 64
        return ModelConfig(args.variant, d_x, d_y, k_item, k_group, **common)
    variant, k_item, k_group = VARIANT_ALIASES[args.variant]
    for flag, fixed, given in (("--k-item", k_item, args.k_item), ("--k-group", k_group, args.k_group)):
        if given is not None and fixed == 0 and given != 0:
            raise UsageError(f"{flag} cannot be set for --variant {args.variant}")
    k_item = k_item if args.k_item is None else args.k_item
    k_group = k_group if args.k_group is None else args.k_group
    return ModelConfig(variant, d_x, d_y, k_item, k_group, **common)


# ---------------------------------------------------------------------------
# commands

def cmd_build(args) -> int:
    edges = read_edge_list(args.edges)
    g, vocab = build_graph(edges)
    log.info("read %d edge lines", len(edges))
    out, group_map, item_map = filter_degrees(g, args.min_item_deg, args.min_group_deg)
    vocab = vocab.remap(group_map, item_map)
    write_graph(out, args.out_graph)
    vocab.save(f"{args.out_graph}.groups.tsv", f"{args.out_graph}.items.tsv")
    print(f"input_groups={g.n_groups}\tinput_items={g.n_items}\tinput_edges={g.n_edges}")
    print(f"removed_groups={g.n_groups - out.n_groups}\tremoved_items={g.n_items - out.n_items}")
    print(f"groups={out.n_groups}\titems={out.n_items}\tedges={out.n_edges}")
    return 0


def cmd_train(args) -> int:
    g, X, Y = _load_inputs(args.graph, args.item_features, args.group_features)
    model_cfg = model_config_from_args(args, X.shape[1], Y.shape[1])
    if args.holdout:
        split = split_edges(g, args.test_fraction, seed=args.seed)
        out = Path(args.holdout)
        out.mkdir(parents=True, exist_ok=True)
        write_graph(split.train, out / "train.tsv")
        write_graph(split.test_graph(), out / "test.tsv")
        log.info("held out %d of %d edges", split.n_test_edges, g.n_edges)
        g = split.train
    cfg = TrainConfig(
        learning_rate=args.learning_rate,
        epochs=args.epochs,
        seed=args.seed,
        pairs_per_item_per_epoch=args.pairs_per_item,
        parallel=args.parallel,
        threads=args.threads,
    )
    params, report = train(cfg, model_cfg, g, X, Y)
    save_model(params, args.out)
    if args.report:
        Path(args.report).write_text(report.to_text(), encoding="utf-8")
    if report.losses:
        print(f"final_loss={report.losses[-1]!r}")
    print(f"model={args.out}")
    return 0


def _split_from_args(args) -> EdgeSplit:
    if args.split_dir:
        train_path, test_path = Path(args.split_dir) / "train.tsv", Path(args.split_dir) / "test.tsv"
    else:
        if not (args.train_graph and args.test_graph):
            raise UsageError("give --split-dir or both --train-graph and --test-graph")
        train_path, test_path = args.train_graph, args.test_graph
    return EdgeSplit.from_graphs(read_graph(train_path), read_graph(test_path))


def cmd_eval(args) -> int:
    p = load_model(args.model)
    split = _split_from_args(args)
    X, Y = load_features(args.item_features), load_features(args.group_features)
    _check_model_features(p, X, Y)
    if (split.train.n_items, split.train.n_groups) != (p.n_items, p.n_groups):
        raise UsageError(
            f"graph has {split.train.n_items} items x {split.train.n_groups} groups, "
            f"model expects {p.n_items} x {p.n_groups}"
        )
    report = mean_auc(p, split, X, Y)
    log.info("evaluated %d items, skipped %d", report.n_items_evaluated, report.n_items_skipped)
    sys.stdout.write(report.to_text())
    return 0


def cmd_encode(args) -> int:
    p = load_model(args.model)
    X, Y = load_features(args.item_features), load_features(args.group_features)
    _check_model_features(p, X, Y)
    D = build_dictionary(p, Y, normalize=True)
    if args.cv:
        n = min(X.shape[0], args.cv_sample)
        sample = X[np.random.default_rng(args.seed).choice(X.shape[0], size=n, replace=False)]
        grid = default_lambda_grid(D, p, sample, args.grid_size)
        lam = select_threshold_cv(D, p, sample, grid, folds=args.folds, seed=args.seed)
    elif args.lam is not None:
        lam = args.lam
    else:
        raise UsageError("give --lambda or --cv")
    if args.solver == "threshold":
        codes = encode_batch(D, p, X, lam)
    else:
        codes = [encode_lasso_cd(D, p, x, lam, tol=args.tol) for x in X]
    Path(args.out).write_text(format_codes(codes), encoding="utf-8")
    nnz = sum(len(c) for c in codes)
    print(f"lambda={lam!r}\titems={len(codes)}\tmean_nonzeros={nnz / max(len(codes), 1):.3f}")
    return 0


def cmd_predict(args) -> int:
    p = load_model(args.model)
    X, Y = load_features(args.item_features), load_features(args.group_features)
    _check_model_features(p, X, Y)
    k = min(args.top_k, p.n_groups)
    if p.config.k_item and not args.known_items:
        raise UsageError("model uses item latents; pass --known-items to score rows as training items")
    if args.known_items and X.shape[0] != p.n_items:
        raise UsageError(f"--known-items: expected {p.n_items} feature rows, found {X.shape[0]}")
    out = sys.stdout
    for r in range(X.shape[0]):
        s = ranking_scores(p, X[r], r if args.known_items else None, Y)
        # stable sort so equal scores keep group-index order
        top = np.argsort(-s, kind="stable")[:k]
        out.write(f"{r}\t{' '.join(map(str, top.tolist()))}\n")
    return 0


def cmd_gensynth(args) -> int:
    cfg = SynthConfig(
        n_concepts=args.n_concepts,
        n_groups=args.n_groups,
        n_items=args.n_items,
        d_x=args.d_x,
        d_y=args.d_y,
        group_feature_noise=args.group_feature_noise,
        item_feature_noise=args.item_feature_noise,
        feature_informativeness=args.feature_informativeness,
        zipf_exponent=args.zipf_exponent,
        groups_per_item=args.groups_per_item,
        seed=args.seed,
    )
    data = generate(cfg)
    paths = write_dataset(data, args.out_dir, args.feature_format)
    for key, path in paths.items():
        print(f"{key}={path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    res = run_gradcheck(
        args.configs, args.seed, args.d_x, args.d_y, args.k_item, args.k_group,
        corrupt=args.corrupt_gradient, tolerance=args.tolerance,
    )
    status = "PASS" if res.passed else "FAIL"
    print(f"configs={len(res.errors)}\tmax_relative_error={res.max_error:.3e}\tworst={res.worst_block()}\t{status}")
    return 0 if res.passed else 1


# ---------------------------------------------------------------------------
# parser

def _model_flags(p):
    p.add_argument("--variant", default="latent-group",
                   choices=["proposed", "baseline", *VARIANT_ALIASES],
                   help="model family or preset (default: latent-group)")
    p.add_argument("--k-item", type=int, default=None, help="item latent dim")
    p.add_argument("--k-group", type=int, default=None, help="group latent dim")
    p.add_argument("--margin", type=float, default=1.0)
    p.add_argument("--reg-weight", type=float, default=1e-5)
    p.add_argument("--reg-latent", type=float, default=1e-5)


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="curatelink", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="edge list -> filtered dense graph + vocab")
    p.add_argument("--edges", required=True)
    p.add_argument("--out-graph", required=True)
    p.add_argument("--min-item-deg", type=int, default=2)
    p.add_argument("--min-group-deg", type=int, default=1)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("train", help="train a link model")
    p.add_argument("--graph", required=True)
    p.add_argument("--item-features", required=True)
    p.add_argument("--group-features", required=True)
    p.add_argument("--out", required=True, help="model file to write")
    _model_flags(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--learning-rate", type=float, default=0.05)
    p.add_argument("--pairs-per-item", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--holdout", metavar="DIR", help="split edges, train on the rest, write DIR/train.tsv and DIR/test.tsv")
    p.add_argument("--test-fraction", type=float, default=0.1)
    p.add_argument("--report", help="write per-epoch loss/time TSV here")
    p.add_argument("--parallel", action="store_true", help="lock-free multi-threaded SGD (nondeterministic)")
    p.add_argument("--threads", type=int, default=4)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean AUC on held-out edges")
    p.add_argument("--model", required=True)
    p.add_argument("--split-dir")
    p.add_argument("--train-graph")
    p.add_argument("--test-graph")
    p.add_argument("--item-features", required=True)
    p.add_argument("--group-features", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("encode", help="sparse codes over the group dictionary")
    p.add_argument("--model", required=True)
    p.add_argument("--item-features", required=True)
    p.add_argument("--group-features", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lambda", dest="lam", type=float)
    p.add_argument("--cv", action="store_true", help="choose lambda by cross-validation")
    p.add_argument("--folds", type=int, default=10)
    p.add_argument("--cv-sample", type=int, default=2000)
    p.add_argument("--grid-size", type=int, default=25)
    p.add_argument("--solver", choices=["threshold", "lasso-cd"], default="threshold")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("predict", help="top-k groups per item")
    p.add_argument("--model", required=True)
    p.add_argument("--item-features", required=True)
    p.add_argument("--group-features", required=True)
    p.add_argument("--top-k", type=int, default=10)
    p.add_argument("--known-items", action="store_true", help="rows are training items (uses item latents)")
    p.set_defaults(func=cmd_predict)

    d = SynthConfig()
    p = sub.add_parser("gensynth", help="write a planted-concept dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-concepts", type=int, default=d.n_concepts)
    p.add_argument("--n-groups", type=int, default=d.n_groups)
    p.add_argument("--n-items", type=int, default=d.n_items)
    p.add_argument("--d-x", type=int, default=d.d_x)
    p.add_argument("--d-y", type=int, default=d.d_y)
    p.add_argument("--group-feature-noise", type=float, default=d.group_feature_noise)
    p.add_argument("--item-feature-noise", type=float, default=d.item_feature_noise)
    p.add_argument("--feature-informativeness", type=float, default=d.feature_informativeness)
    p.add_argument("--zipf-exponent", type=float, default=d.zipf_exponent)
    p.add_argument("--groups-per-item", type=int, default=d.groups_per_item)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--feature-format", choices=["binary", "text"], default="binary")
    p.set_defaults(func=cmd_gensynth)

    p = sub.add_parser("gradcheck", help="finite-difference check of the training gradients")
    p.add_argument("--configs", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-x", type=int, default=3)
    p.add_argument("--d-y", type=int, default=2)
    p.add_argument("--k-item", type=int, default=2)
    p.add_argument("--k-group", type=int, default=2)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--corrupt-gradient", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stderr.close()
        return 0
    except (UsageError, GraphError, FeatureFormatError, ModelError, ModelFileError, OSError) as e:
        print(f"curatelink {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
