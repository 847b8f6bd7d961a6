"""Command-line entry point: gen-data, train, explain, eval, ablate."""

from __future__ import annotations

import argparse
import os
import sys
from collections import Counter
from pathlib import Path

from . import __version__
from .config import load_config, provenance, resolve
from .datasets import generate_ba3motif, generate_multimotif, load_dataset, save_dataset
from .explainers import make_retrieval_explainer, random_explainer, saliency_explainer
from .metrics import export_embeddings, run_benchmark
from .model import ShapeError, load_checkpoint, predict, save_checkpoint
from .plots import save_training_curves
from .retrieval import export_explanations
from .training import VARIANTS, HyperParams, TrainingDiverged, ablate, candidate_pools, fit
from .util import write_csv

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_BAD_INPUT = 2
EXIT_DIVERGED = 3

HP_DEFAULTS = {
    "epochs": 80,
    "warmup_epochs": 15,
    "lr": 1e-3,
    "batch_size": 32,
    "lambda1": 1.0,
    "lambda2": 1.0,
    "q": 0.7,
    "t": 0.4,
    "tau": 0.5,
    "ratio": 0.3,
    "contrastive": "permute",
    "gce_on_trivial": False,
    "candidate_size": 64,
    "hidden_dim": 32,
    "num_layers": 2,
    "seed": 0,
}


def _hyper_from(options: dict) -> HyperParams:
    return HyperParams(
        q=options["q"],
        lam1=options["lambda1"],
        lam2=options["lambda2"],
        t=options["t"],
        tau=options["tau"],
        ratio=options["ratio"],
        lr=options["lr"],
        epochs=options["epochs"],
        batch_size=options["batch_size"],
        warmup_epochs=options["warmup_epochs"],
        seed=options["seed"],
        contrastive_mode=options["contrastive"],
        gce_on_trivial=options["gce_on_trivial"],
        candidate_size=options["candidate_size"],
        hidden_dim=options["hidden_dim"],
        num_layers=options["num_layers"],
    )


def _add_hp_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--epochs", type=int)
    p.add_argument("--warmup-epochs", dest="warmup_epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--ratio", type=float)
    p.add_argument("--contrastive", choices=["permute", "infonce"])
    p.add_argument("--gce-on-trivial", dest="gce_on_trivial", action="store_const", const=True)
    p.add_argument("--candidate-size", dest="candidate_size", type=int)
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--num-layers", dest="num_layers", type=int)
    p.add_argument("--seed", type=int)


def _options(cmd: str, args, defaults: dict) -> dict:
    section = {}
    if getattr(args, "config", None):
        section = load_config(args.config).get(cmd, {})
    overrides = {k: getattr(args, k, None) for k in defaults}
    return resolve(defaults, section, overrides)


def _load_data_or_exit(path: str):
    if not os.path.exists(path):
        print(f"error: dataset file not found: {path}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)
    return load_dataset(path)


def _load_model_or_exit(checkpoint: str, ds):
    if not os.path.exists(checkpoint):
        print(f"error: checkpoint not found: {checkpoint}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)
    try:
        params, meta = load_checkpoint(checkpoint)
    except ShapeError as exc:
        print(f"error: bad checkpoint: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_BAD_INPUT)
    d = ds.graphs[0].node_features.shape[1]
    if params.feature_dim != d or params.num_classes != ds.num_classes:
        print(
            f"error: checkpoint/data mismatch: model expects d={params.feature_dim}, "
            f"{params.num_classes} classes; data has d={d}, {ds.num_classes} classes",
            file=sys.stderr,
        )
        raise SystemExit(EXIT_BAD_INPUT)
    return params, meta


def cmd_gen_data(args) -> int:
    defaults = {
        "kind": "ba3motif",
        "num_graphs": 300,
        "motifs_per_class": 2,
        "size_min": 13,
        "size_max": 17,
        "feature_dim": 8,
        "seed": 0,
        "out": "dataset.jsonl",
    }
    opt = _options("gen-data", args, defaults)
    size_range = (opt["size_min"], opt["size_max"])
    if opt["kind"] == "ba3motif":
        ds = generate_ba3motif(opt["num_graphs"], size_range, opt["seed"], opt["feature_dim"])
    elif opt["kind"] == "multimotif":
        ds = generate_multimotif(
            opt["num_graphs"], opt["motifs_per_class"], size_range, opt["seed"], opt["feature_dim"]
        )
    else:
        print(f"error: unknown dataset kind {opt['kind']!r}", file=sys.stderr)
        return EXIT_BAD_INPUT
    save_dataset(ds, opt["out"], header_comment=provenance("gen-data", opt["seed"], opt))
    labels = Counter(g.label for g in ds.graphs)
    print(f"wrote {len(ds.graphs)} graphs to {opt['out']}")
    print("labels: " + ", ".join(f"{c}:{labels[c]}" for c in sorted(labels)))
    print("splits: " + ", ".join(f"{k}:{len(v)}" for k, v in ds.splits.items()))
    return EXIT_OK


def cmd_train(args) -> int:
    defaults = dict(HP_DEFAULTS)
    defaults.update({"data": "dataset.jsonl", "checkpoint_out": "model.npz", "log_out": "train_log.csv"})
    opt = _options("train", args, defaults)
    ds = _load_data_or_exit(opt["data"])
    hp = _hyper_from(opt)
    header = provenance("train", opt["seed"], opt)
    try:
        result = fit(ds, hp)
    except TrainingDiverged as exc:
        rescue = str(opt["checkpoint_out"]) + ".lastgood.npz"
        save_checkpoint(rescue, exc.params, hp.to_dict(), exc.epoch, hp.seed)
        print(f"error: training diverged at epoch {exc.epoch}: {exc}", file=sys.stderr)
        print(f"last-good checkpoint: {rescue}", file=sys.stderr)
        return EXIT_DIVERGED
    save_checkpoint(opt["checkpoint_out"], result.params, hp.to_dict(), result.best_epoch, hp.seed)
    write_csv(
        opt["log_out"],
        ["epoch", "L_sup", "L_dis", "L_con", "train_acc", "val_acc"],
        [
            [r["epoch"], r["l_sup"], r["l_dis"], r["l_con"], r["train_acc"], r["val_acc"]]
            for r in result.log
        ],
        header_comment=header,
    )
    save_training_curves(result.log, Path(opt["log_out"]).with_suffix(".png"))
    for w in result.warnings:
        print("warning: " + w, file=sys.stderr)
    print(
        f"best epoch {result.best_epoch}; test accuracy {result.test_acc:.4f} "
        f"(retrieval pipeline {result.pipeline_test_acc:.4f})"
    )
    print(f"checkpoint: {opt['checkpoint_out']}; log: {opt['log_out']}")
    return EXIT_OK


def cmd_explain(args) -> int:
    defaults = {
        "data": "dataset.jsonl",
        "checkpoint": "model.npz",
        "out": "explanations.csv",
        "ratio": 0.3,
        "t": 0.4,
        "candidate_size": 64,
        "seed": 0,
    }
    opt = _options("explain", args, defaults)
    ds = _load_data_or_exit(opt["data"])
    params, _ = _load_model_or_exit(opt["checkpoint"], ds)
    hp = HyperParams(ratio=opt["ratio"], t=opt["t"], candidate_size=opt["candidate_size"], seed=opt["seed"])
    cand = candidate_pools(ds, params, hp)
    explainer = make_retrieval_explainer(params, cand, opt["ratio"], opt["t"])
    graphs = ds.split_graphs("explain")
    expls = [explainer(g) for g in graphs]
    export_explanations(opt["out"], graphs, expls, header_comment=provenance("explain", opt["seed"], opt))
    print(f"wrote explanations for {len(graphs)} graphs to {opt['out']}")
    return EXIT_OK


def cmd_eval(args) -> int:
    defaults = {
        "data": "dataset.jsonl",
        "checkpoint": "model.npz",
        "out": "report.csv",
        "embeddings_out": "embeddings.csv",
        "n": 5,
        "ratio": 0.3,
        "t": 0.4,
        "candidate_size": 64,
        "dataset_name": "dataset",
        "seed": 0,
    }
    opt = _options("eval", args, defaults)
    ds = _load_data_or_exit(opt["data"])
    params, _ = _load_model_or_exit(opt["checkpoint"], ds)
    hp = HyperParams(ratio=opt["ratio"], t=opt["t"], candidate_size=opt["candidate_size"], seed=opt["seed"])
    cand = candidate_pools(ds, params, hp)
    rc = make_retrieval_explainer(params, cand, opt["ratio"], opt["t"])
    explainers = {
        "rc": rc,
        "random": lambda g: random_explainer(g, opt["seed"], opt["ratio"]),
        "saliency": lambda g: saliency_explainer(params, g, opt["ratio"]),
    }
    header = provenance("eval", opt["seed"], opt)
    report = run_benchmark(
        ds,
        lambda g: predict(params, g),
        explainers,
        n=opt["n"],
        out_path=opt["out"],
        dataset_name=opt["dataset_name"],
        seed=opt["seed"],
        header_comment=header,
        figure_path=Path(opt["out"]).with_suffix(".png"),
    )
    export_embeddings(params, ds, rc, opt["embeddings_out"], header_comment=header)
    for row in report.rows:
        print(
            f"{row['explainer']}: acc_auc={row['acc_auc']:.4f} "
            f"recall@{opt['n']}={row['recall']:.4f} precision@{opt['n']}={row['precision']:.4f}"
        )
    print(f"report: {opt['out']}; embeddings: {opt['embeddings_out']}")
    return EXIT_OK


def cmd_ablate(args) -> int:
    defaults = dict(HP_DEFAULTS)
    defaults.update({"data": "dataset.jsonl", "out": "ablation.csv", "n": 5})
    opt = _options("ablate", args, defaults)
    ds = _load_data_or_exit(opt["data"])
    hp = _hyper_from(opt)
    rows = []
    for variant in VARIANTS:
        res = ablate(ds, hp, variant, n=opt["n"])
        rows.append([variant, res.test_acc, res.acc_auc, res.recall_at_n, res.precision_at_n])
        print(
            f"{variant}: test_acc={res.test_acc:.4f} acc_auc={res.acc_auc:.4f} "
            f"recall@{opt['n']}={res.recall_at_n:.4f} precision@{opt['n']}={res.precision_at_n:.4f}"
        )
    write_csv(
        opt["out"],
        ["variant", "test_acc", "acc_auc", "recall@N", "precision@N"],
        rows,
        header_comment=provenance("ablate", opt["seed"], opt),
    )
    from .plots import save_ablation_bars

    save_ablation_bars(rows, Path(opt["out"]).with_suffix(".png"))
    print(f"ablation report: {opt['out']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rcgnn",
        description="Retrieval-based causal graph classification with built-in explanations",
    )
    parser.add_argument("--version", action="version", version=f"rcgnn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic motif dataset")
    p.add_argument("--config")
    p.add_argument("--kind", choices=["ba3motif", "multimotif"])
    p.add_argument("--n", "--num-graphs", dest="num_graphs", type=int)
    p.add_argument("--motifs-per-class", dest="motifs_per_class", type=int)
    p.add_argument("--size-min", dest="size_min", type=int)
    p.add_argument("--size-max", dest="size_max", type=int)
    p.add_argument("--feature-dim", dest="feature_dim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_gen_data)

    p = sub.add_parser("train", help="train the model on a dataset file")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--checkpoint-out", dest="checkpoint_out")
    p.add_argument("--log-out", dest="log_out")
    _add_hp_flags(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("explain", help="emit per-edge explanations for the explain split")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--ratio", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--candidate-size", dest="candidate_size", type=int)
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_explain)

    p = sub.add_parser("eval", help="benchmark explainers and write the metrics report")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--checkpoint")
    p.add_argument("--out")
    p.add_argument("--embeddings-out", dest="embeddings_out")
    p.add_argument("--n", type=int)
    p.add_argument("--ratio", type=float)
    p.add_argument("--t", type=float)
    p.add_argument("--candidate-size", dest="candidate_size", type=int)
    p.add_argument("--dataset-name", dest="dataset_name")
    p.add_argument("--seed", type=int)
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("ablate", help="train and evaluate all ablation variants")
    p.add_argument("--config")
    p.add_argument("--data")
    p.add_argument("--out")
    p.add_argument("--n", type=int)
    _add_hp_flags(p)
    p.set_defaults(handler=cmd_ablate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
