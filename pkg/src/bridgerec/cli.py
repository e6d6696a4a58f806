"""Command-line driver for every pipeline stage.

Subcommands: ingest, build-graphs, train, evaluate, recommend,
gen-synthetic, gradcheck.  Each reads one TOML configuration file plus
`--set section.key=value` overrides; exit code 0 on success, 1 with a
one-line `error: ...` message otherwise, 2 for usage problems.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import evaluator, gradcheck, synth, trainer
from .config import AppConfig, config_hash, load_config
from .corpus import load_corpus, save_bridges, save_papers, save_repos
from .errors import CheckpointError, ConfigError, CorpusError, TrainingDiverged
from .graphs import build_graphs, export_edge_list
from .model import EmbedContext, load_checkpoint, save_checkpoint
from .recommend import persist_embeddings, recommend as recommend_repos
from .store import EmbeddingStore

_HOLDOUT_STREAM = 104729   # fixed stream tag so train/evaluate agree on the split


def _app(args) -> AppConfig:
    return load_config(args.config, args.set or ())


def _read_corpus(app: AppConfig):
    trainable = app.train.embedding_mode != "fixed"
    return load_corpus(
        app.data.path("papers"),
        app.data.path("repos"),
        app.data.path("bridges"),
        app.data.path("embeddings"),
        expected_dim=app.train.embedding_dim,
        trainable=trainable,
    )


def _bridge_split(app: AppConfig, corpus):
    rng = np.random.default_rng([app.train.seed, _HOLDOUT_STREAM])
    return evaluator.holdout_bridges(corpus.bridges, app.train.test_fraction, rng)


def _out_dir(args, app: AppConfig) -> str:
    out = args.out or app.data.dir
    os.makedirs(out, exist_ok=True)
    return out


def _cmd_ingest(args) -> int:
    app = _app(args)
    corpus, reports = _read_corpus(app)
    print(f"papers: {len(corpus.papers)}")
    print(f"repos: {len(corpus.repos)}")
    print(f"bridges: {len(corpus.bridges)}")
    print(f"vocabulary: {len(corpus.table)} tokens, dim {corpus.table.dimension}")
    n_warn = sum(len(r.warnings) for r in reports)
    print(f"warnings: {n_warn}")
    for report in reports:
        for w in report.warnings[:10]:
            print(f"  {w}")
    if args.out:
        out = _out_dir(args, app)
        save_papers(corpus.papers, os.path.join(out, "papers.jsonl"))
        save_repos(corpus.repos, os.path.join(out, "repos.jsonl"))
        save_bridges(corpus.bridges, os.path.join(out, "bridges.jsonl"))
        print(f"normalized corpus written to {out}")
    return 0


def _cmd_build_graphs(args) -> int:
    app = _app(args)
    corpus, _ = _read_corpus(app)
    graphs = build_graphs(corpus, app.train.tfidf_threshold)
    for name, g in (("paper", graphs.papers), ("repo", graphs.repos)):
        n_edges = int(g.adjacency.nnz // 2)
        print(f"{name} graph: {g.n_nodes} nodes, {n_edges} edges")
    if args.export_dir:
        os.makedirs(args.export_dir, exist_ok=True)
        export_edge_list(graphs.papers, os.path.join(args.export_dir, "papers.edges"))
        export_edge_list(graphs.repos, os.path.join(args.export_dir, "repos.edges"))
        print(f"edge lists written to {args.export_dir}")
    return 0


def _cmd_train(args) -> int:
    app = _app(args)
    corpus, _ = _read_corpus(app)
    train_bridges, test_bridges = _bridge_split(app, corpus)
    graphs = build_graphs(corpus, app.train.tfidf_threshold)
    params, history = trainer.train(app.train, corpus.with_bridges(train_bridges), graphs)

    out = _out_dir(args, app)
    ckpt_path = os.path.join(out, "checkpoint.bin")
    save_checkpoint(params, ckpt_path, config_hash(app.train))
    history.to_csv(os.path.join(out, "history.csv"))
    ctx = EmbedContext(corpus, graphs, app.train)
    persist_embeddings(params, ctx, os.path.join(out, "embeddings.bin"))

    last = history.records[-1]
    print(f"epochs: {len(history.records)} (best {history.best_epoch})")
    print(f"train total: {last.train_total:.6f} warp: {last.train_warp:.6f} "
          f"c_e: {last.train_ce:.6f}")
    print(f"val loss: {last.val_loss:.6f}")
    print(f"bridge pairs within eps: {last.frac_within_eps:.3f}")
    print(f"held-out test bridges: {len(test_bridges)}")
    print(f"checkpoint: {ckpt_path}")
    return 0


def _cmd_evaluate(args) -> int:
    app = _app(args)
    corpus, _ = _read_corpus(app)
    _, test_bridges = _bridge_split(app, corpus)
    if not test_bridges:
        raise ValueError("no held-out test bridges; raise train.test_fraction")
    store_path = args.store or os.path.join(app.data.dir, "embeddings.bin")
    store = EmbeddingStore.load(store_path)
    queries = evaluator.make_test_queries(test_bridges, corpus.repos, app.train.T)
    out = _out_dir(args, app)
    detail = os.path.join(out, "metrics_detail.csv") if args.detail else None
    report = evaluator.evaluate(
        store, queries,
        k_values=app.eval.k_values,
        runs=app.eval.runs,
        base_seed=app.eval.seed,
        slate_size=app.eval.slate_size,
        detail_path=detail,
    )
    report.to_csv(os.path.join(out, "metrics.csv"))
    for k in report.k_values:
        print(f"K={k}: HR {report.mean('hr', k):.4f} MRR {report.mean('mrr', k):.4f} "
              f"MAP {report.mean('map', k):.4f}")
    if args.plot:
        paths = evaluator.plot_metrics(report, os.path.join(out, "metrics"))
        print("plots: " + ", ".join(paths))
    return 0


def _cmd_recommend(args) -> int:
    app = _app(args)
    store_path = args.store or os.path.join(app.data.dir, "embeddings.bin")
    store = EmbeddingStore.load(store_path)
    result = recommend_repos(store, args.paper, args.k)
    for rank, (rid, score) in enumerate(result.items, start=1):
        print(f"{rank}\t{rid}\t{score:.6f}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    app = _app(args)
    out = args.out or app.data.dir
    paths = synth.gen_synthetic(app.synth, out)
    for name in ("papers", "repos", "bridges", "embeddings"):
        print(f"{name}: {paths[name]}")
    return 0


def _cmd_gradcheck(args) -> int:
    max_err, _ = gradcheck.run_gradcheck(step=args.step, embedding_mode=args.mode)
    print(f"max relative error: {max_err:.3e}")
    return 0 if max_err < 1e-3 else 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bridgerec",
        description="Joint paper/repository embeddings and top-K recommendation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", default=None, help="TOML configuration file")
        p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                       help="override a config value (repeatable)")

    p = sub.add_parser("ingest", help="load and validate the corpus files")
    common(p)
    p.add_argument("--out", default=None, help="re-serialize the corpus here")
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("build-graphs", help="construct both context graphs")
    common(p)
    p.add_argument("--export-dir", default=None, help="write edge-list files here")
    p.set_defaults(func=_cmd_build_graphs)

    p = sub.add_parser("train", help="train and write checkpoint/history/embeddings")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default: data dir)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="rank held-out test slates and report metrics")
    common(p)
    p.add_argument("--store", default=None, help="embedding store path")
    p.add_argument("--out", default=None, help="output directory (default: data dir)")
    p.add_argument("--detail", action="store_true", help="write per-query detail file")
    p.add_argument("--plot", action="store_true", help="render metric-vs-K curves")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("recommend", help="top-K repositories for a query paper")
    common(p)
    p.add_argument("--store", default=None, help="embedding store path")
    p.add_argument("--paper", required=True, help="query paper id")
    p.add_argument("--k", type=int, default=10)
    p.set_defaults(func=_cmd_recommend)

    p = sub.add_parser("gen-synthetic", help="generate a synthetic corpus")
    common(p)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output directory (default: data dir)")
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("gradcheck", help="finite-difference check on the bundled fixture")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--mode", default="fixed", choices=["fixed", "trainable", "concat"])
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "seed", None) is not None:
        args.set = list(args.set or [])
        section = "synth" if args.command == "gen-synthetic" else "train"
        args.set.append(f"{section}.seed={args.seed}")
    try:
        return args.func(args)
    except (CorpusError, ConfigError, CheckpointError, TrainingDiverged,
            ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
