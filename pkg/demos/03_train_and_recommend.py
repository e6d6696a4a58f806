#!/usr/bin/env python3
"""End-to-end: synthetic corpus -> training -> metrics -> top-K query.

Takes a minute or two on a laptop:

    python demos/03_train_and_recommend.py
"""

import tempfile

import numpy as np

from bridgerec.config import SynthConfig, TrainConfig
from bridgerec.corpus import load_corpus
from bridgerec.evaluator import evaluate, holdout_bridges, make_test_queries
from bridgerec.graphs import build_graphs
from bridgerec.model import EmbedContext
from bridgerec.recommend import persist_embeddings, recommend
from bridgerec.synth import gen_synthetic
from bridgerec.trainer import train

workdir = tempfile.mkdtemp(prefix="bridgerec_demo_")
scfg = SynthConfig(papers=150, repos=90, users=60, bridge_fraction=0.2,
                   seed=13, embedding_dim=25)
paths = gen_synthetic(scfg, workdir)
corpus, _ = load_corpus(paths["papers"], paths["repos"], paths["bridges"],
                        paths["embeddings"], expected_dim=25)
graphs = build_graphs(corpus)

tcfg = TrainConfig(
    learning_rate=0.004, lr_decay=0.98, epochs_max=60, patience=60,
    batch_size=16, T=4, n_k=20, seed=13,
    embedding_dim=25, abstract_len=30, description_len=12,
    paper_windows=((2, 24), (3, 24)), repo_windows=((2, 24), (3, 24)),
    gcn_width=48,
)

rng = np.random.default_rng([tcfg.seed, 104729])
train_bridges, test_bridges = holdout_bridges(corpus.bridges, 0.2, rng)
print(f"training on {len(train_bridges)} bridges, "
      f"holding out {len(test_bridges)} for evaluation")

params, history = train(tcfg, corpus.with_bridges(train_bridges), graphs)
first, last = history.records[0], history.records[-1]
print(f"epoch 1:   total {first.train_total:.3f} alignment error {first.train_ce:.4f}")
print(f"epoch {last.epoch}: total {last.train_total:.3f} "
      f"alignment error {last.train_ce:.4f}")

ctx = EmbedContext(corpus, graphs, tcfg)
store = persist_embeddings(params, ctx, f"{workdir}/embeddings.bin")
print(f"embeddings persisted to {workdir}/embeddings.bin")

queries = make_test_queries(test_bridges, corpus.repos, tcfg.T)
report = evaluate(store, queries, k_values=(1, 5, 10), runs=3, base_seed=0)
for k in report.k_values:
    print(f"K={k:2d}  HR {report.mean('hr', k):.3f}  "
          f"MRR {report.mean('mrr', k):.3f}  MAP {report.mean('map', k):.3f}")

query_paper, expected = queries[0]
result = recommend(store, query_paper, 5)
print(f"\ntop 5 repositories for held-out bridge paper {query_paper} "
      f"(its repo is {expected[0]}):")
for rank, (rid, score) in enumerate(result.items, start=1):
    marker = " <- bridge repo" if rid == expected[0] else ""
    print(f"  {rank}. {rid}  {score:.4f}{marker}")
