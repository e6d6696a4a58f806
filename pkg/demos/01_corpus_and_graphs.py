#!/usr/bin/env python3
"""Generate a small synthetic corpus, load it, and inspect both context graphs.

Run from the repository root:

    python demos/01_corpus_and_graphs.py
"""

import tempfile

from bridgerec.config import SynthConfig
from bridgerec.corpus import load_corpus
from bridgerec.graphs import build_graphs, compute_tfidf, export_edge_list
from bridgerec.synth import gen_synthetic

workdir = tempfile.mkdtemp(prefix="bridgerec_demo_")
print(f"writing corpus files to {workdir}")

cfg = SynthConfig(topics=3, papers=90, repos=60, users=40,
                  bridge_fraction=0.2, seed=42, embedding_dim=25)
paths = gen_synthetic(cfg, workdir)
corpus, reports = load_corpus(paths["papers"], paths["repos"], paths["bridges"],
                              paths["embeddings"], expected_dim=25)

print(f"\nloaded {len(corpus.papers)} papers, {len(corpus.repos)} repos, "
      f"{len(corpus.bridges)} bridge links")
print(f"load warnings: {sum(len(r.warnings) for r in reports)}")

sample = corpus.papers[0]
print(f"\nexample paper {sample.id}: abstract starts "
      f"{' '.join(sample.abstract_tokens[:6])} ...")
print(f"cites: {sorted(sample.cited_ids)[:5]}")

# TF-IDF weights drive the shared-term edges of the repository graph
tfidf = compute_tfidf(corpus.repos)
rid = corpus.repos[0].id
top_terms = sorted(tfidf.weights[rid].items(), key=lambda kv: -kv[1])[:5]
print(f"\nrepo {rid} strongest terms: "
      + ", ".join(f"{t}={w:.3f}" for t, w in top_terms))

graphs = build_graphs(corpus, tfidf_threshold=0.3)
for name, g in (("paper", graphs.papers), ("repo", graphs.repos)):
    degrees = g.degrees()
    print(f"{name} graph: {g.n_nodes} nodes, {int(g.adjacency.nnz // 2)} edges, "
          f"mean degree {degrees.mean():.1f}, max {int(degrees.max())}")

export_edge_list(graphs.repos, f"{workdir}/repo_edges.txt")
print(f"\nrepo edge list exported to {workdir}/repo_edges.txt")
with open(f"{workdir}/repo_edges.txt") as fh:
    for line in list(fh)[:5]:
        print("  " + line.strip())
