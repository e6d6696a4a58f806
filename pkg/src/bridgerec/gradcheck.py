"""Finite-difference verification of the analytic gradients.

Builds a small deterministic corpus (6 papers, 6 repos, 2 bridges), runs
the full loss once per perturbed parameter entry using central differences
and compares against the backward pass.  Used by the `gradcheck` CLI
subcommand and by the acceptance suite.
"""

from __future__ import annotations

import numpy as np

from . import objective, sampler
from .config import TrainConfig
from .corpus import BridgeLink, Corpus, EmbeddingTable, Paper, Repository
from .graphs import build_graphs
from .model import EmbedContext, init_params


def fixture_config(embedding_mode: str = "fixed", seed: int = 20241) -> TrainConfig:
    return TrainConfig(
        learning_rate=0.01,
        batch_size=4,
        T=2,
        n_k=2,
        margin=0.5,
        seed=seed,
        embedding_mode=embedding_mode,
        embedding_dim=8,
        abstract_len=10,
        description_len=6,
        paper_windows=((2, 4), (3, 4)),
        repo_windows=((2, 5), (3, 3)),
        gcn_width=8,
    )


def make_fixture(embedding_mode: str = "fixed", seed: int = 20241):
    """Deterministic 6-paper/6-repo/2-bridge instance with a scored batch."""
    cfg = fixture_config(embedding_mode, seed)
    rng = np.random.default_rng(cfg.seed)
    vocab = [f"word{i:02d}" for i in range(24)]
    table = EmbeddingTable(
        dimension=cfg.embedding_dim,
        entries={w: rng.normal(0.0, 0.5, size=cfg.embedding_dim) for w in vocab},
        trainable=cfg.embedding_mode != "fixed",
    )

    def text(n):
        return " ".join(vocab[int(rng.integers(len(vocab)))] for _ in range(n))

    papers = []
    for i in range(6):
        cited = {f"p{(i + 1) % 6}"} if i % 2 == 0 else {f"p{(i + 2) % 6}", f"p{(i + 5) % 6}"}
        papers.append(
            Paper(
                id=f"p{i}", title=f"paper {i}",
                abstract_tokens=tuple(text(8).split()),
                cited_ids=frozenset(cited),
            )
        )
    users = [f"u{i}" for i in range(5)]
    # sparse star sets: a complete co-star graph would let the aggregation
    # average the zero-mean normalized features straight to zero
    star_sets = [(0, 1), (1,), (2,), (2, 3), (4,), (0,)]
    repos = []
    for j in range(6):
        stars = frozenset(users[k] for k in star_sets[j])
        repos.append(
            Repository(
                id=f"r{j}",
                description_tokens=tuple(text(5).split()),
                tags=(vocab[2 * j], f"{vocab[2 * j + 1]} {vocab[(2 * j + 3) % 24]}"),
                starrers=stars,
            )
        )
    bridges = [BridgeLink("p0", "r0"), BridgeLink("p3", "r4")]
    corpus = Corpus(papers=papers, repos=repos, bridges=bridges, table=table)
    graphs = build_graphs(corpus, cfg.tfidf_threshold)
    ctx = EmbedContext(corpus, graphs, cfg)
    params = init_params(cfg, table, rng)

    pairs = sampler.build_positive_pairs(bridges, graphs.papers, repos, cfg.T)
    positives = sampler.positives_by_paper(pairs)
    batch = sampler.make_batches(pairs, list(ctx.repo_ids), positives, rng,
                                 batch_size=len(pairs), n_k=cfg.n_k)[0]
    paper_idx = np.array([ctx.paper_index[p.paper_id] for p in batch.pairs])
    pos_idx = np.array([ctx.repo_index[p.repo_id] for p in batch.pairs])
    neg_idx = np.array([[ctx.repo_index[r] for r in negs] for negs in batch.negatives])
    constraint = ctx.bridge_indices(bridges)
    return params, ctx, (paper_idx, pos_idx, neg_idx), constraint


def finite_difference_grads(loss_fn, arrays: dict[str, np.ndarray], step: float = 1e-5):
    """Central differences over every entry of every array."""
    fd: dict[str, np.ndarray] = {}
    for name, arr in arrays.items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            up = loss_fn()
            flat[i] = orig - step
            down = loss_fn()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * step)
        fd[name] = g
    return fd


def compare_grads(analytic: dict[str, np.ndarray], fd: dict[str, np.ndarray],
                  floor: float = 1e-6) -> dict[str, float]:
    """Per-array relative error: max|a - f| / max(max|a|, max|f|, floor)."""
    out = {}
    for name in fd:
        a = analytic[name]
        f = fd[name]
        denom = max(np.abs(a).max(initial=0.0), np.abs(f).max(initial=0.0), floor)
        out[name] = float(np.abs(a - f).max(initial=0.0) / denom)
    return out


def run_gradcheck(step: float = 1e-5, embedding_mode: str = "fixed"):
    """Returns (max relative error, per-parameter errors) on the fixture."""
    params, ctx, batch, constraint = make_fixture(embedding_mode)
    _, analytic, _ = objective.gradients(params, batch, ctx, constraint)

    def loss_fn():
        return objective.loss_only(params, batch, ctx, constraint)

    fd = finite_difference_grads(loss_fn, params.arrays(), step)
    errors = compare_grads(analytic, fd)
    return max(errors.values()), errors
