"""Top-K repository recommendation over persisted embeddings."""

from __future__ import annotations

import difflib
from dataclasses import dataclass

from . import gcn
from .store import EmbeddingStore, rank_by_score


@dataclass(frozen=True)
class RankedRecommendation:
    query_paper_id: str
    items: tuple[tuple[str, float], ...]


def persist_embeddings(params, ctx, path) -> EmbeddingStore:
    """Run the full forward pass and write the embedding store."""
    p_mat, r_mat = gcn.embed_all(ctx, params, mode="infer")
    store = EmbeddingStore(
        paper_ids=tuple(ctx.paper_ids),
        repo_ids=tuple(ctx.repo_ids),
        paper_vecs=p_mat,
        repo_vecs=r_mat,
    )
    store.save(path)
    return store


def recommend(store: EmbeddingStore, paper_id: str, k: int) -> RankedRecommendation:
    """Top K repositories over the whole repository set by inner product."""
    if not store.has_paper(paper_id):
        close = difflib.get_close_matches(paper_id, store.paper_ids, n=3)
        hint = f"; closest known ids: {', '.join(close)}" if close else ""
        raise ValueError(f"unknown paper id '{paper_id}'{hint}")
    scores = store.repo_vecs @ store.paper_vec(paper_id)
    ranked = rank_by_score(store.repo_ids, scores)
    return RankedRecommendation(query_paper_id=paper_id, items=tuple(ranked[:k]))
