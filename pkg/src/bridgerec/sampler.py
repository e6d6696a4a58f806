"""Distant-supervised positive pairs and negative sampling.

Positives come from three heuristics: the bridge pair itself, repositories
most co-starred with the bridge repository, and one-hop citation neighbors
of the bridge paper paired with the bridge repository.  Negatives are drawn
uniformly from repositories outside the paper's known positive set.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_PROVENANCE_PRIORITY = {"bridge": 0, "costar_topT": 1, "onehop_neighbor": 2}


@dataclass(frozen=True)
class TrainingPair:
    paper_id: str
    repo_id: str
    provenance: str


@dataclass
class TrainingBatch:
    pairs: list[TrainingPair]
    negatives: list[list[str]]


def costar_top(bridge_repo_id: str, repos, t: int) -> list[str]:
    """Repos most co-starred with the bridge repo, at most ``t`` of them.

    Only strictly positive intersection counts qualify; ties break by
    ascending repo id.
    """
    by_id = {r.id: r for r in repos}
    if bridge_repo_id not in by_id:
        raise ValueError(f"unknown repo id '{bridge_repo_id}'")
    base = by_id[bridge_repo_id].starrers
    counts = []
    for r in sorted(repos, key=lambda x: x.id):
        if r.id == bridge_repo_id:
            continue
        shared = len(base & r.starrers)
        if shared > 0:
            counts.append((-shared, r.id))
    counts.sort()
    return [rid for _, rid in counts[:t]]


def build_positive_pairs(bridges, citation_graph, repos, t: int) -> list[TrainingPair]:
    """All positive pairs with provenance, deduplicated.

    When the same (paper, repo) pair arises from several heuristics the
    highest-priority provenance wins (bridge > costar > one-hop).
    """
    chosen: dict[tuple[str, str], str] = {}

    def add(paper_id: str, repo_id: str, provenance: str) -> None:
        key = (paper_id, repo_id)
        current = chosen.get(key)
        if current is None or _PROVENANCE_PRIORITY[provenance] < _PROVENANCE_PRIORITY[current]:
            chosen[key] = provenance

    for bridge in sorted(bridges, key=lambda b: b.paper_id):
        add(bridge.paper_id, bridge.repo_id, "bridge")
        for rid in costar_top(bridge.repo_id, repos, t):
            add(bridge.paper_id, rid, "costar_topT")
        neighbors = sorted(citation_graph.neighbors(bridge.paper_id))[:t]
        for pid in neighbors:
            add(pid, bridge.repo_id, "onehop_neighbor")

    return [
        TrainingPair(paper_id=p, repo_id=r, provenance=prov)
        for (p, r), prov in sorted(chosen.items())
    ]


def positives_by_paper(pairs) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for pair in pairs:
        out.setdefault(pair.paper_id, set()).add(pair.repo_id)
    return out


def sample_negatives(rng: np.random.Generator, pair: TrainingPair, all_repo_ids,
                     positives_of_paper: set, n_k: int) -> list[str]:
    """Uniform sample without replacement, excluding known positives."""
    candidates = sorted(set(all_repo_ids) - positives_of_paper)
    if len(candidates) < n_k:
        raise ValueError(
            f"paper '{pair.paper_id}': only {len(candidates)} negative candidates "
            f"available, need {n_k}"
        )
    picked = rng.choice(len(candidates), size=n_k, replace=False)
    return [candidates[i] for i in picked]


def make_batches(pairs, all_repo_ids, positives: dict[str, set[str]],
                 rng: np.random.Generator, batch_size: int, n_k: int) -> list[TrainingBatch]:
    """One epoch of shuffled fixed-size batches with fresh negatives."""
    if not pairs:
        raise ValueError("make_batches requires a non-empty pair list")
    order = rng.permutation(len(pairs))
    shuffled = [pairs[i] for i in order]
    batches = []
    for start in range(0, len(shuffled), batch_size):
        chunk = shuffled[start: start + batch_size]
        negatives = [
            sample_negatives(rng, pair, all_repo_ids, positives[pair.paper_id], n_k)
            for pair in chunk
        ]
        batches.append(TrainingBatch(pairs=chunk, negatives=negatives))
    return batches


def dump_pairs(pairs, path) -> None:
    """Audit file: one JSON record per labeled pair, with provenance."""
    with open(path, "w", encoding="utf-8") as fh:
        for pair in pairs:
            fh.write(
                json.dumps(
                    {"paper_id": pair.paper_id, "repo_id": pair.repo_id,
                     "provenance": pair.provenance},
                    sort_keys=True,
                )
                + "\n"
            )
