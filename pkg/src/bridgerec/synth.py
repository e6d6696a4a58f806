"""Synthetic desk-scale corpora with planted topic structure.

Topics get disjoint vocabularies; papers, repos and users are assigned
topics round-robin.  Within a topic, repositories form small pods: users
mostly star inside one pod, pod members share a few niche tokens, and a
bridge pair additionally shares pair-specific wording between the abstract
and the description (the way an implementation repo quotes its paper).
Citations stay inside the topic with the configured probability, and bridge
papers prefer citing bridge papers of the same pod.  Everything is a pure
function of the seed.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .config import SynthConfig
from .errors import ConfigError

__all__ = ["SynthConfig", "gen_synthetic", "validate_synthetic", "topic_of_token"]


def _vocab(cfg: SynthConfig) -> list[list[str]]:
    return [
        [f"t{z}w{j:03d}" for j in range(cfg.vocab_per_topic)]
        for z in range(cfg.topics)
    ]


def topic_of_token(token: str) -> int | None:
    if not token.startswith("t") or "w" not in token:
        return None
    head = token[1: token.index("w")]
    return int(head) if head.isdigit() else None


def gen_synthetic(cfg: SynthConfig, out_dir) -> dict[str, str]:
    """Write papers/repos/bridges/embeddings files; returns their paths."""
    rng = np.random.default_rng(cfg.seed)
    z = cfg.topics
    vocab = _vocab(cfg)

    paper_topic = [i % z for i in range(cfg.papers)]
    repo_topic = [j % z for j in range(cfg.repos)]
    user_topic = [u % z for u in range(cfg.users)]
    paper_ids = [f"p{i:04d}" for i in range(cfg.papers)]
    repo_ids = [f"r{j:04d}" for j in range(cfg.repos)]
    user_ids = [f"u{u:04d}" for u in range(cfg.users)]
    papers_of_topic = [[i for i in range(cfg.papers) if paper_topic[i] == t] for t in range(z)]
    repos_of_topic = [[j for j in range(cfg.repos) if repo_topic[j] == t] for t in range(z)]

    def words(topic: int, count: int) -> list[str]:
        idx = rng.integers(0, cfg.vocab_per_topic, size=count)
        return [vocab[topic][i] for i in idx]

    # pods: same-topic repos chunked; users adopt one pod each
    pods: list[list[int]] = []
    for t in range(z):
        members = repos_of_topic[t]
        for start in range(0, len(members), cfg.pod_size):
            pods.append(members[start: start + cfg.pod_size])
    pod_of_repo = {j: i for i, pod in enumerate(pods) for j in pod}
    pods_of_topic = [[i for i, pod in enumerate(pods) if repo_topic[pod[0]] == t]
                     for t in range(z)]
    pod_motifs = [words(repo_topic[pod[0]], cfg.pod_motif_len) for pod in pods]

    # bridges first: citation and text generation depend on them
    n_bridges = round(cfg.bridge_fraction * cfg.papers)
    if n_bridges > cfg.repos:
        raise ConfigError(
            f"{n_bridges} bridges need as many distinct repos, only {cfg.repos} exist"
        )
    bridge_paper_idx = sorted(rng.choice(cfg.papers, size=n_bridges, replace=False).tolist())
    used_repos: set[int] = set()
    bridge_repo_of: dict[int, int] = {}
    for i in bridge_paper_idx:
        t = paper_topic[i]
        free = [j for j in repos_of_topic[t] if j not in used_repos]
        if not free:
            raise ConfigError(
                f"cannot place bridge for topic {t}: all {len(repos_of_topic[t])} "
                f"same-topic repos already bridged"
            )
        j = free[int(rng.integers(len(free)))]
        used_repos.add(j)
        bridge_repo_of[i] = j
    pair_motifs = {i: words(paper_topic[i], cfg.motif_len) for i in bridge_paper_idx}
    bridges_of_pod: dict[int, list[int]] = {}
    for i, j in bridge_repo_of.items():
        bridges_of_pod.setdefault(pod_of_repo[j], []).append(i)

    # citations: topic-local by default; bridge papers prefer bridge papers
    # whose repos share the pod (method papers cite related methods)
    cited_ids: list[set[str]] = []
    for i in range(cfg.papers):
        t = paper_topic[i]
        cited: set[str] = set()
        pod_peers: list[int] = []
        if i in bridge_repo_of:
            pod_peers = [p for p in bridges_of_pod[pod_of_repo[bridge_repo_of[i]]]
                         if p != i]
        for _ in range(cfg.citations_per_paper):
            if rng.random() < cfg.intra_citation_prob:
                if pod_peers and rng.random() < 0.5:
                    target = pod_peers[int(rng.integers(len(pod_peers)))]
                else:
                    own = [x for x in papers_of_topic[t] if x != i]
                    if not own:
                        continue
                    target = own[int(rng.integers(len(own)))]
            else:
                others = [x for x in range(cfg.papers) if paper_topic[x] != t]
                if not others:
                    continue
                target = others[int(rng.integers(len(others)))]
            cited.add(paper_ids[target])
        cited.discard(paper_ids[i])
        cited_ids.append(cited)

    papers = []
    for i in range(cfg.papers):
        t = paper_topic[i]
        body = words(t, cfg.abstract_len)
        if i in bridge_repo_of:
            prefix = pod_motifs[pod_of_repo[bridge_repo_of[i]]] + pair_motifs[i]
            body[: len(prefix)] = prefix[: len(body)]
        papers.append(
            {
                "id": paper_ids[i],
                "title": " ".join(words(t, 3)),
                "abstract": " ".join(body),
                "cited_ids": sorted(cited_ids[i]),
            }
        )

    starrers: dict[int, set[str]] = {j: set() for j in range(cfg.repos)}
    for u in range(cfg.users):
        t = user_topic[u]
        own_pods = pods_of_topic[t]
        pod = pods[own_pods[u % len(own_pods)]] if own_pods else []
        for _ in range(cfg.stars_per_user):
            if pod and rng.random() < cfg.intra_star_prob:
                target = pod[int(rng.integers(len(pod)))]
            else:
                target = int(rng.integers(cfg.repos))
            starrers[target].add(user_ids[u])

    bridge_paper_of = {j: i for i, j in bridge_repo_of.items()}
    repos = []
    for j in range(cfg.repos):
        t = repo_topic[j]
        body = words(t, cfg.description_len)
        prefix = list(pod_motifs[pod_of_repo[j]])
        if j in bridge_paper_of:
            prefix += pair_motifs[bridge_paper_of[j]]
        body[: len(prefix)] = prefix[: len(body)]
        # pod members share their niche wording as a tag; an implementation
        # repo also tags itself with its paper's method name
        n_tags = int(rng.integers(1, 4))
        tags = [" ".join(pod_motifs[pod_of_repo[j]][:2])]
        if j in bridge_paper_of:
            tags.append(" ".join(pair_motifs[bridge_paper_of[j]][:2]))
        tags += [" ".join(words(t, int(rng.integers(1, 3)))) for _ in range(n_tags)]
        repos.append(
            {
                "id": repo_ids[j],
                "description": " ".join(body),
                "tags": list(dict.fromkeys(tags)),
                "starrers": sorted(starrers[j]),
            }
        )

    bridges = [{"paper_id": paper_ids[i], "repo_id": repo_ids[bridge_repo_of[i]]}
               for i in bridge_paper_idx]

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "papers": os.path.join(out_dir, "papers.jsonl"),
        "repos": os.path.join(out_dir, "repos.jsonl"),
        "bridges": os.path.join(out_dir, "bridges.jsonl"),
        "embeddings": os.path.join(out_dir, "embeddings.txt"),
    }
    with open(paths["papers"], "w", encoding="utf-8") as fh:
        for rec in papers:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths["repos"], "w", encoding="utf-8") as fh:
        for rec in repos:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths["bridges"], "w", encoding="utf-8") as fh:
        for rec in bridges:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    with open(paths["embeddings"], "w", encoding="utf-8") as fh:
        scale = 1.0 / np.sqrt(cfg.embedding_dim)
        for topic_words in vocab:
            for word in topic_words:
                vec = rng.normal(0.0, scale, size=cfg.embedding_dim)
                fh.write(word + " " + " ".join(f"{v:.6f}" for v in vec) + "\n")
    return paths


def validate_synthetic(corpus, cfg: SynthConfig) -> None:
    """Check the planted-structure invariants of a generated corpus."""
    for paper in corpus.papers:
        topics = {topic_of_token(t) for t in paper.abstract_tokens}
        if len(topics) != 1 or None in topics:
            raise AssertionError(f"paper '{paper.id}' mixes topic vocabularies: {topics}")
    for repo in corpus.repos:
        doc = list(repo.description_tokens)
        for tag in repo.tags:
            doc.extend(tag.split())
        topics = {topic_of_token(t) for t in doc}
        if len(topics) != 1 or None in topics:
            raise AssertionError(f"repo '{repo.id}' mixes topic vocabularies: {topics}")
    if cfg.intra_citation_prob >= 1.0:
        topic_by_paper = {p.id: topic_of_token(p.abstract_tokens[0]) for p in corpus.papers}
        for paper in corpus.papers:
            for cid in paper.cited_ids:
                if topic_by_paper[cid] != topic_by_paper[paper.id]:
                    raise AssertionError(
                        f"cross-topic citation {paper.id} -> {cid} despite intra prob 1.0"
                    )
    n_expected = round(cfg.bridge_fraction * cfg.papers)
    if len(corpus.bridges) != n_expected:
        raise AssertionError(
            f"expected {n_expected} bridges, found {len(corpus.bridges)}"
        )
    for bridge in corpus.bridges:
        paper = corpus.papers_by_id[bridge.paper_id]
        repo = corpus.repos_by_id[bridge.repo_id]
        shared = set(paper.abstract_tokens[: cfg.pod_motif_len + cfg.motif_len])
        if not shared & set(repo.description_tokens):
            raise AssertionError(
                f"bridge {bridge.paper_id}->{bridge.repo_id} shares no motif tokens"
            )
