"""Context graph construction for both platforms.

Papers are linked by undirected binary citation edges.  Repositories are
linked when they are co-starred by at least one user or share a term whose
TF-IDF weight reaches a threshold in both documents.  Each graph also
carries the symmetric-normalized adjacency used by the graph convolution.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .corpus import tokenize
from .errors import ConfigError


@dataclass(frozen=True)
class ContextGraph:
    node_ids: tuple[str, ...]
    adjacency: sp.csr_matrix
    normalized: sp.csr_matrix | None = None

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def index_of(self, node_id: str) -> int:
        return self._index()[node_id]

    def _index(self):
        # built lazily; frozen dataclass, so stash on __dict__
        idx = self.__dict__.get("_idx")
        if idx is None:
            idx = {nid: i for i, nid in enumerate(self.node_ids)}
            self.__dict__["_idx"] = idx
        return idx

    def neighbors(self, node_id: str) -> list[str]:
        i = self.index_of(node_id)
        row = self.adjacency.indices[self.adjacency.indptr[i]: self.adjacency.indptr[i + 1]]
        return [self.node_ids[j] for j in row]

    def degrees(self) -> np.ndarray:
        return np.asarray(self.adjacency.sum(axis=1)).ravel()


def _edges_to_csr(n: int, edges: set[tuple[int, int]]) -> sp.csr_matrix:
    if not edges:
        return sp.csr_matrix((n, n), dtype=np.float64)
    pairs = sorted(edges)
    rows, cols = [], []
    for i, j in pairs:
        rows.extend((i, j))
        cols.extend((j, i))
    data = np.ones(len(rows), dtype=np.float64)
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n))


def build_citation_graph(papers) -> ContextGraph:
    """Undirected binary graph over papers; dangling citations are ignored."""
    node_ids = tuple(sorted(p.id for p in papers))
    index = {nid: i for i, nid in enumerate(node_ids)}
    edges: set[tuple[int, int]] = set()
    for p in papers:
        i = index[p.id]
        for cid in p.cited_ids:
            j = index.get(cid)
            if j is None or j == i:
                continue
            edges.add((min(i, j), max(i, j)))
    return ContextGraph(node_ids=node_ids, adjacency=_edges_to_csr(len(node_ids), edges))


@dataclass(frozen=True)
class TfidfIndex:
    """Per-repository term weights, L2-normalized per document."""

    weights: dict[str, dict[str, float]]
    n_docs: int
    doc_freq: dict[str, int]

    def weight(self, repo_id: str, term: str) -> float:
        return self.weights.get(repo_id, {}).get(term, 0.0)


def _repo_document(repo) -> list[str]:
    doc = list(repo.description_tokens)
    for tag in repo.tags:
        doc.extend(tokenize(tag))
    return doc


def compute_tfidf(repos) -> TfidfIndex:
    """TF-IDF over description tokens plus tokenized tags.

    tf(t, d) = count / |d|, idf(t) = ln((1+N)/(1+df)) + 1, then every
    document vector is scaled to unit Euclidean norm.
    """
    if not repos:
        raise ValueError("compute_tfidf requires at least one repository")
    docs = {r.id: _repo_document(r) for r in repos}
    n_docs = len(docs)
    doc_freq: Counter[str] = Counter()
    for doc in docs.values():
        doc_freq.update(set(doc))
    weights: dict[str, dict[str, float]] = {}
    for rid, doc in docs.items():
        if not doc:
            weights[rid] = {}
            continue
        counts = Counter(doc)
        total = len(doc)
        raw = {
            term: (cnt / total) * (math.log((1 + n_docs) / (1 + doc_freq[term])) + 1.0)
            for term, cnt in counts.items()
        }
        norm = math.sqrt(sum(v * v for v in raw.values()))
        weights[rid] = {term: v / norm for term, v in raw.items()}
    return TfidfIndex(weights=weights, n_docs=n_docs, doc_freq=dict(doc_freq))


def build_repo_graph(repos, tfidf: TfidfIndex, threshold: float = 0.3) -> ContextGraph:
    """Binary edges from co-starring or a shared high-TF-IDF term.

    An edge {i, j} exists iff the repos share at least one starring user, or
    some term has weight >= threshold in both documents.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigError(f"tf-idf threshold must be in [0, 1], got {threshold}")
    node_ids = tuple(sorted(r.id for r in repos))
    index = {nid: i for i, nid in enumerate(node_ids)}
    edges: set[tuple[int, int]] = set()

    by_user: dict[str, list[int]] = {}
    for r in repos:
        i = index[r.id]
        for user in r.starrers:
            by_user.setdefault(user, []).append(i)
    for members in by_user.values():
        members.sort()
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                edges.add((members[a], members[b]))

    by_term: dict[str, list[int]] = {}
    for r in repos:
        i = index[r.id]
        for term, w in tfidf.weights.get(r.id, {}).items():
            if w >= threshold:
                by_term.setdefault(term, []).append(i)
    for members in by_term.values():
        members.sort()
        for a in range(len(members)):
            for b in range(a + 1, len(members)):
                edges.add((members[a], members[b]))

    return ContextGraph(node_ids=node_ids, adjacency=_edges_to_csr(len(node_ids), edges))


def normalize_adjacency(graph: ContextGraph) -> ContextGraph:
    """Populate the symmetric-normalized adjacency with self-loops.

    Entry (i, j) of the result is 1/sqrt(d_i * d_j) where d counts the
    self-loop, so an isolated node keeps a lone diagonal 1.  Off-diagonal
    values are computed once per undirected edge and inserted in both
    orientations, which makes the matrix exactly symmetric.
    """
    n = graph.n_nodes
    adj = graph.adjacency.tocoo()
    deg = np.asarray(graph.adjacency.sum(axis=1)).ravel() + 1.0
    rows, cols, data = [], [], []
    for i in range(n):
        rows.append(i)
        cols.append(i)
        data.append(1.0 / deg[i])
    mask = adj.row < adj.col
    for i, j in zip(adj.row[mask], adj.col[mask]):
        v = 1.0 / math.sqrt(deg[i] * deg[j])
        rows.extend((int(i), int(j)))
        cols.extend((int(j), int(i)))
        data.extend((v, v))
    normalized = sp.csr_matrix(
        (np.array(data), (np.array(rows), np.array(cols))), shape=(n, n)
    )
    return ContextGraph(node_ids=graph.node_ids, adjacency=graph.adjacency, normalized=normalized)


def export_edge_list(graph: ContextGraph, path) -> None:
    """Write `id_a id_b` per undirected edge, lexicographically sorted."""
    adj = graph.adjacency.tocoo()
    lines = sorted(
        f"{graph.node_ids[i]} {graph.node_ids[j]}"
        for i, j in zip(adj.row, adj.col)
        if graph.node_ids[i] < graph.node_ids[j]
    )
    with open(path, "w", encoding="utf-8") as fh:
        for line in lines:
            fh.write(line + "\n")


@dataclass(frozen=True)
class Graphs:
    """Both platform graphs with normalized adjacencies populated."""

    papers: ContextGraph
    repos: ContextGraph


def build_graphs(corpus, tfidf_threshold: float = 0.3) -> Graphs:
    paper_graph = normalize_adjacency(build_citation_graph(corpus.papers))
    tfidf = compute_tfidf(corpus.repos)
    repo_graph = normalize_adjacency(build_repo_graph(corpus.repos, tfidf, tfidf_threshold))
    return Graphs(papers=paper_graph, repos=repo_graph)
