import math

import numpy as np
import pytest

from bridgerec.corpus import Paper, Repository, tokenize
from bridgerec.errors import ConfigError
from bridgerec.graphs import (
    build_citation_graph, build_repo_graph, compute_tfidf, export_edge_list,
    normalize_adjacency,
)


def paper(pid, cited=()):
    return Paper(id=pid, title=pid, abstract_tokens=(), cited_ids=frozenset(cited))


def repo(rid, desc="", tags=(), starrers=()):
    return Repository(id=rid, description_tokens=tuple(tokenize(desc)),
                      tags=tuple(tags), starrers=frozenset(starrers))


def edge_set(graph):
    coo = graph.adjacency.tocoo()
    return {
        (graph.node_ids[i], graph.node_ids[j])
        for i, j in zip(coo.row, coo.col) if i < j
    }


def tfidf_oracle(docs):
    """Straight evaluation of the stated formulas, one doc at a time."""
    n = len(docs)
    df = {}
    for doc in docs.values():
        for term in set(doc):
            df[term] = df.get(term, 0) + 1
    out = {}
    for key, doc in docs.items():
        if not doc:
            out[key] = {}
            continue
        raw = {}
        for term in set(doc):
            tf = doc.count(term) / len(doc)
            idf = math.log((1 + n) / (1 + df[term])) + 1
            raw[term] = tf * idf
        norm = math.sqrt(sum(v * v for v in raw.values()))
        out[key] = {t: v / norm for t, v in raw.items()}
    return out


class TestCitationGraph:
    def test_undirected_edge(self):
        g = build_citation_graph([paper("p1", ["p2"]), paper("p2")])
        assert edge_set(g) == {("p1", "p2")}
        assert (g.adjacency != g.adjacency.T).nnz == 0

    def test_dangling_citation_ignored(self):
        g = build_citation_graph([paper("p1", ["ghost"])])
        assert edge_set(g) == set()

    def test_degrees(self):
        g = build_citation_graph(
            [paper("p1", ["p2"]), paper("p2"), paper("p3", ["p2"])]
        )
        assert g.degrees().tolist() == [1, 2, 1]


class TestTfidf:
    def test_term_in_all_docs_has_idf_one(self):
        repos = [repo(f"r{i}", desc="shared extra%d" % i) for i in range(4)]
        idx = compute_tfidf(repos)
        # idf == 1, so the weight is tf times 1 before normalization
        doc = ["shared", f"extra{0}"]
        tf = 1 / len(doc)
        other_idf = math.log(5 / 2) + 1
        norm = math.sqrt(tf * tf + (tf * other_idf) ** 2)
        assert idx.weight("r0", "shared") == pytest.approx(tf / norm, abs=1e-12)

    def test_single_doc_two_terms(self):
        idx = compute_tfidf([repo("r0", desc="a b a")])
        expected = tfidf_oracle({"r0": ["a", "b", "a"]})["r0"]
        assert expected["a"] == pytest.approx(2 / math.sqrt(5), abs=1e-12)
        assert expected["b"] == pytest.approx(1 / math.sqrt(5), abs=1e-12)
        assert idx.weights["r0"] == pytest.approx(expected, abs=1e-12)

    def test_empty_document(self):
        idx = compute_tfidf([repo("r0"), repo("r1", desc="x")])
        assert idx.weights["r0"] == {}

    def test_tags_join_the_document(self):
        idx = compute_tfidf([repo("r0", desc="alpha", tags=["beta gamma"])])
        assert set(idx.weights["r0"]) == {"alpha", "beta", "gamma"}

    def test_requires_repos(self):
        with pytest.raises(ValueError):
            compute_tfidf([])


class TestRepoGraph:
    def test_costar_edge(self):
        repos = [repo("r1", starrers=["u1"]), repo("r2", starrers=["u1"])]
        g = build_repo_graph(repos, compute_tfidf(repos))
        assert edge_set(g) == {("r1", "r2")}

    def test_shared_term_over_threshold_both_sides(self):
        repos = [repo("r1", desc="imagenet"), repo("r2", desc="imagenet"),
                 repo("r3", desc="other words only here")]
        idx = compute_tfidf(repos)
        assert idx.weight("r1", "imagenet") >= 0.3
        g = build_repo_graph(repos, idx, threshold=0.3)
        assert ("r1", "r2") in edge_set(g)

    def test_term_below_threshold_on_one_side_no_edge(self):
        # r2 dilutes "shared" with many other terms, dropping its weight
        repos = [repo("r1", desc="shared"),
                 repo("r2", desc="shared " + " ".join(f"w{i}" for i in range(30)))]
        idx = compute_tfidf(repos)
        assert idx.weight("r1", "shared") >= 0.3
        assert idx.weight("r2", "shared") < 0.3
        g = build_repo_graph(repos, idx, threshold=0.3)
        assert edge_set(g) == set()

    def test_threshold_validation(self):
        repos = [repo("r1")]
        with pytest.raises(ConfigError):
            build_repo_graph(repos, compute_tfidf(repos), threshold=1.5)

    def test_no_self_edges(self):
        repos = [repo("r1", desc="solo", starrers=["u1"])]
        g = build_repo_graph(repos, compute_tfidf(repos))
        assert g.adjacency.diagonal().sum() == 0

    def test_star_monotonicity(self):
        rng = np.random.default_rng(5)
        repos = []
        for i in range(20):
            stars = [f"u{int(u)}" for u in rng.integers(0, 10, size=rng.integers(0, 3))]
            repos.append(repo(f"r{i:02d}", desc=f"term{i % 5}", starrers=stars))
        idx = compute_tfidf(repos)
        before = edge_set(build_repo_graph(repos, idx))
        target = repos[3]
        repos[3] = Repository(id=target.id, description_tokens=target.description_tokens,
                              tags=target.tags,
                              starrers=target.starrers | {"u0"})
        after = edge_set(build_repo_graph(repos, compute_tfidf(repos)))
        assert before <= after

    def test_matches_bruteforce_oracle(self):
        rng = np.random.default_rng(11)
        vocab = [f"t{i}" for i in range(15)]
        repos = []
        for i in range(60):
            desc = " ".join(rng.choice(vocab, size=rng.integers(1, 5)))
            stars = [f"u{int(u)}" for u in rng.integers(0, 25, size=rng.integers(0, 4))]
            repos.append(repo(f"r{i:02d}", desc=desc, starrers=stars))
        idx = compute_tfidf(repos)
        got = edge_set(build_repo_graph(repos, idx, threshold=0.3))

        expected = set()
        for a in range(len(repos)):
            for b in range(a + 1, len(repos)):
                ra, rb = repos[a], repos[b]
                costar = bool(ra.starrers & rb.starrers)
                wa, wb = idx.weights[ra.id], idx.weights[rb.id]
                shared = any(wa[t] >= 0.3 and wb.get(t, 0.0) >= 0.3 for t in wa)
                if costar or shared:
                    expected.add(tuple(sorted((ra.id, rb.id))))
        assert got == expected


class TestNormalizeAdjacency:
    def test_isolated_node(self):
        g = normalize_adjacency(build_citation_graph([paper("p1")]))
        dense = g.normalized.toarray()
        assert dense.shape == (1, 1)
        assert dense[0, 0] == 1.0

    def test_two_connected_nodes(self):
        g = normalize_adjacency(build_citation_graph([paper("p1", ["p2"]), paper("p2")]))
        assert np.allclose(g.normalized.toarray(), 0.5)

    def test_path_graph_entry(self):
        g = normalize_adjacency(build_citation_graph(
            [paper("p1", ["p2"]), paper("p2", ["p3"]), paper("p3")]
        ))
        dense = g.normalized.toarray()
        # dense reference: D^{-1/2} (A + I) D^{-1/2}
        a_tilde = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
        d_inv_sqrt = np.diag(1.0 / np.sqrt(a_tilde.sum(axis=1)))
        reference = d_inv_sqrt @ a_tilde @ d_inv_sqrt
        assert np.abs(dense - reference).max() < 1e-12
        assert dense[0, 1] == pytest.approx(1.0 / math.sqrt(6), abs=1e-15)
        assert dense[0, 1] == pytest.approx(0.4082482904638631, abs=1e-12)

    def test_exact_symmetry_random(self):
        rng = np.random.default_rng(7)
        papers = []
        for i in range(40):
            cited = {f"p{int(j):02d}" for j in rng.integers(0, 40, size=3) if int(j) != i}
            papers.append(paper(f"p{i:02d}", cited))
        g = normalize_adjacency(build_citation_graph(papers))
        diff = (g.normalized != g.normalized.T)
        assert diff.nnz == 0
        values = g.normalized.tocoo().data
        assert (values > 0).all() and (values <= 1.0).all()

    def test_isolated_rows_sum_to_one(self):
        papers = [paper("p1", ["p2"]), paper("p2"), paper("p3")]
        g = normalize_adjacency(build_citation_graph(papers))
        sums = np.asarray(g.normalized.sum(axis=1)).ravel()
        assert sums[2] == pytest.approx(1.0, abs=0)
        assert (sums > 0).all()


class TestEdgeListExport:
    def test_sorted_lines(self, tmp_path):
        g = build_citation_graph(
            [paper("pz", ["pa"]), paper("pa", ["pm"]), paper("pm")]
        )
        out = tmp_path / "edges.txt"
        export_edge_list(g, out)
        lines = out.read_text().splitlines()
        assert lines == ["pa pm", "pa pz"]
