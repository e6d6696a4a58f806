import numpy as np
import pytest

from bridgerec.config import SynthConfig, TrainConfig
from bridgerec.corpus import load_corpus
from bridgerec.errors import ConfigError
from bridgerec.graphs import build_graphs
from bridgerec.synth import gen_synthetic, topic_of_token, validate_synthetic
from bridgerec.trainer import train


def small_cfg(**kw):
    base = dict(topics=3, papers=45, repos=30, users=20, bridge_fraction=0.2,
                vocab_per_topic=30, seed=11, embedding_dim=8,
                abstract_len=10, description_len=6)
    base.update(kw)
    return SynthConfig(**base)


def load(paths, dim):
    corpus, _ = load_corpus(paths["papers"], paths["repos"], paths["bridges"],
                            paths["embeddings"], dim)
    return corpus


class TestGeneration:
    def test_deterministic_files(self, tmp_path):
        cfg = small_cfg()
        p1 = gen_synthetic(cfg, tmp_path / "a")
        p2 = gen_synthetic(cfg, tmp_path / "b")
        for name in ("papers", "repos", "bridges", "embeddings"):
            assert open(p1[name], "rb").read() == open(p2[name], "rb").read()

    def test_counts(self, tmp_path):
        cfg = small_cfg()
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        assert len(corpus.papers) == 45
        assert len(corpus.repos) == 30
        assert len(corpus.bridges) == 9

    def test_validator_passes(self, tmp_path):
        cfg = small_cfg()
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        validate_synthetic(corpus, cfg)

    def test_intra_probability_one_no_cross_topic_citations(self, tmp_path):
        cfg = small_cfg(intra_citation_prob=1.0)
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        validate_synthetic(corpus, cfg)
        for paper in corpus.papers:
            own = topic_of_token(paper.abstract_tokens[0])
            for cid in paper.cited_ids:
                cited = corpus.papers_by_id[cid]
                assert topic_of_token(cited.abstract_tokens[0]) == own

    def test_bridge_texts_share_motif(self, tmp_path):
        cfg = small_cfg(motif_len=3)
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        for bridge in corpus.bridges:
            paper = corpus.papers_by_id[bridge.paper_id]
            repo = corpus.repos_by_id[bridge.repo_id]
            assert paper.abstract_tokens[:3] == repo.description_tokens[:3]

    def test_vocabulary_covered_by_embeddings(self, tmp_path):
        cfg = small_cfg()
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        for paper in corpus.papers:
            for tok in paper.abstract_tokens:
                assert tok in corpus.table

    def test_bridge_fraction_zero_refuses_training(self, tmp_path):
        cfg = small_cfg(bridge_fraction=0.0)
        corpus = load(gen_synthetic(cfg, tmp_path), cfg.embedding_dim)
        assert corpus.bridges == []
        graphs = build_graphs(corpus, 0.3)
        tcfg = TrainConfig(embedding_dim=8, abstract_len=10, description_len=6,
                           paper_windows=((2, 3),), repo_windows=((2, 3),),
                           gcn_width=4, n_k=2, T=2)
        with pytest.raises(ValueError, match="no bridge pairs"):
            train(tcfg, corpus, graphs)

    def test_infeasible_bridge_fraction(self):
        with pytest.raises(ConfigError):
            SynthConfig(papers=100, repos=10, bridge_fraction=0.5)

    def test_probability_bounds_validated(self):
        with pytest.raises(ConfigError):
            SynthConfig(intra_star_prob=1.4)
