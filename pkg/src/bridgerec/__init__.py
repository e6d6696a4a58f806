"""bridgerec: joint paper/repository embeddings for cross-platform top-K
recommendation.

Pipeline: load a corpus, build per-platform context graphs, encode texts
with convolutional encoders, run a two-tower graph convolution, train with
a margin-rank loss scaled by the bridge-alignment error, then recommend
repositories for a query paper by inner product.
"""

from .config import AppConfig, EvalConfig, SynthConfig, TrainConfig, load_config
from .corpus import (
    BridgeLink, Corpus, EmbeddingTable, Paper, Repository,
    load_bridges, load_corpus, load_embeddings, load_papers, load_repos,
    to_token_matrix, tokenize,
)
from .evaluator import evaluate, hr_at_k, map_at_k, mrr_at_k
from .graphs import (
    ContextGraph, Graphs, TfidfIndex,
    build_citation_graph, build_graphs, build_repo_graph, compute_tfidf,
    normalize_adjacency,
)
from .model import EmbedContext, ModelParams, init_params, load_checkpoint, save_checkpoint
from .objective import (
    LossBreakdown, ScoredSlate,
    batch_warp, constraint_error, margin_rank, rank_to_loss, total_loss, warp_term,
)
from .recommend import RankedRecommendation, persist_embeddings, recommend
from .store import EmbeddingStore
from .trainer import TrainHistory, split_train_validation, train

__version__ = "0.1.0"
