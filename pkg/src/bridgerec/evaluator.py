"""Fixed-slate ranking metrics: HR@K, MRR@K and MAP@K.

Each test query gets a 50-candidate slate holding its labeled positives
plus uniformly sampled negatives.  Metrics are averaged per query, then
over repeated slate resamplings with distinct seeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sampler
from .store import EmbeddingStore, rank_by_score


@dataclass(frozen=True)
class TestSlate:
    __test__ = False   # keep pytest from collecting this as a test class

    query_id: str
    candidate_ids: tuple[str, ...]
    positive_ids: frozenset[str]

    def __post_init__(self):
        if len(set(self.candidate_ids)) != len(self.candidate_ids):
            raise ValueError("slate candidates must be unique")
        if not self.positive_ids:
            raise ValueError("slate needs at least one positive")
        if not self.positive_ids <= set(self.candidate_ids):
            raise ValueError("positives must appear among candidates")


def build_test_slate(query_id: str, positives, repo_pool, rng: np.random.Generator,
                     slate_size: int = 50) -> TestSlate:
    """Positives plus uniform negatives, ``slate_size`` candidates total."""
    positives = sorted(set(positives))
    if not positives:
        raise ValueError(f"query '{query_id}' has no labeled positives")
    if len(positives) > slate_size:
        raise ValueError(f"query '{query_id}' has more positives than slate slots")
    pool = sorted(set(repo_pool) - set(positives))
    needed = slate_size - len(positives)
    if len(pool) < needed:
        raise ValueError(
            f"query '{query_id}': pool of {len(pool)} cannot fill {needed} negative slots"
        )
    picked = rng.choice(len(pool), size=needed, replace=False)
    negatives = [pool[i] for i in picked]
    candidates = tuple(sorted(positives + negatives))
    return TestSlate(query_id=query_id, candidate_ids=candidates,
                     positive_ids=frozenset(positives))


def rank_candidates(slate: TestSlate, store: EmbeddingStore) -> list[tuple[str, float]]:
    """Candidates by descending inner product, ties by ascending repo id."""
    query = store.paper_vec(slate.query_id)
    scores = store.repo_matrix(slate.candidate_ids) @ query
    return rank_by_score(slate.candidate_ids, scores)


def hr_at_k(ranked_ids, positive_ids, k: int) -> float:
    """Share of the positives that appear in the top K."""
    positives = set(positive_ids)
    hits = sum(1 for rid in list(ranked_ids)[:k] if rid in positives)
    return hits / len(positives)


def mrr_at_k(ranked_ids, positive_ids, k: int) -> float:
    """Reciprocal rank of the first positive inside the top K, else 0."""
    positives = set(positive_ids)
    for pos, rid in enumerate(list(ranked_ids)[:k], start=1):
        if rid in positives:
            return 1.0 / pos
    return 0.0


def map_at_k(ranked_ids, positive_ids, k: int) -> float:
    """Truncated average precision, normalized by min(|positives|, K)."""
    positives = set(positive_ids)
    hits = 0
    precision_sum = 0.0
    for pos, rid in enumerate(list(ranked_ids)[:k], start=1):
        if rid in positives:
            hits += 1
            precision_sum += hits / pos
    return precision_sum / min(len(positives), k)


@dataclass(frozen=True)
class MetricRow:
    run: int
    seed: int
    k: int
    hr: float
    mrr: float
    map: float


@dataclass
class MetricReport:
    k_values: tuple[int, ...]
    rows: list[MetricRow] = field(default_factory=list)

    @property
    def runs(self) -> int:
        return len({r.run for r in self.rows})

    def mean(self, metric: str, k: int) -> float:
        values = [getattr(r, metric) for r in self.rows if r.k == k]
        return float(np.mean(values))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("K,HR,MRR,MAP,run,seed\n")
            for r in self.rows:
                fh.write(f"{r.k},{r.hr!r},{r.mrr!r},{r.map!r},{r.run},{r.seed}\n")
            for k in self.k_values:
                fh.write(
                    f"{k},{self.mean('hr', k)!r},{self.mean('mrr', k)!r},"
                    f"{self.mean('map', k)!r},mean,\n"
                )


def make_test_queries(test_bridges, repos, t: int) -> list[tuple[str, list[str]]]:
    """Labeled positives per held-out bridge paper: its repo plus the
    repositories most co-starred with that repo, up to ``t`` in total."""
    queries = []
    for bridge in sorted(test_bridges, key=lambda b: b.paper_id):
        positives = [bridge.repo_id] + sampler.costar_top(bridge.repo_id, repos, t - 1)
        queries.append((bridge.paper_id, positives))
    return queries


def holdout_bridges(bridges, fraction: float, rng: np.random.Generator):
    """Split bridges into (training, held-out test) sets."""
    ordered = sorted(bridges, key=lambda b: b.paper_id)
    n_test = round(len(ordered) * fraction)
    picked = set(rng.choice(len(ordered), size=n_test, replace=False).tolist())
    test = [b for i, b in enumerate(ordered) if i in picked]
    train = [b for i, b in enumerate(ordered) if i not in picked]
    return train, test


def evaluate(store: EmbeddingStore, queries, k_values, runs: int = 3,
             base_seed: int = 0, slate_size: int = 50,
             detail_path=None) -> MetricReport:
    """Average metrics over queries, then over seeded slate resamplings."""
    if not queries:
        raise ValueError("evaluate requires at least one test query")
    k_values = tuple(int(k) for k in k_values)
    if any(k < 1 or k > slate_size for k in k_values):
        raise ValueError(f"every K must lie in [1, {slate_size}]")
    report = MetricReport(k_values=k_values)
    detail = open(detail_path, "w", encoding="utf-8") if detail_path else None
    if detail:
        detail.write("run,seed,query_id,K,HR,MRR,MAP\n")
    try:
        pool = list(store.repo_ids)
        for run in range(runs):
            seed = base_seed + run
            rng = np.random.default_rng(seed)
            sums = {k: np.zeros(3) for k in k_values}
            for query_id, positives in queries:
                slate = build_test_slate(query_id, positives, pool, rng, slate_size)
                ranked = [rid for rid, _ in rank_candidates(slate, store)]
                for k in k_values:
                    hr = hr_at_k(ranked, slate.positive_ids, k)
                    mrr = mrr_at_k(ranked, slate.positive_ids, k)
                    ap = map_at_k(ranked, slate.positive_ids, k)
                    sums[k] += (hr, mrr, ap)
                    if detail:
                        detail.write(f"{run},{seed},{query_id},{k},{hr!r},{mrr!r},{ap!r}\n")
            for k in k_values:
                hr, mrr, ap = sums[k] / len(queries)
                report.rows.append(
                    MetricRow(run=run, seed=seed, k=k, hr=float(hr), mrr=float(mrr),
                              map=float(ap))
                )
    finally:
        if detail:
            detail.close()
    return report


def plot_metrics(report: MetricReport, prefix) -> list[str]:
    """Render metric-vs-K curves to one PNG per metric."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = []
    for metric in ("hr", "mrr", "map"):
        fig, ax = plt.subplots(figsize=(5, 4))
        ks = list(report.k_values)
        ax.plot(ks, [report.mean(metric, k) for k in ks], marker="o")
        ax.set_xlabel("K")
        ax.set_ylabel(metric.upper() + "@K")
        ax.set_ylim(0, 1)
        ax.grid(True, alpha=0.3)
        path = f"{prefix}_{metric}.png"
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        paths.append(path)
    return paths
