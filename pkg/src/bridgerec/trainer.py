"""Training loop minimizing the constrained ranking loss.

Each step runs the full two-tower forward pass, scores the batch slates,
multiplies the ranking loss by (1 + C_e) over all training bridge pairs and
applies one optimizer update.  Early stopping watches the ranking loss on
fixed validation slates; the best-validation checkpoint is returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import gcn, objective, sampler
from .config import TrainConfig
from .errors import TrainingDiverged
from .model import EmbedContext, ModelParams, init_params, load_checkpoint, save_checkpoint

__all__ = [
    "TrainConfig", "TrainHistory", "EpochRecord", "split_train_validation",
    "train", "save_checkpoint", "load_checkpoint",
]


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_total: float
    train_warp: float
    train_ce: float
    val_loss: float     # (1 + C_e) * validation ranking loss, inference mode
    frac_within_eps: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_total,train_warp,train_ce,val_loss,frac_within_eps\n")
            for r in self.records:
                fh.write(
                    f"{r.epoch},{r.train_total!r},{r.train_warp!r},{r.train_ce!r},"
                    f"{r.val_loss!r},{r.frac_within_eps!r}\n"
                )


def split_train_validation(pairs, rng: np.random.Generator, fraction: float = 0.9):
    """Seeded shuffle then split; the first ``fraction`` share trains."""
    if len(pairs) < 10:
        raise ValueError(f"need at least 10 pairs to split, got {len(pairs)}")
    order = rng.permutation(len(pairs))
    cut = int(len(pairs) * fraction)
    train = [pairs[i] for i in order[:cut]]
    val = [pairs[i] for i in order[cut:]]
    return train, val


class _Adam:
    def __init__(self, arrays: dict[str, np.ndarray], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.arrays = arrays
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.t = 0

    def step(self, grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, arr in self.arrays.items():
            g = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            arr -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class _Sgd:
    def __init__(self, arrays: dict[str, np.ndarray], lr: float):
        self.arrays = arrays
        self.lr = lr

    def step(self, grads: dict[str, np.ndarray]) -> None:
        for name, arr in self.arrays.items():
            arr -= self.lr * grads[name]


def _clip_grads(grads: dict[str, np.ndarray], clip: float) -> None:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if total > clip:
        factor = clip / total
        for g in grads.values():
            g *= factor


def _batch_indices(batch: sampler.TrainingBatch, ctx: EmbedContext):
    paper_idx = np.array([ctx.paper_index[p.paper_id] for p in batch.pairs], dtype=np.int64)
    pos_idx = np.array([ctx.repo_index[p.repo_id] for p in batch.pairs], dtype=np.int64)
    neg_idx = np.array(
        [[ctx.repo_index[rid] for rid in negs] for negs in batch.negatives], dtype=np.int64
    )
    return paper_idx, pos_idx, neg_idx


def _slate_loss(p_mat, r_mat, indices, margin: float) -> float:
    paper_idx, pos_idx, neg_idx = indices
    s_pos = np.einsum("ij,ij->i", p_mat[paper_idx], r_mat[pos_idx])
    s_neg = np.einsum("id,ind->in", p_mat[paper_idx], r_mat[neg_idx])
    loss, _, _ = objective.warp_batch_arrays(s_pos, s_neg, margin)
    return loss


def _subset_bridges(bridges, ratio: float, rng: np.random.Generator):
    if ratio >= 1.0:
        return list(bridges)
    keep = round(len(bridges) * ratio)
    ordered = sorted(bridges, key=lambda b: b.paper_id)
    picked = rng.choice(len(ordered), size=keep, replace=False)
    return [ordered[i] for i in sorted(picked)]


def train(cfg: TrainConfig, corpus, graphs) -> tuple[ModelParams, TrainHistory]:
    """Train on the corpus bridges; returns the best checkpoint and history.

    Per-epoch records carry the last step's training losses (these satisfy
    total == (1 + C_e) * warp exactly), the validation ranking loss under
    inference-mode statistics, and the fraction of training bridge pairs
    within the alignment tolerance.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(5)
    rng_init = np.random.default_rng(seeds[0])
    rng_subset = np.random.default_rng(seeds[1])
    rng_split = np.random.default_rng(seeds[2])
    rng_val = np.random.default_rng(seeds[3])
    rng_epochs = np.random.default_rng(seeds[4])

    bridges = _subset_bridges(corpus.bridges, cfg.bridge_ratio, rng_subset)
    if not bridges:
        raise ValueError("no bridge pairs: cannot train without any bridge links")

    pairs = sampler.build_positive_pairs(bridges, graphs.papers, corpus.repos, cfg.T)
    train_pairs, val_pairs = split_train_validation(pairs, rng_split, cfg.train_fraction)
    positives = sampler.positives_by_paper(pairs)

    ctx = EmbedContext(corpus, graphs, cfg)
    params = init_params(cfg, corpus.table, rng_init)

    train_keys = {(p.paper_id, p.repo_id) for p in train_pairs if p.provenance == "bridge"}
    constraint_bridges = [b for b in bridges if (b.paper_id, b.repo_id) in train_keys]
    constraint = ctx.bridge_indices(constraint_bridges)

    repo_ids = list(ctx.repo_ids)
    val_batch = sampler.TrainingBatch(
        pairs=val_pairs,
        negatives=[
            sampler.sample_negatives(rng_val, p, repo_ids, positives[p.paper_id], cfg.n_k)
            for p in val_pairs
        ],
    )
    val_indices = _batch_indices(val_batch, ctx)

    arrays = params.arrays()
    if cfg.optimizer == "adam":
        opt = _Adam(arrays, cfg.learning_rate)
    else:
        opt = _Sgd(arrays, cfg.learning_rate)

    history = TrainHistory()
    best_val = np.inf
    best_params = params.copy()
    best_epoch = 0
    stale = 0

    for epoch in range(1, cfg.epochs_max + 1):
        opt.lr = cfg.learning_rate * cfg.lr_decay ** (epoch - 1)
        batches = sampler.make_batches(
            train_pairs, repo_ids, positives, rng_epochs, cfg.batch_size, cfg.n_k
        )
        last = None
        for batch in batches:
            indices = _batch_indices(batch, ctx)
            breakdown, grads, diag = objective.gradients(params, indices, ctx, constraint)
            if not np.isfinite(breakdown.total):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch} "
                    f"(warp={breakdown.warp}, c_e={breakdown.constraint_error}); "
                    f"offending pairs: {[(p.paper_id, p.repo_id) for p in batch.pairs]}",
                    batch_pairs=batch.pairs,
                )
            if cfg.grad_clip > 0.0:
                _clip_grads(grads, cfg.grad_clip)
            opt.step(grads)
            if diag["new_running"] is not None:
                params.bn.running_mean, params.bn.running_var = diag["new_running"]
            last = breakdown

        p_mat, r_mat = gcn.embed_all(ctx, params, mode="infer")
        val_warp = _slate_loss(p_mat, r_mat, val_indices, cfg.margin)
        bp_idx, br_idx = constraint
        if len(bp_idx) > 0:
            cos = np.einsum("ij,ij->i", p_mat[bp_idx], r_mat[br_idx])
            val_ce = float((1.0 - cos).sum() / (2.0 * len(bp_idx)))
            frac_eps = float((1.0 - cos <= cfg.epsilon).mean())
        else:
            val_ce = 0.0
            frac_eps = 0.0
        # selection must respect the full objective: the pure ranking loss
        # plateaus long before the bridge alignment tightens
        val_loss = (1.0 + val_ce) * val_warp
        history.records.append(
            EpochRecord(
                epoch=epoch,
                train_total=last.total,
                train_warp=last.warp,
                train_ce=last.constraint_error,
                val_loss=val_loss,
                frac_within_eps=frac_eps,
            )
        )

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
            best_epoch = epoch
            stale = 0
        else:
            if val_loss == best_val:
                # tie: keep the later checkpoint, alignment keeps tightening
                best_params = params.copy()
                best_epoch = epoch
            stale += 1
            if stale >= cfg.patience:
                break

    history.best_epoch = best_epoch
    return best_params, history
