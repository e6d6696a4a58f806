"""Ranking objective with the bridge-alignment multiplier.

A slate holds one positive score and a list of negative scores.  The rank
counts negatives violating the margin, the harmonic transform turns that
rank into a weight, and the hinge total is averaged per violating negative.
The batch loss is multiplied by (1 + C_e), where C_e is the mean normalized
cosine distance over bridge pairs, so alignment pressure scales with the
current ranking loss instead of a hand-tuned trade-off constant.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import gcn


@dataclass
class ScoredSlate:
    positive_score: float
    negative_scores: np.ndarray
    margin: float

    def __post_init__(self):
        self.negative_scores = np.asarray(self.negative_scores, dtype=np.float64)
        if self.negative_scores.size < 1:
            raise ValueError("a slate needs at least one negative score")
        if not 0.0 < self.margin < 1.0:
            raise ValueError(f"margin must be in (0, 1), got {self.margin}")


@dataclass
class LossBreakdown:
    warp: float
    constraint_error: float
    total: float


def margin_rank(slate: ScoredSlate) -> int:
    """Count of negatives with margin - s_pos + s_neg strictly positive."""
    t = slate.margin - slate.positive_score + slate.negative_scores
    return int((t > 0.0).sum())


def rank_to_loss(k: int) -> float:
    """Harmonic transform of a rank: sum of 1/j for j = 1..k."""
    if k < 0:
        raise ValueError(f"rank must be non-negative, got {k}")
    return float(sum(1.0 / j for j in range(1, k + 1)))


def warp_term(slate: ScoredSlate) -> float:
    """Loss for one slate; zero when no negative violates the margin."""
    t = slate.margin - slate.positive_score + slate.negative_scores
    rank = int((t > 0.0).sum())
    if rank == 0:
        return 0.0
    hinge_sum = float(np.maximum(t, 0.0).sum())
    return rank_to_loss(rank) * hinge_sum / rank


def batch_warp(slates) -> float:
    """Mean slate loss over a non-empty batch."""
    if not slates:
        raise ValueError("batch_warp requires at least one slate")
    return float(sum(warp_term(s) for s in slates)) / len(slates)


def constraint_error(bridge_embeddings) -> float:
    """Mean normalized cosine distance over (paper, repo) unit-vector pairs.

    Empty input is defined as zero with a warning, since there is nothing
    to constrain.
    """
    pairs = list(bridge_embeddings)
    if not pairs:
        warnings.warn("no bridge pairs; constraint error defined as 0", stacklevel=2)
        return 0.0
    total = 0.0
    for p, r in pairs:
        total += 1.0 - float(np.dot(p, r))
    return total / (2.0 * len(pairs))


def total_loss(warp: float, c_e: float) -> LossBreakdown:
    if warp < 0:
        raise ValueError("warp loss must be non-negative")
    if not 0.0 <= c_e <= 1.0:
        raise ValueError(f"constraint error must lie in [0, 1], got {c_e}")
    return LossBreakdown(warp=warp, constraint_error=c_e, total=(1.0 + c_e) * warp)


def _harmonic_table(n: int) -> np.ndarray:
    table = np.zeros(n + 1)
    table[1:] = np.cumsum(1.0 / np.arange(1, n + 1))
    return table


def warp_batch_arrays(s_pos: np.ndarray, s_neg: np.ndarray, margin: float):
    """Vectorized batch loss and score gradients.

    s_pos is (B,), s_neg is (B, n_k).  Returns (mean loss, d/ds_pos,
    d/ds_neg) where gradients treat the harmonic weight as constant per
    slate and flow only through active hinges.
    """
    t = margin - s_pos[:, None] + s_neg
    viol = t > 0.0
    rank = viol.sum(axis=1)
    hinge_sum = np.where(viol, t, 0.0).sum(axis=1)
    harm = _harmonic_table(s_neg.shape[1])
    weight = np.where(rank > 0, harm[rank] / np.maximum(rank, 1), 0.0)
    losses = weight * hinge_sum
    n = s_pos.shape[0]
    d_pos = -(weight * rank) / n
    d_neg = (weight[:, None] * viol) / n
    return float(losses.mean()), d_pos, d_neg


def gradients(params, batch, ctx, constraint_pairs):
    """Loss and exact gradients of (1 + C_e) * L for one training batch.

    ``batch`` provides aligned index arrays (paper_idx, pos_repo_idx,
    neg_repo_idx) into the context node order; ``constraint_pairs`` is the
    (paper_idx, repo_idx) arrays of the training bridge set.  Returns
    (LossBreakdown, grads dict, diagnostics dict).
    """
    p_mat, r_mat, cache = gcn.embed_all(ctx, params, mode="train", want_cache=True)
    paper_idx, pos_idx, neg_idx = batch
    margin = ctx.cfg.margin

    s_pos = np.einsum("ij,ij->i", p_mat[paper_idx], r_mat[pos_idx])
    s_neg = np.einsum("id,ind->in", p_mat[paper_idx], r_mat[neg_idx])
    warp, d_pos, d_neg = warp_batch_arrays(s_pos, s_neg, margin)

    bp_idx, br_idx = constraint_pairs
    m = len(bp_idx)
    if m > 0:
        cos = np.einsum("ij,ij->i", p_mat[bp_idx], r_mat[br_idx])
        c_e = float((1.0 - cos).sum() / (2.0 * m))
    else:
        c_e = 0.0
    breakdown = LossBreakdown(warp=warp, constraint_error=c_e, total=(1.0 + c_e) * warp)

    # d total = (1 + C_e) dL + L dC_e
    dp = np.zeros_like(p_mat)
    dr = np.zeros_like(r_mat)
    scale = 1.0 + c_e
    np.add.at(dp, paper_idx, scale * d_pos[:, None] * r_mat[pos_idx])
    np.add.at(dr, pos_idx, scale * d_pos[:, None] * p_mat[paper_idx])
    np.add.at(dp, paper_idx, scale * np.einsum("in,ind->id", d_neg, r_mat[neg_idx]))
    np.add.at(dr, neg_idx.ravel(),
              (scale * d_neg[:, :, None] * p_mat[paper_idx][:, None, :]).reshape(-1, p_mat.shape[1]))
    if m > 0 and warp > 0.0:
        coeff = -warp / (2.0 * m)
        np.add.at(dp, bp_idx, coeff * r_mat[br_idx])
        np.add.at(dr, br_idx, coeff * p_mat[bp_idx])

    grads = gcn.embed_backward(ctx, params, cache, dp, dr)
    diag = {
        "zero_rows": cache.zero_rows,
        "new_running": cache.bn.new_running,
        "scores_pos": s_pos,
        "scores_neg": s_neg,
    }
    return breakdown, grads, diag


def loss_only(params, batch, ctx, constraint_pairs) -> float:
    """Total training loss without gradients (finite-difference probes)."""
    p_mat, r_mat = gcn.embed_all(ctx, params, mode="train", want_cache=False)
    paper_idx, pos_idx, neg_idx = batch
    s_pos = np.einsum("ij,ij->i", p_mat[paper_idx], r_mat[pos_idx])
    s_neg = np.einsum("id,ind->in", p_mat[paper_idx], r_mat[neg_idx])
    warp, _, _ = warp_batch_arrays(s_pos, s_neg, ctx.cfg.margin)
    bp_idx, br_idx = constraint_pairs
    m = len(bp_idx)
    if m > 0:
        cos = np.einsum("ij,ij->i", p_mat[bp_idx], r_mat[br_idx])
        c_e = float((1.0 - cos).sum() / (2.0 * m))
    else:
        c_e = 0.0
    return (1.0 + c_e) * warp
