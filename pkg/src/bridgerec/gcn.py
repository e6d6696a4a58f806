"""Two-tower graph convolution producing unit-norm node embeddings.

Each tower applies two rounds of H <- relu(A_hat @ H @ W) over its
platform's normalized adjacency, then scales every non-zero row to unit
Euclidean norm so inner products are cosine similarities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import encoders
from .encoders import glorot_uniform


@dataclass
class GcnTowerParams:
    w0: np.ndarray
    w1: np.ndarray

    @classmethod
    def create(cls, in_width: int, width: int, rng: np.random.Generator) -> "GcnTowerParams":
        return cls(
            w0=glorot_uniform(rng, in_width, width, (in_width, width)),
            w1=glorot_uniform(rng, width, width, (width, width)),
        )


@dataclass
class TowerCache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray


def tower_forward(x: np.ndarray, a_hat, params: GcnTowerParams) -> tuple[np.ndarray, TowerCache]:
    if x.shape[1] != params.w0.shape[0]:
        raise ValueError(
            f"feature width {x.shape[1]} does not match tower input width {params.w0.shape[0]}"
        )
    z1 = a_hat @ (x @ params.w0)
    h1 = np.maximum(z1, 0.0)
    z2 = a_hat @ (h1 @ params.w1)
    h2 = np.maximum(z2, 0.0)
    return h2, TowerCache(x=x, z1=z1, h1=h1, z2=z2)


def tower_backward(cache: TowerCache, a_hat, params: GcnTowerParams, dh2: np.ndarray):
    # a_hat is symmetric, so its transpose in the chain rule is itself
    dz2 = dh2 * (cache.z2 > 0.0)
    t = a_hat @ dz2
    dw1 = cache.h1.T @ t
    dh1 = t @ params.w1.T
    dz1 = dh1 * (cache.z1 > 0.0)
    s = a_hat @ dz1
    dw0 = cache.x.T @ s
    dx = s @ params.w0.T
    return dw0, dw1, dx


def gcn_forward(x: np.ndarray, a_hat, params: GcnTowerParams) -> np.ndarray:
    """Unnormalized embeddings for one tower."""
    h2, _ = tower_forward(x, a_hat, params)
    return h2


def l2_normalize_rows(m: np.ndarray) -> tuple[np.ndarray, int]:
    """Scale non-zero rows to unit norm; zero rows stay zero.

    Returns the normalized matrix and a count of zero rows for diagnostics.
    """
    norms = np.linalg.norm(m, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    return m / safe[:, None], int(zero.sum())


def _l2_normalize_backward(raw: np.ndarray, normed: np.ndarray, dnormed: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(raw, axis=1)
    zero = norms == 0.0
    safe = np.where(zero, 1.0, norms)
    inner = (normed * dnormed).sum(axis=1, keepdims=True)
    draw = (dnormed - normed * inner) / safe[:, None]
    draw[zero] = 0.0
    return draw


@dataclass
class EmbedCache:
    xp_tok: np.ndarray
    xr_tok: np.ndarray
    tag_in: np.ndarray
    conv_p: encoders.ConvCache
    conv_r: encoders.ConvCache
    tag: encoders.TagFcCache
    bn: encoders.BnCache
    tower_p: TowerCache
    tower_r: TowerCache
    p_raw: np.ndarray
    r_raw: np.ndarray
    p: np.ndarray
    r: np.ndarray
    zero_rows: tuple[int, int]


def embed_all(ctx, params, mode: str = "infer", want_cache: bool = False):
    """Full forward pass: text encoders -> towers -> row normalization.

    ``ctx`` supplies token matrices, tag inputs and normalized adjacencies
    in graph node order.  Returns (P, R) or (P, R, cache).
    """
    xp_tok, xr_tok, tag_in = ctx.features(params)
    paper_feats, conv_p = encoders.conv_forward_batch(xp_tok, params.paper_bank)
    repo_conv, conv_r = encoders.conv_forward_batch(xr_tok, params.repo_bank)
    tag_out, tag_cache = encoders.tag_fc_forward(tag_in, params.tag_fc)
    fused = repo_conv + tag_out
    repo_feats, bn_cache = encoders.batchnorm_forward(fused, params.bn, mode)
    p_raw, tower_p = tower_forward(paper_feats, ctx.a_hat_papers, params.paper_tower)
    r_raw, tower_r = tower_forward(repo_feats, ctx.a_hat_repos, params.repo_tower)
    p, zp = l2_normalize_rows(p_raw)
    r, zr = l2_normalize_rows(r_raw)
    if not want_cache:
        return p, r
    cache = EmbedCache(
        xp_tok=xp_tok, xr_tok=xr_tok, tag_in=tag_in,
        conv_p=conv_p, conv_r=conv_r, tag=tag_cache, bn=bn_cache,
        tower_p=tower_p, tower_r=tower_r,
        p_raw=p_raw, r_raw=r_raw, p=p, r=r, zero_rows=(zp, zr),
    )
    return p, r, cache


def embed_backward(ctx, params, cache: EmbedCache, dp: np.ndarray, dr: np.ndarray):
    """Gradients of a scalar loss given dL/dP and dL/dR."""
    dp_raw = _l2_normalize_backward(cache.p_raw, cache.p, dp)
    dr_raw = _l2_normalize_backward(cache.r_raw, cache.r, dr)

    dw0_p, dw1_p, dpaper_feats = tower_backward(cache.tower_p, ctx.a_hat_papers,
                                                params.paper_tower, dp_raw)
    dw0_r, dw1_r, drepo_feats = tower_backward(cache.tower_r, ctx.a_hat_repos,
                                               params.repo_tower, dr_raw)

    dfused, dscale, dshift = encoders.batchnorm_backward(cache.bn, drepo_feats)
    tag_grads, dtag_in = encoders.tag_fc_backward(cache.tag, params.tag_fc, dfused)

    need_dx = params.token_table is not None
    conv_p_grads, dxp = encoders.conv_backward_batch(cache.conv_p, params.paper_bank,
                                                     dpaper_feats, need_dx=need_dx)
    conv_r_grads, dxr = encoders.conv_backward_batch(cache.conv_r, params.repo_bank,
                                                     dfused, need_dx=need_dx)

    grads: dict[str, np.ndarray] = {}
    for h, (dw, db) in conv_p_grads.items():
        grads[f"paper_bank.w{h}"] = dw
        grads[f"paper_bank.b{h}"] = db
    for h, (dw, db) in conv_r_grads.items():
        grads[f"repo_bank.w{h}"] = dw
        grads[f"repo_bank.b{h}"] = db
    for name, g in tag_grads.items():
        grads[f"tag_fc.{name}"] = g
    grads["bn.scale"] = dscale
    grads["bn.shift"] = dshift
    grads["paper_tower.w0"] = dw0_p
    grads["paper_tower.w1"] = dw1_p
    grads["repo_tower.w0"] = dw0_r
    grads["repo_tower.w1"] = dw1_r
    if need_dx:
        grads["token_table"] = ctx.scatter_token_grads(dxp, dxr, dtag_in)
    return grads
