"""Text encoders producing node input features.

Papers: multi-window convolution over the abstract token matrix followed by
max-over-time pooling.  Repositories: the same convolution over the
description, a two-layer encoder over averaged tag vectors, elementwise
fusion of the two, then batch normalization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import EmbeddingTable, to_token_matrix, tokenize


def glorot_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


@dataclass
class ConvFilterBank:
    """Per-window filter matrices; weights[h] has shape (h*k, maps)."""

    windows: tuple[tuple[int, int], ...]
    k: int
    weights: dict[int, np.ndarray]
    biases: dict[int, np.ndarray]

    @property
    def width(self) -> int:
        return sum(m for _, m in self.windows)

    @classmethod
    def create(cls, windows, k: int, rng: np.random.Generator) -> "ConvFilterBank":
        windows = tuple((int(h), int(m)) for h, m in windows)
        weights = {h: glorot_uniform(rng, h * k, m, (h * k, m)) for h, m in windows}
        biases = {h: np.zeros(m) for h, m in windows}
        return cls(windows=windows, k=k, weights=weights, biases=biases)


@dataclass
class ConvCache:
    x: np.ndarray                      # (N, n, k)
    argmax: dict[int, np.ndarray]      # h -> (N, maps) window index of max
    cmax: dict[int, np.ndarray]        # h -> (N, maps) pre-rectifier max value


def conv_forward_batch(x: np.ndarray, bank: ConvFilterBank) -> tuple[np.ndarray, ConvCache]:
    """Convolution + max-over-time pooling for a stack of token matrices.

    x has shape (N, n, k); the result is (N, width) with one pooled value
    per filter, ordered by (window, filter index).
    """
    n_items, n, k = x.shape
    if k != bank.k:
        raise ValueError(f"token matrix width {k} does not match filter bank width {bank.k}")
    pooled_parts = []
    argmax: dict[int, np.ndarray] = {}
    cmax: dict[int, np.ndarray] = {}
    for h, maps in bank.windows:
        if n < h:
            raise ValueError(f"matrix row count {n} is smaller than window size {h}")
        wcount = n - h + 1
        w = bank.weights[h].reshape(h, k, maps)
        # pre-activation feature maps via one GEMM per in-window offset
        c = np.zeros((n_items, wcount, maps))
        for t in range(h):
            c += x[:, t: t + wcount, :] @ w[t]
        c += bank.biases[h]
        cm = c.max(axis=1)
        argmax[h] = c.argmax(axis=1)
        cmax[h] = cm
        pooled_parts.append(np.maximum(cm, 0.0))
    pooled = np.concatenate(pooled_parts, axis=1)
    return pooled, ConvCache(x=x, argmax=argmax, cmax=cmax)


def conv_backward_batch(
    cache: ConvCache, bank: ConvFilterBank, dpooled: np.ndarray, need_dx: bool = False
):
    """Gradients of pooled outputs; only argmax windows receive signal."""
    n_items, n, k = cache.x.shape
    grads: dict[int, tuple[np.ndarray, np.ndarray]] = {}
    dx = np.zeros_like(cache.x) if need_dx else None
    col = 0
    rows = np.arange(n_items)[:, None]
    for h, maps in bank.windows:
        g = dpooled[:, col: col + maps] * (cache.cmax[h] > 0.0)
        col += maps
        arg = cache.argmax[h]                             # (N, maps)
        dw = np.empty((h, k, maps))
        for t in range(h):
            gathered = cache.x[rows, arg + t]             # (N, maps, k)
            dw[t] = (gathered * g[:, :, None]).sum(axis=0).T
            if need_dx:
                w_t = bank.weights[h].reshape(h, k, maps)[t]
                np.add.at(dx, (rows, arg + t), g[:, :, None] * w_t.T[None, :, :])
        grads[h] = (dw.reshape(h * k, maps), g.sum(axis=0))
    return grads, dx


def conv_encode(matrix: np.ndarray, bank: ConvFilterBank) -> np.ndarray:
    """Pooled feature vector for a single token matrix."""
    pooled, _ = conv_forward_batch(matrix[None, :, :], bank)
    return pooled[0]


def tag_vector(tag: str, table: EmbeddingTable, combine: str = "mean") -> np.ndarray:
    """Single vector for a (possibly multi-word) tag.

    Word vectors are averaged by default; ``combine="sum"`` adds them
    instead.  Empty or all-OOV tags give the zero vector.
    """
    tokens = tokenize(tag)
    if not tokens:
        return np.zeros(table.dimension)
    acc = np.zeros(table.dimension)
    for tok in tokens:
        acc += table.lookup(tok)
    if combine == "mean":
        acc /= len(tokens)
    elif combine != "sum":
        raise ValueError(f"unknown tag combine mode '{combine}'")
    return acc


def tags_input(tags, table: EmbeddingTable, combine: str = "mean") -> np.ndarray:
    """Mean of per-tag vectors; zero vector for an empty tag list."""
    if not tags:
        return np.zeros(table.dimension)
    acc = np.zeros(table.dimension)
    for tag in tags:
        acc += tag_vector(tag, table, combine)
    return acc / len(tags)


@dataclass
class TagEncoderParams:
    """Two affine layers with a rectifier between them."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def width(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def create(cls, k: int, width: int, rng: np.random.Generator) -> "TagEncoderParams":
        return cls(
            w1=glorot_uniform(rng, k, width, (k, width)),
            b1=np.zeros(width),
            w2=glorot_uniform(rng, width, width, (width, width)),
            b2=np.zeros(width),
        )


@dataclass
class TagFcCache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray


def tag_fc_forward(x: np.ndarray, params: TagEncoderParams) -> tuple[np.ndarray, TagFcCache]:
    z1 = x @ params.w1 + params.b1
    h1 = np.maximum(z1, 0.0)
    y = h1 @ params.w2 + params.b2
    return y, TagFcCache(x=x, z1=z1, h1=h1)


def tag_fc_backward(cache: TagFcCache, params: TagEncoderParams, dy: np.ndarray):
    dw2 = cache.h1.T @ dy
    db2 = dy.sum(axis=0)
    dh1 = dy @ params.w2.T
    dz1 = dh1 * (cache.z1 > 0.0)
    dw1 = cache.x.T @ dz1
    db1 = dz1.sum(axis=0)
    dx = dz1 @ params.w1.T
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}, dx


def encode_tags(tags, table: EmbeddingTable, params: TagEncoderParams,
                combine: str = "mean") -> np.ndarray:
    """Aggregate tag vectors and pass them through the tag encoder."""
    x = tags_input(tags, table, combine)
    y, _ = tag_fc_forward(x[None, :], params)
    return y[0]


@dataclass
class BatchNormState:
    scale: np.ndarray
    shift: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(cls, width: int) -> "BatchNormState":
        return cls(
            scale=np.ones(width),
            shift=np.zeros(width),
            running_mean=np.zeros(width),
            running_var=np.ones(width),
        )


@dataclass
class BnCache:
    xhat: np.ndarray
    inv_std: np.ndarray
    scale: np.ndarray
    new_running: tuple[np.ndarray, np.ndarray] | None = None


def batchnorm_forward(x: np.ndarray, bn: BatchNormState, mode: str) -> tuple[np.ndarray, BnCache]:
    """Normalize features; train mode uses batch statistics.

    The call itself never mutates ``bn``; train mode returns the updated
    running statistics in the cache for the caller to commit.
    """
    if mode == "train":
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        new_mean = (1 - bn.momentum) * bn.running_mean + bn.momentum * mean
        new_var = (1 - bn.momentum) * bn.running_var + bn.momentum * var
        new_running = (new_mean, new_var)
    elif mode == "infer":
        mean = bn.running_mean
        var = bn.running_var
        new_running = None
    else:
        raise ValueError(f"unknown batch norm mode '{mode}'")
    inv_std = 1.0 / np.sqrt(var + bn.eps)
    xhat = (x - mean) * inv_std
    y = xhat * bn.scale + bn.shift
    return y, BnCache(xhat=xhat, inv_std=inv_std, scale=bn.scale, new_running=new_running)


def batchnorm_backward(cache: BnCache, dy: np.ndarray):
    """Train-mode backward through the batch statistics."""
    n = dy.shape[0]
    dscale = (dy * cache.xhat).sum(axis=0)
    dshift = dy.sum(axis=0)
    dxhat = dy * cache.scale
    dx = cache.inv_std * (
        dxhat - dxhat.mean(axis=0) - cache.xhat * (dxhat * cache.xhat).sum(axis=0) / n
    )
    return dx, dscale, dshift


def encode_paper(paper, bank: ConvFilterBank, table: EmbeddingTable,
                 fixed_len: int) -> np.ndarray:
    """Feature vector for one paper: convolution over the padded abstract."""
    return conv_encode(to_token_matrix(paper.abstract_tokens, table, fixed_len), bank)


def encode_repository(
    repo,
    desc_bank: ConvFilterBank,
    tag_params: TagEncoderParams,
    bn: BatchNormState,
    table: EmbeddingTable,
    fixed_len: int,
    mode: str = "infer",
    combine: str = "mean",
) -> np.ndarray:
    """Feature vector for one repository: conv + tag features, fused, normalized.

    In train mode the running batch norm statistics are updated in place
    (single-item batch); infer mode is pure.
    """
    conv = conv_encode(to_token_matrix(repo.description_tokens, table, fixed_len), desc_bank)
    tags = encode_tags(repo.tags, table, tag_params, combine)
    fused = (conv + tags)[None, :]
    y, cache = batchnorm_forward(fused, bn, mode)
    if cache.new_running is not None:
        bn.running_mean, bn.running_var = cache.new_running
    return y[0]
