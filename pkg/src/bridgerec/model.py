"""Trainable parameter bundle, embedding context and checkpointing.

The context precomputes everything the forward pass needs in graph node
order: token-row index matrices for abstracts and descriptions, the sparse
tag-coefficient map, and the normalized adjacencies.  With fixed word
vectors the token matrices are materialized once.
"""

from __future__ import annotations

import copy
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import store
from .corpus import Corpus, tokenize
from .encoders import BatchNormState, ConvFilterBank, TagEncoderParams
from .errors import CheckpointError
from .gcn import GcnTowerParams

CHECKPOINT_KIND = "checkpoint"
CHECKPOINT_VERSION = 1


@dataclass
class ModelParams:
    paper_bank: ConvFilterBank
    repo_bank: ConvFilterBank
    tag_fc: TagEncoderParams
    bn: BatchNormState
    paper_tower: GcnTowerParams
    repo_tower: GcnTowerParams
    token_table: np.ndarray | None = None   # (V+1, k) trainable copy, zero row last

    def arrays(self) -> dict[str, np.ndarray]:
        """Trainable arrays keyed by dotted names (optimizer order)."""
        out: dict[str, np.ndarray] = {}
        for h, _ in self.paper_bank.windows:
            out[f"paper_bank.w{h}"] = self.paper_bank.weights[h]
            out[f"paper_bank.b{h}"] = self.paper_bank.biases[h]
        for h, _ in self.repo_bank.windows:
            out[f"repo_bank.w{h}"] = self.repo_bank.weights[h]
            out[f"repo_bank.b{h}"] = self.repo_bank.biases[h]
        out["tag_fc.w1"] = self.tag_fc.w1
        out["tag_fc.b1"] = self.tag_fc.b1
        out["tag_fc.w2"] = self.tag_fc.w2
        out["tag_fc.b2"] = self.tag_fc.b2
        out["bn.scale"] = self.bn.scale
        out["bn.shift"] = self.bn.shift
        out["paper_tower.w0"] = self.paper_tower.w0
        out["paper_tower.w1"] = self.paper_tower.w1
        out["repo_tower.w0"] = self.repo_tower.w0
        out["repo_tower.w1"] = self.repo_tower.w1
        if self.token_table is not None:
            out["token_table"] = self.token_table
        return out

    def set_array(self, name: str, value: np.ndarray) -> None:
        """Replace a trainable array in place (shapes must match)."""
        target = self.arrays()[name]
        if target.shape != value.shape:
            raise ValueError(f"shape mismatch for '{name}'")
        target[...] = value

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = dict(self.arrays())
        out["bn.running_mean"] = self.bn.running_mean
        out["bn.running_var"] = self.bn.running_var
        return out

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


def init_params(cfg, table, rng: np.random.Generator) -> ModelParams:
    """Fresh parameters for a train config and embedding table."""
    k_eff = table.dimension * (2 if cfg.embedding_mode == "concat" else 1)
    paper_bank = ConvFilterBank.create(cfg.paper_windows, k_eff, rng)
    repo_bank = ConvFilterBank.create(cfg.repo_windows, k_eff, rng)
    repo_width = repo_bank.width
    tag_fc = TagEncoderParams.create(k_eff, repo_width, rng)
    bn = BatchNormState.create(repo_width)
    paper_tower = GcnTowerParams.create(paper_bank.width, cfg.gcn_width, rng)
    repo_tower = GcnTowerParams.create(repo_width, cfg.gcn_width, rng)
    token_table = None
    if cfg.embedding_mode in ("trainable", "concat"):
        # (V, k): the padding/OOV zero row is structural, not trainable
        token_table = np.array(table.padded_matrix[:-1], dtype=np.float64, copy=True)
    return ModelParams(
        paper_bank=paper_bank, repo_bank=repo_bank, tag_fc=tag_fc, bn=bn,
        paper_tower=paper_tower, repo_tower=repo_tower, token_table=token_table,
    )


class EmbedContext:
    """Precomputed inputs for the two-tower forward pass."""

    def __init__(self, corpus: Corpus, graphs, cfg):
        self.corpus = corpus
        self.cfg = cfg
        self.table = corpus.table
        self.paper_ids = graphs.papers.node_ids
        self.repo_ids = graphs.repos.node_ids
        self.paper_index = {pid: i for i, pid in enumerate(self.paper_ids)}
        self.repo_index = {rid: i for i, rid in enumerate(self.repo_ids)}
        if graphs.papers.normalized is None or graphs.repos.normalized is None:
            raise ValueError("graphs must carry normalized adjacencies")
        self.a_hat_papers = graphs.papers.normalized
        self.a_hat_repos = graphs.repos.normalized
        self.mode = cfg.embedding_mode

        zero = self.table.zero_row
        self.paper_rows = np.full((len(self.paper_ids), cfg.abstract_len), zero, dtype=np.int64)
        for i, pid in enumerate(self.paper_ids):
            toks = corpus.papers_by_id[pid].abstract_tokens[: cfg.abstract_len]
            for j, t in enumerate(toks):
                self.paper_rows[i, j] = self.table.row_of(t)
        self.repo_rows = np.full((len(self.repo_ids), cfg.description_len), zero, dtype=np.int64)
        for i, rid in enumerate(self.repo_ids):
            toks = corpus.repos_by_id[rid].description_tokens[: cfg.description_len]
            for j, t in enumerate(toks):
                self.repo_rows[i, j] = self.table.row_of(t)

        self.tag_coef = self._build_tag_coef(cfg.tag_combine)
        self._fixed_cache = None
        if self.mode == "fixed":
            m = self.table.padded_matrix
            self._fixed_cache = (
                m[self.paper_rows], m[self.repo_rows], np.asarray(self.tag_coef @ m)
            )

    def _build_tag_coef(self, combine: str) -> sp.csr_matrix:
        # row r of the result maps the (V+1, k) token matrix to repo r's
        # aggregated tag vector: mean over tags of per-tag word combination
        rows, cols, vals = [], [], []
        for i, rid in enumerate(self.repo_ids):
            tags = self.corpus.repos_by_id[rid].tags
            if not tags:
                continue
            acc: dict[int, float] = {}
            for tag in tags:
                toks = tokenize(tag)
                if not toks:
                    continue
                per_token = 1.0 / len(toks) if combine == "mean" else 1.0
                for t in toks:
                    r = self.table.row_of(t)
                    acc[r] = acc.get(r, 0.0) + per_token / len(tags)
            for col, v in sorted(acc.items()):
                rows.append(i)
                cols.append(col)
                vals.append(v)
        shape = (len(self.repo_ids), self.table.zero_row + 1)
        return sp.csr_matrix((vals, (rows, cols)), shape=shape)

    def _effective_matrix(self, params: ModelParams) -> np.ndarray:
        if self.mode == "fixed":
            return self.table.padded_matrix
        k = params.token_table.shape[1]
        padded = np.vstack([params.token_table, np.zeros((1, k))])
        if self.mode == "trainable":
            return padded
        return np.hstack([self.table.padded_matrix, padded])

    def features(self, params: ModelParams):
        """Token matrices and tag inputs for the current parameters."""
        if self._fixed_cache is not None:
            return self._fixed_cache
        m = self._effective_matrix(params)
        return m[self.paper_rows], m[self.repo_rows], np.asarray(self.tag_coef @ m)

    def scatter_token_grads(self, dxp, dxr, dtag_in) -> np.ndarray:
        """Accumulate gradients back onto the trainable token table."""
        k_eff = dtag_in.shape[1]
        d_eff = np.zeros((self.table.zero_row + 1, k_eff))
        np.add.at(d_eff, self.paper_rows.ravel(), dxp.reshape(-1, k_eff))
        np.add.at(d_eff, self.repo_rows.ravel(), dxr.reshape(-1, k_eff))
        d_eff += np.asarray(self.tag_coef.T @ dtag_in)
        if self.mode == "concat":
            d_eff = d_eff[:, k_eff // 2:]
        return d_eff[:-1]   # drop the structural OOV/padding row

    def bridge_indices(self, bridges) -> tuple[np.ndarray, np.ndarray]:
        p = np.array([self.paper_index[b.paper_id] for b in bridges], dtype=np.int64)
        r = np.array([self.repo_index[b.repo_id] for b in bridges], dtype=np.int64)
        return p, r


def _window_meta(bank: ConvFilterBank):
    return {"windows": [list(w) for w in bank.windows], "k": bank.k}


def save_checkpoint(params: ModelParams, path, config_hash: str = "") -> None:
    """Write all parameters plus running statistics to a container file."""
    meta = {
        "checkpoint_version": CHECKPOINT_VERSION,
        "config_hash": config_hash,
        "paper_bank": _window_meta(params.paper_bank),
        "repo_bank": _window_meta(params.repo_bank),
        "bn": {"eps": params.bn.eps, "momentum": params.bn.momentum},
        "has_token_table": params.token_table is not None,
    }
    store.write_container(path, CHECKPOINT_KIND, meta, params.state_arrays())


def load_checkpoint(path, expected_config_hash: str | None = None) -> ModelParams:
    """Rebuild ModelParams from a checkpoint file.

    A different config hash only warns; a different format version fails.
    """
    meta, arrays = store.read_container(path, expect_kind=CHECKPOINT_KIND)
    if meta.get("checkpoint_version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"checkpoint version {meta.get('checkpoint_version')} unsupported "
            f"(expected {CHECKPOINT_VERSION})"
        )
    if expected_config_hash and meta.get("config_hash") != expected_config_hash:
        warnings.warn(
            f"checkpoint config hash {meta.get('config_hash')} differs from "
            f"current config {expected_config_hash}",
            stacklevel=2,
        )

    def bank(prefix: str) -> ConvFilterBank:
        info = meta[prefix]
        windows = tuple((int(h), int(m)) for h, m in info["windows"])
        return ConvFilterBank(
            windows=windows,
            k=int(info["k"]),
            weights={h: arrays[f"{prefix}.w{h}"] for h, _ in windows},
            biases={h: arrays[f"{prefix}.b{h}"] for h, _ in windows},
        )

    bn = BatchNormState(
        scale=arrays["bn.scale"],
        shift=arrays["bn.shift"],
        running_mean=arrays["bn.running_mean"],
        running_var=arrays["bn.running_var"],
        eps=float(meta["bn"]["eps"]),
        momentum=float(meta["bn"]["momentum"]),
    )
    return ModelParams(
        paper_bank=bank("paper_bank"),
        repo_bank=bank("repo_bank"),
        tag_fc=TagEncoderParams(
            w1=arrays["tag_fc.w1"], b1=arrays["tag_fc.b1"],
            w2=arrays["tag_fc.w2"], b2=arrays["tag_fc.b2"],
        ),
        bn=bn,
        paper_tower=GcnTowerParams(w0=arrays["paper_tower.w0"], w1=arrays["paper_tower.w1"]),
        repo_tower=GcnTowerParams(w0=arrays["repo_tower.w0"], w1=arrays["repo_tower.w1"]),
        token_table=arrays.get("token_table") if meta.get("has_token_table") else None,
    )
