"""Versioned binary container and the embedding store.

Byte layout: 8-byte magic ``BRIDGREC``, uint32 format version, uint64
header length, a UTF-8 JSON header (kind, metadata, array names/dtypes/
shapes in order), then the raw C-order array payloads concatenated.  The
bytes are a pure function of the content, so identical runs produce
identical files.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import CheckpointError

MAGIC = b"BRIDGREC"
FORMAT_VERSION = 1


def write_container(path, kind: str, meta: dict, arrays: dict[str, np.ndarray]) -> None:
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape)})
        payloads.append(arr.tobytes())
    header = json.dumps(
        {"kind": kind, "meta": meta, "arrays": entries}, sort_keys=True
    ).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for blob in payloads:
            fh.write(blob)


def read_container(path, expect_kind: str | None = None):
    """Read a container; returns (meta, arrays).  Truncation is an error."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read '{path}': {exc}") from exc
    if len(raw) < len(MAGIC) + 12 or raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"'{path}' is not a bridgerec container")
    offset = len(MAGIC)
    (version,) = struct.unpack_from("<I", raw, offset)
    offset += 4
    if version != FORMAT_VERSION:
        raise CheckpointError(
            f"'{path}' has format version {version}, expected {FORMAT_VERSION}"
        )
    (header_len,) = struct.unpack_from("<Q", raw, offset)
    offset += 8
    if offset + header_len > len(raw):
        raise CheckpointError(f"'{path}' is truncated (header)")
    header = json.loads(raw[offset: offset + header_len].decode("utf-8"))
    offset += header_len
    if expect_kind is not None and header.get("kind") != expect_kind:
        raise CheckpointError(
            f"'{path}' holds kind '{header.get('kind')}', expected '{expect_kind}'"
        )
    arrays: dict[str, np.ndarray] = {}
    for entry in header["arrays"]:
        dtype = np.dtype(entry["dtype"])
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        nbytes = dtype.itemsize * count
        if offset + nbytes > len(raw):
            raise CheckpointError(f"'{path}' is truncated (array '{entry['name']}')")
        arr = np.frombuffer(raw[offset: offset + nbytes], dtype=dtype).reshape(shape).copy()
        arrays[entry["name"]] = arr
        offset += nbytes
    return header["meta"], arrays


def rank_by_score(ids, scores) -> list[tuple[str, float]]:
    """Order items by descending score, breaking ties by ascending id."""
    order = sorted(range(len(ids)), key=lambda i: (-scores[i], ids[i]))
    return [(ids[i], float(scores[i])) for i in order]


@dataclass
class EmbeddingStore:
    """Persisted unit-norm embeddings for both platforms."""

    paper_ids: tuple[str, ...]
    repo_ids: tuple[str, ...]
    paper_vecs: np.ndarray
    repo_vecs: np.ndarray

    def __post_init__(self):
        self._paper_index = {pid: i for i, pid in enumerate(self.paper_ids)}
        self._repo_index = {rid: i for i, rid in enumerate(self.repo_ids)}

    @property
    def width(self) -> int:
        return self.paper_vecs.shape[1]

    def has_paper(self, paper_id: str) -> bool:
        return paper_id in self._paper_index

    def paper_vec(self, paper_id: str) -> np.ndarray:
        if paper_id not in self._paper_index:
            raise KeyError(paper_id)
        return self.paper_vecs[self._paper_index[paper_id]]

    def repo_vec(self, repo_id: str) -> np.ndarray:
        if repo_id not in self._repo_index:
            raise KeyError(repo_id)
        return self.repo_vecs[self._repo_index[repo_id]]

    def repo_matrix(self, repo_ids) -> np.ndarray:
        rows = [self._repo_index[rid] for rid in repo_ids]
        return self.repo_vecs[rows]

    def save(self, path) -> None:
        write_container(
            path,
            kind="embeddings",
            meta={
                "paper_ids": list(self.paper_ids),
                "repo_ids": list(self.repo_ids),
                "width": int(self.width),
            },
            arrays={"paper_vecs": self.paper_vecs, "repo_vecs": self.repo_vecs},
        )

    @classmethod
    def load(cls, path) -> "EmbeddingStore":
        meta, arrays = read_container(path, expect_kind="embeddings")
        return cls(
            paper_ids=tuple(meta["paper_ids"]),
            repo_ids=tuple(meta["repo_ids"]),
            paper_vecs=arrays["paper_vecs"],
            repo_vecs=arrays["repo_vecs"],
        )
