"""Domain data model and offline file ingestion.

Papers, repositories, bridge links and pre-trained word vectors are read
from line-delimited files into immutable in-memory structures.  All ids
are plain strings; token lists are lowercase and already split.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import CorpusError

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric character.

    Empty fragments are discarded, so the result is idempotent under
    re-joining with spaces.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Paper:
    id: str
    title: str
    abstract_tokens: tuple[str, ...]
    cited_ids: frozenset[str]


@dataclass(frozen=True)
class Repository:
    id: str
    description_tokens: tuple[str, ...]
    tags: tuple[str, ...]
    starrers: frozenset[str]


@dataclass(frozen=True)
class BridgeLink:
    paper_id: str
    repo_id: str


@dataclass
class LoadReport:
    path: str
    n_records: int = 0
    warnings: list[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        self.warnings.append(message)


class EmbeddingTable:
    """Token to vector map with a fixed dimension and zero-vector OOV rule.

    Internally a (V+1, k) matrix whose last row is the all-zero vector used
    for both out-of-vocabulary lookups and padding.  When ``trainable`` is
    false the matrix is write-protected.
    """

    def __init__(self, dimension: int, entries: dict[str, np.ndarray], trainable: bool = False):
        if dimension < 1:
            raise CorpusError("embedding dimension must be positive")
        self.dimension = int(dimension)
        self.trainable = bool(trainable)
        self.tokens = tuple(entries.keys())
        matrix = np.zeros((len(self.tokens) + 1, self.dimension), dtype=np.float64)
        for i, tok in enumerate(self.tokens):
            vec = np.asarray(entries[tok], dtype=np.float64)
            if vec.shape != (self.dimension,):
                raise CorpusError(
                    f"vector for token '{tok}' has length {vec.size}, expected {self.dimension}"
                )
            matrix[i] = vec
        if not self.trainable:
            matrix.flags.writeable = False
        self._matrix = matrix
        self._rows = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._rows

    @property
    def zero_row(self) -> int:
        """Index of the shared all-zero row (OOV and padding)."""
        return len(self.tokens)

    @property
    def padded_matrix(self) -> np.ndarray:
        """The (V+1, k) matrix including the trailing zero row."""
        return self._matrix

    def row_of(self, token: str) -> int:
        return self._rows.get(token, self.zero_row)

    def lookup(self, token: str) -> np.ndarray:
        """Vector for ``token``; absent tokens yield the zero vector."""
        return self._matrix[self.row_of(token)]


def to_token_matrix(tokens, table: EmbeddingTable, fixed_len: int) -> np.ndarray:
    """Stack token embeddings into a (fixed_len, k) matrix.

    Tokens beyond ``fixed_len`` are cropped; missing rows are zero padding.
    """
    if fixed_len < 1:
        raise ValueError(f"fixed_len must be >= 1, got {fixed_len}")
    out = np.zeros((fixed_len, table.dimension), dtype=np.float64)
    kept = list(tokens)[:fixed_len]
    if kept:
        rows = [table.row_of(t) for t in kept]
        out[: len(rows)] = table.padded_matrix[rows]
    return out


def _read_json_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed record ({exc.msg})") from exc
            if not isinstance(record, dict):
                raise CorpusError(f"{path}: line {lineno}: record is not an object")
            yield lineno, record


def _require(record, key, path, lineno, kind):
    if key not in record:
        raise CorpusError(f"{path}: line {lineno}: missing field '{key}'")
    value = record[key]
    if not isinstance(value, kind):
        raise CorpusError(f"{path}: line {lineno}: field '{key}' has wrong type")
    return value


def load_papers(path) -> tuple[list[Paper], LoadReport]:
    """Parse a papers file; returns the papers plus a load report.

    Citations to unknown paper ids are retained on the paper but flagged as
    warnings; graph construction drops them later.
    """
    report = LoadReport(path=str(path))
    papers: list[Paper] = []
    seen: dict[str, int] = {}
    for lineno, rec in _read_json_lines(path):
        pid = _require(rec, "id", path, lineno, str)
        if not pid:
            raise CorpusError(f"{path}: line {lineno}: empty id")
        if pid in seen:
            raise CorpusError(
                f"{path}: duplicate paper id '{pid}' on lines {seen[pid]} and {lineno}"
            )
        seen[pid] = lineno
        title = _require(rec, "title", path, lineno, str)
        abstract = _require(rec, "abstract", path, lineno, str)
        cited = _require(rec, "cited_ids", path, lineno, list)
        if not all(isinstance(c, str) for c in cited):
            raise CorpusError(f"{path}: line {lineno}: cited_ids must be strings")
        cited_set = set(cited)
        if pid in cited_set:
            cited_set.discard(pid)
            report.warn(f"paper '{pid}': self-citation dropped")
        papers.append(
            Paper(
                id=pid,
                title=title,
                abstract_tokens=tuple(tokenize(abstract)),
                cited_ids=frozenset(cited_set),
            )
        )
    known = set(seen)
    for paper in papers:
        for cid in sorted(paper.cited_ids - known):
            report.warn(f"paper '{paper.id}': dangling citation to unknown id '{cid}'")
    report.n_records = len(papers)
    return papers, report


def load_repos(path) -> tuple[list[Repository], LoadReport]:
    """Parse a repositories file; tags and starrers are deduplicated."""
    report = LoadReport(path=str(path))
    repos: list[Repository] = []
    seen: dict[str, int] = {}
    for lineno, rec in _read_json_lines(path):
        rid = _require(rec, "id", path, lineno, str)
        if not rid:
            raise CorpusError(f"{path}: line {lineno}: empty id")
        if rid in seen:
            raise CorpusError(
                f"{path}: duplicate repo id '{rid}' on lines {seen[rid]} and {lineno}"
            )
        seen[rid] = lineno
        description = _require(rec, "description", path, lineno, str)
        tags = _require(rec, "tags", path, lineno, list)
        starrers = _require(rec, "starrers", path, lineno, list)
        if not all(isinstance(t, str) for t in tags):
            raise CorpusError(f"{path}: line {lineno}: tags must be strings")
        if not all(isinstance(u, str) for u in starrers):
            raise CorpusError(f"{path}: line {lineno}: starrers must be strings")
        deduped_tags = tuple(dict.fromkeys(tags))
        repos.append(
            Repository(
                id=rid,
                description_tokens=tuple(tokenize(description)),
                tags=deduped_tags,
                starrers=frozenset(starrers),
            )
        )
    report.n_records = len(repos)
    return repos, report


def load_bridges(path, papers, repos) -> list[BridgeLink]:
    """Parse and validate bridge links against an already-loaded corpus.

    Every id must resolve, and no paper or repo may appear in more than one
    link.
    """
    paper_ids = {p.id for p in papers}
    repo_ids = {r.id for r in repos}
    links: list[BridgeLink] = []
    used_papers: dict[str, int] = {}
    used_repos: dict[str, int] = {}
    for lineno, rec in _read_json_lines(path):
        pid = _require(rec, "paper_id", path, lineno, str)
        rid = _require(rec, "repo_id", path, lineno, str)
        if pid not in paper_ids:
            raise CorpusError(f"{path}: line {lineno}: unknown paper id '{pid}'")
        if rid not in repo_ids:
            raise CorpusError(f"{path}: line {lineno}: unknown repo id '{rid}'")
        if pid in used_papers:
            raise CorpusError(
                f"{path}: paper '{pid}' appears in links on lines {used_papers[pid]} and {lineno}"
            )
        if rid in used_repos:
            raise CorpusError(
                f"{path}: repo '{rid}' appears in links on lines {used_repos[rid]} and {lineno}"
            )
        used_papers[pid] = lineno
        used_repos[rid] = lineno
        links.append(BridgeLink(paper_id=pid, repo_id=rid))
    return links


def load_embeddings(path, expected_dim: int, trainable: bool = False) -> EmbeddingTable:
    """Read a whitespace-separated `token v1 .. vk` file into a table."""
    entries: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != expected_dim:
                raise CorpusError(
                    f"{path}: line {lineno}: expected {expected_dim} floats, got {len(values)}"
                )
            if token in entries:
                raise CorpusError(f"{path}: line {lineno}: duplicate token '{token}'")
            try:
                entries[token] = np.array([float(v) for v in values], dtype=np.float64)
            except ValueError as exc:
                raise CorpusError(f"{path}: line {lineno}: non-numeric value") from exc
    return EmbeddingTable(dimension=expected_dim, entries=entries, trainable=trainable)


def save_papers(papers, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in papers:
            fh.write(
                json.dumps(
                    {
                        "id": p.id,
                        "title": p.title,
                        "abstract": " ".join(p.abstract_tokens),
                        "cited_ids": sorted(p.cited_ids),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def save_repos(repos, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in repos:
            fh.write(
                json.dumps(
                    {
                        "id": r.id,
                        "description": " ".join(r.description_tokens),
                        "tags": list(r.tags),
                        "starrers": sorted(r.starrers),
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def save_bridges(bridges, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for b in bridges:
            fh.write(
                json.dumps({"paper_id": b.paper_id, "repo_id": b.repo_id}, sort_keys=True) + "\n"
            )


@dataclass
class Corpus:
    """Loaded corpus bundle; lists are kept sorted by id."""

    papers: list[Paper]
    repos: list[Repository]
    bridges: list[BridgeLink]
    table: EmbeddingTable

    def __post_init__(self):
        self.papers = sorted(self.papers, key=lambda p: p.id)
        self.repos = sorted(self.repos, key=lambda r: r.id)
        self.bridges = sorted(self.bridges, key=lambda b: b.paper_id)
        self.papers_by_id = {p.id: p for p in self.papers}
        self.repos_by_id = {r.id: r for r in self.repos}

    def with_bridges(self, bridges) -> "Corpus":
        """Same corpus with a different bridge set (for holdouts/ablations)."""
        return Corpus(self.papers, self.repos, list(bridges), self.table)


def load_corpus(
    papers_path, repos_path, bridges_path, embeddings_path, expected_dim: int,
    trainable: bool = False,
) -> tuple[Corpus, list[LoadReport]]:
    papers, prep = load_papers(papers_path)
    repos, rrep = load_repos(repos_path)
    bridges = load_bridges(bridges_path, papers, repos)
    table = load_embeddings(embeddings_path, expected_dim, trainable=trainable)
    return Corpus(papers, repos, bridges, table), [prep, rrep]
