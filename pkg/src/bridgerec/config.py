"""Configuration dataclasses and TOML file loading.

One file drives every pipeline stage; command-line flags override file
values.  Keys inside [train], [synth], [eval] and [data] mirror the
dataclass field names exactly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .errors import ConfigError

DATA_DIR_ENV = "BRIDGEREC_DATA_DIR"


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    lr_decay: float = 1.0                  # per-epoch multiplicative decay
    epochs_max: int = 200
    patience: int = 10
    batch_size: int = 32
    T: int = 6
    n_k: int = 44
    margin: float = 0.5
    seed: int = 0
    embedding_mode: str = "fixed"          # fixed | trainable | concat
    embedding_dim: int = 200
    abstract_len: int = 200
    description_len: int = 50
    paper_windows: tuple = ((2, 64), (3, 64), (5, 64), (7, 64))
    repo_windows: tuple = ((2, 64), (4, 32))
    gcn_width: int = 256
    tag_combine: str = "mean"              # mean | sum
    tfidf_threshold: float = 0.3
    train_fraction: float = 0.9
    test_fraction: float = 0.2
    bridge_ratio: float = 1.0
    epsilon: float = 0.001
    optimizer: str = "adam"                # adam | sgd
    grad_clip: float = 0.0                 # 0 disables clipping

    def __post_init__(self):
        self.paper_windows = tuple((int(h), int(m)) for h, m in self.paper_windows)
        self.repo_windows = tuple((int(h), int(m)) for h, m in self.repo_windows)
        if not 0.0 < self.margin < 1.0:
            raise ConfigError(f"margin must be in (0, 1), got {self.margin}")
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be non-negative")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ConfigError("lr_decay must be in (0, 1]")
        if self.T < 1:
            raise ConfigError("T must be >= 1")
        if self.n_k < 1:
            raise ConfigError("n_k must be >= 1")
        if self.embedding_mode not in ("fixed", "trainable", "concat"):
            raise ConfigError(f"unknown embedding_mode '{self.embedding_mode}'")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must be in (0, 1)")
        if not 0.0 <= self.bridge_ratio <= 1.0:
            raise ConfigError("bridge_ratio must be in [0, 1]")


@dataclass
class SynthConfig:
    topics: int = 5
    papers: int = 500
    repos: int = 300
    users: int = 200
    bridge_fraction: float = 0.12
    intra_citation_prob: float = 0.9
    intra_star_prob: float = 0.9
    vocab_per_topic: int = 160
    seed: int = 7
    embedding_dim: int = 50
    citations_per_paper: int = 3
    stars_per_user: int = 5
    pod_size: int = 7      # same-topic repos form co-starred pods this big
    abstract_len: int = 30
    description_len: int = 12
    motif_len: int = 6       # pair-specific tokens shared by bridge texts
    pod_motif_len: int = 4   # niche tokens shared across a pod's texts

    def __post_init__(self):
        for name in ("bridge_fraction", "intra_citation_prob", "intra_star_prob"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        for name in ("topics", "papers", "repos", "users", "vocab_per_topic",
                     "embedding_dim", "abstract_len", "description_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        n_bridges = round(self.bridge_fraction * self.papers)
        if n_bridges > self.repos:
            raise ConfigError(
                f"bridge_fraction {self.bridge_fraction} needs {n_bridges} distinct "
                f"repos but only {self.repos} exist"
            )


@dataclass
class EvalConfig:
    k_values: tuple = (1, 5, 10, 20)
    runs: int = 3
    seed: int = 0
    slate_size: int = 50

    def __post_init__(self):
        self.k_values = tuple(int(k) for k in self.k_values)
        if any(k < 1 or k > self.slate_size for k in self.k_values):
            raise ConfigError("every K must lie in [1, slate_size]")


@dataclass
class DataConfig:
    dir: str = "."
    papers: str = "papers.jsonl"
    repos: str = "repos.jsonl"
    bridges: str = "bridges.jsonl"
    embeddings: str = "embeddings.txt"

    def path(self, name: str) -> str:
        return os.path.join(self.dir, getattr(self, name))


@dataclass
class AppConfig:
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)


def _build(cls, values: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    return cls(**values)


def _parse_override(item: str) -> tuple[str, str, object]:
    if "=" not in item or "." not in item.split("=", 1)[0]:
        raise ConfigError(f"override '{item}' is not of the form section.key=value")
    key, value = item.split("=", 1)
    section, name = key.split(".", 1)
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return section, name, parsed


def load_config(path=None, overrides=()) -> AppConfig:
    """Load a TOML config; a missing path gives pure defaults.

    ``overrides`` are `section.key=value` strings applied on top of the
    file.  The default data directory comes from $BRIDGEREC_DATA_DIR when
    the file does not set one.
    """
    raw: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    for item in overrides:
        section, name, value = _parse_override(item)
        raw.setdefault(section, {})[name] = value
    data_values = dict(raw.get("data", {}))
    if "dir" not in data_values:
        data_values["dir"] = os.environ.get(DATA_DIR_ENV, ".")
    return AppConfig(
        data=_build(DataConfig, data_values, "data"),
        train=_build(TrainConfig, dict(raw.get("train", {})), "train"),
        synth=_build(SynthConfig, dict(raw.get("synth", {})), "synth"),
        eval=_build(EvalConfig, dict(raw.get("eval", {})), "eval"),
    )


def config_hash(cfg) -> str:
    """Stable hash of a config dataclass, used to stamp checkpoints."""
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True, default=list)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]
