"""Synthetic desk-scale corpora, feature sets and the dataset manifest format."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import ConfigError
from ..partition.dirichlet import sample_dirichlet
from ..rng import substream

MANIFEST_VERSION = 1


@dataclass(frozen=True)
class SyntheticTCConfig:
    n_classes: int = 20
    vocab_size: int = 500
    doc_min: int = 20
    doc_max: int = 60
    skew: float = 1.0
    n_train: int = 10000
    n_test: int = 2000
    seed: int = 0
    n_groups: int = 0

    def __post_init__(self):
        errors = []
        if self.n_classes < 2:
            errors.append(("n_classes", "must be >= 2"))
        if not 1 <= self.doc_min <= self.doc_max:
            errors.append(("doc_min", "need 1 <= doc_min <= doc_max"))
        if not self.skew > 0:
            errors.append(("skew", "must be > 0"))
        if errors:
            raise ConfigError("invalid text classification generator config", errors)


@dataclass(frozen=True)
class TaggingConfig:
    n_entity_types: int = 18  # 1 + 2 * 18 = 37 BIO tags
    vocab_size: int = 2000
    entity_vocab: int = 40
    sent_min: int = 8
    sent_max: int = 25
    entity_rate: float = 0.12
    n_train: int = 3000
    n_test: int = 600
    seed: int = 0

    @property
    def tag_vocab(self) -> int:
        return 1 + 2 * self.n_entity_types

    def __post_init__(self):
        errors = []
        if self.n_entity_types < 1:
            errors.append(("n_entity_types", "need at least one entity type besides Outside"))
        if not 1 <= self.sent_min <= self.sent_max:
            errors.append(("sent_min", "need 1 <= sent_min <= sent_max"))
        if not 0 <= self.entity_rate < 1:
            errors.append(("entity_rate", "must be in [0, 1)"))
        if errors:
            raise ConfigError("invalid tagging generator config", errors)


@dataclass
class TextClassificationData:
    docs: list
    labels: np.ndarray
    n_classes: int
    groups: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.docs)

    def subset(self, idx) -> "TextClassificationData":
        idx = np.asarray(idx, dtype=np.int64)
        return TextClassificationData(
            [self.docs[i] for i in idx], self.labels[idx], self.n_classes,
            None if self.groups is None else self.groups[idx],
        )


@dataclass
class TaggingData:
    sentences: list
    tags: list
    n_tags: int

    def __len__(self):
        return len(self.sentences)

    def subset(self, idx) -> "TaggingData":
        return TaggingData([self.sentences[i] for i in idx], [self.tags[i] for i in idx], self.n_tags)


class FeatureSet:
    """Feature rows with integer targets.

    With ``offsets`` the rows are tokens and an example is a whole sequence
    (rows ``offsets[i]:offsets[i+1]``); ``take`` then selects sequences.
    """

    def __init__(self, x: np.ndarray, y: np.ndarray, offsets: Optional[np.ndarray] = None):
        self.x = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.int64)
        self.offsets = None if offsets is None else np.asarray(offsets, dtype=np.int64)

    def __len__(self):
        return self.x.shape[0] if self.offsets is None else self.offsets.shape[0] - 1

    @property
    def n_rows(self) -> int:
        return self.x.shape[0]

    def take(self, idx) -> "FeatureSet":
        idx = np.asarray(idx, dtype=np.int64)
        if self.offsets is None:
            return FeatureSet(self.x[idx], self.y[idx])
        starts, ends = self.offsets[idx], self.offsets[idx + 1]
        lengths = ends - starts
        rows = (
            np.concatenate([np.arange(s, e) for s, e in zip(starts, ends)])
            if idx.size else np.zeros(0, dtype=np.int64)
        )
        offsets = np.concatenate([[0], np.cumsum(lengths)])
        return FeatureSet(self.x[rows], self.y[rows], offsets)

    def sequences(self):
        for i in range(len(self)):
            yield self.y[self.offsets[i]:self.offsets[i + 1]]


def _balanced_labels(n: int, n_classes: int, rng: np.random.Generator) -> np.ndarray:
    return rng.permutation(np.arange(n, dtype=np.int64) % n_classes)


def generate_tc_dataset(cfg: SyntheticTCConfig):
    """Train/test text-classification corpora with class-specific unigram distributions."""
    dists = np.stack([
        sample_dirichlet(np.full(cfg.vocab_size, cfg.skew), substream(cfg.seed, "tc_class", c))
        for c in range(cfg.n_classes)
    ])
    cdf = np.cumsum(dists, axis=1)
    cdf[:, -1] = 1.0

    def split(name, n):
        labels = _balanced_labels(n, cfg.n_classes, substream(cfg.seed, f"tc_labels/{name}"))
        rng = substream(cfg.seed, f"tc_docs/{name}")
        lengths = rng.integers(cfg.doc_min, cfg.doc_max + 1, size=n)
        docs = []
        for lab, length in zip(labels, lengths):
            u = rng.random(length)
            docs.append(np.minimum(np.searchsorted(cdf[lab], u, side="right"), cfg.vocab_size - 1))
        groups = labels % cfg.n_groups if cfg.n_groups else None
        return TextClassificationData(docs, labels, cfg.n_classes, groups)

    return split("train", cfg.n_train), split("test", cfg.n_test)


def generate_tagging_dataset(cfg: TaggingConfig):
    """Train/test BIO tagging corpora: background tokens with injected typed entity spans."""
    n_bg = cfg.vocab_size
    bg_dist = sample_dirichlet(np.full(n_bg, 5.0), substream(cfg.seed, "st_background"))
    bg_cdf = np.cumsum(bg_dist)
    bg_cdf[-1] = 1.0

    def split(name, n):
        rng = substream(cfg.seed, f"st_sentences/{name}")
        sentences, tags = [], []
        for _ in range(n):
            length = int(rng.integers(cfg.sent_min, cfg.sent_max + 1))
            toks, tg = [], []
            while len(toks) < length:
                if rng.random() < cfg.entity_rate:
                    etype = int(rng.integers(cfg.n_entity_types))
                    span = int(rng.integers(1, 4))
                    base = n_bg + etype * cfg.entity_vocab
                    for k in range(span):
                        toks.append(base + int(rng.integers(cfg.entity_vocab)))
                        tg.append(1 + 2 * etype + (1 if k else 0))
                else:
                    toks.append(min(int(np.searchsorted(bg_cdf, rng.random(), side="right")), n_bg - 1))
                    tg.append(0)
            sentences.append(np.asarray(toks, dtype=np.int64))
            tags.append(np.asarray(tg, dtype=np.int64))
        return TaggingData(sentences, tags, cfg.tag_vocab)

    return split("train", cfg.n_train), split("test", cfg.n_test)


def save_manifest(path, train, test, generator: Optional[dict] = None) -> None:
    """Write both splits as one JSON manifest."""
    if isinstance(train, TextClassificationData):
        doc = {"version": MANIFEST_VERSION, "task": "tc", "n_classes": train.n_classes}
        rows = []
        for split_name, data in (("train", train), ("test", test)):
            for i in range(len(data)):
                row = {"tokens": data.docs[i].tolist(), "label": int(data.labels[i]), "split": split_name}
                if data.groups is not None:
                    row["group"] = int(data.groups[i])
                rows.append(row)
    else:
        doc = {"version": MANIFEST_VERSION, "task": "st", "n_tags": train.n_tags}
        rows = [
            {"tokens": data.sentences[i].tolist(), "tags": data.tags[i].tolist(), "split": split_name}
            for split_name, data in (("train", train), ("test", test))
            for i in range(len(data))
        ]
    doc["generator"] = generator
    doc["examples"] = rows
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, separators=(",", ":"))
        fh.write("\n")


def load_manifest(path):
    """Read a manifest; returns ``(task, train, test)``."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest version {doc.get('version')!r}")
    task = doc["task"]
    out = {}
    for split_name in ("train", "test"):
        rows = [r for r in doc["examples"] if r["split"] == split_name]
        toks = [np.asarray(r["tokens"], dtype=np.int64) for r in rows]
        if task == "tc":
            groups = np.asarray([r["group"] for r in rows]) if rows and "group" in rows[0] else None
            out[split_name] = TextClassificationData(
                toks, np.asarray([r["label"] for r in rows], dtype=np.int64), doc["n_classes"], groups
            )
        elif task == "st":
            out[split_name] = TaggingData(toks, [np.asarray(r["tags"], dtype=np.int64) for r in rows], doc["n_tags"])
        else:
            raise ValueError(f"unknown task {task!r}")
    return task, out["train"], out["test"]


def config_dict(cfg) -> dict:
    return asdict(cfg)
