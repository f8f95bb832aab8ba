"""Turn a resolved run config into data, a task binding and a partition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .config import RunConfig
from .errors import ConfigError, DataError, EmptyClient
from .partition import (
    PartitionResult,
    Strategy,
    cluster_feature_partition,
    dirichlet_label_partition,
    embed_many,
    load_partition,
    natural_partition,
    quantity_partition,
)
from .tasks import (
    FeatureSet,
    TaggingTask,
    TextClassificationData,
    TextClassificationTask,
    generate_tagging_dataset,
    generate_tc_dataset,
    load_manifest,
)


@dataclass
class Prepared:
    cfg: RunConfig
    task: object
    train_raw: object
    test_raw: object
    train: FeatureSet
    test: Optional[FeatureSet]
    partition: PartitionResult

    def client_data(self, cid: int) -> FeatureSet:
        return self.train.take(self.partition.assignments[cid])


def load_data(cfg: RunConfig):
    """``(train, test)`` raw splits from the manifest or the generator."""
    d = cfg.data
    if d.path:
        try:
            task, train, test = load_manifest(d.path)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot load manifest {d.path}: {exc}") from None
        if task != d.task:
            raise ConfigError(f"manifest holds task {task!r}", [("data.task", f"manifest task is {task!r}")])
        return train, test
    gen = cfg.generator_config()
    if d.task == "tc":
        return generate_tc_dataset(gen)
    return generate_tagging_dataset(gen)


def build_task(cfg: RunConfig, train_raw):
    m = cfg.model
    kwargs = dict(feature_dim=m.feature_dim, feature_seed=m.feature_seed, n_blocks=m.n_blocks,
                  frozen=tuple(m.frozen), init_scale=m.init_scale, init_seed=m.init_seed)
    try:
        if isinstance(train_raw, TextClassificationData):
            return TextClassificationTask(train_raw.n_classes, **kwargs)
        return TaggingTask(train_raw.n_tags, **kwargs)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad model section: {exc}", [("model.frozen", str(exc))]) from None


def _units(raw):
    return raw.docs if isinstance(raw, TextClassificationData) else raw.sentences


def build_partition(cfg: RunConfig, train_raw, task) -> PartitionResult:
    labels = task.labels(train_raw)
    if cfg.partition.path:
        try:
            return load_partition(cfg.partition.path, labels)
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot load partition {cfg.partition.path}: {exc}") from None
    spec = cfg.partition_spec()
    if spec.strategy is Strategy.LABEL_DIRICHLET:
        return dirichlet_label_partition(labels, spec)
    if spec.strategy is Strategy.QUANTITY_DIRICHLET:
        return quantity_partition(len(labels), spec, labels)
    if spec.strategy is Strategy.CLUSTER_DIRICHLET:
        emb = embed_many(_units(train_raw), cfg.model.feature_dim, cfg.model.feature_seed)
        return cluster_feature_partition(emb, spec)
    groups = getattr(train_raw, "groups", None)
    if groups is None:
        raise EmptyClient("natural partition needs group ids (set data.tc.n_groups or use a grouped manifest)")
    return natural_partition(groups, labels)


def prepare(cfg: RunConfig) -> Prepared:
    train_raw, test_raw = load_data(cfg)
    task = build_task(cfg, train_raw)
    partition = build_partition(cfg, train_raw, task)
    train = task.featurize(train_raw)
    test = task.featurize(test_raw) if len(test_raw) else None
    return Prepared(cfg, task, train_raw, test_raw, train, test, partition)
